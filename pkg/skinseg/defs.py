#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Shared data model: images, part masks, binary masks and probability maps,
plus the error hierarchy every other module raises from.
"""

import hashlib
import logging
from collections import namedtuple

import numpy as np

logger = logging.getLogger(__name__)

# Part codes of the auxiliary body-segmentation channel
BACKGROUND = 0
BODY = 1
FACE = 2
HAND = 3
PART_CODES = (BACKGROUND, BODY, FACE, HAND)

# The encoder downsamples to 1/8
STRIDE = 8


class SkinsegError(Exception):
    """Base class of every error raised by skinseg."""
    exit_code = 1


class ConfigError(SkinsegError):
    exit_code = 2


class DataError(SkinsegError):
    exit_code = 3


class NumericError(SkinsegError, ArithmeticError):
    exit_code = 4


class InvalidConfig(ConfigError, ValueError):
    pass


class CheckpointError(ConfigError, ValueError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class InvalidCode(DataError, ValueError):
    pass


class InvalidMaskValue(DataError, ValueError):
    pass


class InvalidGeometry(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class DatasetEmpty(DataError, ValueError):
    pass


class MissingMask(DataError, FileNotFoundError):
    pass


class MissingDirectory(DataError, FileNotFoundError):
    pass


def _frozen(array):
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class ImageTensor(namedtuple('ImageTensor', ['data'])):
    """An H x W x 3 image with intensities in [0, 1]."""
    __slots__: list = []

    def __new__(cls, data):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ShapeMismatch('ImageTensor needs an H x W x 3 array, got shape {}'.format(data.shape))
        h, w = data.shape[:2]
        if h < STRIDE or w < STRIDE or h % STRIDE or w % STRIDE:
            raise ShapeMismatch('ImageTensor sides must be >= {0} and divisible by {0}, got {1}x{2}'.format(
                STRIDE, h, w))
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise InvalidMaskValue('ImageTensor values must lie in [0, 1]')
        return super(ImageTensor, cls).__new__(cls, _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


class PartMask(namedtuple('PartMask', ['codes'])):
    """Per-pixel body part codes: 0 background, 1 other body, 2 face, 3 hand."""
    __slots__: list = []

    def __new__(cls, codes):
        codes = np.asarray(codes)
        if codes.ndim != 2:
            raise ShapeMismatch('PartMask needs an H x W array, got shape {}'.format(codes.shape))
        if codes.dtype.kind == 'f' and not np.all(np.mod(codes, 1) == 0):
            raise InvalidCode('PartMask codes must be integers')
        bad = ~np.isin(codes, PART_CODES)
        if bad.any():
            raise InvalidCode('PartMask holds codes outside {}: {}'.format(
                PART_CODES, sorted(set(np.unique(codes[bad]).tolist()))))
        return super(PartMask, cls).__new__(cls, _frozen(codes.astype(np.uint8)))

    @property
    def shape(self):
        return self.codes.shape

    def __eq__(self, other):
        return isinstance(other, PartMask) and np.array_equal(self.codes, other.codes)

    def __ne__(self, other):
        return not self == other

    __hash__ = None


class BinaryMask(namedtuple('BinaryMask', ['values'])):
    """A strictly binary H x W mask."""
    __slots__: list = []

    def __new__(cls, values):
        values = np.asarray(values)
        if values.ndim != 2:
            raise ShapeMismatch('BinaryMask needs an H x W array, got shape {}'.format(values.shape))
        if values.dtype != np.bool_ and not np.all((values == 0) | (values == 1)):
            raise InvalidMaskValue('BinaryMask values must be 0 or 1')
        return super(BinaryMask, cls).__new__(cls, _frozen(values.astype(np.uint8)))

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.values, other.values)

    def __ne__(self, other):
        return not self == other

    __hash__ = None


class SkinProbMap(namedtuple('SkinProbMap', ['values'])):
    """Real-valued per-pixel skin probability (sigmoid head) or affinity (tanh attention)."""
    __slots__: list = []

    def __new__(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch('SkinProbMap needs an H x W array, got shape {}'.format(values.shape))
        if not np.all(np.isfinite(values)):
            raise InvalidMaskValue('SkinProbMap values must be finite')
        return super(SkinProbMap, cls).__new__(cls, _frozen(values))

    @property
    def shape(self):
        return self.values.shape


def _values(mask):
    if isinstance(mask, BinaryMask):
        return mask.values
    if isinstance(mask, PartMask):
        return mask.codes
    if isinstance(mask, SkinProbMap):
        return mask.values
    return np.asarray(mask)


def derive_body_mask(parts) -> BinaryMask:
    """Pixels of any body part, face and hands included."""
    return BinaryMask(_values(parts) >= BODY)


def derive_face_hand_mask(parts) -> BinaryMask:
    """Pixels the part mask labels as face or hand."""
    return BinaryMask(np.isin(_values(parts), (FACE, HAND)))


def nearest_indices(source: int, target: int) -> np.ndarray:
    """Source index floor(i * source / target) for every target index i."""
    return (np.arange(target, dtype=np.int64) * source) // target


def resize_nearest(array: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    if target_h < 1 or target_w < 1:
        raise ShapeMismatch('Target size must be at least 1x1, got {}x{}'.format(target_h, target_w))
    h, w = array.shape[:2]
    if (h, w) == (target_h, target_w):
        return np.array(array, copy=True)
    return array[nearest_indices(h, target_h)][:, nearest_indices(w, target_w)]


def resize_mask(mask, target_h: int, target_w: int):
    """Nearest-neighbour resampling; the result keeps the input's mask type."""
    resized = resize_nearest(_values(mask), target_h, target_w)
    if isinstance(mask, PartMask):
        return PartMask(resized)
    return BinaryMask(resized)


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from any printable key, e.g. derive_seed('loader', seed, epoch)."""
    digest = hashlib.md5(' '.join(str(p) for p in parts).encode()).hexdigest()
    return int(digest[:8], 16)
