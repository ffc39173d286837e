#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
PNG codecs. Images are 8-bit RGB, part masks 8-bit single channel with codes
{0, 1, 2, 3}, binary masks 8-bit single channel with {0, 255}.
"""

import logging
import os

import numpy as np
from PIL import Image

from .defs import BinaryMask, InvalidCode, InvalidMaskValue, PART_CODES, PartMask, ShapeMismatch

logger = logging.getLogger(__name__)

POSITIVE = 255


def image_size(path):
    """(height, width) read from the PNG header only."""
    with Image.open(path) as img:
        w, h = img.size
    return h, w


def read_image(path) -> np.ndarray:
    with Image.open(path) as img:
        data = np.asarray(img.convert('RGB'), dtype=np.float32)
    return data / 255.0


def write_image(path, data):
    data = np.clip(np.round(np.asarray(data) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def resize_image(data, height, width):
    """Bilinear resize of an H x W x 3 float image."""
    data = np.asarray(data, dtype=np.float32)
    if data.shape[:2] == (height, width):
        return data
    channels = [np.asarray(Image.fromarray(np.ascontiguousarray(data[:, :, c])).resize((width, height), Image.BILINEAR))
                for c in range(3)]
    return np.clip(np.stack(channels, axis=2), 0.0, 1.0)


def _read_gray(path):
    with Image.open(path) as img:
        if img.mode not in ('L', 'P', '1'):
            raise ShapeMismatch('{} is not a single-channel PNG (mode {})'.format(path, img.mode))
        return np.asarray(img.convert('L') if img.mode == '1' else img, dtype=np.uint8)


def read_part_mask(path) -> PartMask:
    codes = _read_gray(path)
    bad = ~np.isin(codes, PART_CODES)
    if bad.any():
        raise InvalidCode('{} holds part codes outside {}: {}'.format(
            path, PART_CODES, sorted(set(np.unique(codes[bad]).tolist()))))
    return PartMask(codes)


def write_part_mask(path, parts: PartMask):
    Image.fromarray(np.asarray(parts.codes, dtype=np.uint8)).save(path)


def read_binary_mask(path) -> BinaryMask:
    values = _read_gray(path)
    bad = (values != 0) & (values != POSITIVE)
    if bad.any():
        raise InvalidMaskValue('{} holds mask values other than 0/{}'.format(path, POSITIVE))
    return BinaryMask(values == POSITIVE)


def write_binary_mask(path, mask: BinaryMask):
    Image.fromarray(np.asarray(mask.values, dtype=np.uint8) * POSITIVE).save(path)


def write_gray(path, values):
    Image.fromarray(np.asarray(values, dtype=np.uint8)).save(path)


def attention_to_gray(attention) -> np.ndarray:
    """Maps attention values from (-1, 1) linearly onto [0, 255]; zero lands on 128."""
    attention = np.clip(np.asarray(attention, dtype=np.float64), -1.0, 1.0)
    return np.round((attention + 1.0) / 2.0 * 255.0).astype(np.uint8)


def stems(directory, suffix='.png'):
    return sorted(os.path.splitext(name)[0] for name in os.listdir(directory) if name.endswith(suffix))
