#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Part mask providers. The body-part channel is frozen, hence a pure function of
the image: masks are precomputed on disk (file backend) or re-derived from the
scene generator (synthetic backend).
"""

import logging
import os
from collections import namedtuple

from . import image_io
from .data_synth import scene_for_stem
from .defs import InvalidConfig, MissingDirectory, MissingMask, PartMask, resize_mask

logger = logging.getLogger(__name__)

BACKENDS = ('file', 'synthetic')


class MaskProviderConfig(namedtuple('MaskProviderConfig', ['backend', 'masks_dir', 'seed', 'canvas',
                                                         'noise_iou_target'])):
    __slots__: list = []

    def __new__(cls, backend='file', masks_dir=None, seed=0, canvas=64, noise_iou_target=0.75):
        if backend not in BACKENDS:
            raise InvalidConfig('Unknown mask provider backend {!r}, expected one of {}'.format(backend, BACKENDS))
        if backend == 'file' and not masks_dir:
            raise InvalidConfig('The file mask provider needs masks_dir')
        return super(MaskProviderConfig, cls).__new__(cls, backend, masks_dir, int(seed), int(canvas),
                                                      noise_iou_target)


class MaskProvider(object):
    def get_parts(self, image_id: str, h: int, w: int) -> PartMask:
        raise NotImplementedError


class FileMaskProvider(MaskProvider):
    """Reads <masks_dir>/<image_id>.png."""

    def __init__(self, masks_dir):
        if not os.path.isdir(masks_dir):
            msg = 'Part mask directory {} does not exist'.format(masks_dir)
            logger.error(msg)
            raise MissingDirectory(msg)
        self.masks_dir = masks_dir

    def path(self, image_id):
        return os.path.join(self.masks_dir, image_id + '.png')

    def get_parts(self, image_id, h, w):
        path = self.path(image_id)
        if not os.path.isfile(path):
            raise MissingMask('No part mask for {!r} in {}'.format(image_id, self.masks_dir))
        parts = image_io.read_part_mask(path)
        if parts.shape != (h, w):
            logger.debug('resizing part mask {} from {} to {}'.format(image_id, parts.shape, (h, w)))
            parts = resize_mask(parts, h, w)
        return parts


class SyntheticMaskProvider(MaskProvider):
    """Part masks of the scene generator, keyed by (seed, image_id)."""

    def __init__(self, seed=0, canvas=64, noise_iou_target=0.75):
        self.seed = seed
        self.canvas = canvas
        self.noise_iou_target = noise_iou_target

    def get_parts(self, image_id, h, w):
        parts = scene_for_stem(self.seed, image_id, self.canvas, self.noise_iou_target).parts
        if parts.shape != (h, w):
            parts = resize_mask(parts, h, w)
        return parts


def make_provider(config: MaskProviderConfig) -> MaskProvider:
    if config.backend == 'file':
        return FileMaskProvider(config.masks_dir)
    return SyntheticMaskProvider(config.seed, config.canvas, config.noise_iou_target)
