#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Dataset ingestion for split directories of PNG files and a seeded scene
generator producing (image, true skin, noisy skin, part mask) quadruples.

Layout::

    root/{train,val,test}/{images,labels,parts}/<stem>.png
    root/{train,val,test}/truth/<stem>.png      (optional, true skin of noisy splits)
"""

import logging
import os
from collections import namedtuple

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage

from . import image_io
from .defs import (BODY, FACE, HAND, STRIDE, BinaryMask, DimensionMismatch, ImageTensor, InvalidGeometry,
                   MissingDirectory, PartMask, derive_seed)

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')

# Light-to-dark anchors, RGB in [0, 1]
SKIN_TONES = tuple(tuple(round(c / 255.0, 4) for c in rgb) for rgb in [
    (255, 224, 196), (241, 194, 167), (234, 192, 134), (224, 172, 105),
    (198, 134, 66), (188, 143, 118), (161, 102, 94), (141, 85, 36),
    (120, 70, 50), (99, 57, 36), (80, 51, 53), (58, 38, 31)])
TONE_JITTER = 0.03

# Minimum RGB distance between an accessory and the skin tone of its scene
ACCESSORY_CONTRAST = 0.35

MAX_ACCESSORIES = 24


class SceneSpec(namedtuple('SceneSpec', ['seed', 'canvas', 'skin_tone', 'body', 'face', 'hands', 'clothing',
                                         'accessories', 'dilation', 'erasures'])):
    """Geometry of one synthetic scene.

    Args:
        seed (int): Drives the rendering noise (background clutter, shading).
        canvas (int): Side of the square canvas in pixels.
        skin_tone (Tuple[float, float, float]): RGB in [0, 1].
        body (Tuple[float, float, float, float]): Ellipse (cy, cx, ry, rx).
        face (Tuple[float, float, float]): Disc (cy, cx, r).
        hands (Tuple[Tuple[float, float, float], ...]): Discs.
        clothing (Tuple[Tuple[int, int, int, int], ...]): Rectangles (y0, x0, y1, x1), clipped to the body.
        accessories (Tuple[Tuple[float, float, float], ...]): Discs touching the body, labelled skin but not skin.
        dilation (int): Dilation radius of the noisy label, in pixels.
        erasures (Tuple[Tuple[float, float, float], ...]): Discs removed from the noisy label (symmetric noise).
    """
    __slots__: list = []

    def __new__(cls, seed=0, canvas=64, skin_tone=SKIN_TONES[0], body=(34.0, 32.0, 21.0, 12.0),
                face=(20.0, 32.0, 5.0), hands=(), clothing=(), accessories=(), dilation=0, erasures=()):
        return super(SceneSpec, cls).__new__(cls, seed, canvas, tuple(skin_tone), tuple(body), tuple(face),
                                             tuple(map(tuple, hands)), tuple(map(tuple, clothing)),
                                             tuple(map(tuple, accessories)), int(dilation),
                                             tuple(map(tuple, erasures)))


class Scene(namedtuple('Scene', ['image', 'true_skin', 'noisy_skin', 'parts'])):
    __slots__: list = []

    @property
    def noise_iou(self) -> float:
        """IoU of the noisy label against the true skin mask."""
        return mask_iou(self.noisy_skin.values, self.true_skin.values)


class Record(namedtuple('Record', ['stem', 'image', 'label', 'parts', 'truth'])):
    __slots__: list = []

    def __new__(cls, stem, image, label, parts, truth=None):
        return super(Record, cls).__new__(cls, stem, image, label, parts, truth)


class DatasetIndex(namedtuple('DatasetIndex', ['split', 'records', 'rejected'])):
    """Matched records of one split; `rejected` maps stem to the reason it was dropped."""
    __slots__: list = []

    def __new__(cls, split, records=(), rejected=None):
        return super(DatasetIndex, cls).__new__(cls, split, list(records), dict(rejected or {}))

    def __len__(self):
        return len(self.records)


def mask_iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def scene_seed(seed, stem) -> int:
    """Per-record seed shared by the generator and the synthetic mask provider."""
    return derive_seed('scene', seed, stem)


def _grid(canvas):
    return np.mgrid[0:canvas, 0:canvas].astype(np.float64)


def _disc(canvas, cy, cx, r):
    yy, xx = _grid(canvas)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r ** 2


def _discs(canvas, discs):
    out = np.zeros((canvas, canvas), dtype=bool)
    for cy, cx, r in discs:
        out |= _disc(canvas, cy, cx, r)
    return out


def _ellipse(canvas, cy, cx, ry, rx):
    yy, xx = _grid(canvas)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _rects(canvas, rects):
    out = np.zeros((canvas, canvas), dtype=bool)
    for y0, x0, y1, x1 in rects:
        out[max(0, int(y0)):max(0, int(y1)), max(0, int(x0)):max(0, int(x1))] = True
    return out


def _geometry(spec: SceneSpec):
    c = spec.canvas
    if c < STRIDE or c % STRIDE:
        raise InvalidGeometry('Canvas must be a multiple of {} and at least {}, got {}'.format(STRIDE, STRIDE, c))
    shapes = [spec.body[2:], spec.face[2:]] + [d[2:] for d in spec.hands + spec.accessories + spec.erasures]
    if any(r <= 0 for shape in shapes for r in shape):
        raise InvalidGeometry('Radii must be positive')
    if spec.dilation < 0:
        raise InvalidGeometry('Dilation radius must be non-negative, got {}'.format(spec.dilation))

    body = _ellipse(c, *spec.body)
    face = _disc(c, *spec.face)
    hands = _discs(c, spec.hands)
    if not face.any() or (face & ~body).any():
        raise InvalidGeometry('Face disc {} does not lie inside the body'.format(spec.face))
    if (hands & ~body).any():
        raise InvalidGeometry('Hand discs {} do not lie inside the body'.format(spec.hands))
    accessories = np.zeros((c, c), dtype=bool)
    for disc in spec.accessories:
        blob = _disc(c, *disc)
        if not (blob & body).any():
            raise InvalidGeometry('Accessory {} does not touch the body'.format(disc))
        if (blob & (face | hands)).any():
            raise InvalidGeometry('Accessory {} covers the face or a hand'.format(disc))
        accessories |= blob
    clothing = _rects(c, spec.clothing) & body & ~face & ~hands & ~accessories
    return body, face, hands, clothing, accessories


def accessory_color(rng, tone):
    """A random color at least ACCESSORY_CONTRAST away from the skin tone, drawn per accessory."""
    tone = np.asarray(tone, dtype=np.float64)
    for _ in range(32):
        color = rng.uniform(0.0, 1.0, size=3)
        if np.linalg.norm(color - tone) >= ACCESSORY_CONTRAST:
            return color
    return np.where(tone < 0.5, 1.0, 0.0)


def _render(spec: SceneSpec, body, clothing, accessories):
    c = spec.canvas
    rng = np.random.default_rng(spec.seed)
    image = np.empty((c, c, 3), dtype=np.float64)
    image[:] = rng.uniform(0.2, 0.8, size=3)
    for _ in range(rng.integers(3, 8)):
        y0, x0 = rng.integers(0, c, size=2)
        h, w = rng.integers(c // 8, c // 2, size=2)
        image[y0:y0 + h, x0:x0 + w] = rng.uniform(0.0, 1.0, size=3)

    yy, _ = _grid(c)
    shading = 1.0 + 0.08 * (spec.body[0] - yy) / max(spec.body[2], 1.0)
    tone = np.asarray(spec.skin_tone, dtype=np.float64)
    image[body] = tone[None, :] * shading[body][:, None]

    for rect in spec.clothing:
        region = _rects(c, [rect]) & clothing
        image[region] = rng.uniform(0.0, 1.0, size=3)
    for disc in spec.accessories:
        region = _disc(c, *disc)
        image[region] = accessory_color(rng, tone)

    image += rng.normal(0.0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def generate_scene(spec: SceneSpec) -> Scene:
    """Renders the image and its three masks; deterministic in the spec."""
    body, face, hands, clothing, accessories = _geometry(spec)

    codes = np.zeros(body.shape, dtype=np.uint8)
    codes[body | accessories] = BODY
    codes[face] = FACE
    codes[hands] = HAND

    true_skin = body & ~clothing & ~accessories
    noisy_skin = true_skin | accessories
    if spec.dilation > 0:
        structure = ndimage.generate_binary_structure(2, 1)
        grown = ndimage.binary_dilation(noisy_skin, structure=structure, iterations=spec.dilation)
        noisy_skin |= grown & (codes >= BODY)
    if spec.erasures:
        noisy_skin &= ~_discs(spec.canvas, spec.erasures)

    image = _render(spec, body, clothing, accessories)
    return Scene(ImageTensor(image), BinaryMask(true_skin), BinaryMask(noisy_skin), PartMask(codes))


def _boundary_point(rng, body, spread):
    cy, cx, ry, rx = body
    # Lower and side arcs only, the top belongs to the face
    theta = rng.uniform(-0.15 * np.pi, 1.15 * np.pi)
    return cy + ry * np.sin(theta) + rng.uniform(-spread, spread), cx + rx * np.cos(theta)


def random_scene_spec(seed, canvas=64, noise_iou_target=0.75, symmetric_noise=False) -> SceneSpec:
    """Samples a valid scene; accessories are added until IoU(noisy, true) reaches the target."""
    rng = np.random.default_rng(seed)
    c = float(canvas)
    tone = np.clip(np.asarray(SKIN_TONES[rng.integers(len(SKIN_TONES))]) +
                   rng.uniform(-TONE_JITTER, TONE_JITTER, size=3), 0.0, 1.0)
    body = (c * (0.55 + rng.uniform(-0.04, 0.04)), c * (0.5 + rng.uniform(-0.08, 0.08)),
            c * rng.uniform(0.30, 0.36), c * rng.uniform(0.16, 0.22))
    cy, cx, ry, rx = body
    rf = max(2.0, round(rx * 0.45))
    face = (cy - ry + 1.6 * rf, cx, rf)
    rh = max(1.5, round(rx * 0.3))
    hands = ((cy + 0.15 * ry, cx - (rx - 1.6 * rh), rh), (cy + 0.15 * ry, cx + (rx - 1.6 * rh), rh))

    clothing = []
    if rng.random() < 0.8:
        clothing.append((cy - 0.35 * ry, cx - rx, cy + ry * rng.uniform(0.1, 0.5), cx + rx + 1))
    if rng.random() < 0.6:
        clothing.append((cy + 0.6 * ry, cx - rx, cy + ry + 1, cx + rx + 1))

    spec = SceneSpec(seed=seed, canvas=canvas, skin_tone=tone, body=body, face=face, hands=hands,
                     clothing=clothing)
    if noise_iou_target is None or noise_iou_target >= 1.0:
        return spec

    accessories = []
    dilation = 0
    scene = generate_scene(spec)
    for _ in range(MAX_ACCESSORIES):
        if scene.noise_iou <= noise_iou_target + 0.01:
            break
        true_area = np.count_nonzero(scene.true_skin.values)
        noise_area = np.count_nonzero(scene.noisy_skin.values) - true_area
        deficit = max(true_area * (1.0 / noise_iou_target - 1.0) - noise_area, 1.0)
        radius = float(np.clip(np.sqrt(deficit / np.pi), 1.5, c * 0.08))
        for _attempt in range(20):
            candidate = _boundary_point(rng, body, 1.0) + (radius,)
            trial = spec._replace(accessories=tuple(accessories) + (candidate,))
            try:
                scene = generate_scene(trial)
            except InvalidGeometry:
                continue
            accessories.append(candidate)
            break
    else:
        dilation = 1
    spec = spec._replace(accessories=tuple(accessories), dilation=dilation)

    if symmetric_noise:
        y, x = _boundary_point(rng, body, 0.0)
        spec = spec._replace(erasures=((0.5 * (y + cy), 0.5 * (x + cx), max(1.5, c * 0.03)),))
    return spec


def augment(image, masks, seed, flip_p=0.5, brightness=0.1):
    """Horizontal flip with probability `flip_p` on image and masks, brightness jitter on the image only.

    Returns:
        Tuple: the image (same type as given) and a list of masks (same types as given).
    """
    rng = np.random.default_rng(seed)
    flip = rng.random() < flip_p
    factor = 1.0 + brightness * rng.uniform(-1.0, 1.0)

    data = image.data if isinstance(image, ImageTensor) else np.asarray(image)
    if flip:
        data = data[:, ::-1]
    if factor != 1.0:
        data = np.clip(data * factor, 0.0, 1.0)
    data = np.ascontiguousarray(data, dtype=np.float32)
    out_image = ImageTensor(data) if isinstance(image, ImageTensor) else data

    out_masks = []
    for mask in masks:
        if isinstance(mask, BinaryMask):
            out_masks.append(BinaryMask(mask.values[:, ::-1]) if flip else mask)
        elif isinstance(mask, PartMask):
            out_masks.append(PartMask(mask.codes[:, ::-1]) if flip else mask)
        else:
            values = np.asarray(mask)
            out_masks.append(np.ascontiguousarray(values[:, ::-1]) if flip else values)
    return out_image, out_masks


def scene_for_stem(seed, stem, canvas=64, noise_iou_target=0.75, symmetric_noise=False) -> Scene:
    """The scene a generated dataset holds under `stem`.

    Every split gets accessories; whether a split is written with the noisy or
    the true label is up to the writer.
    """
    return generate_scene(random_scene_spec(scene_seed(seed, stem), canvas, noise_iou_target, symmetric_noise))


def _scene_for(seed, split, index, canvas, noise_iou_target, symmetric_noise):
    stem = '{}_{:05d}'.format(split, index)
    return stem, scene_for_stem(seed, stem, canvas, noise_iou_target, symmetric_noise)


def generate_scenes(split, num, canvas=64, noise_iou_target=0.75, seed=0, symmetric_noise=False, n_jobs=1):
    """Generates the `num` scenes of a split, stems <split>_00000 onwards."""
    return Parallel(n_jobs=n_jobs)(
        delayed(_scene_for)(seed, split, i, canvas, noise_iou_target, symmetric_noise) for i in range(num))


def write_dataset(root, split, scenes, labels='noisy', with_truth=True):
    """Writes (stem, Scene) pairs in the split layout above.

    Args:
        labels (str): 'noisy' or 'true', the mask written to labels/.
        with_truth (bool): Also write the true skin masks to truth/.
    """
    base = os.path.join(root, split)
    dirs = ['images', 'labels', 'parts'] + (['truth'] if with_truth else [])
    for name in dirs:
        os.makedirs(os.path.join(base, name), exist_ok=True)
    for stem, scene in scenes:
        filename = stem + '.png'
        image_io.write_image(os.path.join(base, 'images', filename), scene.image.data)
        label = scene.noisy_skin if labels == 'noisy' else scene.true_skin
        image_io.write_binary_mask(os.path.join(base, 'labels', filename), label)
        image_io.write_part_mask(os.path.join(base, 'parts', filename), scene.parts)
        if with_truth:
            image_io.write_binary_mask(os.path.join(base, 'truth', filename), scene.true_skin)
    logger.info('wrote {} {} scenes to {}'.format(len(scenes), split, base))


def load_dataset(root, split, parts_dir=None, strict=False, with_parts=True) -> DatasetIndex:
    """Indexes root/<split>/{images,labels,parts}; records with problems are rejected one by one.

    Args:
        parts_dir (str): Replaces root/<split>/parts as the part mask directory.
        strict (bool): Raise DimensionMismatch instead of rejecting a record.
        with_parts (bool): Require part masks on disk; off when a provider derives them.
    """
    base = os.path.join(root, split)
    images_dir = os.path.join(base, 'images')
    labels_dir = os.path.join(base, 'labels')
    parts_dir = parts_dir or os.path.join(base, 'parts')
    truth_dir = os.path.join(base, 'truth')
    required = (images_dir, labels_dir, parts_dir) if with_parts else (images_dir, labels_dir)
    for directory in required:
        if not os.path.isdir(directory):
            msg = 'Missing dataset directory {}'.format(directory)
            logger.error(msg)
            raise MissingDirectory(msg)
    has_truth = os.path.isdir(truth_dir)

    records = []
    rejected = {}
    for stem in image_io.stems(images_dir):
        paths = {'image': os.path.join(images_dir, stem + '.png'),
                 'label': os.path.join(labels_dir, stem + '.png')}
        if with_parts:
            paths['parts'] = os.path.join(parts_dir, stem + '.png')
        if has_truth and os.path.isfile(os.path.join(truth_dir, stem + '.png')):
            paths['truth'] = os.path.join(truth_dir, stem + '.png')
        missing = [kind for kind, path in paths.items() if not os.path.isfile(path)]
        if missing:
            rejected[stem] = 'missing {}'.format(', '.join(missing))
            logger.warning('{}/{}: rejected, {}'.format(split, stem, rejected[stem]))
            continue
        try:
            sizes = {kind: image_io.image_size(path) for kind, path in paths.items()}
        except OSError as e:
            rejected[stem] = 'unreadable: {}'.format(e)
            logger.warning('{}/{}: rejected, {}'.format(split, stem, rejected[stem]))
            continue
        if len(set(sizes.values())) != 1:
            msg = '{}/{}: dimension mismatch {}'.format(split, stem, sizes)
            if strict:
                logger.error(msg)
                raise DimensionMismatch(msg)
            rejected[stem] = 'dimension mismatch {}'.format(sizes)
            logger.warning('{}, rejected'.format(msg))
            continue
        records.append(Record(stem, paths['image'], paths['label'], paths.get('parts'), paths.get('truth')))

    logger.info('indexed {} {} records ({} rejected) under {}'.format(len(records), split, len(rejected), base))
    return DatasetIndex(split, records, rejected)
