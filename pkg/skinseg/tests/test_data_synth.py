#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os

import numpy as np
import pytest
from scipy import ndimage

from .. import image_io
from ..data_synth import (ACCESSORY_CONTRAST, SceneSpec, _disc, augment, generate_scene, generate_scenes,
                          load_dataset, mask_iou, random_scene_spec, scene_for_stem, write_dataset)
from ..defs import (BODY, FACE, HAND, BinaryMask, DimensionMismatch, ImageTensor, InvalidGeometry, MissingDirectory,
                    PartMask)


def test_default_scene():
    scene = generate_scene(SceneSpec())
    assert isinstance(scene.image, ImageTensor)
    assert scene.image.data.shape == (64, 64, 3)
    codes = scene.parts.codes
    assert (codes == FACE).any() and (codes == BODY).any()

    # Without noise sources the noisy label is the truth
    assert scene.noisy_skin == scene.true_skin
    assert scene.noise_iou == 1.0

    # Skin never leaves the body
    assert not (scene.true_skin.values.astype(bool) & (codes == 0)).any()


def test_invalid_geometry():
    with pytest.raises(InvalidGeometry):
        generate_scene(SceneSpec(canvas=60))
    with pytest.raises(InvalidGeometry):
        generate_scene(SceneSpec(face=(2.0, 2.0, 3.0)))  # outside the body
    with pytest.raises(InvalidGeometry):
        generate_scene(SceneSpec(accessories=((20.0, 32.0, 2.0),)))  # on the face
    with pytest.raises(InvalidGeometry):
        generate_scene(SceneSpec(accessories=((2.0, 2.0, 1.0),)))  # off the body
    with pytest.raises(InvalidGeometry):
        generate_scene(SceneSpec(dilation=-1))


def test_accessories_are_label_noise():
    spec = SceneSpec(accessories=((34.0, 44.0, 3.0),))
    scene = generate_scene(spec)
    noisy = scene.noisy_skin.values.astype(bool)
    true = scene.true_skin.values.astype(bool)
    assert (noisy & ~true).any()
    assert not (true & ~noisy).any()
    # Noise stays inside the part-mask body so relabeling can reach it
    assert not (noisy & (scene.parts.codes == 0)).any()


def test_noise_level():
    ious = [generate_scene(random_scene_spec(seed, 64, 0.75)).noise_iou for seed in range(20)]
    assert 0.72 <= np.mean(ious) <= 0.78
    assert all(iou < 1.0 for iou in ious)

    clean = generate_scene(random_scene_spec(5, 64, None))
    assert clean.noise_iou == 1.0


def test_erasures_remove_skin():
    scene = generate_scene(SceneSpec(erasures=((34.0, 32.0, 3.0),)))
    true = scene.true_skin.values.astype(bool)
    noisy = scene.noisy_skin.values.astype(bool)
    assert (true & ~noisy).any()


def test_determinism():
    a = scene_for_stem(3, 'train_00007')
    b = scene_for_stem(3, 'train_00007')
    assert np.array_equal(a.image.data, b.image.data)
    assert a.noisy_skin == b.noisy_skin and a.parts == b.parts
    # Accessories appear in every split
    assert scene_for_stem(3, 'val_00007').noise_iou < 1.0

    stems = [stem for stem, _ in generate_scenes('val', 3, seed=3)]
    assert stems == ['val_00000', 'val_00001', 'val_00002']


def test_augment():
    image = np.random.default_rng(0).uniform(size=(8, 16, 3)).astype(np.float32)
    mask = BinaryMask(np.tri(8, 16, dtype=bool))
    parts = PartMask(np.tri(8, 16, dtype=np.uint8) * HAND)

    out, (m, p) = augment(image, [mask, parts], seed=1, flip_p=1.0, brightness=0.0)
    assert np.array_equal(out, image[:, ::-1])
    assert np.array_equal(m.values, mask.values[:, ::-1]) and isinstance(m, BinaryMask)
    assert np.array_equal(p.codes, parts.codes[:, ::-1]) and isinstance(p, PartMask)

    out, (m, p) = augment(ImageTensor(image), [mask, parts], seed=1, flip_p=0.0, brightness=0.2)
    assert isinstance(out, ImageTensor)
    assert m == mask and p == parts
    unclipped = (image > 0.05) & (image < 0.8)
    ratio = out.data[unclipped] / image[unclipped]
    assert np.allclose(ratio, ratio[0])
    assert 0.8 - 1e-6 <= ratio[0] <= 1.2 + 1e-6


def test_write_and_load(tmp_path):
    root = str(tmp_path)
    write_dataset(root, 'train', generate_scenes('train', 4, seed=1))
    index = load_dataset(root, 'train')
    assert len(index) == 4 and not index.rejected
    record = index.records[0]
    assert record.truth is not None
    assert image_io.read_part_mask(record.parts).shape == (64, 64)
    assert mask_iou(image_io.read_binary_mask(record.label).values,
                    image_io.read_binary_mask(record.truth).values) < 1.0

    # One missing label, one mismatched part mask
    os.remove(os.path.join(root, 'train', 'labels', 'train_00001.png'))
    image_io.write_part_mask(os.path.join(root, 'train', 'parts', 'train_00002.png'), PartMask(np.zeros((8, 8))))
    index = load_dataset(root, 'train')
    assert [r.stem for r in index.records] == ['train_00000', 'train_00003']
    assert set(index.rejected) == {'train_00001', 'train_00002'}
    with pytest.raises(DimensionMismatch):
        load_dataset(root, 'train', strict=True)

    # Providers may supply the part masks instead
    index = load_dataset(root, 'train', with_parts=False)
    assert len(index) == 3 and index.records[0].parts is None

    with pytest.raises(MissingDirectory):
        load_dataset(root, 'val')


def test_accessory_pixel_count():
    # A radius-3 disc covers 29 pixels, all of them false-positive label pixels
    spec = SceneSpec(accessories=((34.0, 44.0, 3.0),))
    scene = generate_scene(spec)
    true = scene.true_skin.values.astype(bool)
    assert np.count_nonzero(scene.noisy_skin.values.astype(bool) & ~true) == 29

    # A one-pixel dilation adds the body-coded ring around the undilated label, here into clothing
    clothed = spec._replace(clothing=((38, 10, 56, 54),))
    clean = generate_scene(clothed)
    grown = generate_scene(clothed._replace(dilation=1))
    base = clean.noisy_skin.values.astype(bool)
    ring = ndimage.binary_dilation(base) & ~base & (clean.parts.codes >= BODY)
    assert np.count_nonzero(ring) > 0
    assert grown.true_skin == clean.true_skin
    noise = grown.noisy_skin.values.astype(bool) & ~grown.true_skin.values.astype(bool)
    assert np.count_nonzero(noise) == 29 + np.count_nonzero(ring)


def test_accessory_colors():
    tone = np.asarray(SceneSpec().skin_tone)
    region = _disc(64, 34.0, 44.0, 3.0)
    colors = []
    for seed in range(10):
        scene = generate_scene(SceneSpec(seed=seed, accessories=((34.0, 44.0, 3.0),)))
        colors.append(scene.image.data[region].mean(axis=0))
    # Pixel noise averages out over the disc
    assert all(np.linalg.norm(color - tone) >= ACCESSORY_CONTRAST - 0.05 for color in colors)
    assert len({tuple(np.round(color, 1)) for color in colors}) > 1


def test_dataset_round_trip(tmp_path):
    root = str(tmp_path)
    scenes = generate_scenes('train', 10, seed=4)
    write_dataset(root, 'train', scenes)
    index = load_dataset(root, 'train')
    assert [r.stem for r in index.records] == [stem for stem, _ in scenes]
    for record, (_, scene) in zip(index.records, scenes):
        assert image_io.read_binary_mask(record.label) == scene.noisy_skin
        assert image_io.read_binary_mask(record.truth) == scene.true_skin
        assert image_io.read_part_mask(record.parts) == scene.parts
        assert np.abs(image_io.read_image(record.image) - scene.image.data).max() <= 0.5 / 255 + 1e-6


def test_brightness_never_touches_masks():
    rng = np.random.default_rng(1)
    image = rng.uniform(size=(8, 8, 3)).astype(np.float32)
    mask = BinaryMask(rng.random((8, 8)) > 0.5)
    parts = PartMask(rng.integers(0, 4, size=(8, 8)))
    flipped = 0
    for seed in range(100):
        _, (m, p) = augment(image, [mask, parts], seed, flip_p=0.0, brightness=0.1)
        assert m == mask and p == parts

        _, (m, p) = augment(image, [mask, parts], seed)
        if m != mask:
            flipped += 1
            assert m == BinaryMask(mask.values[:, ::-1]) and p == PartMask(parts.codes[:, ::-1])
        else:
            assert p == parts
    assert 0 < flipped < 100
