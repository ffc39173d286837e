#!/usr/bin/env python
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from ..defs import (BinaryMask, DataError, ImageTensor, InvalidCode, InvalidMaskValue, PartMask, ShapeMismatch,
                    SkinProbMap, SkinsegError, derive_body_mask, derive_face_hand_mask, derive_seed, resize_mask,
                    resize_nearest)


def test_image_tensor():
    image = ImageTensor(np.full((16, 24, 3), 0.5))
    assert image.data.dtype == np.float32
    assert (image.height, image.width) == (16, 24)
    assert not image.data.flags.writeable

    with pytest.raises(ShapeMismatch):
        ImageTensor(np.zeros((12, 16, 3)))  # 12 is not a multiple of 8
    with pytest.raises(ShapeMismatch):
        ImageTensor(np.zeros((16, 16)))
    with pytest.raises(InvalidMaskValue):
        ImageTensor(np.full((8, 8, 3), 1.5))
    with pytest.raises(InvalidMaskValue):
        ImageTensor(np.full((8, 8, 3), np.nan))


def test_part_mask_codes():
    parts = PartMask([[0, 1], [2, 3]])
    assert parts.codes.dtype == np.uint8
    assert parts == PartMask(np.array([[0, 1], [2, 3]], dtype=np.int64))
    assert parts != PartMask([[0, 1], [2, 2]])

    with pytest.raises(InvalidCode):
        PartMask([[0, 4]])
    with pytest.raises(InvalidCode):
        PartMask([[0.5, 1]])
    with pytest.raises(ShapeMismatch):
        PartMask([0, 1, 2])

    # Errors are catchable by family and by builtin
    with pytest.raises(DataError):
        PartMask([[7]])
    with pytest.raises(ValueError):
        PartMask([[7]])
    assert issubclass(InvalidCode, SkinsegError)


def test_binary_mask_and_prob_map():
    mask = BinaryMask([[True, False], [False, True]])
    assert mask.values.tolist() == [[1, 0], [0, 1]]
    with pytest.raises(InvalidMaskValue):
        BinaryMask([[0, 2]])

    prob = SkinProbMap([[0.25, -0.5]])
    assert prob.values.dtype == np.float64
    with pytest.raises(InvalidMaskValue):
        SkinProbMap([[np.inf, 0.0]])


def test_derived_masks():
    parts = PartMask([[0, 1, 2, 3],
                      [1, 1, 0, 2]])
    assert derive_body_mask(parts).values.tolist() == [[0, 1, 1, 1], [1, 1, 0, 1]]
    assert derive_face_hand_mask(parts).values.tolist() == [[0, 0, 1, 1], [0, 0, 0, 1]]

    # Face and hands always lie inside the body
    rng = np.random.default_rng(3)
    for _ in range(20):
        parts = PartMask(rng.integers(0, 4, size=(9, 7)))
        body = derive_body_mask(parts).values
        face_hand = derive_face_hand_mask(parts).values
        assert not (face_hand & ~body).any()


def test_resize():
    codes = np.arange(16).reshape(4, 4) % 4
    down = resize_nearest(codes, 2, 2)
    assert down.tolist() == [[codes[0, 0], codes[0, 2]], [codes[2, 0], codes[2, 2]]]
    up = resize_nearest(np.array([[1, 2]]), 2, 4)
    assert up.tolist() == [[1, 1, 2, 2], [1, 1, 2, 2]]

    same = resize_nearest(codes, 4, 4)
    assert np.array_equal(same, codes) and same is not codes

    assert isinstance(resize_mask(PartMask(codes), 2, 2), PartMask)
    assert isinstance(resize_mask(BinaryMask(codes > 1), 8, 8), BinaryMask)
    with pytest.raises(ShapeMismatch):
        resize_nearest(codes, 0, 4)

    # 8 x 8 to 3 x 3 reads source rows and columns floor(i * 8 / 3)
    grid = (np.arange(64).reshape(8, 8) * 5 // 3 % 4).astype(np.uint8)
    picked = [i * 8 // 3 for i in range(3)]
    assert picked == [0, 2, 5]
    small = resize_mask(PartMask(grid), 3, 3)
    assert small.codes.tolist() == [[int(grid[r, c]) for c in picked] for r in picked]
    binary = resize_mask(BinaryMask(grid > 1), 3, 3)
    assert binary.values.tolist() == [[bool(grid[r, c] > 1) for c in picked] for r in picked]


def test_derive_seed():
    assert derive_seed('loader', 0, 1) == derive_seed('loader', 0, 1)
    assert derive_seed('loader', 0, 1) != derive_seed('loader', 0, 2)
    assert 0 <= derive_seed('x') < 2 ** 32
