#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os

import pytest

from .. import image_io
from ..cli import Skinseg, run_command
from ..data_synth import scene_for_stem
from ..defs import CheckpointError, DatasetEmpty, InvalidConfig, NumericError


def fail_with(error):
    def command():
        raise error
    return command


def test_exit_codes():
    assert run_command(lambda: None) == 0
    assert run_command(fail_with(InvalidConfig('bad key'))) == 2
    assert run_command(fail_with(CheckpointError('bad magic'))) == 2
    assert run_command(fail_with(DatasetEmpty('no images'))) == 3
    assert run_command(fail_with(NumericError('nan'))) == 4
    with pytest.raises(KeyError):
        run_command(fail_with(KeyError('not ours')))


def test_synth_and_dry_run(tmp_path):
    config = tmp_path / 'run.toml'
    config.write_text('input_size = 64\nnum_train = 2\nnum_val = 1\nnum_test = 0\nnum_workers = 1\n')
    root = str(tmp_path / 'data')

    _, code = Skinseg.run(['skinseg', 'synth', '--config', str(config), '--data-root', root], exit=False)
    assert code == 0
    assert len(os.listdir(os.path.join(root, 'train', 'images'))) == 2

    _, code = Skinseg.run(['skinseg', 'train', '--config', str(config), '--data-root', root,
                           '--out', str(tmp_path / 'run'), '--dry-run'], exit=False)
    assert code == 0
    assert not os.path.exists(str(tmp_path / 'run'))

    _, code = Skinseg.run(['skinseg', 'train', '--config', str(tmp_path / 'missing.toml'), '--dry-run'],
                          exit=False)
    assert code == 2
    _, code = Skinseg.run(['skinseg', 'eval', '--config', str(config), '--out', str(tmp_path / 'eval'),
                           str(tmp_path / 'missing.ckpt')], exit=False)
    assert code == 2


def test_synth_flags(tmp_path):
    config = tmp_path / 'run.toml'
    config.write_text('num_train = 9\nnum_val = 1\nnum_test = 0\nnum_workers = 1\n')
    root = tmp_path / 'dump'

    _, code = Skinseg.run(['skinseg', 'synth', '--config', str(config), '--out', str(root), '--num', '3',
                           '--size', '64', '--noise-iou-target', '0.8', '--seed', '2'], exit=False)
    assert code == 0
    stems = image_io.stems(str(root / 'train' / 'images'))
    assert stems == ['train_00000', 'train_00001', 'train_00002']
    assert image_io.read_image(str(root / 'train' / 'images' / 'train_00000.png')).shape == (64, 64, 3)
    scene = scene_for_stem(2, 'train_00001', 64, 0.8)
    assert image_io.read_binary_mask(str(root / 'train' / 'labels' / 'train_00001.png')) == scene.noisy_skin
    assert len(image_io.stems(str(root / 'val' / 'images'))) == 1

    _, code = Skinseg.run(['skinseg', 'synth', '--config', str(config), '--out', str(root), '--size', '60'],
                          exit=False)
    assert code == 2
