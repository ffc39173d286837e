#!/usr/bin/env python
# -*- coding: utf-8 -*-

from .__version__ import __version__
from .attention import BodyAttention, SkinAttention, skin_affinity_map
from .body_mask_provider import FileMaskProvider, MaskProviderConfig, SyntheticMaskProvider, make_provider
from .data_synth import SceneSpec, generate_scene, load_dataset, random_scene_spec
from .defs import BinaryMask, ImageTensor, PartMask, SkinProbMap, SkinsegError
from .losses_metrics import LossConfig, combined_loss, confusion, metrics
from .network import ModelConfig, SkinSegNet, build_model, forward, parameter_count
from .pipeline import TrainConfig, Trainer, load_checkpoint, load_config, save_checkpoint
from .relabeler import RelabelSchedule, RelabelState, relabel_mask, run_recursive_training

__all__ = ['BinaryMask', 'BodyAttention', 'FileMaskProvider', 'ImageTensor', 'LossConfig', 'MaskProviderConfig',
           'ModelConfig', 'PartMask', 'RelabelSchedule', 'RelabelState', 'SceneSpec', 'SkinAttention', 'SkinProbMap',
           'SkinSegNet', 'SkinsegError', 'SyntheticMaskProvider', 'TrainConfig', 'Trainer', 'build_model',
           'combined_loss', 'confusion', 'forward', 'generate_scene', 'load_checkpoint', 'load_config',
           'load_dataset', 'make_provider', 'metrics', 'parameter_count', 'random_scene_spec', 'relabel_mask',
           'run_recursive_training', 'save_checkpoint', 'skin_affinity_map', '__version__']
