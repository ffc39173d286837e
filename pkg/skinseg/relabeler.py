#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Recursive weakly supervised training: warm up on the given labels, then
repeatedly shrink the training labels to the pixels the skin attention map
still supports, until the validation metric drops.

Inside the body area a label survives iff L_prev * A > t; outside it the
label is carried over untouched. t starts at t0 and grows by t_step after
every modification round.

The trainer handle is duck-typed and must provide::

    train_set            with .stems, .labels (N x H x W uint8), .parts, .truth (or None)
    set_train_labels(labels)
    train_epochs(n)      -> list of mean epoch losses
    evaluate()           -> metrics dict on the validation set
    attention_maps()     -> N x H x W pre-gate attention maps of the training images
    state_dict() / load_state_dict(state)
"""

import copy
import logging
import os
import shutil
from collections import namedtuple

import numpy as np
from joblib import Parallel, delayed

from . import image_io
from .data_synth import mask_iou
from .defs import BinaryMask, DatasetEmpty, InvalidConfig, ShapeMismatch, _values, derive_body_mask
from .losses_metrics import METRIC_NAMES

logger = logging.getLogger(__name__)

T_CAP = 0.95
MONITOR_METRICS = ('f1', 'dsc')
JOURNAL_NAME = 'relabel_state.log'
JOURNAL_LOGGER = 'skinseg.journal'


class RelabelSchedule(namedtuple('RelabelSchedule', ['warmup_rounds', 't0', 't_step', 'epochs_per_round',
                                                     'monitor_metric', 'max_modification_rounds',
                                                     'final_epochs'])):
    """Warm-up length, threshold schedule and stopping budget of the recursive protocol.

    Args:
        warmup_rounds (int): Rounds trained on the original labels before any modification.
        t0 (float): Threshold of the first modification round, in (0, 1).
        t_step (float): Threshold increment per completed modification round.
        epochs_per_round (int): Epochs in one training round.
        monitor_metric (str): Validation metric of the stop rule, 'f1' or 'dsc'.
        max_modification_rounds (int): Upper bound on modification rounds.
        final_epochs (int): Epochs of standard training on the final labels; 0 skips the phase.
    """
    __slots__: list = []

    def __new__(cls, warmup_rounds=2, t0=0.2, t_step=0.05, epochs_per_round=1, monitor_metric='f1',
                max_modification_rounds=10, final_epochs=5):
        if warmup_rounds < 1:
            raise InvalidConfig('warmup_rounds must be >= 1, got {}'.format(warmup_rounds))
        if not 0 < t0 < 1:
            raise InvalidConfig('t0 must lie in (0, 1), got {}'.format(t0))
        if t_step <= 0:
            raise InvalidConfig('t_step must be > 0, got {}'.format(t_step))
        if epochs_per_round < 1 or max_modification_rounds < 1 or final_epochs < 0:
            raise InvalidConfig('Round and epoch counts must be positive')
        if monitor_metric not in MONITOR_METRICS:
            raise InvalidConfig('monitor_metric must be one of {}, got {!r}'.format(MONITOR_METRICS, monitor_metric))
        return super(RelabelSchedule, cls).__new__(cls, int(warmup_rounds), float(t0), float(t_step),
                                                   int(epochs_per_round), monitor_metric,
                                                   int(max_modification_rounds), int(final_epochs))

    def threshold(self, rounds_completed: int) -> float:
        return round(self.t0 + self.t_step * rounds_completed, 10)


class RelabelState(object):
    def __init__(self, schedule: RelabelSchedule):
        self.schedule = schedule
        self.round_index = 0
        self.current_t = schedule.threshold(0)
        self.label_generations = []
        self.validation_history = []
        self.label_iou = []
        self.stopped = False
        self.final_generation = None
        self.final_metrics = None

    def __repr__(self):
        return 'RelabelState(round={}, t={:.2f}, generations={}, stopped={}, final_generation={})'.format(
            self.round_index, self.current_t, len(self.label_generations), self.stopped, self.final_generation)

    def stop(self, generation):
        self.stopped = True
        self.final_generation = generation


def relabel_mask(l_prev, p, body, t) -> BinaryMask:
    """New label of one image.

    Args:
        l_prev (BinaryMask): Label of the previous generation.
        p (SkinProbMap): Skin attention map, any real values.
        body (BinaryMask): Pixels where relabeling is allowed.
        t (float): Threshold in (0, 1).
    """
    labels = _values(l_prev)
    attention = _values(p)
    region = _values(body).astype(bool)
    if not labels.shape == attention.shape == region.shape:
        raise ShapeMismatch('Label {}, attention {} and body {} shapes differ'.format(
            labels.shape, attention.shape, region.shape))
    if not 0 < t < 1:
        raise InvalidConfig('Relabel threshold must lie in (0, 1), got {}'.format(t))
    kept = labels * attention > t
    return BinaryMask(np.where(region, kept, labels.astype(bool)))


def _relabel_one(labels, attention, parts, t):
    return relabel_mask(labels, attention, derive_body_mask(parts), t).values


def relabel_all(labels, attention, parts, t, n_jobs=1) -> np.ndarray:
    """relabel_mask over a stack of N images."""
    new = Parallel(n_jobs=n_jobs)(delayed(_relabel_one)(labels[i], attention[i], parts[i], t)
                                  for i in range(len(labels)))
    return np.stack(new).astype(np.uint8)


def first_drop(history):
    """Index of the first metric lower than its predecessor, None when the history never drops."""
    for i in range(1, len(history)):
        if history[i] < history[i - 1]:
            return i
    return None


def generation_dir(run_dir, generation) -> str:
    return os.path.join(run_dir, 'labels_gen{}'.format(generation))


def save_generation(run_dir, generation, stems, labels) -> str:
    """Writes one label generation; the directory appears complete or not at all."""
    target = generation_dir(run_dir, generation)
    tmp = target + '.tmp'
    shutil.rmtree(tmp, ignore_errors=True)
    os.makedirs(tmp)
    for stem, label in zip(stems, labels):
        image_io.write_binary_mask(os.path.join(tmp, stem + '.png'), BinaryMask(label))
    if os.path.isdir(target):
        shutil.rmtree(target)
    os.replace(tmp, target)
    return target


def load_generation(run_dir, generation, stems) -> np.ndarray:
    directory = generation_dir(run_dir, generation)
    return np.stack([image_io.read_binary_mask(os.path.join(directory, stem + '.png')).values for stem in stems])


def open_journal(run_dir) -> logging.Logger:
    journal = logging.getLogger(JOURNAL_LOGGER)
    for handler in list(journal.handlers):
        journal.removeHandler(handler)
        handler.close()
    handler = logging.FileHandler(os.path.join(run_dir, JOURNAL_NAME), mode='a')
    handler.setFormatter(logging.Formatter('%(message)s'))
    journal.addHandler(handler)
    journal.setLevel(logging.INFO)
    journal.propagate = False
    return journal


def close_journal(journal):
    for handler in list(journal.handlers):
        journal.removeHandler(handler)
        handler.close()


def _entry(phase, state, metrics, **extra):
    fields = [('phase', phase), ('round', state.round_index), ('t', '{:.2f}'.format(state.current_t))]
    fields += [(k, '{:.6f}'.format(v) if isinstance(v, float) else v) for k, v in extra.items()]
    fields += [(name, '{:.6f}'.format(metrics[name])) for name in METRIC_NAMES if name in metrics]
    return ' '.join('{}={}'.format(k, v) for k, v in fields)


def _label_iou(labels, truth):
    if truth is None:
        return None
    return mask_iou(labels, truth)


def run_recursive_training(trainer, schedule: RelabelSchedule, run_dir, n_jobs=1) -> RelabelState:
    """Warm-up, modification rounds until the monitored validation metric drops, then final training.

    Label generation k lives in <run_dir>/labels_gen<k>; generation 0 holds the original labels.
    On a drop after round k the labels roll back to generation k - 1, which becomes final.

    Returns:
        RelabelState: history of the run, final_generation set.
    """
    train_set = trainer.train_set
    if len(train_set.stems) == 0:
        raise DatasetEmpty('Recursive training needs at least one training image')
    os.makedirs(run_dir, exist_ok=True)
    journal = open_journal(run_dir)
    state = RelabelState(schedule)
    stems, parts, truth = train_set.stems, train_set.parts, train_set.truth
    monitor = schedule.monitor_metric

    try:
        labels = np.array(train_set.labels, dtype=np.uint8)
        state.label_generations.append(save_generation(run_dir, 0, stems, labels))
        state.label_iou.append(_label_iou(labels, truth))

        trainer.set_train_labels(labels)
        trainer.train_epochs(schedule.warmup_rounds * schedule.epochs_per_round)
        metrics = trainer.evaluate()
        state.validation_history.append((0, metrics[monitor]))
        journal.info(_entry('warmup', state, metrics, generation=0, label_iou=state.label_iou[-1]))
        logger.info('warm-up done, validation {} {:.4f}'.format(monitor, metrics[monitor]))

        for k in range(1, schedule.max_modification_rounds + 1):
            applied_t = schedule.threshold(k - 1)
            if applied_t > T_CAP:
                logger.info('threshold {:.2f} would pass the {:.2f} cap, stopping'.format(applied_t, T_CAP))
                break
            attention = trainer.attention_maps()
            new_labels = relabel_all(labels, attention, parts, applied_t, n_jobs)
            changed = int(np.count_nonzero(new_labels != labels))
            state.label_generations.append(save_generation(run_dir, k, stems, new_labels))
            state.label_iou.append(_label_iou(new_labels, truth))

            trainer.set_train_labels(new_labels)
            trainer.train_epochs(schedule.epochs_per_round)
            metrics = trainer.evaluate()
            state.round_index = k
            state.current_t = schedule.threshold(k)
            state.validation_history.append((k, metrics[monitor]))
            journal.info(_entry('modify', state, metrics, applied_t=applied_t, generation=k, changed=changed,
                                label_iou=state.label_iou[-1]))
            logger.info('round {}: t={:.2f}, {} pixels relabeled, validation {} {:.4f}'.format(
                k, applied_t, changed, monitor, metrics[monitor]))

            if first_drop([m for _, m in state.validation_history[-2:]]) is not None:
                state.stop(k - 1)
                labels = load_generation(run_dir, k - 1, stems)
                logger.info('validation {} dropped, rolling back to generation {}'.format(monitor, k - 1))
                break
            labels = new_labels

        if not state.stopped:
            state.stop(len(state.label_generations) - 1)

        trainer.set_train_labels(labels)
        state.final_metrics = train_keep_best(trainer, schedule.final_epochs, monitor)
        journal.info(_entry('final', state, state.final_metrics or {}, generation=state.final_generation))
    finally:
        close_journal(journal)
    return state


def train_keep_best(trainer, epochs, monitor='f1'):
    """Trains `epochs` epochs and restores the state with the best validation `monitor` metric."""
    if epochs == 0:
        return trainer.evaluate()
    best_metrics, best_state = None, None
    for _ in range(epochs):
        trainer.train_epochs(1)
        metrics = trainer.evaluate()
        if best_metrics is None or metrics[monitor] > best_metrics[monitor]:
            best_metrics, best_state = metrics, copy.deepcopy(trainer.state_dict())
    trainer.load_state_dict(best_state)
    return best_metrics
