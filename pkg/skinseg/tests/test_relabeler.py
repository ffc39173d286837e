#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os

import numpy as np
import pytest

from ..defs import BinaryMask, DatasetEmpty, InvalidConfig, ShapeMismatch, SkinProbMap
from ..relabeler import (JOURNAL_NAME, RelabelSchedule, first_drop, generation_dir, load_generation, relabel_mask,
                         run_recursive_training)


def random_triple(rng, size=16):
    labels = BinaryMask(rng.random((size, size)) < 0.6)
    attention = SkinProbMap(rng.uniform(-1.0, 1.0, (size, size)))
    body = BinaryMask(rng.random((size, size)) < 0.7)
    return labels, attention, body


def test_relabel_rule():
    one = BinaryMask([[1]])
    inside = BinaryMask([[1]])
    assert relabel_mask(one, SkinProbMap([[0.3]]), inside, 0.2).values[0, 0] == 1
    assert relabel_mask(one, SkinProbMap([[0.3]]), inside, 0.35).values[0, 0] == 0
    assert relabel_mask(BinaryMask([[0]]), SkinProbMap([[0.99]]), inside, 0.2).values[0, 0] == 0
    # Outside the body nothing changes
    assert relabel_mask(one, SkinProbMap([[-0.9]]), BinaryMask([[0]]), 0.2).values[0, 0] == 1

    with pytest.raises(ShapeMismatch):
        relabel_mask(one, SkinProbMap([[0.3, 0.3]]), inside, 0.2)
    with pytest.raises(InvalidConfig):
        relabel_mask(one, SkinProbMap([[0.3]]), inside, 1.0)


def test_relabel_pixel_oracle():
    labels, attention, body = random_triple(np.random.default_rng(0))
    new = relabel_mask(labels, attention, body, 0.25).values
    for i in range(16):
        for j in range(16):
            if body.values[i, j]:
                expected = int(labels.values[i, j] * attention.values[i, j] > 0.25)
            else:
                expected = labels.values[i, j]
            assert new[i, j] == expected


def test_relabel_properties():
    rng = np.random.default_rng(1)
    for _ in range(200):
        labels, attention, body = random_triple(rng)
        t_low, t_high = sorted(rng.uniform(0.01, 0.99, size=2))
        low = relabel_mask(labels, attention, body, t_low).values
        high = relabel_mask(labels, attention, body, t_high).values
        inside = body.values.astype(bool)

        # Shrinks monotonically in t and never creates skin
        assert not (high & ~low).any()
        assert not (low & ~labels.values).any()
        # Idempotent
        again = relabel_mask(BinaryMask(low), attention, body, t_low).values
        assert np.array_equal(again, low)
        # Out-of-body pixels are carried over bit for bit
        assert np.array_equal(low[~inside], labels.values[~inside])


def test_schedule():
    schedule = RelabelSchedule()
    assert schedule.warmup_rounds == 2
    assert [schedule.threshold(k) for k in range(4)] == [0.2, 0.25, 0.3, 0.35]
    with pytest.raises(InvalidConfig):
        RelabelSchedule(t0=0.0)
    with pytest.raises(InvalidConfig):
        RelabelSchedule(warmup_rounds=0)
    with pytest.raises(InvalidConfig):
        RelabelSchedule(monitor_metric='iou')


def test_stop_rule():
    assert first_drop([0.80, 0.83, 0.85, 0.84]) == 3
    assert first_drop([0.80, 0.83, 0.85]) is None
    assert first_drop([0.80, 0.80]) is None


class TrainSet(object):
    def __init__(self, labels, parts, truth=None):
        self.stems = ['img{}'.format(i) for i in range(len(labels))]
        self.labels = labels
        self.parts = parts
        self.truth = truth


class StubTrainer(object):
    """Replays a fixed validation history; attention is a fixed map."""

    def __init__(self, train_set, history, attention):
        self.train_set = train_set
        self.history = list(history)
        self.attention = attention
        self.epochs = 0
        self.weights = 0
        self.label_sets = []

    def set_train_labels(self, labels):
        self.train_set.labels = np.array(labels)
        self.label_sets.append(np.array(labels))

    def train_epochs(self, n):
        self.epochs += n
        self.weights += n
        return [0.0] * n

    def evaluate(self):
        value = self.history.pop(0) if self.history else 0.0
        return {'f1': value, 'dsc': value}

    def attention_maps(self):
        return self.attention

    def state_dict(self):
        return {'weights': self.weights}

    def load_state_dict(self, state):
        self.weights = state['weights']


def stub_data(n=3, size=8):
    rng = np.random.default_rng(2)
    parts = np.ones((n, size, size), dtype=np.uint8)
    parts[:, 0, :] = 0  # first row outside the body
    parts[:, 1, 1] = 2
    labels = np.ones((n, size, size), dtype=np.uint8)
    truth = (rng.random((n, size, size)) < 0.5).astype(np.uint8)
    # Attention ramps along columns, between the thresholds: every round drops one more column
    attention = np.tile(np.linspace(0.125, 0.475, size), (n, size, 1))
    return labels, parts, truth, attention


def test_recursive_protocol(tmp_path):
    labels, parts, truth, attention = stub_data()
    run_dir = str(tmp_path)
    # Warm-up, then rounds 1-3 improve, round 4 drops; final phase replays 3 epochs
    history = [0.80, 0.82, 0.83, 0.85, 0.84, 0.70, 0.90, 0.60]
    trainer = StubTrainer(TrainSet(labels.copy(), parts, truth), history, attention)
    schedule = RelabelSchedule(warmup_rounds=2, epochs_per_round=1, final_epochs=3)
    state = run_recursive_training(trainer, schedule, run_dir)

    assert state.stopped
    assert state.round_index == 4
    assert state.final_generation == 3
    assert [m for _, m in state.validation_history] == [0.80, 0.82, 0.83, 0.85, 0.84]
    assert state.current_t == pytest.approx(0.4)
    assert len(state.label_generations) == 5
    assert len(state.label_iou) == 5 and state.label_iou[0] is not None

    # Rollback: training continued on generation 3, exactly as persisted
    gen3 = load_generation(run_dir, 3, trainer.train_set.stems)
    assert np.array_equal(trainer.label_sets[-1], gen3)
    # Labels only shrink, and never outside the body
    gens = [load_generation(run_dir, k, trainer.train_set.stems) for k in range(5)]
    for prev, new in zip(gens, gens[1:]):
        assert not (new & ~prev).any()
        assert np.array_equal(new[parts == 0], prev[parts == 0])
    assert gens[4].sum() < gens[3].sum()

    # Best final-phase state kept: the 0.90 epoch is the second of three
    assert state.final_metrics['f1'] == 0.90
    assert trainer.weights == 2 + 4 + 2
    assert trainer.epochs == 2 + 4 + 3

    with open(os.path.join(run_dir, JOURNAL_NAME)) as f:
        lines = f.read().splitlines()
    assert [line.split()[0] for line in lines] == ['phase=warmup'] + ['phase=modify'] * 4 + ['phase=final']
    ts = [field for line in lines[:4] for field in line.split() if field.startswith('t=')]
    assert ts == ['t=0.20', 't=0.25', 't=0.30', 't=0.35']
    assert os.path.isdir(generation_dir(run_dir, 0))
    assert not any(name.endswith('.tmp') for name in os.listdir(run_dir))


def test_protocol_stops_at_round_budget(tmp_path):
    labels, parts, _, attention = stub_data()
    trainer = StubTrainer(TrainSet(labels.copy(), parts), [0.5, 0.6, 0.7], attention)
    schedule = RelabelSchedule(max_modification_rounds=2, final_epochs=0)
    state = run_recursive_training(trainer, schedule, str(tmp_path))
    assert state.final_generation == 2
    assert state.label_iou == [None, None, None]


def test_empty_training_set(tmp_path):
    empty = TrainSet(np.zeros((0, 8, 8)), np.zeros((0, 8, 8)))
    with pytest.raises(DatasetEmpty):
        run_recursive_training(StubTrainer(empty, [], None), RelabelSchedule(), str(tmp_path))
