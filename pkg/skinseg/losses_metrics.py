#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Training objective (Dice + binary focal) and evaluation metrics.

Precision, recall, F1, CDR and IoU are computed from dataset-aggregated pixel
counts; DSC is the mean of per-image Dice scores. CDR is overall pixel accuracy.
A ratio with a zero denominator is 1.0 when its error count is also zero, else 0.0.
"""

import logging
from collections import namedtuple

import numpy as np
import torch

from .defs import BinaryMask, InvalidConfig, ShapeMismatch, SkinProbMap

logger = logging.getLogger(__name__)

EPSILON = 1e-7
THRESHOLD = 0.5
METRIC_NAMES = ('precision', 'recall', 'f1', 'cdr', 'dsc', 'iou')


class LossConfig(namedtuple('LossConfig', ['focal_gamma', 'focal_alpha', 'dice_smooth', 'dice_weight',
                                           'focal_weight'])):
    __slots__: list = []

    def __new__(cls, focal_gamma=2.0, focal_alpha=0.25, dice_smooth=1.0, dice_weight=1.0, focal_weight=1.0):
        if focal_gamma < 0:
            raise InvalidConfig('focal_gamma must be >= 0, got {}'.format(focal_gamma))
        if not 0 < focal_alpha < 1:
            raise InvalidConfig('focal_alpha must lie in (0, 1), got {}'.format(focal_alpha))
        if dice_smooth <= 0:
            raise InvalidConfig('dice_smooth must be > 0, got {}'.format(dice_smooth))
        if dice_weight < 0 or focal_weight < 0 or dice_weight + focal_weight <= 0:
            raise InvalidConfig('Loss weights must be >= 0 with a positive sum, got {} and {}'.format(
                dice_weight, focal_weight))
        return super(LossConfig, cls).__new__(cls, float(focal_gamma), float(focal_alpha), float(dice_smooth),
                                              float(dice_weight), float(focal_weight))


def _check(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeMismatch('Prediction {} and ground truth {} shapes differ'.format(tuple(pred.shape),
                                                                                    tuple(gt.shape)))
    return gt.to(pred.dtype)


def dice_loss(pred, gt, smooth=1.0):
    """1 - (2 sum(pred * gt) + smooth) / (sum(pred) + sum(gt) + smooth) over every given pixel."""
    gt = _check(pred, gt)
    intersection = (pred * gt).sum()
    return 1.0 - (2.0 * intersection + smooth) / (pred.sum() + gt.sum() + smooth)


def focal_loss(pred, gt, gamma=2.0, alpha=0.25):
    """Mean of -alpha_t (1 - p_t)^gamma log(p_t); alpha weighs positives, 1 - alpha negatives."""
    gt = _check(pred, gt)
    p = pred.clamp(EPSILON, 1.0 - EPSILON)
    p_t = gt * p + (1.0 - gt) * (1.0 - p)
    alpha_t = gt * alpha + (1.0 - gt) * (1.0 - alpha)
    return (-alpha_t * (1.0 - p_t) ** gamma * torch.log(p_t)).mean()


def combined_loss(pred, gt, cfg: LossConfig):
    loss = pred.new_zeros(())
    if cfg.dice_weight:
        loss = loss + cfg.dice_weight * dice_loss(pred, gt, cfg.dice_smooth)
    if cfg.focal_weight:
        loss = loss + cfg.focal_weight * focal_loss(pred, gt, cfg.focal_gamma, cfg.focal_alpha)
    return loss


class ConfusionCounts(namedtuple('ConfusionCounts', ['tp', 'fp', 'tn', 'fn'])):
    """Pixel counts; `+` merges counts of disjoint pixel sets."""
    __slots__: list = []

    def __new__(cls, tp=0, fp=0, tn=0, fn=0):
        return super(ConfusionCounts, cls).__new__(cls, int(tp), int(fp), int(tn), int(fn))

    def __add__(self, other):
        return ConfusionCounts(*(a + b for a, b in zip(self, other)))

    def __radd__(self, other):
        if other == 0:
            return self
        return self + other

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def binarize(pred, threshold=THRESHOLD) -> np.ndarray:
    values = pred.values if isinstance(pred, SkinProbMap) else np.asarray(pred)
    return values >= threshold


def confusion(pred_bin, gt) -> ConfusionCounts:
    pred = np.asarray(pred_bin.values if isinstance(pred_bin, BinaryMask) else pred_bin).astype(bool)
    truth = np.asarray(gt.values if isinstance(gt, BinaryMask) else gt).astype(bool)
    if pred.shape != truth.shape:
        raise ShapeMismatch('Prediction {} and ground truth {} shapes differ'.format(pred.shape, truth.shape))
    tp = np.count_nonzero(pred & truth)
    fp = np.count_nonzero(pred & ~truth)
    fn = np.count_nonzero(~pred & truth)
    tn = pred.size - tp - fp - fn
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(numerator, denominator, errors):
    if denominator == 0:
        return 1.0 if errors == 0 else 0.0
    return numerator / denominator


def image_dice(counts: ConfusionCounts) -> float:
    return _ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn, counts.fp + counts.fn)


def metrics(counts) -> dict:
    """The six reported metrics from one ConfusionCounts or a per-image list of them."""
    per_image = [counts] if isinstance(counts, ConfusionCounts) else list(counts)
    if not per_image:
        raise ValueError('metrics needs at least one ConfusionCounts')
    agg = sum(per_image, ConfusionCounts())

    precision = _ratio(agg.tp, agg.tp + agg.fp, agg.fp)
    recall = _ratio(agg.tp, agg.tp + agg.fn, agg.fn)
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return {
        'precision': precision,
        'recall': recall,
        'f1': f1,
        'cdr': _ratio(agg.tp + agg.tn, agg.total, agg.fp + agg.fn),
        'dsc': sum(image_dice(c) for c in per_image) / len(per_image),
        'iou': _ratio(agg.tp, agg.tp + agg.fp + agg.fn, agg.fp + agg.fn),
    }
