#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Training configuration, in-memory datasets, the trainer, msgpack checkpoints,
reports, and the train / eval / infer / relabel / synth operations behind the CLI.
"""

import ast
import copy
import csv
import logging
import os
from collections import OrderedDict, namedtuple

import msgpack
import numpy as np
import torch
from joblib import Parallel, delayed
from torch.optim.lr_scheduler import ExponentialLR
from torch.utils.data import DataLoader, Dataset

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import image_io
from .body_mask_provider import BACKENDS, MaskProviderConfig, make_provider
from .data_synth import SPLITS, augment, generate_scenes, load_dataset, mask_iou, write_dataset
from .defs import (BinaryMask, CheckpointError, DatasetEmpty, ImageTensor, InvalidConfig, NumericError, ShapeMismatch,
                   STRIDE, derive_seed, resize_mask, resize_nearest)
from .losses_metrics import METRIC_NAMES, LossConfig, binarize, combined_loss, confusion, metrics
from .network import ModelConfig, build_model, forward, parameter_count
from .relabeler import RelabelSchedule, load_generation, run_recursive_training, train_keep_best

logger = logging.getLogger(__name__)

MAGIC = 'SKINSEG-CKPT-1'
NDARRAY_EXT = 1
CHECKPOINT_NAME = 'model.ckpt'
NUM_WORKERS_ENV = 'SKINSEG_NUM_WORKERS'


def default_num_workers() -> int:
    value = os.environ.get(NUM_WORKERS_ENV, '1')
    try:
        workers = int(value)
    except ValueError:
        raise InvalidConfig('{} must be an integer, got {!r}'.format(NUM_WORKERS_ENV, value))
    if workers < 1:
        logger.warning('{}={} is below 1, using 1 worker'.format(NUM_WORKERS_ENV, workers))
        workers = 1
    return workers


class TrainConfig(namedtuple('TrainConfig', ['lr0', 'decay', 'epochs', 'batch_size', 'seed', 'betas', 'eps',
                                             'num_workers', 'flip_p', 'brightness', 'data_root', 'parts_dir',
                                             'mask_backend', 'out', 'num_train', 'num_val', 'num_test',
                                             'noise_iou_target', 'symmetric_noise', 'model', 'loss',
                                             'relabel'])):
    """Everything one command needs.

    Args:
        lr0 (float): Learning rate of epoch 0.
        decay (float): Learning rate factor applied after every epoch.
        epochs (int): Epochs of `train`.
        batch_size (int): Images per optimizer step.
        seed (int): Seeds initialization, shuffling, augmentation and scene generation.
        betas (Tuple[float, float]): Adam moment coefficients.
        eps (float): Adam epsilon.
        num_workers (int): Parallel workers; defaults to $SKINSEG_NUM_WORKERS or 1.
        flip_p (float): Horizontal flip probability of training augmentation.
        brightness (float): Brightness jitter amplitude of training augmentation.
        data_root (str): Dataset root holding {train,val,test}/{images,labels,parts}.
        parts_dir (str): Part mask directory replacing <data_root>/<split>/parts.
        mask_backend (str): 'file' reads part masks, 'synthetic' re-derives them from the scene generator.
        out (str): Run directory.
        num_train, num_val, num_test (int): Scene counts written by `synth`.
        noise_iou_target (float): IoU of the noisy training labels against the truth, for `synth`.
        symmetric_noise (bool): Also erase true skin patches from the noisy labels, for `synth`.
        model (ModelConfig): Architecture.
        loss (LossConfig): Objective.
        relabel (RelabelSchedule): Recursive training schedule, None unless configured.
    """
    __slots__: list = []

    def __new__(cls, lr0=1e-3, decay=0.96, epochs=30, batch_size=8, seed=0, betas=(0.9, 0.999), eps=1e-8,
                num_workers=None, flip_p=0.5, brightness=0.1, data_root='data', parts_dir=None, mask_backend='file',
                out='run', num_train=200, num_val=50, num_test=50, noise_iou_target=0.75, symmetric_noise=False,
                model=None, loss=None, relabel=None):
        if lr0 <= 0:
            raise InvalidConfig('lr0 must be > 0, got {}'.format(lr0))
        if not 0 < decay <= 1:
            raise InvalidConfig('decay must lie in (0, 1], got {}'.format(decay))
        if epochs < 0 or batch_size < 1:
            raise InvalidConfig('epochs must be >= 0 and batch_size >= 1')
        betas = tuple(float(b) for b in betas)
        if len(betas) != 2 or not all(0 <= b < 1 for b in betas):
            raise InvalidConfig('betas must be two values in [0, 1), got {}'.format(betas))
        if not 0 <= flip_p <= 1 or brightness < 0:
            raise InvalidConfig('flip_p must lie in [0, 1] and brightness be >= 0')
        if mask_backend not in BACKENDS:
            raise InvalidConfig('mask_backend must be one of {}, got {!r}'.format(BACKENDS, mask_backend))
        if min(num_train, num_val, num_test) < 0 or not 0 < noise_iou_target <= 1:
            raise InvalidConfig('Scene counts must be >= 0 and noise_iou_target in (0, 1]')
        model = model if model is not None else ModelConfig(seed=seed)
        if batch_size == 1 and model.coarsest_side < 2:
            raise InvalidConfig('batch_size 1 needs input_size > {} for batch norm statistics, got {}'.format(
                STRIDE * max(model.interaction_strides), model.input_size))
        num_workers = default_num_workers() if num_workers is None else int(num_workers)
        if num_workers < 1:
            raise InvalidConfig('num_workers must be >= 1, got {}'.format(num_workers))
        return super(TrainConfig, cls).__new__(
            cls, float(lr0), float(decay), int(epochs), int(batch_size), int(seed), betas, float(eps), num_workers,
            float(flip_p), float(brightness), data_root, parts_dir, mask_backend, out, int(num_train), int(num_val),
            int(num_test), float(noise_iou_target), bool(symmetric_noise),
            model, loss if loss is not None else LossConfig(),
            relabel)


SECTIONS = (('model', ModelConfig), ('loss', LossConfig), ('relabel', RelabelSchedule))
TOP_FIELDS = tuple(f for f in TrainConfig._fields if f not in dict(SECTIONS))
# ModelConfig.seed follows TrainConfig.seed
DERIVED = ('model', 'seed')


def build_config(values: dict) -> TrainConfig:
    """Routes flat keys to the config owning the field; unknown keys raise InvalidConfig."""
    top = {}
    sections = {name: {} for name, _ in SECTIONS}
    for key, value in values.items():
        if isinstance(value, dict):
            raise InvalidConfig('The config is flat key-value, [{}] tables are not supported'.format(key))
        if key in TOP_FIELDS:
            top[key] = value
            continue
        for name, section in SECTIONS:
            if key in section._fields and (name, key) != DERIVED:
                sections[name][key] = value
                break
        else:
            raise InvalidConfig('Unknown config key {!r}'.format(key))
    seed = top.get('seed', 0)
    relabel = RelabelSchedule(**sections['relabel']) if sections['relabel'] else None
    return TrainConfig(model=ModelConfig(seed=seed, **sections['model']), loss=LossConfig(**sections['loss']),
                       relabel=relabel, **top)


def flatten_config(cfg: TrainConfig) -> OrderedDict:
    values = OrderedDict((f, getattr(cfg, f)) for f in TOP_FIELDS)
    for name, section in SECTIONS:
        sub = getattr(cfg, name)
        if sub is None:
            continue
        for field in section._fields:
            if (name, field) != DERIVED:
                values[field] = getattr(sub, field)
    return values


def load_config(path=None, **overrides) -> TrainConfig:
    """Reads a flat TOML file; non-None keyword overrides (CLI flags) win over file keys."""
    values = {}
    if path:
        try:
            with open(path, 'rb') as f:
                values = tomllib.load(f)
        except FileNotFoundError:
            raise InvalidConfig('Config file {} does not exist'.format(path))
        except tomllib.TOMLDecodeError as e:
            raise InvalidConfig('Config file {} is not valid TOML: {}'.format(path, e))
    values.update((k, v) for k, v in overrides.items() if v is not None)
    return build_config(values)


def config_text(cfg: TrainConfig) -> str:
    return '\n'.join('{} = {!r}'.format(k, v) for k, v in flatten_config(cfg).items())


def parse_config_text(text: str) -> TrainConfig:
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, literal = line.partition('=')
        try:
            values[key.strip()] = ast.literal_eval(literal.strip())
        except (ValueError, SyntaxError):
            raise CheckpointError('Malformed config line {!r}'.format(line))
    return build_config(values)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr0 * cfg.decay ** epoch


class SkinDataset(Dataset):
    """A split held in memory at the model resolution.

    Items are (image 3 x S x S float32, label S x S float32, parts S x S int64). With an
    `augment_seed`, item i of epoch e is augmented with the seed (augment_seed, e, i).
    """

    def __init__(self, stems, images, labels, parts, truth=None, augment_seed=None, flip_p=0.5, brightness=0.1):
        if not len(stems) == len(images) == len(labels) == len(parts):
            raise ShapeMismatch('Dataset arrays disagree on the number of records')
        self.stems = list(stems)
        self.images = np.asarray(images, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.uint8)
        self.parts = np.asarray(parts, dtype=np.uint8)
        self.truth = None if truth is None else np.asarray(truth, dtype=np.uint8)
        self.augment_seed = augment_seed
        self.flip_p = flip_p
        self.brightness = brightness
        self.epoch = 0

    def __len__(self):
        return len(self.stems)

    def set_epoch(self, epoch):
        self.epoch = epoch

    def __getitem__(self, idx):
        image, label, parts = self.images[idx], self.labels[idx], self.parts[idx]
        if self.augment_seed is not None:
            image, (label, parts) = augment(image, [label, parts], [self.augment_seed, self.epoch, idx],
                                            self.flip_p, self.brightness)
        return (torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))),
                torch.from_numpy(label.astype(np.float32)),
                torch.from_numpy(parts.astype(np.int64)))


def _load_record(record, provider, size):
    image = image_io.read_image(record.image)
    h, w = image.shape[:2]
    label = image_io.read_binary_mask(record.label)
    parts = provider.get_parts(record.stem, h, w)
    truth = image_io.read_binary_mask(record.truth) if record.truth else None
    if (h, w) != (size, size):
        image = image_io.resize_image(image, size, size)
        label = resize_mask(label, size, size)
        parts = resize_mask(parts, size, size)
        truth = resize_mask(truth, size, size) if truth is not None else None
    return image, label.values, parts.codes, None if truth is None else truth.values


def mask_provider(cfg: TrainConfig, split):
    masks_dir = cfg.parts_dir or os.path.join(cfg.data_root, split, 'parts')
    return make_provider(MaskProviderConfig(cfg.mask_backend, masks_dir, cfg.seed, cfg.model.input_size,
                                            cfg.noise_iou_target))


def load_split(cfg: TrainConfig, split, augmented=False) -> SkinDataset:
    with_parts = cfg.mask_backend == 'file'
    index = load_dataset(cfg.data_root, split, cfg.parts_dir if with_parts else None, with_parts=with_parts)
    if len(index) == 0:
        msg = 'No usable {} records under {}'.format(split, cfg.data_root)
        logger.error(msg)
        raise DatasetEmpty(msg)
    provider = mask_provider(cfg, split)
    size = cfg.model.input_size
    loaded = Parallel(n_jobs=cfg.num_workers)(delayed(_load_record)(r, provider, size) for r in index.records)
    images, labels, parts, truth = zip(*loaded)
    truth = np.stack(truth) if all(t is not None for t in truth) else None
    seed = derive_seed('augment', cfg.seed) if augmented else None
    return SkinDataset([r.stem for r in index.records], np.stack(images), np.stack(labels), np.stack(parts), truth,
                       seed, cfg.flip_p, cfg.brightness)


class Trainer(object):
    """Adam with per-epoch exponential learning rate decay on one model.

    Attributes:
        epoch (int): Epochs trained so far; also the index of the next epoch.
        log (List[dict]): One row per epoch with lr, mean loss and validation metrics.
    """

    def __init__(self, cfg: TrainConfig, train_set=None, val_set=None, model=None):
        self.cfg = cfg
        self.train_set = train_set
        self.val_set = val_set
        self.model = model if model is not None else build_model(cfg.model)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.lr0, betas=cfg.betas, eps=cfg.eps)
        self.scheduler = ExponentialLR(self.optimizer, gamma=cfg.decay)
        self.epoch = 0
        self.log = []

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]['lr']

    def set_train_labels(self, labels):
        labels = np.asarray(labels, dtype=np.uint8)
        if labels.shape != self.train_set.labels.shape:
            raise ShapeMismatch('Labels {} do not match the training set {}'.format(
                labels.shape, self.train_set.labels.shape))
        self.train_set.labels = labels

    def _loader(self):
        generator = torch.Generator()
        generator.manual_seed(derive_seed('loader', self.cfg.seed, self.epoch))
        workers = self.cfg.num_workers if self.cfg.num_workers > 1 else 0
        # A one-image batch has a single value per channel in the coarsest branch
        single = len(self.train_set) % self.cfg.batch_size == 1 and self.cfg.model.coarsest_side < 2
        if single and len(self.train_set) == 1:
            raise InvalidConfig('One training image at input_size {} leaves batch norm without statistics'.format(
                self.cfg.model.input_size))
        return DataLoader(self.train_set, batch_size=self.cfg.batch_size, shuffle=True, generator=generator,
                          num_workers=workers, drop_last=single)

    def train_epoch(self) -> float:
        if self.train_set is None or len(self.train_set) == 0:
            raise DatasetEmpty('The trainer has no training images')
        lr = self.lr
        self.train_set.set_epoch(self.epoch)
        self.model.train()
        total, count = 0.0, 0
        for step, (image, label, parts) in enumerate(self._loader()):
            prob, _ = self.model(image, parts)
            loss = combined_loss(prob[:, 0], label, self.cfg.loss)
            if not torch.isfinite(loss):
                msg = 'Non-finite loss {} at epoch {} step {} (lr {:.3g})'.format(loss.item(), self.epoch, step, lr)
                logger.error(msg)
                raise NumericError(msg)
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            total += loss.item() * image.shape[0]
            count += image.shape[0]
        self.scheduler.step()

        row = OrderedDict([('epoch', self.epoch), ('lr', lr), ('loss', total / count)])
        if self.val_set is not None:
            row.update(self.evaluate())
        self.log.append(row)
        logger.info(' '.join('{}={:.6g}'.format(k, v) if isinstance(v, float) else '{}={}'.format(k, v)
                             for k, v in row.items()))
        self.epoch += 1
        return row['loss']

    def train_epochs(self, n):
        return [self.train_epoch() for _ in range(n)]

    def predict(self, dataset: SkinDataset):
        """Skin probability and attention map of every image, N x S x S float64 each, in eval mode."""
        was_training = self.model.training
        self.model.eval()
        probs, attention = [], []
        try:
            with torch.no_grad():
                for start in range(0, len(dataset), self.cfg.batch_size):
                    end = start + self.cfg.batch_size
                    images = torch.from_numpy(np.ascontiguousarray(dataset.images[start:end].transpose(0, 3, 1, 2)))
                    parts = torch.from_numpy(dataset.parts[start:end].astype(np.int64))
                    prob, att = self.model(images, parts)
                    probs.append(prob[:, 0].double().numpy())
                    attention.append(att[:, 0].double().numpy())
        finally:
            self.model.train(was_training)
        return np.concatenate(probs), np.concatenate(attention)

    def evaluate(self, dataset=None) -> dict:
        dataset = dataset if dataset is not None else self.val_set
        if dataset is None or len(dataset) == 0:
            raise DatasetEmpty('Nothing to evaluate on')
        probs, _ = self.predict(dataset)
        return metrics([confusion(binarize(p), l) for p, l in zip(probs, dataset.labels)])

    def attention_maps(self):
        return self.predict(self.train_set)[1]

    def state_dict(self):
        return self.model.state_dict()

    def load_state_dict(self, state):
        self.model.load_state_dict(state)


def ext_pack(x):
    if isinstance(x, np.ndarray):
        return msgpack.ExtType(NDARRAY_EXT, msgpack.packb([x.dtype.str, list(x.shape), x.tobytes()]))
    raise TypeError('Cannot serialize {}'.format(type(x)))


def ext_unpack(code, data):
    if code == NDARRAY_EXT:
        dtype, shape, buf = msgpack.unpackb(data)
        return np.frombuffer(buf, dtype=np.dtype(dtype)).reshape(shape).copy()
    return msgpack.ExtType(code, data)


def save_checkpoint(path, model, cfg: TrainConfig, epoch=0):
    """msgpack map {magic, config, epoch, arrays}; arrays hold parameters and normalization statistics."""
    arrays = {name: tensor.detach().cpu().numpy() for name, tensor in model.state_dict().items()}
    payload = {'magic': MAGIC, 'config': config_text(cfg), 'epoch': int(epoch), 'arrays': arrays}
    tmp = path + '.tmp'
    with open(tmp, 'wb') as f:
        f.write(msgpack.packb(payload, default=ext_pack))
    os.replace(tmp, path)
    logger.info('saved checkpoint {}'.format(path))


def load_checkpoint(path):
    """
    Returns:
        Tuple[SkinSegNet, TrainConfig]: the model, in eval mode, and the config it was trained with.
    """
    try:
        with open(path, 'rb') as f:
            payload = msgpack.unpackb(f.read(), ext_hook=ext_unpack)
    except FileNotFoundError:
        raise CheckpointError('Checkpoint {} does not exist'.format(path))
    except (ValueError, TypeError, msgpack.UnpackException) as e:
        raise CheckpointError('{} is not a checkpoint: {}'.format(path, e))
    if not isinstance(payload, dict) or payload.get('magic') != MAGIC:
        found = payload.get('magic') if isinstance(payload, dict) else None
        raise CheckpointError('{} has magic {!r}, expected {!r}'.format(path, found, MAGIC))
    cfg = parse_config_text(payload['config'])
    model = build_model(cfg.model)
    try:
        model.load_state_dict({k: torch.from_numpy(v) for k, v in payload['arrays'].items()})
    except RuntimeError as e:
        raise CheckpointError('{} does not fit its own model config: {}'.format(path, e))
    model.eval()
    return model, cfg


def _format(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return '{:.6f}'.format(value)
    return str(value)


def write_report(out_dir, scores, params, omega, extra=None) -> OrderedDict:
    """report.csv (header + one row) and report.txt (key: value lines) with the six metrics."""
    row = OrderedDict((name, scores[name]) for name in METRIC_NAMES)
    row['params'] = params
    row['omega'] = omega
    row.update(extra or {})
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, 'report.csv'), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(row.keys())
        writer.writerow(_format(v) for v in row.values())
    with open(os.path.join(out_dir, 'report.txt'), 'w') as f:
        f.writelines('{}: {}\n'.format(k, _format(v)) for k, v in row.items())
    return row


def write_epoch_log(out_dir, log):
    if not log:
        return
    with open(os.path.join(out_dir, 'train_log.csv'), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(log[0].keys())
        for row in log:
            writer.writerow(_format(v) for v in row.values())


def cmd_train(cfg: TrainConfig, dry_run=False):
    """Trains cfg.epochs epochs, writes the checkpoint, the epoch log and the validation report.

    Returns:
        OrderedDict: the report row, None on a dry run.
    """
    train_set = load_split(cfg, 'train', augmented=True)
    val_set = load_split(cfg, 'val')
    model = build_model(cfg.model)
    logger.info('{} training / {} validation images, model with {} parameters'.format(
        len(train_set), len(val_set), parameter_count(model)))
    if dry_run:
        logger.info('dry run: config, data and model are valid, nothing trained')
        return None

    os.makedirs(cfg.out, exist_ok=True)
    trainer = Trainer(cfg, train_set, val_set, model)
    trainer.train_epochs(cfg.epochs)
    save_checkpoint(os.path.join(cfg.out, CHECKPOINT_NAME), model, cfg, trainer.epoch)
    write_epoch_log(cfg.out, trainer.log)
    return write_report(cfg.out, trainer.evaluate(), parameter_count(model), model.omega)


def cmd_eval(cfg: TrainConfig, checkpoint, split='val'):
    """Evaluates a checkpoint on a split of cfg.data_root; the model resolution comes from the checkpoint."""
    model, trained = load_checkpoint(checkpoint)
    cfg = cfg._replace(model=trained.model)
    dataset = load_split(cfg, split)
    scores = Trainer(cfg, model=model).evaluate(dataset)
    logger.info('{} on {} {} images: {}'.format(checkpoint, len(dataset), split, scores))
    return write_report(cfg.out, scores, parameter_count(model), model.omega, OrderedDict([('split', split)]))


def cmd_infer(cfg: TrainConfig, checkpoint, image_path, parts_path=None, resize=False):
    """Writes <out>/<stem>_mask.png and <out>/<stem>_attention.png for one image.

    Part masks come from `parts_path` or, if absent, from the configured provider keyed by the image stem.
    Without `resize`, the image and part mask must already be at the model resolution.
    """
    model, trained = load_checkpoint(checkpoint)
    size = trained.model.input_size
    stem = os.path.splitext(os.path.basename(image_path))[0]
    data = image_io.read_image(image_path)
    h, w = data.shape[:2]
    if parts_path:
        parts = image_io.read_part_mask(parts_path)
    else:
        parts = mask_provider(cfg._replace(model=trained.model), 'test').get_parts(stem, h, w)

    if parts.shape != (h, w) or (h, w) != (size, size):
        if not resize:
            raise ShapeMismatch('Image {}x{} / part mask {} do not match the model input {}x{}; pass --resize'.format(
                h, w, parts.shape, size, size))
        data = image_io.resize_image(data, size, size)
        parts = resize_mask(parts, size, size)

    prob, attention = forward(model, ImageTensor(data), parts)
    mask = binarize(prob)
    gray = image_io.attention_to_gray(attention.values)
    if (h, w) != (size, size):
        mask = resize_nearest(mask, h, w)
        gray = resize_nearest(gray, h, w)

    os.makedirs(cfg.out, exist_ok=True)
    mask_path = os.path.join(cfg.out, stem + '_mask.png')
    attention_path = os.path.join(cfg.out, stem + '_attention.png')
    image_io.write_binary_mask(mask_path, BinaryMask(mask))
    image_io.write_gray(attention_path, gray)
    logger.info('wrote {} and {}'.format(mask_path, attention_path))
    return mask_path, attention_path


def cmd_relabel(cfg: TrainConfig, compare_direct=True):
    """Recursive training end to end, then a direct-training baseline with the same epoch budget.

    The baseline trains a fresh model on the original labels and both runs land
    in comparison.csv; `compare_direct=False` skips it.

    Returns:
        RelabelState: the run history.
    """
    schedule = cfg.relabel
    if schedule is None:
        logger.warning('No relabel keys in the config, using the default schedule')
        schedule = RelabelSchedule()
    train_set = load_split(cfg, 'train', augmented=True)
    val_set = load_split(cfg, 'val')
    os.makedirs(cfg.out, exist_ok=True)

    trainer = Trainer(cfg, train_set, val_set)
    state = run_recursive_training(trainer, schedule, cfg.out, cfg.num_workers)
    save_checkpoint(os.path.join(cfg.out, CHECKPOINT_NAME), trainer.model, cfg, trainer.epoch)
    write_epoch_log(cfg.out, trainer.log)
    extra = OrderedDict([('mode', 'recursive'), ('epochs', trainer.epoch),
                         ('final_generation', state.final_generation), ('final_t', state.current_t)])
    write_report(cfg.out, state.final_metrics, parameter_count(trainer.model), trainer.model.omega, extra)
    logger.info('recursive training finished: {}'.format(state))

    if compare_direct:
        direct_set = copy.copy(train_set)
        direct_set.labels = load_generation(cfg.out, 0, train_set.stems)
        direct = Trainer(cfg, direct_set, val_set)
        final_epochs = min(schedule.final_epochs, trainer.epoch)
        direct.train_epochs(trainer.epoch - final_epochs)
        direct_scores = train_keep_best(direct, final_epochs, schedule.monitor_metric)
        write_comparison(cfg.out, [('direct', direct.epoch, direct_scores),
                                   ('recursive', trainer.epoch, state.final_metrics)])
    return state


def write_comparison(out_dir, rows):
    with open(os.path.join(out_dir, 'comparison.csv'), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(('mode', 'epochs') + METRIC_NAMES)
        for mode, epochs, scores in rows:
            writer.writerow([mode, epochs] + [_format(scores[name]) for name in METRIC_NAMES])


def cmd_synth(cfg: TrainConfig) -> dict:
    """Writes train / val / test scenes at the model resolution; only train labels are noisy.

    Returns:
        dict: split -> number of scenes written.
    """
    counts = OrderedDict(zip(SPLITS, (cfg.num_train, cfg.num_val, cfg.num_test)))
    for split, num in counts.items():
        if num == 0:
            continue
        scenes = generate_scenes(split, num, canvas=cfg.model.input_size, noise_iou_target=cfg.noise_iou_target,
                                 seed=cfg.seed, symmetric_noise=cfg.symmetric_noise, n_jobs=cfg.num_workers)
        noisy = split == 'train'
        write_dataset(cfg.data_root, split, scenes, labels='noisy' if noisy else 'true', with_truth=noisy)
        if noisy:
            ious = [mask_iou(s.noisy_skin.values, s.true_skin.values) for _, s in scenes]
            logger.info('train label IoU against truth: mean {:.4f}'.format(float(np.mean(ious))))
    return counts
