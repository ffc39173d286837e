#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
The `skinseg` executable.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import logging

from plumbum import cli

from .__version__ import __version__
from .defs import ConfigError, DataError, NumericError
from .pipeline import cmd_eval, cmd_infer, cmd_relabel, cmd_synth, cmd_train, load_config

logger = logging.getLogger(__name__)

EXIT_CODES = ((ConfigError, 2), (DataError, 3), (NumericError, 4))


def setup_logging(verbose=False):
    root = logging.getLogger('skinseg')
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    ch = logging.StreamHandler()
    ch.setFormatter(formatter)
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.addHandler(ch)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def run_command(command, *args, **kwargs) -> int:
    """Calls a pipeline operation, mapping error families to exit codes."""
    try:
        command(*args, **kwargs)
    except tuple(e for e, _ in EXIT_CODES) as e:
        code = next(c for family, c in EXIT_CODES if isinstance(e, family))
        logger.error('{}: {}'.format(type(e).__name__, e))
        return code
    return 0


class Skinseg(cli.Application):
    """Skin segmentation with body and skin attention."""
    PROGNAME = 'skinseg'
    VERSION = __version__

    verbose = cli.Flag(['-v', '--verbose'], help='Log at DEBUG level')

    def main(self, *args):
        setup_logging(self.verbose)
        if args:
            print('Unknown command {!r}'.format(args[0]))
            return 1
        if not self.nested_command:
            self.help()
            return 1


class Command(cli.Application):
    config = cli.SwitchAttr('--config', str, help='Flat TOML config file')
    seed = cli.SwitchAttr('--seed', int, help='Overrides the config seed')
    out = cli.SwitchAttr('--out', str, help='Run directory')
    parts_dir = cli.SwitchAttr('--parts-dir', str, help='Part mask directory')
    data_root = cli.SwitchAttr('--data-root', str, help='Dataset root')
    dry_run = cli.Flag('--dry-run', help='Validate the config (and data for train), do nothing else')

    def load(self):
        return load_config(self.config, seed=self.seed, out=self.out, parts_dir=self.parts_dir,
                           data_root=self.data_root)

    def main(self):
        return run_command(self.execute)

    def execute(self, *args):
        cfg = self.load()
        if self.dry_run:
            logger.info('dry run: config is valid')
            return
        self.run_with(cfg, *args)

    def run_with(self, cfg, *args):
        raise NotImplementedError


@Skinseg.subcommand('train')
class Train(Command):
    """Train a model on <data_root>/{train,val}."""

    def execute(self):
        cmd_train(self.load(), dry_run=self.dry_run)


@Skinseg.subcommand('eval')
class Eval(Command):
    """Evaluate a checkpoint and write report.csv / report.txt."""
    split = cli.SwitchAttr('--split', cli.Set('train', 'val', 'test'), default='val')

    def main(self, checkpoint):
        return run_command(self.execute, checkpoint)

    def run_with(self, cfg, checkpoint):
        cmd_eval(cfg, checkpoint, self.split)


@Skinseg.subcommand('infer')
class Infer(Command):
    """Write the skin mask and attention map PNGs of one image."""
    parts = cli.SwitchAttr('--parts', str, help='Part mask PNG of the image')
    resize = cli.Flag('--resize', help='Resize inputs to the model resolution and outputs back')

    def main(self, checkpoint, image):
        return run_command(self.execute, checkpoint, image)

    def run_with(self, cfg, checkpoint, image):
        cmd_infer(cfg, checkpoint, image, self.parts, self.resize)


@Skinseg.subcommand('relabel')
class Relabel(Command):
    """Recursive training with label modification, compared against direct training."""
    skip_direct = cli.Flag('--skip-direct', help='Skip the direct-training baseline and comparison.csv')

    def run_with(self, cfg):
        cmd_relabel(cfg, compare_direct=not self.skip_direct)


@Skinseg.subcommand('synth')
class Synth(Command):
    """Generate a synthetic dataset under --out (or the data root)."""
    num = cli.SwitchAttr('--num', int, help='Training scenes')
    size = cli.SwitchAttr('--size', int, help='Canvas side, also the model input size')
    noise_iou_target = cli.SwitchAttr('--noise-iou-target', float, help='IoU of noisy against true training labels')

    def load(self):
        return load_config(self.config, seed=self.seed, parts_dir=self.parts_dir,
                           data_root=self.out or self.data_root, num_train=self.num, input_size=self.size,
                           noise_iou_target=self.noise_iou_target)

    def run_with(self, cfg):
        cmd_synth(cfg)


def main():
    Skinseg.run()


if __name__ == '__main__':
    main()
