#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
The segmentation model: fast-downsampling encoder to 1/8, information
interaction module, three bilinear-upsample decoder stages with Body Attention
after the first and Skin Attention after the second, sigmoid head.
"""

import logging
from collections import namedtuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .attention import BodyAttention, DEFAULT_OMEGA, DEFAULT_REDUCTION, SkinAttention, part_masks, resize_codes
from .defs import STRIDE, ImageTensor, InvalidConfig, PartMask, ShapeMismatch, SkinProbMap

logger = logging.getLogger(__name__)


class ModelConfig(namedtuple('ModelConfig', ['input_size', 'base_filters', 'encoder_filters', 'interaction_filters',
                                             'interaction_strides', 'interaction_kernels', 'expansion_factor',
                                             'decoder_filters', 'reduction_ratio', 'omega_init', 'shared_projection',
                                             'use_body_attention', 'use_skin_attention', 'seed'])):
    """Architecture hyper-parameters.

    Args:
        input_size (int): Side of the square input, a multiple of 8.
        base_filters (int): Filters of the first (stride 2) convolution block.
        encoder_filters (int): Filters of the two stride-2 depthwise separable blocks.
        interaction_filters (Tuple[int, int, int]): Output filters of the three inverted residual branches.
        interaction_strides (Tuple[int, int, int]): Strides of the branches, relative to the 1/8 features.
        interaction_kernels (Tuple[int, int, int]): Depthwise kernel sizes of the branches.
        expansion_factor (int): Inverted residual expansion.
        decoder_filters (Tuple[int, int, int]): Filters of the decoder blocks at 1/4, 1/2 and 1/1.
        reduction_ratio (int): Channel attention MLP reduction.
        omega_init (float): Initial Skin Attention gate.
        shared_projection (bool): Skin Attention keys and queries come from one projection, so A is a
            self-affinity and face/hand pixels always score positive.
            False gives independent key and query projections.
        use_body_attention (bool): Ablation switch; a disabled block is the identity.
        use_skin_attention (bool): Ablation switch; a disabled block is the identity with a zero map.
        seed (int): Initialization seed.
    """
    __slots__: list = []

    def __new__(cls, input_size=256, base_filters=32, encoder_filters=64, interaction_filters=(64, 96, 128),
                interaction_strides=(1, 2, 4), interaction_kernels=(3, 5, 7), expansion_factor=6,
                decoder_filters=(96, 64, 32), reduction_ratio=DEFAULT_REDUCTION, omega_init=DEFAULT_OMEGA,
                shared_projection=True, use_body_attention=True, use_skin_attention=True, seed=0):
        interaction_filters = tuple(int(f) for f in interaction_filters)
        interaction_strides = tuple(int(s) for s in interaction_strides)
        interaction_kernels = tuple(int(k) for k in interaction_kernels)
        decoder_filters = tuple(int(f) for f in decoder_filters)
        if input_size < STRIDE or input_size % STRIDE:
            raise InvalidConfig('input_size must be a multiple of {}, got {}'.format(STRIDE, input_size))
        if not (len(interaction_filters) == len(interaction_strides) == len(interaction_kernels) == 3):
            raise InvalidConfig('The interaction module has exactly three branches')
        if len(decoder_filters) != 3:
            raise InvalidConfig('The decoder has exactly three stages, got {}'.format(decoder_filters))
        widths = (base_filters, encoder_filters, expansion_factor) + interaction_filters + decoder_filters
        if min(widths) < 1 or min(interaction_strides) < 1 or any(k % 2 == 0 for k in interaction_kernels):
            raise InvalidConfig('Filter counts and strides must be positive and kernels odd')
        if use_body_attention and decoder_filters[0] % reduction_ratio:
            raise InvalidConfig('reduction_ratio {} must divide the {} body attention channels'.format(
                reduction_ratio, decoder_filters[0]))
        return super(ModelConfig, cls).__new__(
            cls, int(input_size), int(base_filters), int(encoder_filters), interaction_filters, interaction_strides,
            interaction_kernels, int(expansion_factor), decoder_filters, int(reduction_ratio), float(omega_init),
            bool(shared_projection), bool(use_body_attention), bool(use_skin_attention), int(seed))

    @property
    def coarsest_side(self) -> int:
        """Side of the most strided interaction branch output."""
        return -(-self.input_size // (STRIDE * max(self.interaction_strides)))


class ConvBlock(nn.Sequential):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1):
        super(ConvBlock, self).__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size, stride, kernel_size // 2, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True))


class DepthwiseSeparableBlock(nn.Sequential):
    def __init__(self, in_channels, out_channels, stride=1):
        super(DepthwiseSeparableBlock, self).__init__(
            nn.Conv2d(in_channels, in_channels, 3, stride, 1, groups=in_channels, bias=False),
            nn.BatchNorm2d(in_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(in_channels, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True))


class InvertedResidual(nn.Module):
    """Expand (1x1), depthwise (k x k, strided), linear project (1x1)."""

    def __init__(self, in_channels, out_channels, stride=1, expansion=6, kernel_size=3):
        super(InvertedResidual, self).__init__()
        hidden = in_channels * expansion
        self.use_shortcut = stride == 1 and in_channels == out_channels
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 1, bias=False),
            nn.BatchNorm2d(hidden),
            nn.ReLU6(inplace=True),
            nn.Conv2d(hidden, hidden, kernel_size, stride, kernel_size // 2, groups=hidden, bias=False),
            nn.BatchNorm2d(hidden),
            nn.ReLU6(inplace=True),
            nn.Conv2d(hidden, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels))

    def forward(self, x):
        out = self.block(x)
        if self.use_shortcut:
            out = x + out
        return out


class InteractionModule(nn.Module):
    """Three parallel inverted residual branches, brought back to the input resolution and concatenated."""

    def __init__(self, in_channels, filters, strides, kernels, expansion):
        super(InteractionModule, self).__init__()
        self.branches = nn.ModuleList([InvertedResidual(in_channels, f, s, expansion, k)
                                       for f, s, k in zip(filters, strides, kernels)])
        self.out_channels = sum(filters)

    def forward(self, x):
        size = x.shape[-2:]
        outs = []
        for branch in self.branches:
            out = branch(x)
            if out.shape[-2:] != size:
                out = F.interpolate(out, size=size, mode='bilinear', align_corners=False)
            outs.append(out)
        return torch.cat(outs, dim=1)


def upsample(x):
    return F.interpolate(x, scale_factor=2, mode='bilinear', align_corners=False)


def merge_skip(decoded, skipped):
    """Additive skip connection; the encoder features are already projected to the decoder width."""
    return decoded + skipped


class SkinSegNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super(SkinSegNet, self).__init__()
        self.cfg = cfg
        d1, d2, d3 = cfg.decoder_filters

        self.stem = ConvBlock(3, cfg.base_filters, stride=2)
        self.down1 = DepthwiseSeparableBlock(cfg.base_filters, cfg.encoder_filters, stride=2)
        self.down2 = DepthwiseSeparableBlock(cfg.encoder_filters, cfg.encoder_filters, stride=2)
        self.interaction = InteractionModule(cfg.encoder_filters, cfg.interaction_filters, cfg.interaction_strides,
                                             cfg.interaction_kernels, cfg.expansion_factor)

        self.decode1 = ConvBlock(self.interaction.out_channels, d1)
        self.skip1 = nn.Conv2d(cfg.encoder_filters, d1, 1)
        self.body_attention = BodyAttention(d1, cfg.reduction_ratio) if cfg.use_body_attention else None

        self.decode2 = ConvBlock(d1, d2)
        self.skip2 = nn.Conv2d(cfg.base_filters, d2, 1)
        self.skin_attention = SkinAttention(d2, cfg.omega_init, cfg.shared_projection) if cfg.use_skin_attention else None

        self.decode3 = ConvBlock(d2, d3)
        self.head = nn.Conv2d(d3, 1, 1)

    @property
    def omega(self):
        if self.skin_attention is None:
            return None
        return float(self.skin_attention.omega.detach())

    def forward(self, image, parts):
        """
        Args:
            image (torch.Tensor): B x 3 x H x W in [0, 1].
            parts (torch.Tensor): B x H x W part codes.

        Returns:
            Tuple[torch.Tensor, torch.Tensor]: B x 1 x H x W skin probability, and the B x 1 x H x W
            skin attention map upsampled from 1/2 resolution.
        """
        size = self.cfg.input_size
        if image.dim() != 4 or image.shape[1] != 3 or tuple(image.shape[-2:]) != (size, size):
            raise ShapeMismatch('Expected a B x 3 x {0} x {0} image batch, got {1}'.format(size, tuple(image.shape)))
        if parts.shape[0] != image.shape[0] or tuple(parts.shape[-2:]) != (size, size):
            raise ShapeMismatch('Part codes {} do not match the image batch {}'.format(
                tuple(parts.shape), tuple(image.shape)))

        e1 = self.stem(image)
        e2 = self.down1(e1)
        x = self.interaction(self.down2(e2))

        x = merge_skip(self.decode1(upsample(x)), self.skip1(e2))
        if self.body_attention is not None:
            body, _ = part_masks(resize_codes(parts, x.shape[-2:]))
            x = self.body_attention(x, body)

        x = merge_skip(self.decode2(upsample(x)), self.skip2(e1))
        if self.skin_attention is not None:
            x, attention = self.skin_attention(x, resize_codes(parts, x.shape[-2:]))
        else:
            attention = x.new_zeros(x.shape[0], 1, *x.shape[-2:])

        x = self.decode3(upsample(x))
        prob = torch.sigmoid(self.head(x))
        attention = F.interpolate(attention, size=image.shape[-2:], mode='bilinear', align_corners=False)
        return prob, attention


def build_model(cfg: ModelConfig) -> SkinSegNet:
    """Deterministic initialization from cfg.seed; the global RNG is left untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = SkinSegNet(cfg)
    logger.debug('built model with {} parameters'.format(parameter_count(model)))
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def image_to_tensor(image) -> torch.Tensor:
    data = image.data if isinstance(image, ImageTensor) else np.asarray(image, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1), dtype=np.float32))


def parts_to_tensor(parts) -> torch.Tensor:
    codes = parts.codes if isinstance(parts, PartMask) else np.asarray(parts)
    return torch.from_numpy(np.ascontiguousarray(codes, dtype=np.int64))


def forward(model: SkinSegNet, image: ImageTensor, parts: PartMask):
    """Single-image inference.

    Returns:
        Tuple[SkinProbMap, SkinProbMap]: sigmoid probability in [0, 1] and attention map in (-1, 1).
    """
    if parts.shape != (image.height, image.width):
        raise ShapeMismatch('Part mask {} does not match image {}x{}'.format(parts.shape, image.height, image.width))
    param = next(model.parameters())
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            prob, attention = model(image_to_tensor(image)[None].to(param.dtype), parts_to_tensor(parts)[None])
    finally:
        model.train(was_training)
    return SkinProbMap(prob[0, 0].double().numpy()), SkinProbMap(attention[0, 0].double().numpy())
