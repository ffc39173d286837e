#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Body Attention (CBAM with the body mask in the spatial descriptor) and Skin
Attention (affinity of body-pixel embeddings to the mean face/hand embedding).

Feature tensors are batched, B x C x H x W. Masks are B x H x W or B x 1 x H x W.
"""

import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

from .defs import BODY, FACE, HAND, InvalidConfig, ShapeMismatch

logger = logging.getLogger(__name__)

SPATIAL_KERNEL = 7
DEFAULT_REDUCTION = 16
DEFAULT_OMEGA = 1.0


def part_masks(codes):
    """Body and face/hand float masks (B x 1 x H x W) from a batch of part codes."""
    codes = codes.long()
    if codes.dim() == 4:
        codes = codes[:, 0]
    body = (codes >= BODY).unsqueeze(1)
    face_hand = ((codes == FACE) | (codes == HAND)).unsqueeze(1)
    return body.float(), face_hand.float()


def resize_codes(codes, size):
    """Nearest-neighbour resize of B x H x W codes; source index floor(i * H / h)."""
    h, w = codes.shape[-2:]
    th, tw = size
    if (h, w) == (th, tw):
        return codes
    rows = torch.arange(th, device=codes.device) * h // th
    cols = torch.arange(tw, device=codes.device) * w // tw
    return codes[..., rows, :][..., cols]


def _as_mask(mask, like):
    mask = torch.as_tensor(mask, device=like.device)
    if mask.dim() == 3:
        mask = mask.unsqueeze(1)
    if mask.dim() != 4 or mask.shape[1] != 1 or mask.shape[0] != like.shape[0] \
            or mask.shape[-2:] != like.shape[-2:]:
        raise ShapeMismatch('Mask of shape {} does not match features of shape {}'.format(
            tuple(mask.shape), tuple(like.shape)))
    return mask.to(like.dtype)


def channel_attention(features, mlp_w1, mlp_w2):
    """M_c(F) * F with M_c = sigmoid(MLP(avgpool F) + MLP(maxpool F)), one shared ReLU hidden layer."""
    if features.dim() != 4:
        raise ShapeMismatch('Features must be B x C x H x W, got {}'.format(tuple(features.shape)))
    c = features.shape[1]
    hidden = mlp_w1.shape[0]
    if tuple(mlp_w1.shape) != (hidden, c) or tuple(mlp_w2.shape) != (c, hidden):
        raise ShapeMismatch('MLP weights {} / {} do not fit {} channels'.format(
            tuple(mlp_w1.shape), tuple(mlp_w2.shape), c))

    def mlp(v):
        return F.relu(v @ mlp_w1.t()) @ mlp_w2.t()

    avg = features.mean(dim=(2, 3))
    peak = features.amax(dim=(2, 3))
    scale = torch.sigmoid(mlp(avg) + mlp(peak))
    return features * scale[:, :, None, None]


def spatial_body_attention(features, body, kernel, bias):
    """M_s(F') * F' with M_s = sigmoid(conv7x7([avg_c F'; max_c F'; body])), zero padding."""
    if tuple(kernel.shape) != (1, 3, SPATIAL_KERNEL, SPATIAL_KERNEL):
        raise ShapeMismatch('Spatial kernel must be 1 x 3 x {0} x {0}, got {1}'.format(
            SPATIAL_KERNEL, tuple(kernel.shape)))
    body = _as_mask(body, features)
    descriptor = torch.cat([features.mean(dim=1, keepdim=True), features.amax(dim=1, keepdim=True), body], dim=1)
    scale = torch.sigmoid(F.conv2d(descriptor, kernel, bias, padding=SPATIAL_KERNEL // 2))
    return features * scale


def skin_affinity_map(keys, queries, face_hand, body):
    """tanh of the mean similarity between each body pixel and the face/hand pixels.

    Computed as Q^T m, m the mean face/hand key column, which equals averaging the
    face/hand columns of the N x N energy matrix Q^T K without building it.
    No face/hand pixel gives a zero map.

    Returns:
        torch.Tensor: B x 1 x H x W attention map in (-1, 1).
    """
    if keys.shape != queries.shape or keys.dim() != 4:
        raise ShapeMismatch('Keys {} and queries {} must share a B x C x H x W shape'.format(
            tuple(keys.shape), tuple(queries.shape)))
    b, _, h, w = keys.shape
    face_hand = _as_mask(face_hand, keys)
    body = _as_mask(body, keys)

    masked_keys = (keys * face_hand).flatten(2)
    masked_queries = (queries * body).flatten(2)
    count = face_hand.flatten(1).sum(dim=1).clamp(min=1.0)
    mean_key = masked_keys.sum(dim=2) / count[:, None]
    similarity = torch.einsum('bcn,bc->bn', masked_queries, mean_key)
    return torch.tanh(similarity).view(b, 1, h, w)


def skin_affinity_map_dense(keys, queries, face_hand, body):
    """Reference form building the full N x N energy matrix. O(N^2) memory."""
    b, _, h, w = keys.shape
    face_hand = _as_mask(face_hand, keys)
    body = _as_mask(body, keys)

    masked_keys = (keys * face_hand).flatten(2)
    masked_queries = (queries * body).flatten(2)
    energy = torch.bmm(masked_queries.transpose(1, 2), masked_keys)
    columns = face_hand.flatten(1)
    count = columns.sum(dim=1).clamp(min=1.0)
    similarity = (energy * columns[:, None, :]).sum(dim=2) / count[:, None]
    return torch.tanh(similarity).view(b, 1, h, w)


class ChannelAttention(nn.Module):
    def __init__(self, channels, reduction_ratio=DEFAULT_REDUCTION):
        super(ChannelAttention, self).__init__()
        if reduction_ratio < 1 or channels % reduction_ratio or channels // reduction_ratio < 1:
            raise InvalidConfig('Reduction ratio {} must divide {} channels'.format(reduction_ratio, channels))
        hidden = channels // reduction_ratio
        self.reduction_ratio = reduction_ratio
        self.mlp_w1 = nn.Parameter(torch.empty(hidden, channels))
        self.mlp_w2 = nn.Parameter(torch.empty(channels, hidden))
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.kaiming_uniform_(self.mlp_w1, a=math.sqrt(5))
        nn.init.kaiming_uniform_(self.mlp_w2, a=math.sqrt(5))

    def forward(self, features):
        return channel_attention(features, self.mlp_w1, self.mlp_w2)


class SpatialBodyAttention(nn.Module):
    def __init__(self):
        super(SpatialBodyAttention, self).__init__()
        self.kernel = nn.Parameter(torch.empty(1, 3, SPATIAL_KERNEL, SPATIAL_KERNEL))
        self.bias = nn.Parameter(torch.empty(1))
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.kaiming_uniform_(self.kernel, a=math.sqrt(5))
        bound = 1.0 / math.sqrt(3 * SPATIAL_KERNEL * SPATIAL_KERNEL)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, features, body):
        return spatial_body_attention(features, body, self.kernel, self.bias)


class BodyAttention(nn.Module):
    """Channel then body-aware spatial attention, summed with the block input."""

    def __init__(self, channels, reduction_ratio=DEFAULT_REDUCTION):
        super(BodyAttention, self).__init__()
        self.channel = ChannelAttention(channels, reduction_ratio)
        self.spatial = SpatialBodyAttention()

    def forward(self, features, body):
        return features + self.spatial(self.channel(features), body)


class SkinAttention(nn.Module):
    """Returns (T + omega * A, A); A is the pre-omega attention map.

    With a shared projection queries equal keys, so A at a pixel is its
    similarity to the mean face/hand embedding and the face/hand pixels
    average |m|^2 >= 0 before tanh. Pixels that look like the face and hands
    score positive whatever the projection weights are.
    """

    def __init__(self, channels, omega_init=DEFAULT_OMEGA, shared_projection=True):
        super(SkinAttention, self).__init__()
        self.shared_projection = shared_projection
        self.key_conv = nn.Conv2d(channels, channels, kernel_size=1)
        self.key_norm = nn.BatchNorm2d(channels)
        if not shared_projection:
            self.query_conv = nn.Conv2d(channels, channels, kernel_size=1)
            self.query_norm = nn.BatchNorm2d(channels)
        self.omega = nn.Parameter(torch.tensor(float(omega_init)))

    def forward(self, features, parts):
        body, face_hand = part_masks(parts)
        keys = self.key_norm(self.key_conv(features))
        if self.shared_projection:
            queries = keys
        else:
            queries = self.query_norm(self.query_conv(features))
        attention = skin_affinity_map(keys, queries, face_hand, body)
        return features + self.omega * attention, attention


def body_attention_block(features, body, block: BodyAttention):
    return block(features, body)


def skin_attention_block(features, parts, block: SkinAttention):
    return block(features, parts)
