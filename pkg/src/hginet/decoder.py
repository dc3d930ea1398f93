"""Decoding interacted stage features into coarse and refined masks.

Each decode stage merges the two directional features of one interaction
pair, emits a coarse probability map, amplifies features where that map
is ambiguous (the p(1-p) indicator peaks at p=0.5), and a top-down pass
fuses the stages into three refined maps. A plain fuse-by-concatenation
variant is available as an ablation switch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .nn import Conv2d, ConvBNReLU, Module, ModuleList
from .tensor import Tensor


@dataclass
class PredictionPyramid:
    """Per-stage decoder products, finest stage first."""

    merged: tuple[Tensor, ...]  # unified pair features, C_i x H_i x W_i
    coarse: tuple[Tensor, ...]  # single-channel probability maps
    gated: tuple[Tensor, ...] | None  # ambiguity-reweighted features
    fused: tuple[Tensor, ...]  # top-down fusion results
    refined: tuple[Tensor, ...]  # single-channel probability maps


class CoarseUnit(Module):
    """Merge one pair's two features at the finer stage's grid."""

    def __init__(self, channels: int, coarser_channels: int, rng: np.random.Generator):
        super().__init__()
        self.proj_a = Conv2d(channels, channels, 1, rng)
        self.proj_b = Conv2d(coarser_channels, channels, 1, rng)
        self.squeeze = ConvBNReLU(2 * channels, channels, 3, rng)
        self.head = Conv2d(channels, 1, 3, rng)

    def __call__(self, fa: Tensor, fb: Tensor):
        h, w = fa.shape[-2], fa.shape[-1]
        merged = self.squeeze(T.concat([self.proj_a(fa), self.proj_b(T.bilinear_resize(fb, h, w))], axis=0))
        return merged, T.sigmoid(self.head(merged))


def ambiguity_reweight(merged: Tensor, coarse: Tensor, gate_conv) -> Tensor:
    """merged * conv(p(1-p)) + merged, gate broadcast over channels."""
    if coarse.shape[0] != 1 or coarse.shape[-2:] != merged.shape[-2:]:
        raise ShapeError(f"coarse map {coarse.shape} does not gate features {merged.shape}")
    return merged * gate_conv(coarse * (1.0 - coarse)) + merged


class FusionUp(Module):
    """Conv-BN-ReLU into 4x channels, then pixel shuffle: doubles the grid."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = ConvBNReLU(in_channels, 4 * out_channels, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if y.ndim == 3:
            out = T.pixel_shuffle(T.reshape(y, (1,) + tuple(y.shape)), 2)
            return T.reshape(out, tuple(out.shape)[1:])
        return T.pixel_shuffle(y, 2)


class RefineHead(Module):
    """Two Conv-BN-ReLU blocks and a single-channel projection."""

    def __init__(self, in_channels: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = ConvBNReLU(in_channels, width, 3, rng)
        self.conv2 = ConvBNReLU(width, width, 3, rng)
        self.head = Conv2d(width, 1, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.sigmoid(self.head(self.conv2(self.conv1(x))))


class ConfidenceDecoder(Module):
    """Coarse predictions, ambiguity gating, and top-down refinement.

    Consumes the three interaction pairs' directional outputs; stage i
    receives pair i's (finer-grid, coarser-grid) features.
    """

    def __init__(self, channels: tuple[int, int, int, int], rng: np.random.Generator):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.coarse_units = ModuleList(
            CoarseUnit(c, cn, rng) for c, cn in ((c1, c2), (c2, c3), (c3, c4))
        )
        self.gates = ModuleList(Conv2d(1, 1, 3, rng, bias=False) for _ in range(3))
        self.fuse_up_32 = FusionUp(c3, c2, rng)
        self.fuse_up_21 = FusionUp(c2, c1, rng)
        self.fuse_conv_2 = ConvBNReLU(2 * c2, c2, 3, rng)
        self.fuse_conv_1 = ConvBNReLU(2 * c1, c1, 3, rng)
        self.refine_up_1 = FusionUp(c2, c1, rng)
        self.down_12 = ConvBNReLU(c1, c2, 3, rng, stride=2)
        self.down_23 = ConvBNReLU(c2, c3, 3, rng, stride=2)
        self.refine_1 = RefineHead(2 * c1, c1, rng)
        self.refine_2 = RefineHead(2 * c2, c2, rng)
        self.refine_3 = RefineHead(2 * c3, c3, rng)

    def __call__(self, pair_features) -> PredictionPyramid:
        merged, coarse, gated = [], [], []
        for unit, gate, (fa, fb) in zip(self.coarse_units, self.gates, pair_features):
            m, p = unit(fa, fb)
            merged.append(m)
            coarse.append(p)
            gated.append(ambiguity_reweight(m, p, gate))

        star_3 = gated[2]
        star_2 = self.fuse_conv_2(T.concat([self.fuse_up_32(star_3), gated[1]], axis=0))
        star_1 = self.fuse_conv_1(T.concat([self.fuse_up_21(star_2), gated[0]], axis=0))

        refined_1 = self.refine_1(T.concat([star_1, self.refine_up_1(star_2)], axis=0))
        refined_2 = self.refine_2(T.concat([star_2, self.down_12(gated[0])], axis=0))
        refined_3 = self.refine_3(T.concat([star_3, self.down_23(gated[1])], axis=0))

        return PredictionPyramid(
            merged=tuple(merged),
            coarse=tuple(coarse),
            gated=tuple(gated),
            fused=(star_1, star_2, star_3),
            refined=(refined_1, refined_2, refined_3),
        )


class PlainFusionDecoder(Module):
    """Ablation decoder: concatenation and convolution only, no gating."""

    def __init__(self, channels: tuple[int, int, int, int], rng: np.random.Generator):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.laterals = ModuleList(
            CoarseUnit(c, cn, rng) for c, cn in ((c1, c2), (c2, c3), (c3, c4))
        )
        self.up_32 = Conv2d(c3, c2, 1, rng)
        self.up_21 = Conv2d(c2, c1, 1, rng)
        self.fuse_2 = ConvBNReLU(2 * c2, c2, 3, rng)
        self.fuse_1 = ConvBNReLU(2 * c1, c1, 3, rng)
        self.heads = ModuleList(Conv2d(c, 1, 3, rng) for c in (c1, c2, c3))

    def __call__(self, pair_features) -> PredictionPyramid:
        merged, coarse = [], []
        for unit, (fa, fb) in zip(self.laterals, pair_features):
            m, p = unit(fa, fb)
            merged.append(m)
            coarse.append(p)

        top_3 = merged[2]
        h2, w2 = merged[1].shape[-2], merged[1].shape[-1]
        top_2 = self.fuse_2(T.concat([merged[1], self.up_32(T.bilinear_resize(top_3, h2, w2))], axis=0))
        h1, w1 = merged[0].shape[-2], merged[0].shape[-1]
        top_1 = self.fuse_1(T.concat([merged[0], self.up_21(T.bilinear_resize(top_2, h1, w1))], axis=0))

        fused = (top_1, top_2, top_3)
        refined = tuple(T.sigmoid(head(f)) for head, f in zip(self.heads, fused))
        return PredictionPyramid(
            merged=tuple(merged), coarse=tuple(coarse), gated=None, fused=fused, refined=refined
        )


def final_prediction(refined_finest: Tensor, height: int, width: int) -> Tensor:
    """Upsample the finest refined map to the requested resolution."""
    return T.bilinear_resize(refined_finest, height, width)
