"""Network assembly and checkpointing.

Wiring: overlapping-patch embedding, four attention stages joined by
stride-2 convolutions, three cross-stage graph interaction pairs feeding
the decoder, final map resized to the input extents. Ablation switches
swap the attention block, drop interaction pairs (replaced by per-stage
Conv-BN-ReLU), or select the plain fusion decoder.
"""

from __future__ import annotations

import logging
import struct

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .decoder import ConfidenceDecoder, PlainFusionDecoder, PredictionPyramid, final_prediction
from .errors import CheckpointError, ShapeError
from .hgit import GraphInteractionPair
from .nn import Conv2d, ConvBNReLU, Module, ModuleList
from .rtfa import GlobalAttentionBlock, RTFABlock, region_side_for
from .tensor import Tensor, load_array, save_array

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HGCP"
CHECKPOINT_VERSION = 1


class Backbone(Module):
    """Patch embedding plus four stages of attention blocks."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        sides = cfg.stage_sides()
        self.embed = Conv2d(3, cfg.stage_channels[0], 7, rng, stride=cfg.stage_strides[0], padding=3)
        stages, downs = [], []
        for i in range(4):
            channels = cfg.stage_channels[i]
            heads = max(1, channels // 16)
            side = cfg.region_grid[i] or region_side_for(sides[i], sides[i])
            blocks = []
            for _ in range(cfg.stage_blocks[i]):
                if cfg.attention == "rtfa":
                    blocks.append(
                        RTFABlock(channels, side, cfg.cluster_k[i], heads, rng, knn=cfg.knn_size)
                    )
                else:
                    blocks.append(GlobalAttentionBlock(channels, heads, rng))
            stages.append(ModuleList(blocks))
            if i < 3:
                downs.append(Conv2d(channels, cfg.stage_channels[i + 1], 3, rng, stride=2))
        self.stages = ModuleList(stages)
        self.downs = ModuleList(downs)

    def __call__(self, image: Tensor) -> list[Tensor]:
        x = self.embed(image)
        features = []
        for i, stage in enumerate(self.stages):
            for block in stage:
                x = block(x)
            features.append(x)
            if i < 3:
                x = self.downs[i](x)
        return features


class Model(Module):
    """Full network; construction order fixes the rng consumption order."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        self.backbone = Backbone(cfg, rng)
        active = cfg.active_pairs()
        c = cfg.stage_channels
        for i in (1, 2, 3):
            pair = None
            if i in active:
                pair = GraphInteractionPair(
                    c[i - 1],
                    c[i],
                    cfg.latent_channels,
                    cfg.graph_vertices,
                    cfg.hgit_layers,
                    cfg.hgit_heads,
                    rng,
                )
            setattr(self, f"pair_{i}", pair)
        # stages touched by a dropped pair get a Conv-BN-ReLU stand-in
        for stage in sorted({s for i in (1, 2, 3) if i not in active for s in (i, i + 1)}):
            setattr(self, f"stand_in_{stage}", ConvBNReLU(c[stage - 1], c[stage - 1], 3, rng))
        if cfg.decoder == "caff":
            self.head = ConfidenceDecoder(c, rng)
        else:
            self.head = PlainFusionDecoder(c, rng)

    def __call__(self, image: Tensor) -> tuple[PredictionPyramid, Tensor]:
        expected = (3, self.config.input_size, self.config.input_size)
        if tuple(image.shape) != expected:
            raise ShapeError(f"model expects image {expected}, got {tuple(image.shape)}")
        features = self.backbone(image)
        plain = {}  # stand-in outputs, computed once per stage
        pair_features = []
        for i in (1, 2, 3):
            pair = getattr(self, f"pair_{i}")
            if pair is not None:
                pair_features.append(pair(features[i - 1], features[i]))
                continue
            for stage in (i, i + 1):
                if stage not in plain:
                    plain[stage] = getattr(self, f"stand_in_{stage}")(features[stage - 1])
            pair_features.append((plain[i], plain[i + 1]))
        pyramid = self.head(pair_features)
        final = final_prediction(pyramid.refined[0], self.config.input_size, self.config.input_size)
        return pyramid, final


def build(cfg: ModelConfig) -> Model:
    """Validate the config and construct the network deterministically."""
    model = Model(cfg.validate())
    logger.info("built model with %d parameters", model.parameter_count())
    return model


def parameter_store(model: Model) -> dict[str, np.ndarray]:
    """Named map over parameters and running buffers; names must be unique."""
    store: dict[str, np.ndarray] = {}
    pairs = list(model.named_parameters()) + list(model.named_buffers())
    for name, value in pairs:
        if name in store:
            raise CheckpointError(f"duplicate parameter path {name}")
        store[name] = value.data if isinstance(value, Tensor) else value
    return store


def _blob_size(array: np.ndarray) -> int:
    return 8 + 4 * array.ndim + 8 * array.size


def checkpoint_save(model: Model, path) -> None:
    """Manifest (name, shape, byte offset) followed by tensor blobs."""
    store = parameter_store(model)
    names = [name.encode() for name in store]
    header = 12 + sum(2 + len(nb) + 1 + 4 * store[n].ndim + 8 for nb, n in zip(names, store))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(store)))
        offset = header
        for nb, (name, array) in zip(names, store.items()):
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<B", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            fh.write(struct.pack("<Q", offset))
            offset += _blob_size(array)
        for array in store.values():
            save_array(fh, array)


def _read_exact(fh, count: int, what: str) -> bytes:
    raw = fh.read(count)
    if len(raw) != count:
        raise CheckpointError(f"truncated checkpoint: short read in {what}")
    return raw


def read_manifest(fh) -> list[tuple[str, tuple[int, ...], int]]:
    magic = fh.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "manifest"))
        name = _read_exact(fh, name_len, "manifest").decode()
        (rank,) = struct.unpack("<B", _read_exact(fh, 1, "manifest"))
        shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "manifest"))
        (offset,) = struct.unpack("<Q", _read_exact(fh, 8, "manifest"))
        entries.append((name, shape, offset))
    return entries


def checkpoint_load(model: Model, path) -> dict[str, np.ndarray]:
    """Load a checkpoint into the model, validating every name and shape."""
    store = parameter_store(model)
    with open(path, "rb") as fh:
        entries = read_manifest(fh)
        seen = {name for name, _, _ in entries}
        for name in store:
            if name not in seen:
                raise CheckpointError(f"checkpoint missing parameter {name}")
        loaded = {}
        for name, shape, offset in entries:
            if name not in store:
                raise CheckpointError(f"checkpoint has unexpected parameter {name}")
            if shape != store[name].shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint {shape}, model {store[name].shape}"
                )
            fh.seek(offset)
            try:
                loaded[name] = load_array(fh)
            except Exception as exc:
                raise CheckpointError(f"corrupt blob for {name}: {exc}") from exc
    for name, value in loaded.items():
        store[name][...] = value
    return loaded
