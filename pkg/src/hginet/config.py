"""Model configuration: profiles, invariants, flat-text round trip.

The default construction carries the published architecture constants;
``desk_profile`` shrinks everything to CPU-testable extents without
changing any mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

DECODERS = ("caff", "fpn")
ATTENTION_MODES = ("rtfa", "vanilla")


@dataclass
class ModelConfig:
    input_size: int = 512
    stage_strides: tuple[int, ...] = (4, 8, 16, 32)
    stage_channels: tuple[int, ...] = (64, 128, 320, 512)
    stage_blocks: tuple[int, ...] = (2, 2, 2, 2)
    region_grid: tuple[int, ...] = (0, 0, 0, 0)  # 0 = derive from stage side
    cluster_k: tuple[int, ...] = (1, 4, 16, 64)
    knn_size: int = 0  # 0 = derive from region count
    graph_vertices: int = 8
    latent_channels: int = 64
    hgit_layers: int = 2
    hgit_heads: int = 8
    hgit_pairs: int = 3
    attention: str = "rtfa"
    decoder: str = "caff"
    loss_lambda: float = 0.7
    seed: int = 0

    def stage_sides(self) -> tuple[int, ...]:
        return tuple(self.input_size // s for s in self.stage_strides)

    def validate(self) -> "ModelConfig":
        for name in ("stage_strides", "stage_channels", "stage_blocks", "region_grid", "cluster_k"):
            value = getattr(self, name)
            if len(value) != 4:
                raise ConfigError(f"{name} needs 4 entries, got {len(value)}")
            if name != "region_grid" and any(v < 1 for v in value):
                raise ConfigError(f"{name} entries must be positive: {value}")
        if self.input_size < 4:
            raise ConfigError(f"input size {self.input_size} too small")
        for stride in self.stage_strides:
            if self.input_size % stride:
                raise ConfigError(f"stride {stride} does not divide input size {self.input_size}")
        sides = self.stage_sides()
        for a, b in zip(sides, sides[1:]):
            if a != 2 * b:
                raise ConfigError(f"stage sides {sides} must halve between stages")
        for side, grid in zip(sides, self.region_grid):
            if grid < 0 or (grid and side % grid):
                raise ConfigError(f"region grid {grid} does not divide stage side {side}")
        if self.knn_size < 0:
            raise ConfigError(f"knn size {self.knn_size} must be >= 0")
        if self.graph_vertices < 1:
            raise ConfigError("graph needs at least one vertex")
        if self.hgit_layers < 0:
            raise ConfigError(f"negative transformer depth {self.hgit_layers}")
        if self.hgit_heads < 1 or self.latent_channels % self.hgit_heads:
            raise ConfigError(
                f"heads ({self.hgit_heads}) must divide latent channels ({self.latent_channels})"
            )
        if self.hgit_pairs not in (0, 1, 2, 3):
            raise ConfigError(f"interaction pair count must be 0..3, got {self.hgit_pairs}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if not 0.0 <= self.loss_lambda <= 1.0:
            raise ConfigError(f"loss mixture weight {self.loss_lambda} outside [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        return self

    def active_pairs(self) -> tuple[int, ...]:
        """Stage indices (1-based) carrying an interaction pair."""
        return {0: (), 1: (2,), 2: (1, 3), 3: (1, 2, 3)}[self.hgit_pairs]


def desk_profile(seed: int = 0) -> ModelConfig:
    """64x64 single-block profile used by tests and golden files."""
    return ModelConfig(
        input_size=64,
        stage_channels=(16, 32, 64, 128),
        stage_blocks=(1, 1, 1, 1),
        latent_channels=32,
        seed=seed,
    ).validate()


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def to_text(cfg: ModelConfig) -> str:
    """Flat key=value form, one field per line, field order stable."""
    return "".join(f"{f.name}={_format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def from_text(text: str) -> ModelConfig:
    """Parse the key=value form; unknown keys are configuration errors."""
    spec = {f.name: f.type for f in fields(ModelConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in spec:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if spec[key].startswith("tuple"):
                values[key] = tuple(int(v) for v in val.split(","))
            elif spec[key] == "float":
                values[key] = float(val)
            elif spec[key] == "int":
                values[key] = int(val)
            else:
                values[key] = val
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None
    return replace(ModelConfig(), **values).validate()


def save(cfg: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_text(cfg))


def load(path) -> ModelConfig:
    with open(path) as fh:
        return from_text(fh.read())
