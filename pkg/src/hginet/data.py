"""Synthetic camouflage dataset: value-noise textures, wobbly blob objects.

Objects carry the same texture field as the background, shifted by a small
contrast offset; at offset 0 the object is literally invisible while its
mask stays valid. Texture values live in [0.1, 0.75] so the shift (at most
0.2) never clips and the object/background gap equals the offset exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .pnm import read_pixmap, write_pgm, write_ppm

TEX_LO = 0.1
TEX_SPAN = 0.65


@dataclass(frozen=True)
class SynthSpec:
    size: int = 64
    min_objects: int = 1
    max_objects: int = 3
    freq_lo: int = 2  # coarsest value-noise lattice frequency
    freq_hi: int = 8  # finest octave; doubles from freq_lo up to here
    contrast: float = 0.1
    seed: int = 0

    def validate(self) -> "SynthSpec":
        if self.size < 16:
            raise DataError(f"image size {self.size} below minimum 16")
        if not 1 <= self.min_objects <= self.max_objects:
            raise DataError(f"bad object count range [{self.min_objects}, {self.max_objects}]")
        if not 1 <= self.freq_lo <= self.freq_hi <= self.size // 2:
            raise DataError(f"bad frequency band [{self.freq_lo}, {self.freq_hi}]")
        if not 0.0 <= self.contrast <= 0.2:
            raise DataError(f"contrast offset {self.contrast} outside [0, 0.2]")
        if self.seed < 0:
            raise DataError("seed must be non-negative")
        return self


@dataclass
class SamplePair:
    image: np.ndarray  # [3, H, W] float64 in [0, 1]
    mask: np.ndarray  # [H, W] float64 in {0, 1}

    def validate(self) -> "SamplePair":
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DataError(f"image must be [3, H, W], got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise DataError(f"mask {self.mask.shape} does not match image {self.image.shape}")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise DataError("image values outside [0, 1]")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise DataError("mask must be binary")
        covered = self.mask.sum()
        if covered == 0 or covered == self.mask.size:
            raise DataError("mask must be nonempty and not full")
        return self


def _bilinear_lattice(lattice: np.ndarray, size: int) -> np.ndarray:
    """Upsample a (f+1)x(f+1) lattice to size x size by bilinear interpolation."""
    f = lattice.shape[0] - 1
    xs = np.linspace(0.0, f, size)
    i0 = np.minimum(xs.astype(int), f - 1)
    t = xs - i0
    i1 = i0 + 1
    c00 = lattice[np.ix_(i0, i0)]
    c01 = lattice[np.ix_(i0, i1)]
    c10 = lattice[np.ix_(i1, i0)]
    c11 = lattice[np.ix_(i1, i1)]
    tr = t[:, None]
    tc = t[None, :]
    return (
        (1 - tr) * (1 - tc) * c00
        + (1 - tr) * tc * c01
        + tr * (1 - tc) * c10
        + tr * tc * c11
    )


def value_noise(rng: np.random.Generator, size: int, freq_lo: int, freq_hi: int) -> np.ndarray:
    """Octaved value noise in [0, 1]: lattice frequencies double across the band."""
    field = np.zeros((size, size))
    total = 0.0
    freq, amp = freq_lo, 1.0
    while freq <= freq_hi:
        field += amp * _bilinear_lattice(rng.random((freq + 1, freq + 1)), size)
        total += amp
        freq, amp = freq * 2, amp * 0.5
    return field / total


def blob_mask(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """Union of wobbly-radius blobs.

    Centers stay in the middle half and the wobbled radius is capped at
    1.15 * size/5, which keeps every corner uncovered and every blob
    nonempty regardless of the draw.
    """
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(count):
        cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
        radius = rng.uniform(size / 8.0, size / 5.0)
        amps = rng.uniform(0.0, 0.0375, size=4)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=4)
        theta = np.arctan2(yy - cy, xx - cx)
        wobble = 1.0 + sum(a * np.cos((k + 2) * theta + p) for k, (a, p) in enumerate(zip(amps, phases)))
        mask |= np.hypot(yy - cy, xx - cx) <= radius * wobble
    return mask


def make_pair(spec: SynthSpec, index: int) -> SamplePair:
    """Deterministic sample: rng seeded from (spec.seed, index) only."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, index])
    count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    mask = blob_mask(rng, spec.size, count)
    channels = [
        TEX_LO + TEX_SPAN * value_noise(rng, spec.size, spec.freq_lo, spec.freq_hi)
        for _ in range(3)
    ]
    image = np.stack(channels) + spec.contrast * mask
    return SamplePair(image=image, mask=mask.astype(np.float64)).validate()


def mean_gap(pair: SamplePair) -> float:
    """Mean intensity difference between object and background pixels."""
    inside = pair.mask.astype(bool)
    return abs(float(pair.image[:, inside].mean() - pair.image[:, ~inside].mean()))


def _to_bytes(pair: SamplePair) -> tuple[np.ndarray, np.ndarray]:
    rgb = np.rint(255.0 * pair.image.transpose(1, 2, 0)).astype(np.uint8)
    gray = (255.0 * pair.mask).astype(np.uint8)
    return rgb, gray


def synth_generate(spec: SynthSpec, count: int, out_dir) -> list[str]:
    """Write count image/mask pairs as images/NNNN.ppm + masks/NNNN.pgm."""
    if count < 1:
        raise DataError(f"pair count must be positive, got {count}")
    image_dir = os.path.join(out_dir, "images")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(image_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    stems = []
    for i in range(count):
        stem = f"{i:04d}"
        rgb, gray = _to_bytes(make_pair(spec, i))
        write_ppm(os.path.join(image_dir, stem + ".ppm"), rgb)
        write_pgm(os.path.join(mask_dir, stem + ".pgm"), gray)
        stems.append(stem)
    return stems


def load_dataset(root) -> list[tuple[str, SamplePair]]:
    """Read a generated dataset back; stems must match one-to-one."""
    image_dir = os.path.join(root, "images")
    mask_dir = os.path.join(root, "masks")
    if not os.path.isdir(image_dir) or not os.path.isdir(mask_dir):
        raise DataError(f"{root} lacks images/ and masks/ directories")
    images = {os.path.splitext(n)[0]: n for n in os.listdir(image_dir) if n.endswith(".ppm")}
    masks = {os.path.splitext(n)[0]: n for n in os.listdir(mask_dir) if n.endswith(".pgm")}
    if images.keys() != masks.keys():
        odd = sorted(images.keys() ^ masks.keys())
        raise DataError(f"unmatched stems between images/ and masks/: {', '.join(odd)}")
    if not images:
        raise DataError(f"no image/mask pairs under {root}")
    pairs = []
    for stem in sorted(images):
        rgb = read_pixmap(os.path.join(image_dir, images[stem]))
        gray = read_pixmap(os.path.join(mask_dir, masks[stem]))
        if rgb.ndim != 3:
            raise DataError(f"{images[stem]} is not a color image")
        pair = SamplePair(
            image=rgb.astype(np.float64).transpose(2, 0, 1) / 255.0,
            mask=(gray > 127).astype(np.float64),
        )
        pairs.append((stem, pair.validate()))
    return pairs
