"""Toy data sources: 2-D Gaussian mixtures and IDX grayscale images."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

MIXTURE_KINDS = ("ring", "grid", "swiss_roll")
IDX_UBYTE_3D = 0x00000803

# sample i is drawn from block i // _BLOCK, so draws never depend on batch partitioning
_BLOCK = 1024


@dataclass(frozen=True)
class MixtureSpec:
    """A 2-D synthetic distribution.

    ``radius`` is the ring radius, the half-width of the grid lattice, or the
    outer radius of the swiss roll.
    """

    kind: str = "ring"
    n_modes: int = 8
    radius: float = 2.0
    sigma: float = 0.04
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MIXTURE_KINDS:
            raise ValueError(f"kind must be one of {MIXTURE_KINDS}, got {self.kind!r}")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.kind == "grid" and math.isqrt(self.n_modes) ** 2 != self.n_modes:
            raise ValueError(f"grid needs a square number of modes, got {self.n_modes}")

    def centers(self) -> Optional[np.ndarray]:
        """Mode centers, shape ``(n_modes, 2)``; ``None`` for the swiss roll."""
        if self.kind == "ring":
            ang = 2.0 * np.pi * np.arange(self.n_modes) / self.n_modes
            return self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        if self.kind == "grid":
            k = math.isqrt(self.n_modes)
            ticks = np.linspace(-self.radius, self.radius, k) if k > 1 else np.zeros(1)
            gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
            return np.stack([gx.ravel(), gy.ravel()], axis=1)
        return None

    def extent(self) -> float:
        """Half-width of a box that holds essentially all the mass."""
        return self.radius + 5.0 * self.sigma


def _block(spec: MixtureSpec, seed: int, b: int) -> np.ndarray:
    rng = np.random.default_rng([seed, b])
    if spec.kind == "swiss_roll":
        t = np.sqrt(rng.uniform(0.0, 1.0, _BLOCK)) * 3.0 * np.pi + 1.5 * np.pi
        r = spec.radius * t / (4.5 * np.pi)
        pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        return pts + spec.sigma * rng.standard_normal((_BLOCK, 2))
    idx = rng.integers(0, spec.n_modes, _BLOCK)
    noise = rng.standard_normal((_BLOCK, 2))
    return spec.centers()[idx] + spec.sigma * noise


def sample_mixture(spec: MixtureSpec, n: int, seed: Optional[int] = None,
                   start: int = 0) -> np.ndarray:
    """Return samples ``start .. start+n-1`` of the stream for ``seed``.

    Each sample depends only on the seed and its index.
    """
    seed = spec.seed if seed is None else seed
    if n <= 0:
        return np.zeros((0, 2))
    stop = start + n
    blocks = [_block(spec, seed, b) for b in range(start // _BLOCK, (stop - 1) // _BLOCK + 1)]
    pts = np.concatenate(blocks, axis=0)
    off = start - (start // _BLOCK) * _BLOCK
    return pts[off:off + n]


def mixture_labels(spec: MixtureSpec, n: int, seed: Optional[int] = None, start: int = 0) -> np.ndarray:
    """Mode index of each sample returned by :func:`sample_mixture`."""
    seed = spec.seed if seed is None else seed
    if spec.kind == "swiss_roll":
        raise ValueError("swiss_roll has no discrete modes")
    stop = start + n
    labels = []
    for b in range(start // _BLOCK, (stop - 1) // _BLOCK + 1):
        labels.append(np.random.default_rng([seed, b]).integers(0, spec.n_modes, _BLOCK))
    off = start - (start // _BLOCK) * _BLOCK
    return np.concatenate(labels)[off:off + n]


# -- images ----------------------------------------------------------------------

@dataclass
class ImageSet:
    """A stack of grayscale images, shape ``(n, height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or min(self.pixels.shape) < 1:
            raise ValueError(f"ImageSet needs a non-empty (n, h, w) array, got {self.pixels.shape}")

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(self.n, -1).astype(np.float64)


class IDXFormatError(ValueError):
    pass


def parse_idx(data: bytes, source: str = "<bytes>") -> ImageSet:
    if len(data) < 4:
        raise IDXFormatError(f"{source}: file is {len(data)} bytes, too short for the magic at offset 0")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IDX_UBYTE_3D:
        raise IDXFormatError(f"{source}: magic 0x{magic:08x} at offset 0, expected "
                             f"0x{IDX_UBYTE_3D:08x} (unsigned byte, 3 dims)")
    if len(data) < 16:
        raise IDXFormatError(f"{source}: header truncated at offset {len(data)}, expected 16 bytes")
    n, rows, cols = struct.unpack(">III", data[4:16])
    if min(n, rows, cols) == 0:
        raise IDXFormatError(f"{source}: zero-sized dimension {n}x{rows}x{cols} in header at offset 4")
    expected = 16 + n * rows * cols
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "has trailing bytes"
        raise IDXFormatError(f"{source}: payload {kind}: expected {expected} bytes "
                             f"({n}x{rows}x{cols} after the 16-byte header), got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols).copy()
    return ImageSet(pixels)


def load_idx(path) -> ImageSet:
    """Parse a big-endian IDX image file (``0x00000803``: ubyte, 3 dims)."""
    return parse_idx(Path(path).read_bytes(), str(path))


def write_idx(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3:
        raise ValueError("write_idx expects an (n, rows, cols) array")
    header = struct.pack(">IIII", IDX_UBYTE_3D, *pixels.shape)
    Path(path).write_bytes(header + pixels.astype(np.uint8).tobytes())


def rescale_and_downsample(images: ImageSet, target_hw=None) -> ImageSet:
    """Block-mean pool to ``target_hw`` and map ``[0, 255]`` onto ``[-1, 1]``."""
    px = images.pixels.astype(np.float64)
    if target_hw is not None:
        th, tw = target_hw
        if th < 1 or tw < 1 or images.height % th or images.width % tw:
            raise ValueError(f"target {th}x{tw} does not divide source {images.height}x{images.width}")
        fh, fw = images.height // th, images.width // tw
        px = px.reshape(images.n, th, fh, tw, fw).mean(axis=(2, 4))
    return ImageSet(np.clip(2.0 * px / 255.0 - 1.0, -1.0, 1.0))


# -- training data wrappers ----------------------------------------------------------

@dataclass
class TrainData:
    """Real data as fed to the discriminator.

    ``points`` live in the network domain; ``scale`` maps them back to the
    original units (``original = points * scale``).
    """

    points: np.ndarray
    scale: float = 1.0
    mixture: Optional[MixtureSpec] = None
    heldout: Optional[np.ndarray] = None
    clip: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def batch(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.points[rng.integers(0, len(self.points), m)]


def mixture_data(spec: MixtureSpec, n_train: int, n_heldout: int = 2048,
                 seed: Optional[int] = None) -> TrainData:
    """Training pool and disjoint held-out set, rescaled into ``[-1, 1]``."""
    seed = spec.seed if seed is None else seed
    scale = spec.extent() / 0.9
    train = sample_mixture(spec, n_train, seed) / scale
    held = sample_mixture(spec, n_heldout, seed, start=n_train) / scale
    return TrainData(train, scale, spec, held, None)


def image_data(images: ImageSet, n_heldout: int = 0) -> TrainData:
    flat = images.flat()
    if n_heldout:
        return TrainData(flat[:-n_heldout], 1.0, None, flat[-n_heldout:], (-1.0, 1.0))
    return TrainData(flat, 1.0, None, flat, (-1.0, 1.0))
