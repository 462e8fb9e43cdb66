"""Toroidal trail field and image dumps."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import kernels


@dataclass(eq=False)
class TrailField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] < 3:
            raise ValueError("trail field must be 2-D and at least 3x3")
        self.values = v

    @classmethod
    def zeros(cls, width: int, height: int) -> "TrailField":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def mass(self) -> float:
        return float(self.values.sum())


def field_diffuse_decay(field: TrailField | np.ndarray, decay: float):
    """Replace every cell by ``decay`` times its 3x3 toroidal mean.

    The box mean conserves total mass on a torus, so one step scales mass by
    exactly ``decay`` up to rounding.
    """
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must lie in (0, 1]")
    if isinstance(field, TrailField):
        return TrailField(kernels.diffuse_decay(field.values, decay))
    return kernels.diffuse_decay(np.asarray(field, dtype=np.float64), decay)


def to_u8(values: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Map a non-negative field onto 0..255, normalising by its max by default."""
    top = float(values.max()) if scale is None else scale
    if top <= 0 or not np.isfinite(top):
        return np.zeros(values.shape, dtype=np.uint8)
    return np.clip(np.rint(values * (255.0 / top)), 0, 255).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> Path:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(gray.tobytes())
    return path


def write_ppm(path, rgb: np.ndarray) -> Path:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())
    return path


def read_pnm(path) -> np.ndarray:
    """Minimal binary PGM/PPM reader (used by tests and verify)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    magic, w, h, maxval, payload = parts[0], int(parts[1]), int(parts[2]), int(parts[3]), parts[4]
    if maxval != 255:
        raise ValueError("only 8-bit PNM supported")
    if magic == b"P5":
        return np.frombuffer(payload[: w * h], dtype=np.uint8).reshape(h, w)
    if magic == b"P6":
        return np.frombuffer(payload[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    raise ValueError(f"unsupported PNM magic {magic!r}")


SPECIES_COLORS = np.array([
    [1.0, 0.25, 0.1],
    [0.1, 1.0, 0.35],
    [0.2, 0.4, 1.0],
    [1.0, 0.85, 0.1],
])


def composite_rgb(fields: np.ndarray) -> np.ndarray:
    """Blend per-species fields into one RGB image, one hue per species."""
    rgb = np.zeros(fields.shape[1:] + (3,))
    for s in range(fields.shape[0]):
        f = fields[s]
        top = f.max()
        if top > 0:
            rgb += (f / top)[..., None] * SPECIES_COLORS[s % len(SPECIES_COLORS)]
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
