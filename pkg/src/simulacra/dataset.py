"""Spike raster I/O, synthetic generation, population rate, bursts and backbone.

A raster is a dense ``(rows, channels)`` uint8 matrix at ``dt_ms`` per row.
Two on-disk formats are supported:

* CSV: a header line ``rows,channels,dt_ms`` (the three integers), then one
  line per row of comma-separated 0/1 cells.
* Packed binary: magic ``SNRAS1``, little-endian u32 rows, u32 channels,
  u32 dt_ms, then row-major spikes bit-packed MSB-first, each row padded to
  a whole byte.

Neuron metadata lives in a sidecar CSV next to the raster
(``<stem>.meta.csv``) with header ``id,x,y,is_backbone``.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import generator

log = logging.getLogger(__name__)

MAGIC = b"SNRAS1"
_HEADER = struct.Struct("<III")
META_HEADER = "id,x,y,is_backbone"
_BB_SHARE = 0.8


class RasterFormatError(ValueError):
    """Malformed raster or metadata file; carries the offending location."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if col is not None:
            loc.append(f"column {col}")
        super().__init__(message + (f" at {', '.join(loc)}" if loc else ""))
        self.reason = message
        self.row = row
        self.col = col


@dataclass(eq=False)
class SpikeRaster:
    spikes: np.ndarray
    dt_ms: int = 1

    def __post_init__(self):
        spikes = np.asarray(self.spikes)
        if spikes.ndim != 2:
            raise ValueError("spikes must be a 2-D (rows, channels) matrix")
        if spikes.shape[0] < 1 or spikes.shape[1] < 1:
            raise ValueError("raster needs at least one row and one channel")
        if self.dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        if spikes.dtype != np.uint8:
            if np.any((spikes != 0) & (spikes != 1)):
                raise ValueError("spike cells must be 0 or 1")
            spikes = spikes.astype(np.uint8)
        self.spikes = spikes

    @property
    def n_rows(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_channels(self) -> int:
        return self.spikes.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SpikeRaster):
            return NotImplemented
        return self.dt_ms == other.dt_ms and np.array_equal(self.spikes, other.spikes)


@dataclass(frozen=True)
class NeuronMeta:
    id: int
    x: float
    y: float
    is_backbone: bool = False


@dataclass(eq=False)
class RateSeries:
    window: int
    raw: np.ndarray
    norm: np.ndarray
    dt_ms: int = 1

    def __len__(self):
        return self.raw.shape[0]


@dataclass(frozen=True)
class BurstSpec:
    n_bursts: int = 5
    burst_rate_multiplier: float = 25.0
    burst_len_ms: int = 200
    backbone_k: int = 27


@dataclass(eq=False)
class ZoneMap:
    density: np.ndarray
    mask: np.ndarray
    threshold: float


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.csv")


def meta_arrays(meta: list[NeuronMeta]):
    """Return (ids, x, y, is_backbone) as numpy arrays ordered by id."""
    meta = sorted(meta, key=lambda m: m.id)
    ids = np.array([m.id for m in meta], dtype=np.int64)
    xs = np.array([m.x for m in meta], dtype=np.float64)
    ys = np.array([m.y for m in meta], dtype=np.float64)
    bb = np.array([m.is_backbone for m in meta], dtype=bool)
    return ids, xs, ys, bb


def backbone_ids(meta: list[NeuronMeta]) -> list[int]:
    return sorted(m.id for m in meta if m.is_backbone)


def default_meta(n_channels: int) -> list[NeuronMeta]:
    """Square-lattice layout used when a raster ships without a sidecar."""
    side = int(np.ceil(np.sqrt(n_channels)))
    return [NeuronMeta(i, ((i % side) + 0.5) / side, ((i // side) + 0.5) / side)
            for i in range(n_channels)]


# --------------------------------------------------------------------- I/O

def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "packed-binary"):
            raise ValueError(f"unknown raster format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "packed-binary"


def save_raster(path, raster: SpikeRaster, meta: list[NeuronMeta] | None = None,
                fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = _format_of(path, fmt)
    if fmt == "csv":
        rows, chans = raster.spikes.shape
        body = np.full((rows, 2 * chans), ord(","), dtype=np.uint8)
        body[:, 0::2] = raster.spikes + ord("0")
        body[:, -1] = ord("\n")
        with open(path, "wb") as fh:
            fh.write(f"{rows},{chans},{raster.dt_ms}\n".encode())
            fh.write(body.tobytes())
    else:
        packed = np.packbits(raster.spikes, axis=1, bitorder="big")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(raster.n_rows, raster.n_channels, raster.dt_ms))
            fh.write(packed.tobytes())
    if meta is not None:
        save_meta(sidecar_path(path), meta)
    return path


def save_meta(path, meta: list[NeuronMeta]) -> None:
    with open(path, "w") as fh:
        fh.write(META_HEADER + "\n")
        for m in sorted(meta, key=lambda m: m.id):
            fh.write(f"{m.id},{m.x!r},{m.y!r},{int(m.is_backbone)}\n")


def load_meta(path, n_channels: int | None = None) -> list[NeuronMeta]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != META_HEADER:
        raise RasterFormatError("malformed metadata header", row=0)
    meta = []
    for r, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise RasterFormatError("metadata row needs 4 fields", row=r)
        try:
            m = NeuronMeta(int(parts[0]), float(parts[1]), float(parts[2]),
                           bool(int(parts[3])))
        except ValueError as exc:
            raise RasterFormatError(f"bad metadata value ({exc})", row=r) from None
        if not (0.0 <= m.x <= 1.0 and 0.0 <= m.y <= 1.0):
            raise RasterFormatError("neuron position outside the unit square", row=r)
        meta.append(m)
    ids = sorted(m.id for m in meta)
    if ids != list(range(len(meta))):
        raise RasterFormatError("metadata ids must be dense 0..n-1")
    if n_channels is not None and len(meta) != n_channels:
        raise RasterFormatError(
            f"metadata has {len(meta)} neurons, raster has {n_channels} channels")
    return sorted(meta, key=lambda m: m.id)


def _parse_header(line: bytes):
    parts = line.strip().split(b",")
    if len(parts) != 3:
        raise RasterFormatError("malformed header", row=0)
    try:
        rows, chans, dt = (int(p) for p in parts)
    except ValueError:
        raise RasterFormatError("malformed header", row=0) from None
    if rows < 1 or chans < 1 or dt < 1:
        raise RasterFormatError("malformed header", row=0)
    return rows, chans, dt


def _load_csv(path: Path) -> SpikeRaster:
    data = path.read_bytes()
    if not data.strip():
        raise RasterFormatError("malformed header", row=0)
    lines = data.replace(b"\r\n", b"\n").split(b"\n")
    rows, chans, dt = _parse_header(lines[0])
    body = lines[1:]
    while body and body[-1] == b"":
        body.pop()
    if len(body) != rows:
        raise RasterFormatError(
            f"dimension mismatch: header says {rows} rows, found {len(body)}",
            row=min(len(body), rows))
    width = 2 * chans - 1
    if all(len(ln) == width for ln in body):
        arr = np.frombuffer(b"".join(body), dtype=np.uint8).reshape(rows, width)
        cells = arr[:, 0::2]
        seps_ok = chans == 1 or bool(np.all(arr[:, 1::2] == ord(",")))
        vals_ok = bool(np.all((cells == ord("0")) | (cells == ord("1"))))
        if seps_ok and vals_ok:
            return SpikeRaster(cells - ord("0"), dt_ms=dt)
    # slow path: locate the first defect precisely
    out = np.zeros((rows, chans), dtype=np.uint8)
    for r, ln in enumerate(body):
        cells = ln.split(b",")
        if len(cells) != chans:
            raise RasterFormatError(
                f"dimension mismatch: expected {chans} columns, found {len(cells)}",
                row=r, col=min(len(cells), chans))
        for c, v in enumerate(cells):
            v = v.strip()
            if v == b"1":
                out[r, c] = 1
            elif v != b"0":
                raise RasterFormatError(f"non-binary cell value {v.decode(errors='replace')!r}",
                                        row=r, col=c)
    return SpikeRaster(out, dt_ms=dt)


def _load_packed(path: Path) -> SpikeRaster:
    data = path.read_bytes()
    if len(data) < len(MAGIC) + _HEADER.size or not data.startswith(MAGIC):
        raise RasterFormatError("malformed header", row=0)
    rows, chans, dt = _HEADER.unpack_from(data, len(MAGIC))
    if rows < 1 or chans < 1 or dt < 1:
        raise RasterFormatError("malformed header", row=0)
    stride = (chans + 7) // 8
    payload = data[len(MAGIC) + _HEADER.size:]
    if len(payload) != rows * stride:
        raise RasterFormatError(
            f"dimension mismatch: expected {rows * stride} payload bytes, found {len(payload)}",
            row=len(payload) // stride)
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(rows, stride)
    spikes = np.unpackbits(packed, axis=1, count=chans, bitorder="big")
    pad_bits = np.unpackbits(packed, axis=1, bitorder="big")[:, chans:]
    if pad_bits.size and pad_bits.any():
        r = int(np.argmax(pad_bits.any(axis=1)))
        raise RasterFormatError("nonzero padding bits", row=r, col=chans)
    return SpikeRaster(spikes, dt_ms=dt)


def load_raster(path, fmt: str | None = None, meta_path=None):
    """Load a raster and its metadata; returns ``(SpikeRaster, list[NeuronMeta])``.

    Metadata comes from ``meta_path`` or the sidecar next to ``path``; when
    neither exists a lattice layout with no backbone flags is used.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = _format_of(path, fmt)
    raster = _load_csv(path) if fmt == "csv" else _load_packed(path)
    mp = Path(meta_path) if meta_path is not None else sidecar_path(path)
    if mp.exists():
        meta = load_meta(mp, raster.n_channels)
    else:
        log.info("no metadata sidecar at %s; using lattice layout", mp)
        meta = default_meta(raster.n_channels)
    return raster, meta


# --------------------------------------------------------------- synthetic

def gen_synthetic(seed: int, n_rows: int = 180_000, n_channels: int = 131,
                  background_hz: tuple[float, float] = (0.5, 3.0),
                  burst_spec: BurstSpec = BurstSpec(), dt_ms: int = 1):
    """Synthetic organoid-like raster with planted network bursts.

    Each channel fires as a Bernoulli process at a rate drawn uniformly from
    ``background_hz``. Bursts multiply every channel's rate; inside a burst
    the ``backbone_k`` backbone channels copy a shared driver train so they
    are strongly correlated with each other.
    """
    if n_rows < 1 or n_channels < 1:
        raise ValueError("n_rows and n_channels must be >= 1")
    k = burst_spec.backbone_k
    if k < 0 or k > n_channels:
        raise ValueError(f"backbone_k={k} must lie in [0, n_channels={n_channels}]")
    lo, hi = background_hz
    if lo < 0 or hi < lo:
        raise ValueError("background_hz must be an ordered non-negative range")

    rng = generator(seed, "dataset")
    rates = rng.uniform(lo, hi, size=n_channels)
    p = rates * (dt_ms / 1000.0)
    backbone = np.sort(rng.choice(n_channels, size=k, replace=False)) if k else \
        np.zeros(0, dtype=np.int64)
    is_bb = np.zeros(n_channels, dtype=bool)
    is_bb[backbone] = True
    # backbone channels draw most of their background from one shared train
    p_own = np.where(is_bb, p * (1.0 - _BB_SHARE), p)
    p_shared = 0.5 * (lo + hi) * (dt_ms / 1000.0)
    spikes = np.empty((n_rows, n_channels), dtype=np.uint8)
    chunk = 8192
    for r0 in range(0, n_rows, chunk):
        r1 = min(r0 + chunk, n_rows)
        block = rng.random((r1 - r0, n_channels), dtype=np.float32) < p_own
        if k:
            shared = rng.random(r1 - r0) < p_shared
            copy = rng.random((r1 - r0, k), dtype=np.float32) < _BB_SHARE
            block[:, backbone] |= shared[:, None] & copy
        spikes[r0:r1] = block

    blen = max(1, int(burst_spec.burst_len_ms // dt_ms))
    nb = burst_spec.n_bursts
    mult = burst_spec.burst_rate_multiplier
    if nb > 0 and n_rows > blen and mult > 1.0:
        seg = n_rows // nb
        p_extra = np.clip(p * (mult - 1.0), 0.0, 1.0)
        p_drive = min(1.0, 0.5 * (lo + hi) * mult * dt_ms / 1000.0)
        for b in range(nb):
            span = max(1, min(seg, n_rows - b * seg) - blen)
            start = b * seg + int(rng.integers(0, span))
            stop = min(start + blen, n_rows)
            n = stop - start
            extra = rng.random((n, n_channels), dtype=np.float32) < p_extra
            extra[:, is_bb] = False
            if k:
                driver = rng.random(n) < p_drive
                copy = rng.random((n, k)) < _BB_SHARE
                extra[:, backbone] = driver[:, None] & copy
            spikes[start:stop] |= extra.astype(np.uint8)

    xs = rng.uniform(0.0, 1.0, size=n_channels)
    ys = rng.uniform(0.0, 1.0, size=n_channels)
    meta = [NeuronMeta(i, float(xs[i]), float(ys[i]), bool(is_bb[i]))
            for i in range(n_channels)]
    return SpikeRaster(spikes, dt_ms=dt_ms), meta


# ----------------------------------------------------------- rate & bursts

def population_rate(raster: SpikeRaster, window: int = 1000) -> RateSeries:
    """Trailing-window population rate in spikes/s plus its max-normalised twin.

    ``window`` is in milliseconds; windows longer than the raster are clamped
    to the raster length.
    """
    if window < 1:
        raise ValueError("window must be >= 1 ms")
    rows = max(1, int(round(window / raster.dt_ms)))
    rows = min(rows, raster.n_rows)
    per_row = raster.spikes.sum(axis=1, dtype=np.int64)
    cs = np.cumsum(per_row)
    counts = cs.copy()
    counts[rows:] -= cs[:-rows]
    raw = counts / (rows * raster.dt_ms / 1000.0)
    peak = raw.max()
    norm = raw / peak if peak > 0 else np.zeros_like(raw)
    return RateSeries(window=rows * raster.dt_ms, raw=raw, norm=norm, dt_ms=raster.dt_ms)


def detect_bursts(rate: RateSeries, theta_hi: float = 0.5, theta_lo: float = 0.25,
                  min_dur: float = 50.0, min_gap: float = 100.0) -> list[tuple[int, int]]:
    """Two-threshold hysteresis burst extractor over ``rate.norm``.

    A burst opens on the first row with norm >= ``theta_hi`` and ends at the
    first row of a run of at least ``min_gap`` ms below ``theta_lo``. Bursts
    shorter than ``min_dur`` ms are dropped. Intervals are half-open
    ``(start, end)`` row pairs.
    """
    if not (0.0 <= theta_lo < theta_hi <= 1.0):
        raise ValueError("need 0 <= theta_lo < theta_hi <= 1")
    dt = rate.dt_ms
    gap_rows = max(1, int(np.ceil(min_gap / dt)))
    dur_rows = int(np.ceil(min_dur / dt))
    norm = np.asarray(rate.norm, dtype=np.float64)
    n = norm.shape[0]
    out: list[tuple[int, int]] = []

    def close(s, e):
        e = min(e, n - 1)
        if e > s and e - s >= dur_rows:
            out.append((s, e))

    above = norm >= theta_hi
    below = norm < theta_lo
    start = -1
    low_since = -1
    r = 0
    while r < n:
        if start < 0:
            nxt = np.argmax(above[r:])
            if not above[r + nxt]:
                break
            start = r + nxt
            low_since = -1
            r = start + 1
            continue
        if below[r]:
            if low_since < 0:
                low_since = r
            if r - low_since + 1 >= gap_rows:
                close(start, low_since)
                start = -1
        else:
            low_since = -1
        r += 1
    if start >= 0:
        close(start, low_since if low_since >= 0 else n)
    return [(int(a), int(b)) for a, b in out]


# ---------------------------------------------------------------- backbone

def backbone_scores(raster: SpikeRaster, bin_ms: int = 10) -> np.ndarray:
    """Summed Pearson correlation of each channel's binned counts with all others."""
    b = max(1, int(bin_ms // raster.dt_ms))
    edges = np.arange(0, raster.n_rows, b)
    counts = np.add.reduceat(raster.spikes.astype(np.float64), edges, axis=0)
    centered = counts - counts.mean(axis=0)
    std = np.sqrt((centered ** 2).mean(axis=0))
    z = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)
    corr = (z.T @ z) / counts.shape[0]
    scores = corr.sum(axis=1) - np.diag(corr)
    return np.round(scores, 9)


def rank_channels(scores: np.ndarray) -> np.ndarray:
    """Channel ids ordered by descending score, ties broken by lower id."""
    ids = np.arange(scores.shape[0])
    return np.lexsort((ids, -scores))


def select_backbone(raster: SpikeRaster, k: int = 27, meta: list[NeuronMeta] | None = None,
                    bin_ms: int = 10) -> list[NeuronMeta]:
    """Flag the ``k`` most inter-correlated channels as backbone."""
    if not 1 <= k <= raster.n_channels:
        raise ValueError(f"k={k} outside [1, {raster.n_channels}]")
    if meta is None:
        meta = default_meta(raster.n_channels)
    chosen = set(rank_channels(backbone_scores(raster, bin_ms))[:k].tolist())
    return [replace(m, is_backbone=m.id in chosen) for m in sorted(meta, key=lambda m: m.id)]


def backbone_order(raster: SpikeRaster, meta: list[NeuronMeta], bin_ms: int = 10) -> list[int]:
    """Flagged backbone ids in rank order (correlation score, then id)."""
    flagged = set(backbone_ids(meta))
    ranked = rank_channels(backbone_scores(raster, bin_ms))
    return [int(c) for c in ranked if int(c) in flagged]


def backbone_zones(meta: list[NeuronMeta], raster: SpikeRaster, grid: int = 64,
                   sigma: float = 0.06, percentile: float = 75.0) -> ZoneMap:
    """Spike-weighted Gaussian density of backbone positions and its dense zones.

    The kernel is truncated at three sigma; the mask keeps cells above the
    given percentile of the nonzero density.
    """
    ids, xs, ys, bb = meta_arrays(meta)
    if not bb.any():
        raise ValueError("no backbone neurons flagged")
    sel = ids[bb]
    counts = raster.spikes[:, sel].sum(axis=0, dtype=np.int64).astype(np.float64)
    centers = (np.arange(grid) + 0.5) / grid
    gx = centers[None, None, :]
    gy = centers[None, :, None]
    dx = gx - xs[bb][:, None, None]
    dy = gy - ys[bb][:, None, None]
    d2 = dx * dx + dy * dy
    kern = np.exp(-d2 / (2.0 * sigma * sigma))
    kern[d2 > (3.0 * sigma) ** 2] = 0.0
    density = np.tensordot(counts, kern, axes=1)
    nz = density[density > 0]
    if nz.size == 0:
        return ZoneMap(density, np.zeros_like(density, dtype=bool), 0.0)
    thr = float(np.percentile(nz, percentile))
    return ZoneMap(density, density > thr, thr)
