"""Monte Carlo simulation of balanced homodyne detection of QPSK signals.

A weak coherent signal interferes with a strong local oscillator (LO) whose
phase is scanned over a uniform grid; the photocurrent difference at each LO
phase is one Gaussian draw.  A full scan is reshaped row-major into a square
"quadrature image" that the neural receiver consumes.  Datasets of labeled
images are reproducible from a single 64-bit seed and can be persisted in a
compact binary format with a JSON sidecar.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text
from .limits import QpskKey, VALID_KEYS

REFERENCE_GRID_POINTS = 900  # full 2*pi LO scan
DEFAULT_LO_AMPLITUDE = 100.0
Q_WINDOW = 10.0  # quadrature units mapped onto [0, 1]: q in [-10, 10]

ROLES = ("gnn-input", "gnn-target", "cnn-train", "test")

_MAGIC = b"QHD1"
_HEADER = struct.Struct("<IIdQ")  # width, per_key, signal_db, seed


@dataclass(frozen=True)
class LoScan:
    """Local-oscillator phase scan geometry.

    ``total_points`` must be a perfect square (the image is W x W with
    W = sqrt(total_points)).  Scans produced by slicing the 900-point
    reference grid cover [0, gamma_max) with gamma_max = (M/900) * 2*pi.
    """

    total_points: int
    gamma_max: float
    base_grid_points: int = REFERENCE_GRID_POINTS
    lo_amplitude: float = DEFAULT_LO_AMPLITUDE

    def __post_init__(self):
        w = math.isqrt(self.total_points)
        if w * w != self.total_points:
            raise ValueError(f"total_points must be a perfect square, got {self.total_points}")
        if not 16 <= self.total_points <= 900:
            raise ValueError(f"total_points must lie in [16, 900], got {self.total_points}")
        if self.gamma_max <= 0.0:
            raise ValueError(f"gamma_max must be positive, got {self.gamma_max!r}")
        if self.lo_amplitude <= 0.0:
            raise ValueError(f"lo_amplitude must be positive, got {self.lo_amplitude!r}")

    @property
    def width(self) -> int:
        return math.isqrt(self.total_points)

    @classmethod
    def full(cls, lo_amplitude: float = DEFAULT_LO_AMPLITUDE) -> "LoScan":
        """The 900-point reference scan over [0, 2*pi)."""
        return cls(REFERENCE_GRID_POINTS, 2.0 * math.pi, lo_amplitude=lo_amplitude)

    @classmethod
    def for_width(cls, width: int, lo_amplitude: float = DEFAULT_LO_AMPLITUDE) -> "LoScan":
        """Scan whose W*W points are the first W*W of the reference grid."""
        m = width * width
        return cls(m, (m / REFERENCE_GRID_POINTS) * 2.0 * math.pi, lo_amplitude=lo_amplitude)

    def phase_grid(self) -> np.ndarray:
        """LO phases gamma_i = gamma_max * i / M, i = 0..M-1 (half-open grid)."""
        return self.gamma_max * np.arange(self.total_points) / self.total_points

    @property
    def is_reference(self) -> bool:
        return self.total_points == REFERENCE_GRID_POINTS


@dataclass(frozen=True)
class QuadratureImage:
    """W x W grid of homodyne samples; normalized pixels lie in [0, 1]."""

    width: int
    pixels: np.ndarray
    raw_units: bool = False

    def __post_init__(self):
        if self.pixels.shape != (self.width, self.width):
            raise ValueError(
                f"pixels shape {self.pixels.shape} does not match width {self.width}"
            )


@dataclass(frozen=True)
class HomodyneDataset:
    """Labeled quadrature images sharing one scan geometry.

    Entries are grouped by key in equal-size blocks: all key-1 images first,
    then key 2, and so on.
    """

    entries: tuple[tuple[QuadratureImage, QpskKey], ...]
    signal_db: float
    scan: LoScan
    seed: int
    role: str = "test"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if len(self.entries) % len(VALID_KEYS) != 0:
            raise ValueError("entries must hold the same number of images per key")

    @property
    def n_per_key(self) -> int:
        return len(self.entries) // len(VALID_KEYS)

    @property
    def width(self) -> int:
        return self.scan.width

    def pixel_stack(self) -> np.ndarray:
        """All images as one (n, W, W) float64 array (copies)."""
        return np.stack([img.pixels for img, _ in self.entries])

    def key_indices(self) -> np.ndarray:
        """Symbol index (1..4) of each entry as an int array."""
        return np.array([key.k for _, key in self.entries], dtype=np.int64)


def homodyne_mean(amplitude: float, symbol_phase: float, lo_phase, lo_amplitude: float):
    """Expected detector difference count 2*beta*a*cos(lo_phase - symbol_phase).

    ``lo_phase`` may be a scalar or an array of scan phases.
    """
    if amplitude < 0.0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude!r}")
    if lo_amplitude <= 0.0:
        raise ValueError(f"lo_amplitude must be positive, got {lo_amplitude!r}")
    return 2.0 * lo_amplitude * amplitude * np.cos(np.asarray(lo_phase) - symbol_phase)


def sample_trace(
    key: QpskKey, amplitude: float, scan: LoScan, rng: np.random.Generator
) -> np.ndarray:
    """One noisy scan: Gaussian draws with per-phase mean and sigma = |beta|."""
    mean = homodyne_mean(amplitude, key.phase, scan.phase_grid(), scan.lo_amplitude)
    return mean + scan.lo_amplitude * rng.standard_normal(scan.total_points)


def normalize_to_image(raw: np.ndarray, lo_amplitude: float) -> QuadratureImage:
    """Map raw counts to [0, 1] pixels and reshape row-major into W x W.

    Counts are first scaled to quadrature units q = n / (2*beta), then mapped
    affinely from the fixed window [-Q_WINDOW, Q_WINDOW] onto [0, 1] and
    clamped.  The window is dataset-independent on purpose: per-image scaling
    would erase the amplitude information the denoiser has to restore.
    """
    raw = np.asarray(raw, dtype=np.float64)
    m = raw.size
    w = math.isqrt(m)
    if w * w != m:
        raise ValueError(f"trace length must be a perfect square, got {m}")
    q = raw / (2.0 * lo_amplitude)
    pixels = np.clip((q + Q_WINDOW) / (2.0 * Q_WINDOW), 0.0, 1.0)
    return QuadratureImage(width=w, pixels=pixels.reshape(w, w))


def denormalize_pixels(pixels: np.ndarray) -> np.ndarray:
    """Inverse of the pixel map on the open interval (0, 1): back to q units."""
    return np.asarray(pixels) * (2.0 * Q_WINDOW) - Q_WINDOW


def template_image(key: QpskKey, amplitude: float, scan: LoScan) -> QuadratureImage:
    """Noise-free image: the normalized mean trace of ``key`` at ``amplitude``."""
    mean = homodyne_mean(amplitude, key.phase, scan.phase_grid(), scan.lo_amplitude)
    return normalize_to_image(mean, scan.lo_amplitude)


def _entry_rng(seed: int, index: int) -> np.random.Generator:
    # counter-based derivation: independent stream per entry, order-free
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_dataset(
    signal_db: float,
    n_per_key: int,
    scan: LoScan,
    seed: int,
    role: str = "test",
) -> HomodyneDataset:
    """Simulate ``n_per_key`` labeled images per QPSK key at ``signal_db``.

    Each entry draws from its own counter-derived random stream, so the
    dataset is byte-identical for identical arguments regardless of how
    generation is scheduled.
    """
    if n_per_key < 1:
        raise ValueError(f"n_per_key must be >= 1, got {n_per_key}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    amplitude = 10.0 ** (signal_db / 10.0)
    entries = []
    index = 0
    for k in VALID_KEYS:
        key = QpskKey(k)
        for _ in range(n_per_key):
            trace = sample_trace(key, amplitude, scan, _entry_rng(seed, index))
            entries.append((normalize_to_image(trace, scan.lo_amplitude), key))
            index += 1
    return HomodyneDataset(
        entries=tuple(entries), signal_db=signal_db, scan=scan, seed=seed, role=role
    )


def slice_scan(ds: HomodyneDataset, target_width: int) -> HomodyneDataset:
    """Restrict a full-scan dataset to the first ``target_width**2`` LO phases.

    Keeps the leading samples of every trace (LO phases 0 .. (W'^2/900)*2*pi)
    and reshapes them into W' x W' images; labels and metadata carry over.
    ``target_width`` 30 is the identity.
    """
    if not ds.scan.is_reference:
        raise ValueError("slice_scan requires a dataset built on the full 900-point scan")
    if target_width % 2 != 0 or not 4 <= target_width <= 30:
        raise ValueError(
            f"target_width must be an even integer in [4, 30], got {target_width}"
        )
    if target_width == 30:
        return replace(ds, entries=tuple(ds.entries))
    m = target_width * target_width
    new_scan = LoScan.for_width(target_width, lo_amplitude=ds.scan.lo_amplitude)
    entries = tuple(
        (
            QuadratureImage(target_width, img.pixels.reshape(-1)[:m].reshape(target_width, target_width).copy()),
            key,
        )
        for img, key in ds.entries
    )
    return HomodyneDataset(
        entries=entries, signal_db=ds.signal_db, scan=new_scan, seed=ds.seed, role=ds.role
    )


def save_dataset(ds: HomodyneDataset, path: str | Path) -> None:
    """Persist as QHD1 binary plus a human-readable .meta.json sidecar."""
    path = Path(path)
    chunks = [_MAGIC, _HEADER.pack(ds.width, ds.n_per_key, ds.signal_db, ds.seed)]
    for img, key in ds.entries:
        chunks.append(struct.pack("<B", key.k))
        chunks.append(img.pixels.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(chunks))
    meta = {
        "magic": _MAGIC.decode(),
        "width": ds.width,
        "per_key": ds.n_per_key,
        "signal_db": ds.signal_db,
        "seed": ds.seed,
        "role": ds.role,
        "gamma_max": ds.scan.gamma_max,
        "lo_amplitude": ds.scan.lo_amplitude,
        "entries": len(ds.entries),
    }
    atomic_write_text(path.with_suffix(path.suffix + ".meta.json"), json.dumps(meta, indent=2) + "\n")


def load_dataset(path: str | Path, role: str | None = None) -> HomodyneDataset:
    """Read a QHD1 file; the sidecar supplies the role unless overridden."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a QHD1 dataset file")
    width, per_key, signal_db, seed = _HEADER.unpack_from(blob, 4)
    lo_amplitude = DEFAULT_LO_AMPLITUDE
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if role is None:
        role = "test"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            role = meta.get("role", role)
            lo_amplitude = meta.get("lo_amplitude", lo_amplitude)
    scan = LoScan.for_width(width, lo_amplitude=lo_amplitude)
    n_entries = 4 * per_key
    pixel_bytes = width * width * 8
    offset = 4 + _HEADER.size
    expected = offset + n_entries * (1 + pixel_bytes)
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated or oversized dataset ({len(blob)} vs {expected} bytes)")
    entries = []
    for _ in range(n_entries):
        k = blob[offset]
        offset += 1
        pixels = np.frombuffer(blob, dtype="<f8", count=width * width, offset=offset).reshape(
            width, width
        )
        offset += pixel_bytes
        entries.append((QuadratureImage(width, pixels.copy()), QpskKey(int(k))))
    return HomodyneDataset(
        entries=tuple(entries), signal_db=signal_db, scan=scan, seed=seed, role=role
    )
