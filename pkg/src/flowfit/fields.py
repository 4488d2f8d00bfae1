"""Dense field sampling, RMSE scoring, velocity conversion, and field files.

A FieldGrid holds a two-component field sampled on a rectangular grid whose
axis coordinates may be sub-pixel: the model is continuous, so grids at any
resolution are direct evaluations, never interpolations.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import DisplacementModel, forward_batch

FIELD_MAGIC = b"NVF1"
_FIELD_HEADER = struct.Struct("<IIffff")  # width, height, x0, y0, dx, dy
FLO_MAGIC = 202021.25  # Middlebury .flo sanity value


@dataclass
class FieldGrid:
    """Two-component samples (u, v) on the grid xs x ys."""

    xs: np.ndarray  # (W,)
    ys: np.ndarray  # (H,)
    u: np.ndarray  # (H, W)
    v: np.ndarray  # (H, W)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64).ravel()
        self.ys = np.asarray(self.ys, dtype=np.float64).ravel()
        self.u = np.asarray(self.u)
        self.v = np.asarray(self.v)
        shape = (self.ys.size, self.xs.size)
        if self.u.shape != shape or self.v.shape != shape:
            raise ValueError(
                f"component shapes {self.u.shape}/{self.v.shape} do not match "
                f"grid {shape}"
            )
        for name, arr in (("xs", self.xs), ("ys", self.ys), ("u", self.u), ("v", self.v)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name} contains non-finite values")

    @property
    def width(self) -> int:
        return self.xs.size

    @property
    def height(self) -> int:
        return self.ys.size

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def pixel_grid_coords(shape) -> tuple[np.ndarray, np.ndarray]:
    """(xs, ys) covering every pixel center of an (H, W) image."""
    h, w = shape
    return np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64)


def sample_grid(model: DisplacementModel, xs, ys) -> FieldGrid:
    """Evaluate the model on the tensor grid xs x ys."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    gx, gy = np.meshgrid(xs, ys)
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    disp = forward_batch(model, coords)
    shape = (ys.size, xs.size)
    return FieldGrid(xs, ys, disp[:, 0].reshape(shape), disp[:, 1].reshape(shape))


def rmse_dense(pred: FieldGrid, truth: FieldGrid) -> float:
    """Root-mean-square error with both components summed inside the mean."""
    if pred.u.shape != truth.u.shape:
        raise ValueError(f"grid shapes differ: {pred.u.shape} vs {truth.u.shape}")
    du = np.asarray(pred.u, dtype=np.float64) - truth.u
    dv = np.asarray(pred.v, dtype=np.float64) - truth.v
    return float(np.sqrt(np.mean(du * du + dv * dv)))


def rmse_at_points(model: DisplacementModel, points, truth_disp) -> float:
    """RMSE of the model against known displacements at scattered points."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    truth_disp = np.asarray(truth_disp, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0:
        raise ValueError("need at least one evaluation point")
    if points.shape != truth_disp.shape:
        raise ValueError("points and truth displacement counts differ")
    err = forward_batch(model, points).astype(np.float64) - truth_disp
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def to_velocity(grid: FieldGrid, meta) -> FieldGrid:
    """Scale a displacement grid (px) into a velocity grid (length/time)."""
    factor = meta.magnification / meta.frame_interval
    return FieldGrid(grid.xs, grid.ys, grid.u * factor, grid.v * factor)


def vorticity(grid: FieldGrid) -> np.ndarray:
    """dv/dx - du/dy via central differences, one-sided at the borders."""
    dv_dx = np.gradient(np.asarray(grid.v, dtype=np.float64), grid.xs, axis=1)
    du_dy = np.gradient(np.asarray(grid.u, dtype=np.float64), grid.ys, axis=0)
    return dv_dx - du_dy


def _uniform_spacing(coords: np.ndarray, name: str) -> float:
    if coords.size < 2:
        return 1.0  # degenerate axis; the loader never multiplies by it
    steps = np.diff(coords)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
        raise ValueError(f"{name} spacing must be uniform to write NVF1")
    return float(steps[0])


def save_field(grid: FieldGrid, path) -> None:
    """Write the grid in the NVF1 binary format (32-bit little-endian)."""
    dx = _uniform_spacing(grid.xs, "x")
    dy = _uniform_spacing(grid.ys, "y")
    x0 = float(grid.xs[0]) if grid.xs.size else 0.0
    y0 = float(grid.ys[0]) if grid.ys.size else 0.0
    buf = bytearray(FIELD_MAGIC)
    buf += _FIELD_HEADER.pack(grid.width, grid.height, x0, y0, dx, dy)
    interleaved = np.stack(
        [np.asarray(grid.u), np.asarray(grid.v)], axis=-1
    )  # (H, W, 2): u then v per sample
    buf += np.ascontiguousarray(interleaved, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(buf)


def load_field(path) -> FieldGrid:
    """Read an NVF1 field file; raises ValueError on a malformed file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(FIELD_MAGIC) + _FIELD_HEADER.size:
        raise ValueError(f"{path}: file too short for an NVF1 header")
    magic = raw[: len(FIELD_MAGIC)]
    if magic != FIELD_MAGIC:
        if magic[:3] == FIELD_MAGIC[:3]:
            raise ValueError(f"{path}: unsupported field format version {magic!r}")
        raise ValueError(f"{path}: not a field file (bad magic {magic!r})")
    width, height, x0, y0, dx, dy = _FIELD_HEADER.unpack_from(raw, len(FIELD_MAGIC))
    expected = len(FIELD_MAGIC) + _FIELD_HEADER.size + 4 * width * height * 2
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(
        raw, dtype="<f4", count=width * height * 2, offset=len(FIELD_MAGIC) + _FIELD_HEADER.size
    ).reshape(height, width, 2)
    xs = x0 + dx * np.arange(width)
    ys = y0 + dy * np.arange(height)
    return FieldGrid(xs, ys, data[:, :, 0].astype(np.float32), data[:, :, 1].astype(np.float32))


def load_flo(path) -> FieldGrid:
    """Read a Middlebury .flo file, the format used by public benchmarks."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise ValueError(f"{path}: file too short for a .flo header")
    tag = struct.unpack_from("<f", raw, 0)[0]
    if tag != FLO_MAGIC:
        raise ValueError(f"{path}: not a .flo file (tag {tag!r})")
    width, height = struct.unpack_from("<ii", raw, 4)
    expected = 12 + 4 * width * height * 2
    if width <= 0 or height <= 0 or len(raw) != expected:
        raise ValueError(f"{path}: inconsistent .flo dimensions {width}x{height}")
    data = np.frombuffer(raw, dtype="<f4", count=width * height * 2, offset=12)
    data = data.reshape(height, width, 2)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    return FieldGrid(xs, ys, data[:, :, 0].astype(np.float32), data[:, :, 1].astype(np.float32))
