"""Grayscale image I/O and the preprocessing chain for particle images.

Images are 2-D float arrays of intensities in [0, 1], row-major with the
origin at the top-left: x runs rightward along columns, y downward along
rows. All preprocessing preserves dimensions and the [0, 1] range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage


@dataclass(frozen=True)
class SequenceMeta:
    """Physical calibration of an image sequence."""

    frame_interval: float  # seconds between frames
    magnification: float  # physical length per pixel (constant)

    def __post_init__(self):
        if not (self.frame_interval > 0):
            raise ValueError(f"frame_interval must be > 0, got {self.frame_interval}")
        if not (self.magnification > 0):
            raise ValueError(f"magnification must be > 0, got {self.magnification}")


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate the image contract: 2-D, finite, in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    if img.min() < 0 or img.max() > 1:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary (P5) PGM file")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    pos = 2
    fields = []
    while len(fields) < 3:
        match = re.compile(rb"\s*(?:#[^\n]*\n|\s)*?(\d+)").match(data, pos)
        if match is None:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(int(match.group(1)))
        pos = match.end()
    width, height, maxval = fields
    pos += 1  # single whitespace byte after maxval
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raster = data[pos : pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise ValueError(f"{path}: PGM raster shorter than {width}x{height}")
    pixels = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def _read_png(path: Path) -> np.ndarray:
    with PILImage.open(path) as im:
        mode = im.mode
        if mode == "L":
            maxval = 255
        elif mode in ("I;16", "I"):
            maxval = 65535
        else:
            raise ValueError(
                f"{path}: unsupported PNG mode {mode!r}; expected 8- or 16-bit grayscale"
            )
        pixels = np.asarray(im, dtype=np.float64)
    if pixels.min() < 0 or pixels.max() > maxval:
        raise ValueError(f"{path}: pixel values outside the {maxval}-level range")
    return pixels / maxval


def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit grayscale PGM or PNG, scaled to [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix == ".png":
        return _read_png(path)
    raise ValueError(f"{path}: unsupported image format {suffix!r} (use .pgm or .png)")


def save_image(img: np.ndarray, path) -> None:
    """Write an 8-bit grayscale image; PGM unless the path ends in .png.

    Quantization is round-half-up on intensity*255.
    """
    img = check_image(img)
    levels = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    path = Path(path)
    if path.suffix.lower() == ".png":
        PILImage.fromarray(levels, mode="L").save(path)
        return
    height, width = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def subtract_background(frames) -> list[np.ndarray]:
    """Remove the static background: per-pixel temporal minimum over frames.

    The minimum is robust for sparse bright tracers on a dark background.
    """
    frames = [check_image(f) for f in frames]
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames, got {len(frames)}")
    shape = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape:
            raise ValueError(f"frame shapes differ: {shape} vs {f.shape}")
    background = np.minimum.reduce(frames)
    return [np.clip(f - background, 0.0, 1.0) for f in frames]


_BINOMIAL_3X3 = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 16.0


def gaussian_filter_3x3(img: np.ndarray) -> np.ndarray:
    """Convolve with the normalized 3x3 binomial kernel, reflect padding."""
    img = check_image(img).astype(np.float64)
    if img.shape[0] < 2 or img.shape[1] < 2:
        padded = np.pad(img, 1, mode="edge")  # reflect needs 2 samples per axis
    else:
        padded = np.pad(img, 1, mode="reflect")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            out += _BINOMIAL_3X3[dy, dx] * padded[
                dy : dy + img.shape[0], dx : dx + img.shape[1]
            ]
    return np.clip(out, 0.0, 1.0)


def _tile_mapping(values: np.ndarray, clip_limit: float) -> np.ndarray:
    """256-bin clipped-histogram CDF mapping for one tile."""
    n = values.size
    bins = np.minimum((values * 256).astype(np.intp), 255)
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    clip = clip_limit * n / 256.0
    if np.isfinite(clip):
        excess = np.sum(np.maximum(hist - clip, 0.0))
        hist = np.minimum(hist, clip) + excess / 256.0
    return np.cumsum(hist) / n


def clahe(img: np.ndarray, tiles: int = 8, clip_limit: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Per-tile 256-bin histograms are clipped at clip_limit times the uniform
    bin level, the clipped mass is redistributed uniformly, and each pixel
    is remapped by bilinear blending of the CDFs of the four surrounding
    tile centers. tiles=1 with an infinite clip_limit degenerates to plain
    global histogram equalization.
    """
    img = check_image(img)
    if tiles < 1:
        raise ValueError(f"tiles must be >= 1, got {tiles}")
    if not (clip_limit > 0):
        raise ValueError(f"clip_limit must be > 0, got {clip_limit}")
    height, width = img.shape
    if height < tiles or width < tiles:
        raise ValueError(f"image {height}x{width} smaller than the {tiles}x{tiles} tile grid")

    row_chunks = np.array_split(np.arange(height), tiles)
    col_chunks = np.array_split(np.arange(width), tiles)
    maps = np.empty((tiles, tiles, 256))
    for ty, rows in enumerate(row_chunks):
        for tx, cols in enumerate(col_chunks):
            tile = img[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
            maps[ty, tx] = _tile_mapping(tile, clip_limit)

    bins = np.minimum((img * 256).astype(np.intp), 255)
    if tiles == 1:
        return maps[0, 0][bins]

    centers_y = np.array([(r[0] + r[-1]) / 2.0 for r in row_chunks])
    centers_x = np.array([(c[0] + c[-1]) / 2.0 for c in col_chunks])

    def axis_blend(coords, centers):
        idx = np.clip(np.searchsorted(centers, coords) - 1, 0, len(centers) - 2)
        span = centers[idx + 1] - centers[idx]
        frac = np.clip((coords - centers[idx]) / span, 0.0, 1.0)
        return idx, frac

    iy, wy = axis_blend(np.arange(height, dtype=np.float64), centers_y)
    ix, wx = axis_blend(np.arange(width, dtype=np.float64), centers_x)

    iy0 = iy[:, None]
    ix0 = ix[None, :]
    wy = wy[:, None]
    wx = wx[None, :]
    out = (
        (1 - wy) * (1 - wx) * maps[iy0, ix0, bins]
        + (1 - wy) * wx * maps[iy0, ix0 + 1, bins]
        + wy * (1 - wx) * maps[iy0 + 1, ix0, bins]
        + wy * wx * maps[iy0 + 1, ix0 + 1, bins]
    )
    return np.clip(out, 0.0, 1.0)


def preprocess_sequence(
    frames, tiles: int = 8, clip_limit: float = 2.0
) -> list[np.ndarray]:
    """Background removal, then 3x3 Gaussian, then CLAHE, per frame."""
    cleaned = subtract_background(frames)
    return [clahe(gaussian_filter_3x3(f), tiles, clip_limit) for f in cleaned]
