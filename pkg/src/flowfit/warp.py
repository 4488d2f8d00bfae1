"""Bilinear image sampling and the photometric warp loss with analytic gradients.

The loss is the mean squared residual between first-image intensities and
the second image resampled at warped coordinates v + delta(v). Out-of-range
samples read zero, so a warp that leaves the image compares against zeros.
Gradients are exact reverse-mode derivatives with respect to every network
weight and bias; the embedding matrix B is fixed and receives none.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DisplacementModel, embed_batch, forward_batch


@dataclass
class PixelBatch:
    """Sample coordinates plus their first-image target intensities."""

    coords: np.ndarray  # (n, 2) as (x, y)
    targets: np.ndarray  # (n,)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.targets = np.asarray(self.targets, dtype=np.float64).ravel()
        if self.coords.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.coords.shape[0]} coords but {self.targets.shape[0]} targets"
            )

    @classmethod
    def from_image(cls, img: np.ndarray, coords=None) -> "PixelBatch":
        """Batch of integer pixel centers; all of them when coords is None."""
        img = np.asarray(img)
        if coords is None:
            coords = full_pixel_coords(img.shape)
        coords = np.asarray(coords).reshape(-1, 2)
        ix = coords[:, 0].astype(np.intp)
        iy = coords[:, 1].astype(np.intp)
        return cls(coords, img[iy, ix])


@dataclass
class LossGradient:
    """Loss value plus gradients shaped exactly like the trainable params."""

    loss: float
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.append(w)
            out.append(b)
        return out


def full_pixel_coords(shape) -> np.ndarray:
    """All integer pixel centers of an (H, W) image as an (H*W, 2) array."""
    h, w = shape
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    return np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)


def _gather(img, ix, iy):
    h, w = img.shape
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    vals = img[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    return np.where(inside, vals, 0.0)


def _sample_with_grad(img, x, y):
    """Bilinear value and its (d/dx, d/dy) at arbitrary coordinates.

    The derivative is that of the bilinear surface, piecewise per unit cell;
    integer coordinates take the floor cell (right/lower neighbors).
    """
    h, w = img.shape
    dt = x.dtype.type
    # Clamp runaway or non-finite warp coordinates to just past the border:
    # everything there already reads zero with zero gradient, and the floor
    # cast below stays in integer range for any displacement magnitude.
    ok = np.isfinite(x) & np.isfinite(y)
    x = np.where(ok, np.clip(x, dt(-2.0), dt(w + 1.0)), dt(-2.0))
    y = np.where(ok, np.clip(y, dt(-2.0), dt(h + 1.0)), dt(-2.0))
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    i00 = _gather(img, x0, y0)
    i10 = _gather(img, x0 + 1, y0)
    i01 = _gather(img, x0, y0 + 1)
    i11 = _gather(img, x0 + 1, y0 + 1)
    top = i00 + fx * (i10 - i00)
    bot = i01 + fx * (i11 - i01)
    val = top + fy * (bot - top)
    gx = (1.0 - fy) * (i10 - i00) + fy * (i11 - i01)
    gy = bot - top
    return val, gx, gy


def bilinear_sample(img: np.ndarray, x, y):
    """Bilinear interpolation of img at (x, y); zero outside the image."""
    img = np.asarray(img)
    x = np.asarray(x, dtype=np.result_type(img.dtype, np.float32))
    y = np.asarray(y, dtype=x.dtype)
    val, _, _ = _sample_with_grad(img, x, y)
    return float(val) if val.ndim == 0 else val


def sample_gradient(img: np.ndarray, x, y):
    """Derivative (dI/dx, dI/dy) of the bilinear surface at (x, y)."""
    img = np.asarray(img)
    x = np.asarray(x, dtype=np.result_type(img.dtype, np.float32))
    y = np.asarray(y, dtype=x.dtype)
    _, gx, gy = _sample_with_grad(img, x, y)
    if gx.ndim == 0:
        return float(gx), float(gy)
    return gx, gy


def deformed_intensity(model: DisplacementModel, img2: np.ndarray, v):
    """Second image sampled at v + delta(v): the warped intensity at v."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    coords = v.reshape(-1, 2)
    warped = coords + forward_batch(model, coords)
    out = bilinear_sample(np.asarray(img2), warped[:, 0], warped[:, 1])
    return float(out[0]) if single else out


def loss_and_grad_from_embedded(
    model: DisplacementModel,
    emb: np.ndarray,
    coords: np.ndarray,
    targets: np.ndarray,
    img2: np.ndarray,
) -> LossGradient:
    """Warp loss and parameter gradients with the embedding precomputed.

    This is the training hot path: B and the pixel coordinates never change
    within a pair, so callers can embed once and slice rows per batch.
    """
    hs = [emb]
    h = emb
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
        hs.append(h)
    delta = h @ model.weights[-1] + model.biases[-1]

    px = coords[:, 0] + delta[:, 0]
    py = coords[:, 1] + delta[:, 1]
    val, gx, gy = _sample_with_grad(img2, px, py)
    resid = targets - val
    n = resid.shape[0]
    loss = float(np.mean(resid * resid))

    scale = (-2.0 / n) * resid
    grad_out = np.empty_like(delta)
    grad_out[:, 0] = scale * gx
    grad_out[:, 1] = scale * gy

    n_layers = len(model.weights)
    weight_grads: list = [None] * n_layers
    bias_grads: list = [None] * n_layers
    gh = grad_out
    for i in range(n_layers - 1, -1, -1):
        weight_grads[i] = hs[i].T @ gh
        bias_grads[i] = gh.sum(axis=0)
        if i > 0:
            gh = (gh @ model.weights[i].T) * (1.0 - hs[i] * hs[i])
    return LossGradient(loss, weight_grads, bias_grads)


def loss_and_grad(
    model: DisplacementModel,
    img1: np.ndarray,
    img2: np.ndarray,
    batch: PixelBatch | None = None,
) -> LossGradient:
    """Warp loss over a pixel batch (the whole of img1 when batch is None).

    A non-finite loss is returned as-is; callers treat it as a divergence
    signal rather than an exception.
    """
    if batch is None:
        batch = PixelBatch.from_image(np.asarray(img1))
    if batch.coords.shape[0] == 0:
        raise ValueError("batch must contain at least one pixel")
    dtype = model.dtype
    coords = batch.coords.astype(dtype)
    targets = batch.targets.astype(dtype)
    emb = embed_batch(model, coords)
    return loss_and_grad_from_embedded(
        model, emb, coords, targets, np.asarray(img2, dtype=dtype)
    )
