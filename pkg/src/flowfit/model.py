"""Continuous displacement field: Fourier-feature embedding into a tanh MLP.

A model maps an image coordinate (x, y), in raw pixels, to a displacement
(dx, dy) in pixels. The coordinate is first embedded with a fixed random
matrix B into [sin(Bv), cos(Bv)], then passed through n_layers tanh layers
and a final affine head with no activation, so displacements are unbounded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MODEL_MAGIC = b"NVM1"
_HEADER = struct.Struct("<fIII")  # beta (f32), n_embed, n_layers, layer_size


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters.

    beta controls the embedding frequencies: entries of B are drawn from
    Normal(0, 1/beta^2), so larger beta biases the field toward lower
    spatial frequencies. The network input width is fixed at 2*n_embed and
    the output width at 2.
    """

    beta: float = 100.0
    n_embed: int = 200
    n_layers: int = 1
    layer_size: int = 100

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.n_embed < 1 or self.n_layers < 1 or self.layer_size < 1:
            raise ValueError(
                "n_embed, n_layers and layer_size must all be >= 1, got "
                f"{self.n_embed}, {self.n_layers}, {self.layer_size}"
            )

    @property
    def layer_widths(self) -> list[int]:
        """Widths of the affine layers, input to output."""
        return [2 * self.n_embed] + [self.layer_size] * self.n_layers + [2]


@dataclass
class DisplacementModel:
    """A trained or trainable displacement field.

    embedding is the fixed N_e x 2 matrix B; it receives no gradient.
    weights[i]/biases[i] are the parameters of affine layer i, with tanh
    after every layer except the last.
    """

    config: ModelConfig
    embedding: np.ndarray
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def param_arrays(self) -> list[np.ndarray]:
        """Trainable arrays in a stable order (B excluded)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "DisplacementModel":
        return DisplacementModel(
            config=self.config,
            embedding=self.embedding.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def astype(self, dtype) -> "DisplacementModel":
        return DisplacementModel(
            config=self.config,
            embedding=self.embedding.astype(dtype),
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
        )


def init_model(
    config: ModelConfig,
    seed: int,
    coord_scale: tuple[float, float] | None = None,
    dtype=np.float32,
) -> DisplacementModel:
    """Create a freshly initialized model.

    B is sampled Normal(0, 1/beta^2); layer weights are uniform in
    +-sqrt(6/(fan_in+fan_out)) and biases start at zero. The same
    (config, seed) always yields the same model.

    coord_scale, if given, divides the columns of B by (sx, sy), which is
    equivalent to feeding normalized coordinates (x/sx, y/sy) to the
    embedding while keeping the model a function of raw pixel coordinates.
    """
    rng = np.random.default_rng(seed)
    b_mat = rng.normal(0.0, 1.0 / config.beta, size=(config.n_embed, 2))
    if coord_scale is not None:
        sx, sy = coord_scale
        if sx <= 0 or sy <= 0:
            raise ValueError(f"coord_scale must be positive, got {coord_scale}")
        b_mat = b_mat / np.array([sx, sy])

    weights, biases = [], []
    widths = config.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return DisplacementModel(config, b_mat.astype(dtype), weights, biases)


def embed_batch(model: DisplacementModel, coords: np.ndarray) -> np.ndarray:
    """Fourier features for an (n, 2) array of raw pixel coordinates."""
    coords = np.asarray(coords, dtype=model.dtype).reshape(-1, 2)
    z = coords @ model.embedding.T
    return np.concatenate([np.sin(z), np.cos(z)], axis=1)


def embed(model: DisplacementModel, v) -> np.ndarray:
    """Embedding of a single coordinate: [sin(Bv), cos(Bv)], length 2*N_e."""
    return embed_batch(model, np.asarray(v, dtype=float))[0]


def forward_from_embedded(model: DisplacementModel, emb: np.ndarray) -> np.ndarray:
    """Forward pass given precomputed embedding rows (n, 2*N_e)."""
    h = emb
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
    return h @ model.weights[-1] + model.biases[-1]


def forward_batch(model: DisplacementModel, coords) -> np.ndarray:
    """Displacements for an (n, 2) array of coordinates; returns (n, 2)."""
    coords = np.asarray(coords, dtype=model.dtype).reshape(-1, 2)
    if coords.shape[0] == 0:
        return np.zeros((0, 2), dtype=model.dtype)
    return forward_from_embedded(model, embed_batch(model, coords))


def forward(model: DisplacementModel, v) -> np.ndarray:
    """Displacement (dx, dy) at a single coordinate (x, y)."""
    return forward_batch(model, np.asarray(v, dtype=float))[0]


def coord_jacobian(model: DisplacementModel, v) -> np.ndarray:
    """Analytic d(dx,dy)/d(x,y) at one coordinate; jac[i, j] = d out_i / d v_j."""
    v = np.asarray(v, dtype=np.float64)
    b_mat = model.embedding.astype(np.float64)
    z = b_mat @ v
    # d[sin z, cos z]/dv, shape (2*N_e, 2)
    jac = np.concatenate([np.cos(z)[:, None] * b_mat, -np.sin(z)[:, None] * b_mat])
    h = np.concatenate([np.sin(z), np.cos(z)])
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        w = w.astype(np.float64)
        h = np.tanh(h @ w + b.astype(np.float64))
        jac = (1.0 - h * h)[:, None] * (w.T @ jac)
    return model.weights[-1].astype(np.float64).T @ jac


def param_count(config: ModelConfig) -> int:
    """Number of stored scalars: B plus every weight and bias."""
    total = 2 * config.n_embed
    widths = config.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        total += fan_in * fan_out + fan_out
    return total


def save_model(model: DisplacementModel, path) -> None:
    """Write the model in the NVM1 binary format (32-bit little-endian)."""
    cfg = model.config
    buf = bytearray(MODEL_MAGIC)
    buf += _HEADER.pack(cfg.beta, cfg.n_embed, cfg.n_layers, cfg.layer_size)
    buf += np.ascontiguousarray(model.embedding, dtype="<f4").tobytes()
    for w, b in zip(model.weights, model.biases):
        buf += np.ascontiguousarray(w, dtype="<f4").tobytes()
        buf += np.ascontiguousarray(b, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(buf)


def load_model(path) -> DisplacementModel:
    """Read an NVM1 model file; raises ValueError on a malformed file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MODEL_MAGIC) + _HEADER.size:
        raise ValueError(f"{path}: file too short for an NVM1 header")
    magic = raw[: len(MODEL_MAGIC)]
    if magic != MODEL_MAGIC:
        if magic[:3] == MODEL_MAGIC[:3]:
            raise ValueError(f"{path}: unsupported model format version {magic!r}")
        raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
    beta, n_embed, n_layers, layer_size = _HEADER.unpack_from(raw, len(MODEL_MAGIC))
    try:
        config = ModelConfig(float(beta), n_embed, n_layers, layer_size)
    except ValueError as exc:
        raise ValueError(f"{path}: inconsistent header: {exc}") from exc

    expected = len(MODEL_MAGIC) + _HEADER.size + 4 * param_count(config)
    if len(raw) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes for this architecture, got {len(raw)}"
        )

    offset = len(MODEL_MAGIC) + _HEADER.size

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += 4 * n
        return arr.astype(np.float32)

    b_mat = take((n_embed, 2))
    weights, biases = [], []
    widths = config.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(take((fan_in, fan_out)))
        biases.append(take((fan_out,)))
    model = DisplacementModel(config, b_mat, weights, biases)
    if not all(np.all(np.isfinite(a)) for a in [b_mat] + model.param_arrays()):
        raise ValueError(f"{path}: model contains non-finite parameters")
    return model
