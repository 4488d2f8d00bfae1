import struct

import numpy as np
import pytest

from flowfit import (
    FieldGrid,
    ModelConfig,
    SequenceMeta,
    forward,
    init_model,
    load_field,
    load_flo,
    pixel_grid_coords,
    rmse_at_points,
    rmse_dense,
    sample_grid,
    save_field,
    to_velocity,
    vorticity,
)

from conftest import zero_head


def constant_grid(u, v, w=6, h=4):
    return FieldGrid(
        xs=np.arange(w, dtype=np.float64),
        ys=np.arange(h, dtype=np.float64),
        u=np.full((h, w), float(u)),
        v=np.full((h, w), float(v)),
    )


# --- FieldGrid basics ------------------------------------------------------------


def test_grid_shape_validation():
    with pytest.raises(ValueError):
        FieldGrid(np.arange(3.0), np.arange(2.0), np.zeros((2, 4)), np.zeros((2, 3)))


def test_grid_rejects_nonfinite():
    u = np.zeros((2, 3))
    u[0, 0] = np.nan
    with pytest.raises(ValueError):
        FieldGrid(np.arange(3.0), np.arange(2.0), u, np.zeros((2, 3)))


def test_magnitude():
    grid = constant_grid(3.0, 4.0)
    np.testing.assert_allclose(grid.magnitude(), 5.0)


# --- sampling ---------------------------------------------------------------------


def test_sample_grid_matches_forward(tiny_model):
    xs = np.array([0.0, 2.5, 7.0])
    ys = np.array([1.0, 3.5])
    grid = sample_grid(tiny_model, xs, ys)
    assert grid.u.shape == (2, 3)
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            dx, dy = forward(tiny_model, (x, y))
            assert grid.u[iy, ix] == pytest.approx(dx, abs=1e-7)
            assert grid.v[iy, ix] == pytest.approx(dy, abs=1e-7)


def test_sample_grid_zero_model(tiny_model):
    zero_head(tiny_model)
    grid = sample_grid(tiny_model, np.arange(5.0), np.arange(5.0))
    assert np.all(grid.u == 0.0) and np.all(grid.v == 0.0)


def test_super_resolution_quadruples_samples(tiny_model):
    coarse = sample_grid(tiny_model, np.arange(0, 8, 1.0), np.arange(0, 8, 1.0))
    fine = sample_grid(tiny_model, np.arange(0, 8, 0.5), np.arange(0, 8, 0.5))
    assert fine.u.size == 4 * coarse.u.size
    # The coarse lattice is a subset of the fine one.
    np.testing.assert_allclose(fine.u[::2, ::2], coarse.u, atol=1e-7)


def test_pixel_grid_coords():
    xs, ys = pixel_grid_coords((3, 5))
    np.testing.assert_array_equal(xs, [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(ys, [0, 1, 2])


# --- RMSE ------------------------------------------------------------------------


def test_rmse_identical_zero():
    grid = constant_grid(1.0, -2.0)
    assert rmse_dense(grid, grid) == 0.0


def test_rmse_constant_offset():
    a = constant_grid(0.0, 0.0)
    b = constant_grid(0.3, 0.4)
    assert rmse_dense(a, b) == pytest.approx(0.5, rel=1e-12)


def test_rmse_symmetric_and_scales(rng):
    xs = np.arange(5.0)
    ys = np.arange(4.0)
    a = FieldGrid(xs, ys, rng.random((4, 5)), rng.random((4, 5)))
    b = FieldGrid(xs, ys, rng.random((4, 5)), rng.random((4, 5)))
    assert rmse_dense(a, b) == pytest.approx(rmse_dense(b, a), rel=1e-12)
    scaled = FieldGrid(xs, ys, a.u + 3 * (b.u - a.u), a.v + 3 * (b.v - a.v))
    assert rmse_dense(a, scaled) == pytest.approx(3 * rmse_dense(a, b), rel=1e-9)


def test_rmse_shape_mismatch():
    with pytest.raises(ValueError):
        rmse_dense(constant_grid(0, 0, w=4), constant_grid(0, 0, w=5))


def test_rmse_at_points_exact_model(tiny_model):
    pts = np.array([[1.0, 2.0], [5.5, 3.25], [0.0, 0.0]])
    truth = np.array([forward(tiny_model, tuple(p)) for p in pts])
    assert rmse_at_points(tiny_model, pts, truth) == pytest.approx(0.0, abs=1e-7)


def test_rmse_at_points_single_unit_error(tiny_model):
    zero_head(tiny_model)
    pts = np.array([[2.0, 2.0]])
    truth = np.array([[1.0, 0.0]])
    assert rmse_at_points(tiny_model, pts, truth) == pytest.approx(1.0)


def test_rmse_at_points_rejects_empty(tiny_model):
    with pytest.raises(ValueError):
        rmse_at_points(tiny_model, np.empty((0, 2)), np.empty((0, 2)))


# --- velocity conversion -----------------------------------------------------------


def test_to_velocity_identity():
    grid = constant_grid(2.0, -1.0)
    out = to_velocity(grid, SequenceMeta(frame_interval=1.0, magnification=1.0))
    np.testing.assert_array_equal(out.u, grid.u)
    np.testing.assert_array_equal(out.v, grid.v)


def test_to_velocity_scales():
    grid = constant_grid(8.0, 0.0)
    meta = SequenceMeta(frame_interval=0.0125, magnification=0.001)
    out = to_velocity(grid, meta)
    np.testing.assert_allclose(out.u, 0.64)
    np.testing.assert_allclose(out.v, 0.0)


def test_to_velocity_linear(rng):
    xs, ys = np.arange(4.0), np.arange(3.0)
    a = FieldGrid(xs, ys, rng.random((3, 4)), rng.random((3, 4)))
    meta = SequenceMeta(frame_interval=0.5, magnification=2.0)
    doubled = FieldGrid(xs, ys, 2 * a.u, 2 * a.v)
    np.testing.assert_allclose(to_velocity(doubled, meta).u, 2 * to_velocity(a, meta).u)


# --- vorticity ----------------------------------------------------------------------


def test_vorticity_uniform_zero():
    assert np.all(vorticity(constant_grid(3.0, -1.0, w=8, h=8)) == 0.0)


def test_vorticity_linearized_rotation():
    # u = -omega*y, v = omega*x has curl exactly 2*omega everywhere.
    omega = 0.05
    xs = np.arange(16, dtype=np.float64)
    ys = np.arange(12, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    grid = FieldGrid(xs, ys, -omega * gy, omega * gx)
    np.testing.assert_allclose(vorticity(grid), 2 * omega, rtol=1e-6)


def test_vorticity_shear():
    k = 0.03
    xs = np.arange(10, dtype=np.float64)
    ys = np.arange(10, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    grid = FieldGrid(xs, ys, k * gy, np.zeros_like(gx))
    np.testing.assert_allclose(vorticity(grid), -k, rtol=1e-9)


# --- NVF1 serialization ---------------------------------------------------------------


def test_field_round_trip_bit_exact(tmp_path, rng):
    xs = np.arange(0.0, 5.0, 1.0)
    ys = np.arange(2.0, 8.0, 2.0)
    grid = FieldGrid(
        xs,
        ys,
        rng.random((3, 5)).astype(np.float32).astype(np.float64),
        rng.random((3, 5)).astype(np.float32).astype(np.float64),
    )
    path = tmp_path / "f.nvf"
    save_field(grid, path)
    loaded = load_field(path)
    np.testing.assert_array_equal(loaded.u, grid.u)
    np.testing.assert_array_equal(loaded.v, grid.v)
    np.testing.assert_array_equal(loaded.xs, grid.xs)
    np.testing.assert_array_equal(loaded.ys, grid.ys)


def test_field_file_layout(tmp_path):
    grid = FieldGrid(
        np.array([1.0, 1.5]),
        np.array([3.0]),
        np.array([[10.0, 20.0]]),
        np.array([[30.0, 40.0]]),
    )
    path = tmp_path / "f.nvf"
    save_field(grid, path)
    raw = path.read_bytes()
    assert raw[:4] == b"NVF1"
    w, h, x0, y0, dx, dy = struct.unpack_from("<IIffff", raw, 4)
    assert (w, h) == (2, 1)
    assert (x0, y0, dx) == (1.0, 3.0, 0.5)
    assert dy == 1.0  # single-row axis stores the 1.0 placeholder spacing
    samples = np.frombuffer(raw, dtype="<f4", offset=28)
    np.testing.assert_array_equal(samples, [10.0, 30.0, 20.0, 40.0])  # u,v interleaved
    assert len(raw) == 28 + 2 * 1 * 2 * 4


def test_field_rejects_nonuniform_spacing(tmp_path):
    grid = FieldGrid(
        np.array([0.0, 1.0, 3.0]),
        np.array([0.0, 1.0]),
        np.zeros((2, 3)),
        np.zeros((2, 3)),
    )
    with pytest.raises(ValueError):
        save_field(grid, tmp_path / "f.nvf")


def test_field_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "f.nvf"
    save_field(constant_grid(0, 0), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"ZZZZ"
    path.write_bytes(raw)
    with pytest.raises(ValueError, match="magic"):
        load_field(path)


def test_field_load_rejects_truncation(tmp_path):
    path = tmp_path / "f.nvf"
    save_field(constant_grid(0, 0), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError):
        load_field(path)


def test_round_trip_model_field_consistency(tmp_path):
    model = init_model(ModelConfig(beta=30.0, n_embed=8, n_layers=1, layer_size=6), seed=2)
    grid = sample_grid(model, np.arange(10.0), np.arange(10.0))
    path = tmp_path / "f.nvf"
    save_field(grid, path)
    loaded = load_field(path)
    # Stored as float32; round-trip error bounded by f32 resolution.
    np.testing.assert_allclose(loaded.u, grid.u, atol=1e-6)


# --- Middlebury .flo reader -------------------------------------------------------------


def test_load_flo(tmp_path):
    w, h = 3, 2
    u = np.arange(6, dtype=np.float32).reshape(h, w)
    v = -np.arange(6, dtype=np.float32).reshape(h, w)
    interleaved = np.empty((h, w, 2), dtype="<f4")
    interleaved[..., 0] = u
    interleaved[..., 1] = v
    path = tmp_path / "t.flo"
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", 202021.25))
        fh.write(struct.pack("<ii", w, h))
        fh.write(interleaved.tobytes())
    grid = load_flo(path)
    np.testing.assert_array_equal(grid.u, u)
    np.testing.assert_array_equal(grid.v, v)
    np.testing.assert_array_equal(grid.xs, [0, 1, 2])


def test_load_flo_rejects_bad_tag(tmp_path):
    path = tmp_path / "t.flo"
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", 1.0))
        fh.write(struct.pack("<ii", 1, 1))
        fh.write(np.zeros(2, dtype="<f4").tobytes())
    with pytest.raises(ValueError):
        load_flo(path)
