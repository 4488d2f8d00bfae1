import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowfit import (
    JetShearFlow,
    ParticleSet,
    RigidRotation,
    ShearFlow,
    UniformFlow,
    bilinear_sample,
    generate_pair,
    generate_sequence,
    make_truth_grid,
    random_particles,
    render,
    single_particle_pair,
)


# --- flows ---------------------------------------------------------------------


def test_uniform_flow_constant_everywhere():
    flow = UniformFlow(2.5, -1.25)
    dx, dy = flow.displacement(np.array([0.0, 10.0, -3.0]), np.array([5.0, 5.0, 9.0]))
    np.testing.assert_array_equal(dx, [2.5, 2.5, 2.5])
    np.testing.assert_array_equal(dy, [-1.25, -1.25, -1.25])


def test_rotation_is_exact_isometry():
    flow = RigidRotation(angle=0.3, center_x=10.0, center_y=20.0)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 40, size=(50, 2))
    dx, dy = flow.displacement(pts[:, 0], pts[:, 1])
    moved = pts + np.column_stack([dx, dy])
    r_before = np.hypot(pts[:, 0] - 10.0, pts[:, 1] - 20.0)
    r_after = np.hypot(moved[:, 0] - 10.0, moved[:, 1] - 20.0)
    np.testing.assert_allclose(r_after, r_before, atol=1e-9)


def test_rotation_center_fixed_point():
    flow = RigidRotation(angle=1.0, center_x=7.0, center_y=3.0)
    dx, dy = flow.displacement(7.0, 3.0)
    assert dx == pytest.approx(0.0, abs=1e-12)
    assert dy == pytest.approx(0.0, abs=1e-12)


def test_shear_flow_profile():
    flow = ShearFlow(rate=0.05)
    dx, dy = flow.displacement(np.array([1.0, 2.0]), np.array([10.0, 40.0]))
    np.testing.assert_allclose(dx, [0.5, 2.0])
    np.testing.assert_array_equal(dy, [0.0, 0.0])


def test_jet_peaks_at_centerline():
    flow = JetShearFlow(peak=4.0, center_y=32.0, width=6.0)
    dx_center, _ = flow.displacement(0.0, 32.0)
    dx_off, _ = flow.displacement(0.0, 44.0)
    assert dx_center == pytest.approx(4.0)
    assert 0 < dx_off < dx_center
    with pytest.raises(ValueError):
        JetShearFlow(peak=1.0, center_y=0.0, width=0.0)


@given(
    x=st.floats(-100, 400, allow_nan=False),
    y=st.floats(-100, 400, allow_nan=False),
)
@settings(max_examples=40, deadline=None)
def test_flows_finite_on_and_off_domain(x, y):
    for flow in [
        UniformFlow(3.0, -2.0),
        RigidRotation(0.1, 128.0, 128.0),
        ShearFlow(0.01),
        JetShearFlow(2.0, 128.0, 20.0),
    ]:
        dx, dy = flow.displacement(x, y)
        assert np.isfinite(dx) and np.isfinite(dy)


# --- particles and rendering -----------------------------------------------------


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 2)), diameter=0.0)
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 2)), peak=1.5)


def test_render_empty_set_is_black():
    img = render(ParticleSet(np.empty((0, 2))), (16, 16))
    assert img.shape == (16, 16)
    assert np.all(img == 0.0)


def test_render_peak_at_particle_center():
    img = render(ParticleSet(np.array([[5.0, 7.0]]), diameter=3.0), (16, 16))
    assert img[7, 5] == img.max()
    assert img[7, 5] == pytest.approx(1.0)


def test_render_e2_diameter_definition():
    img = render(ParticleSet(np.array([[8.0, 8.0]]), diameter=4.0, peak=1.0), (17, 17))
    # Intensity at radius d/2 is exp(-2) of the peak.
    assert img[8, 10] == pytest.approx(np.exp(-2.0), rel=1e-6)


def test_render_superposition_when_far_apart():
    left = render(ParticleSet(np.array([[5.0, 10.0]]), peak=0.4), (24, 24))
    right = render(ParticleSet(np.array([[18.0, 10.0]]), peak=0.4), (24, 24))
    both = render(
        ParticleSet(np.array([[5.0, 10.0], [18.0, 10.0]]), peak=0.4), (24, 24)
    )
    np.testing.assert_allclose(both, left + right, atol=1e-7)


def test_render_clamps_to_one():
    img = render(
        ParticleSet(np.array([[8.0, 8.0], [8.2, 8.0]]), diameter=5.0, peak=1.0), (16, 16)
    )
    assert img.max() <= 1.0


def test_render_deterministic():
    particles = random_particles(32, 32, density=0.05, seed=3)
    a = render(particles, (32, 32))
    b = render(particles, (32, 32))
    np.testing.assert_array_equal(a, b)


def test_random_particles_count_and_bounds():
    particles = random_particles(64, 32, density=0.02, seed=0)
    assert len(particles.positions) == round(0.02 * 64 * 32)
    assert particles.positions[:, 0].min() >= 0
    assert particles.positions[:, 0].max() <= 63
    assert particles.positions[:, 1].max() <= 31


# --- pair generation ----------------------------------------------------------------


def test_zero_flow_pair_identical():
    pair = generate_pair(UniformFlow(0.0, 0.0), shape=(32, 32), seed=1)
    np.testing.assert_array_equal(pair.frame1, pair.frame2)


def test_pair_truth_is_flow():
    flow = UniformFlow(3.0, -1.0)
    pair = generate_pair(flow, shape=(32, 32), seed=1)
    dx, dy = pair.truth(10.0, 20.0)
    assert (dx, dy) == (3.0, -1.0)


def test_single_particle_preset_geometry():
    pair = single_particle_pair((10.0, 10.0), shape=(256, 256))
    assert pair.frame1.shape == (256, 256)
    cy, cx = np.unravel_index(np.argmax(pair.frame1), pair.frame1.shape)
    assert (cx, cy) == (127, 128) or (cx, cy) == (128, 127) or (cx, cy) == (127, 127)
    cy2, cx2 = np.unravel_index(np.argmax(pair.frame2), pair.frame2.shape)
    assert abs(cx2 - cx - 10) <= 1 and abs(cy2 - cy - 10) <= 1
    # The exposures must overlap for the displacement to be recoverable.
    overlap = np.minimum(pair.frame1, pair.frame2).max()
    assert overlap > 0.05
    assert np.hypot(10.0, 10.0) == pytest.approx(14.14, abs=0.01)


def test_warp_identity_integer_shift_exact():
    """Integer displacements sample on the raster, so the identity is exact."""
    flow = UniformFlow(3.0, -2.0)
    pair = generate_pair(flow, shape=(48, 48), density=0.02, seed=2)
    ys, xs = np.mgrid[8:40, 8:40]  # interior, away from border losses
    dx, dy = flow.displacement(xs.astype(float), ys.astype(float))
    warped = bilinear_sample(pair.frame2, xs + dx, ys + dy)
    err = np.abs(warped - pair.frame1[8:40, 8:40])
    assert err.max() < 1e-9


def test_warp_identity_fractional_shift_resolved_particle():
    """For fractional displacements the bilinear resampling error scales with
    the image curvature (~4/diameter^2), so a well-resolved particle must
    reconstruct the first frame within 0.02 intensity units."""
    flow = UniformFlow(2.3, -1.6)
    pair = single_particle_pair((2.3, -1.6), shape=(48, 48), diameter=16.0)
    ys, xs = np.mgrid[4:44, 4:44]
    dx, dy = flow.displacement(xs.astype(float), ys.astype(float))
    warped = bilinear_sample(pair.frame2, xs + dx, ys + dy)
    err = np.abs(warped - pair.frame1[4:44, 4:44])
    assert err.max() < 0.02


def test_noise_flag_adds_noise_reproducibly():
    clean = generate_pair(UniformFlow(1.0, 0.0), shape=(24, 24), seed=4, noise=0.0)
    noisy1 = generate_pair(UniformFlow(1.0, 0.0), shape=(24, 24), seed=4, noise=0.02)
    noisy2 = generate_pair(UniformFlow(1.0, 0.0), shape=(24, 24), seed=4, noise=0.02)
    assert not np.array_equal(clean.frame1, noisy1.frame1)
    np.testing.assert_array_equal(noisy1.frame1, noisy2.frame1)
    assert noisy1.frame1.min() >= 0.0 and noisy1.frame1.max() <= 1.0


# --- sequence generation --------------------------------------------------------------


def test_sequence_frame_count():
    seq = generate_sequence(UniformFlow(1.0, 0.5), 5, shape=(24, 24), seed=0)
    assert len(seq.frames) == 5
    assert len(seq.flows) == 4
    assert len(seq.particle_sets) == 5


def test_sequence_uniform_positions_advance_linearly():
    flow = UniformFlow(1.5, -0.5)
    seq = generate_sequence(flow, 4, shape=(32, 32), seed=1)
    p0 = seq.particle_sets[0].positions
    for t in range(4):
        expected = p0 + t * np.array([1.5, -0.5])
        np.testing.assert_allclose(seq.particle_sets[t].positions, expected, atol=1e-12)


def test_sequence_truth_matches_flow_at_positions():
    flow = ShearFlow(0.02)
    seq = generate_sequence(flow, 3, shape=(32, 32), seed=2)
    pts = seq.particle_sets[1].positions
    dx, dy = seq.truth(1, pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(dx, 0.02 * pts[:, 1])
    np.testing.assert_array_equal(dy, np.zeros(len(pts)))


def test_sequence_requires_two_frames():
    with pytest.raises(ValueError):
        generate_sequence(UniformFlow(0, 0), 1, shape=(16, 16))


# --- truth grids -----------------------------------------------------------------------


def test_make_truth_grid_shapes_and_values():
    grid = make_truth_grid(UniformFlow(2.0, 3.0), np.arange(8.0), np.arange(6.0))
    assert grid.u.shape == (6, 8)
    assert np.all(grid.u == 2.0)
    assert np.all(grid.v == 3.0)


def test_make_truth_grid_rotation_chord():
    flow = RigidRotation(np.pi / 2, 0.0, 0.0)
    grid = make_truth_grid(flow, np.array([1.0]), np.array([0.0]))
    # (1,0) rotates to (0,1): chord displacement (-1, 1).
    assert grid.u[0, 0] == pytest.approx(-1.0)
    assert grid.v[0, 0] == pytest.approx(1.0)
