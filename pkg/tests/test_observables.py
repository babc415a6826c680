import math

import numpy as np
import pytest

from qvm import io
from qvm.dynamics import IntegratorConfig, ParticleState, random_unit_vectors, run
from qvm.model import ModelParams
from qvm.observables import (
    OrderRecorder,
    PhaseDiagram,
    SnapshotRecorder,
    SweepError,
    band_report,
    density_profile,
    detect_bands,
    grid_seed,
    polar_order,
    sweep_phase_diagram,
    time_averaged_order,
    velocity_correlation,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def test_polar_order_examples():
    assert polar_order(np.tile([0.0, 0.6, 0.8], (7, 1))) == pytest.approx(1.0, abs=1e-15)
    assert polar_order([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]) == 0.0
    with pytest.raises(ValueError):
        polar_order(np.zeros((0, 3)))


@pytest.mark.parametrize(
    "dims,constant",
    [
        (3, math.sqrt(8.0 / (3.0 * math.pi))),  # Maxwell mean of a 3D random walk
        (2, math.sqrt(math.pi) / 2.0),  # Rayleigh mean of a 2D random walk
    ],
)
def test_polar_order_of_random_spins(dims, constant):
    rng = np.random.default_rng(31 + dims)
    n, trials = 10_000, 200
    phis = np.array([polar_order(random_unit_vectors(rng, n, dims)) for _ in range(trials)])
    se = phis.std(ddof=1) / math.sqrt(trials)
    assert abs(phis.mean() - constant / math.sqrt(n)) < 3 * se


def test_polar_order_rotation_invariant():
    rng = np.random.default_rng(4)
    s = random_unit_vectors(rng, 500)
    for _ in range(10):
        R = random_rotation(rng)
        assert abs(polar_order(s @ R.T) - polar_order(s)) < 1e-14


def test_time_average_examples():
    assert time_averaged_order([0.3] * 10) == pytest.approx(0.3, abs=1e-16)
    assert time_averaged_order([0, 1] * 50) == 0.5
    assert time_averaged_order([5.0, 5.0, 1.0, 3.0], transient=2) == 2.0
    with pytest.raises(ValueError):
        time_averaged_order([1.0, 2.0], transient=2)


def test_time_average_matches_two_pass_mean():
    x = np.random.default_rng(8).uniform(0, 1, 12345)
    one_pass = time_averaged_order(x, 345)
    w = x[345:]
    two_pass = w[0] + sum(v - w[0] for v in w) / w.size
    assert abs(one_pass - two_pass) < 1e-14


def test_recorders():
    rec, snap = OrderRecorder(), SnapshotRecorder(every=3)
    summary = run(ModelParams(), IntegratorConfig(seed=1), 10, 4, 4.0, recorders=[rec, snap])
    assert np.allclose(rec.values, summary.order_series, rtol=0, atol=1e-15)
    assert [s.step_count for s in snap.states] == [5, 8]


def test_density_profile_uniform_and_conserved():
    rng = np.random.default_rng(1)
    L, rho = 10.0, 20.0
    pos = rng.uniform(0, L, (int(rho * L**3), 3))
    for direction in ([1, 0, 0], [0, 1, 0], [0.3, 0.4, 0.5]):
        prof = density_profile(pos, direction, 10, L)
        assert prof.counts.sum() == pos.shape[0]
    prof = density_profile(pos, [0, 0, 1], 10, L)
    expected_count = pos.shape[0] / 10
    assert np.all(np.abs(prof.counts - expected_count) < 5 * math.sqrt(expected_count))
    assert prof.density.mean() == pytest.approx(pos.shape[0] / L**3)


def test_density_profile_single_slab():
    pos = np.column_stack([np.full(50, 2.6), np.linspace(0, 9, 50), np.linspace(0, 9, 50)])
    prof = density_profile(pos, [1, 0, 0], 8, 10.0)
    assert np.count_nonzero(prof.counts) == 1 and prof.counts[2] == 50
    with pytest.raises(ValueError):
        density_profile(pos, [1, 0, 0], 3, 10.0)


def profile_from_density(rho_bins, L=16.0):
    from qvm.observables import DensityProfile

    n = len(rho_bins)
    rho_bins = np.asarray(rho_bins, dtype=float)
    return DensityProfile((np.arange(n) + 0.5) * L / n, rho_bins, rho_bins, np.array([1.0, 0, 0]), L)


def test_flat_profile_has_no_bands():
    r = detect_bands(profile_from_density(np.full(64, 0.5)))
    assert r.bands == [] and r.contrast == pytest.approx(1.0)


def test_top_hat_profile_gives_one_band():
    # density 3 rho over a quarter, background rho' with the total conserved
    rho, n = 0.5, 64
    high = 3 * rho
    low = (rho * n - high * n / 4) / (3 * n / 4)
    d = np.full(n, low)
    d[16:32] = high
    r = detect_bands(profile_from_density(d), 1.5)
    assert len(r.bands) == 1
    start, end, mean = r.bands[0]
    assert (start, end) == (4.0, 8.0) and mean == pytest.approx(high)
    assert r.lengths == [4.0]
    assert r.contrast == pytest.approx(high / rho)


def test_band_across_seam_is_one_segment():
    d = np.full(32, 1.0)
    d[:3] = 4.0
    d[-2:] = 4.0
    r = detect_bands(profile_from_density(d), 1.5)
    assert len(r.bands) == 1
    start, end, _ = r.bands[0]
    assert end < start
    assert r.lengths == [pytest.approx(5 * 16.0 / 32)]


def test_detect_bands_cyclic_rotation_invariant():
    rng = np.random.default_rng(6)
    d = rng.uniform(0.5, 1.0, 48)
    d[5:9] = 3.0
    d[30:40] = 2.5
    ref = detect_bands(profile_from_density(d))
    for shift in range(48):
        r = detect_bands(profile_from_density(np.roll(d, shift)))
        assert r.lengths == pytest.approx(ref.lengths)
        assert r.contrast == ref.contrast


def test_detect_bands_rejects_bad_threshold():
    with pytest.raises(ValueError):
        detect_bands(profile_from_density(np.ones(8)), 1.0)


def test_band_report_uses_mean_spin_direction():
    rng = np.random.default_rng(2)
    L = 16.0
    pos = rng.uniform(0, L, (4000, 3))
    pos[:2000, 1] = rng.uniform(4.0, 6.0, 2000)  # dense slab normal to y
    spins = np.tile([0.0, 1.0, 0.0], (4000, 1))
    r = band_report(ParticleState(pos, spins, L), n_bins=32)
    assert np.allclose(r.direction, [0, 1, 0])
    assert len(r.bands) == 1 and r.contrast > 2


def test_velocity_correlation_of_aligned_state():
    rng = np.random.default_rng(3)
    s = ParticleState(rng.uniform(0, 8, (400, 3)), np.tile([1.0, 0, 0], (400, 1)), 8.0)
    r, c, counts = velocity_correlation(s, 2.0, 4)
    assert r.shape == (4,) and np.all(counts > 0)
    assert np.allclose(c, 1.0)


def test_one_point_sweep_equals_run():
    p = ModelParams(xi_noise=0.3)
    cfg = IntegratorConfig(seed=17)
    diagram = sweep_phase_diagram(p, cfg, [1.0], [0.3], 20, 10, 4.0)
    direct = run(p.with_(gamma_s=1.0), IntegratorConfig(seed=grid_seed(17, 0, 0)), 20, 10, 4.0)
    assert diagram.phi_matrix.shape == (1, 1)
    assert diagram.phi_matrix[0, 0] == direct.mean_order


def test_sweep_shape_csv_round_trip_and_workers(tmp_path):
    p, cfg = ModelParams(), IntegratorConfig(seed=5)
    d1 = sweep_phase_diagram(p, cfg, [0.2, 5.0], [0.1, 0.5, 1.5], 10, 5, 4.0)
    d2 = sweep_phase_diagram(p, cfg, [0.2, 5.0], [0.1, 0.5, 1.5], 10, 5, 4.0, workers=2)
    assert d1.phi_matrix.shape == (2, 3)
    assert np.array_equal(d1.phi_matrix, d2.phi_matrix)
    assert np.all((d1.phi_matrix >= 0) & (d1.phi_matrix <= 1))
    path = tmp_path / "pd.csv"
    assert io.write_series(path, ["gamma_s_inv", "xi", "phi"], d1.rows()) == 6
    header, data = io.read_series(path)
    assert header == ["gamma_s_inv", "xi", "phi"]
    back = PhaseDiagram(np.unique(data[:, 0]), np.unique(data[:, 1]), data[:, 2].reshape(2, 3))
    assert np.array_equal(back.phi_matrix, d1.phi_matrix)
    assert np.array_equal(back.xi_axis, d1.xi_axis)


def test_sweep_errors_name_the_grid_point():
    with pytest.raises(SweepError, match="gamma_s_inv=0.05"):
        sweep_phase_diagram(ModelParams(), IntegratorConfig(dt=0.1), [0.05], [0.1], 4, 2, 4.0)
    with pytest.raises(ValueError):
        sweep_phase_diagram(ModelParams(), IntegratorConfig(), [], [0.1], 4, 2, 4.0)


def test_sweep_monotonic_spot_check():
    d = sweep_phase_diagram(ModelParams(), IntegratorConfig(seed=3), [0.2, 5.0], [0.1, 1.5], 600, 300, 8.0)
    assert d.phi_matrix[0, 0] > d.phi_matrix[1, 1] + 0.3
