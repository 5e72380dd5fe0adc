import numpy as np
import pytest

from chaoslab.chaos import (ChaosRow, MarginalEstimate, bootstrap, chaos_sweep, constant_M, default_bins,
                            estimate_marginal, fit_slope, l1_distance, limit_cell_masses,
                            minimal_constant, plugin_bias, relative_entropy,
                            theoretical_envelope)
from chaoslab.errors import DomainError, InvalidArgument, UndersampledError
from chaoslab.kernels import make_kernel
from chaoslab.meanfield import (DensityGrid, PdeConfig, cfl_limit, cosine_density, march,
                                uniform_density)
from chaoslab.particles import SimConfig, sample_initial

FREE = make_kernel(1, diffusion=("constant_sigma", [1.0]))
TRIG = make_kernel(1, drift=("trig_drift", [0.5, 1]), diffusion=("trig_sigma", [0.3, 0.05, 1]))
U16 = uniform_density(16)


def point_mass(cell, bins=16, samples=160):
    return estimate_marginal(np.full((1, samples, 1), (cell + 0.5) / bins), 1, bins)


# -- marginals -------------------------------------------------------------------

def test_point_mass_histogram_is_indicator():
    h = point_mass(3).histogram
    assert h[3] == 1.0 and h.sum() == 1.0


def test_uniform_histogram_concentration():
    x = np.random.default_rng(0).random((1, 100000, 1))
    h = estimate_marginal(x, 1, 16).histogram
    assert np.abs(h - 1 / 16).max() < 5 * np.sqrt(16 / 1e5) / 16


def test_pair_histogram_of_independent_samples_factorizes():
    x = np.random.default_rng(1).random((40, 100, 1))
    h = estimate_marginal(x, 2, 4).histogram
    m0, m1 = h.sum(axis=1), h.sum(axis=0)
    assert np.linalg.norm(h - np.outer(m0, m1)) < 3 * 4 / np.sqrt(40 * 100 * 99)


def test_pair_subsampling_cap():
    x = np.random.default_rng(2).random((2, 200, 1))
    m = estimate_marginal(x, 2, 4, pair_cap=5000)
    assert m.n_samples == 5000


def test_undersampled_names_minimum():
    with pytest.raises(UndersampledError) as exc:
        estimate_marginal(np.random.rand(1, 50, 1), 1, 16)
    assert exc.value.minimum == 160


def test_marginal_order_checked():
    with pytest.raises(InvalidArgument):
        estimate_marginal(np.random.rand(1, 50, 1), 3, 2)


def test_default_bins_rule():
    assert default_bins(1024, 1) == 10
    assert default_bins(100000, 1, cap=32) == 32
    assert default_bins(40, 1) == 3
    assert default_bins(20, 1) == 2


# -- divergences ------------------------------------------------------------------

def test_entropy_point_mass_vs_uniform():
    assert relative_entropy(point_mass(5), U16) == pytest.approx(np.log(16), abs=1e-14)


def test_l1_point_mass_vs_uniform():
    assert l1_distance(point_mass(5), U16) == pytest.approx(1.875, abs=1e-14)


def test_identical_distribution_has_zero_distance():
    g = cosine_density(64, [0.4])
    q = limit_cell_masses(g, 8, 1)
    counts = (q * 1e6)[None]
    m = MarginalEstimate(1, 1, 8, counts)
    assert abs(relative_entropy(m, g)) < 1e-15
    assert l1_distance(m, g) < 1e-15


def test_disjoint_supports_l1_is_two():
    x = np.full((1, 160, 1), 0.75)
    assert l1_distance(estimate_marginal(x, 1, 2), U16, q=np.array([1.0, 0.0])) == 2.0


def test_iid_entropy_within_bias():
    g = cosine_density(64, [0.5])
    x = sample_initial(g, 100000, 1, seed=3).positions
    m = estimate_marginal(x, 1, 32)
    H = relative_entropy(m, g)
    assert H >= -1e-12
    assert H < 3 * 31 / (2 * 1e5) + 3 * 1e-4


def test_nonpositive_limit_is_domain_error():
    g = DensityGrid(np.r_[0.0, np.full(15, 16 / 15)])
    with pytest.raises(DomainError):
        relative_entropy(point_mass(3), g)


def test_plugin_bias_formula():
    m = point_mass(2, bins=16, samples=320)
    assert plugin_bias(m) == pytest.approx(15 / 640)


def test_bootstrap_deterministic_and_positive():
    x = np.random.default_rng(4).random((32, 50, 1))
    m = estimate_marginal(x, 1, 8)
    a = bootstrap(m, uniform_density(64), 50, seed=1)
    assert a == bootstrap(m, uniform_density(64), 50, seed=1)
    assert a[0] > 0 and a[1] > 0


# -- envelope ----------------------------------------------------------------------

def test_M_for_free_diffusion_uniform_limit():
    M = constant_M(FREE, [uniform_density(64)])
    assert M == pytest.approx(709.349385497342421814, rel=1e-14)


def test_envelope_at_time_zero():
    env, _ = theoretical_envelope(TRIG, [cosine_density(64, [0.5])], 0.0, 32)
    assert env == pytest.approx(1 / 32, rel=1e-15)


def test_envelope_vanishes_as_N_grows():
    traj = [uniform_density(64)]
    e = [theoretical_envelope(FREE, traj, 1e-3, N)[0] for N in (10, 1000, 100000)]
    assert e[0] > e[1] > e[2] and e[2] < 1e-4


def test_envelope_needs_positive_constant():
    with pytest.raises(InvalidArgument):
        theoretical_envelope(FREE, [U16], 0.1, 4, universal_C=0.0)


def test_envelope_nonpositive_limit():
    with pytest.raises(DomainError):
        theoretical_envelope(FREE, [DensityGrid(np.r_[0.0, np.full(15, 16 / 15)])], 0.1, 4)


def test_fit_slope_exact_power():
    Ns = np.array([16, 32, 64, 128])
    assert fit_slope(Ns, 3.0 / Ns) == pytest.approx(-1.0)
    assert np.isnan(fit_slope([16, 32], [0.1, -1.0]))


def test_minimal_constant():
    row = ChaosRow(10, 0.5, 0.2, 0, 0, 0, 0, 0, 0, 2.0, *([0.0] * 6))
    # exp(c * 2 * 0.5) / 10 = 0.2  ->  c = log 2
    assert minimal_constant([row]) == pytest.approx(np.log(2))
    row.H1 = 0.05
    assert minimal_constant([row]) == 0.0


# -- sweep -------------------------------------------------------------------------

def test_sweep_requires_two_increasing_N():
    traj = march(U16, FREE, PdeConfig(dt=1e-4, t_end=1e-3))
    with pytest.raises(InvalidArgument):
        chaos_sweep([16], [1e-3], FREE, traj, SimConfig(dt=1e-3, t_end=1e-3))
    with pytest.raises(InvalidArgument):
        chaos_sweep([32, 16], [1e-3], FREE, traj, SimConfig(dt=1e-3, t_end=1e-3))


def test_null_sweep_within_bias():
    g = cosine_density(32, [0.3])
    traj = march(g, FREE, PdeConfig(dt=1e-4, t_end=0.02, checkpoints=(0.02,)))
    rep = chaos_sweep([8, 16], [0.02], FREE, traj, SimConfig(dt=1e-3, t_end=0.02),
                      n_replicas=32, bins=4, n_boot=50)
    assert all(r.status == "ok" for r in rep.rows)
    for r in rep.rows:
        assert r.H1 < r.bias_1 * 3 + 3 * r.sd_H1
    assert rep.ckp_violations() == []


def test_sweep_rows_complete_and_deterministic():
    g = cosine_density(64, [0.5])
    traj = march(g, TRIG, PdeConfig(dt=cfl_limit(TRIG, 64), t_end=0.02,
                                    checkpoints=(0.01, 0.02)))
    kw = dict(n_replicas=16, n_boot=20)
    a = chaos_sweep([16, 32], [0.01, 0.02], TRIG, traj, SimConfig(dt=1e-3, t_end=0.02), **kw)
    b = chaos_sweep([16, 32], [0.01, 0.02], TRIG, traj, SimConfig(dt=1e-3, t_end=0.02),
                    workers=2, **kw)
    assert {(r.N, r.t) for r in a.rows} == {(16, 0.01), (16, 0.02), (32, 0.01), (32, 0.02)}
    assert [r.H1 for r in a.rows] == [r.H1 for r in b.rows]
    assert a.bins == b.bins
