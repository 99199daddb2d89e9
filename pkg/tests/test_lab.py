import math

import numpy as np
import pytest

from qglab.dynamics import FlowConfig
from qglab.lab import (
    AbsorptionExperiment,
    PullbackExperiment,
    SemicontinuitySweep,
    SyncExperiment,
    check_positivity,
    fit_rate,
    random_field,
    run_absorption,
    run_lp_decay,
    run_pullback,
    run_semicontinuity,
    run_sync,
    sphere_family,
    sync_threshold,
    translate,
)
from qglab.spectral import SpectralField, TorusGrid, lp_norm, sobolev_norm

G = TorusGrid(32)
DT = 2.0**-6


def cfg(**kw):
    base = dict(grid=G, dt=DT)
    base.update(kw)
    return FlowConfig(**base)


class TestInitialData:
    def test_random_field_norm_and_determinism(self):
        a = random_field(G, 5, 2, s=1.0, norm=2.5)
        assert sobolev_norm(a, 1.0) == pytest.approx(2.5)
        assert np.array_equal(a.coeffs, random_field(G, 5, 2, s=1.0, norm=2.5).coeffs)
        assert not np.array_equal(a.coeffs, random_field(G, 5, 3, s=1.0, norm=2.5).coeffs)

    def test_translate_preserves_norms(self):
        a = random_field(G, 1)
        b = translate(a, (0.3, 1.1))
        assert sobolev_norm(b, 1.0) == pytest.approx(sobolev_norm(a, 1.0))
        x = translate(SpectralField.from_function(G, lambda x, y: np.sin(x)), (0.5, 0.0))
        assert np.allclose(x.physical(), np.sin(G.xi[0] - 0.5))

    def test_sphere_family(self):
        fam = sphere_family(G, 4.0, 1.0, 0, n_trig=3, n_random=2)
        assert len(fam) == 5
        for f in fam:
            assert sobolev_norm(f, 1.0) == pytest.approx(4.0)
        assert all(np.all(f.coeffs == 0) for f in sphere_family(G, 0.0, 1.0, 0))


class TestSyncThreshold:
    def test_exponent(self):
        assert sync_threshold(0.75, 1.0, 1.0, 1.0)[0] == 7.0

    def test_zero_trace(self):
        assert sync_threshold(0.75, 3.0, 3.0, 0.0)[1] == 3.0

    def test_increasing_in_kappa(self):
        ks = np.linspace(1.0, 20.0, 40)
        d = [sync_threshold(0.75, k, k, 0.5)[1] for k in ks]
        assert all(b > a for a, b in zip(d, d[1:]))

    def test_supercritical(self):
        with pytest.raises(ValueError, match="supercritical"):
            sync_threshold(0.5, 1.0, 1.0, 1.0)

    def test_closed_form(self):
        p, d = sync_threshold(0.75, 2.0, 2.0, 0.1, C_S=1.1, C_R=0.9)
        term = 2 ** 3.5 * 0.9**7 * 1.1**14 * 2.0**-6 * 42**3.5 * 2.0**-3.5 * 0.1**3.5
        assert d == pytest.approx(2.0 - term)


def test_fit_rate_recovers_exponential():
    t = np.linspace(0, 4, 50)
    assert fit_rate(t, 3.0 * np.exp(-1.7 * t), 1e-30) == pytest.approx(1.7)
    assert fit_rate(t, np.ones_like(t), 1e-30) == pytest.approx(0.0, abs=1e-12)


class TestSync:
    def test_identical_data(self):
        th = random_field(G, 0)
        r = run_sync(SyncExperiment(cfg(noise_mode="additive"), 0, th, th, 0.5, stride=8))
        assert r.passed
        assert all(row["d_Hm1/2_sq"] == 0 for row in r.series["sync"])

    def test_zero_noise_rate_above_linear(self):
        c = cfg(kappa=4.0, integrator="etd2")
        r = run_sync(SyncExperiment(c, 0, random_field(G, 0), random_field(G, 0, 1), 2.0, stride=8))
        assert r.verdict == "synchronizing"
        assert r.summary["fitted_rate"] >= 2 * 4.0 * 0.5

    def test_stride_alignment(self):
        with pytest.raises(ValueError):
            run_sync(SyncExperiment(cfg(), 0, random_field(G, 0), random_field(G, 1), 0.5, stride=7))


class TestDecay:
    def test_zero_field(self):
        r = run_lp_decay(cfg(), 4.0, SpectralField.zeros(G), 0.5)
        assert r.verdict == "holds"
        assert all(row["Lp:4"] == 0 for row in r.series["lp_decay"])

    def test_l2_decay_at_least_linear_rate(self):
        c = cfg(kappa=1.0)
        r = run_lp_decay(c, 2.0, random_field(G, 3, norm=3.0), 1.0)
        assert r.verdict == "holds"
        assert r.summary["max_ratio"] <= 1.0 + 1e-12
        assert r.series["energy"]

    def test_multiplicative_lp(self):
        c = cfg(noise_mode="multiplicative", b=(0.2,))
        for p in (4.0, 7.0):
            assert run_lp_decay(c, p, random_field(G, 4, norm=3.0), 1.0, seed=4).verdict == "holds"

    def test_additive_reports_without_verdict(self):
        r = run_lp_decay(cfg(noise_mode="additive"), 2.0, random_field(G, 4), 0.5)
        assert r.passed and "no hard bound" in r.verdict
        assert "int_grad_z_sup" in r.series["lp_decay"][-1]

    def test_violation_reports_first_time(self):
        th = random_field(G, 5, norm=1.0)
        r = run_lp_decay(cfg(), 2.0, th, 1.0, t0=0.5, tol=-0.5)
        assert r.verdict == "decay bound violated"
        assert r.summary["first_violation"]["t"] == 0.5

    def test_bad_exponent(self):
        with pytest.raises(ValueError):
            run_lp_decay(cfg(), 1.5, random_field(G, 0), 0.5)


class TestPositivity:
    @pytest.mark.parametrize("p", [3.0, 4.0, 7.0])
    def test_ground_mode_closed_form(self, p):
        th = SpectralField.from_function(G, lambda x, y: np.sin(x))
        kappa = 1.7
        val = check_positivity(th, kappa, 0.75, p)
        assert val == pytest.approx(kappa * (1 - 2 / p) * lp_norm(th, p) ** p, rel=1e-10)

    def test_zero(self):
        assert check_positivity(SpectralField.zeros(G), 1.0, 0.75, 3.0) == 0.0

    def test_random_fields_nonnegative(self):
        g = TorusGrid(64)
        for i in range(10):
            th = random_field(g, 7, i)
            assert check_positivity(th, 1.0, 0.6, 3.0) >= -1e-8 * sobolev_norm(th, 1.0) ** 3

    def test_unresolved_warns(self):
        th = SpectralField.from_function(G, lambda x, y: np.sin(G.kmax * x))
        with pytest.warns(RuntimeWarning):
            check_positivity(th, 1.0, 0.75, 4.0)

    def test_range(self):
        with pytest.raises(ValueError):
            check_positivity(random_field(G, 0), 1.0, 0.75, 2.0)


class TestPullback:
    def test_single_start(self):
        r = run_pullback(PullbackExperiment(cfg(), 0, [random_field(G, 0)], [-1.0]))
        assert "no verdict" in r.verdict

    def test_schedule_order(self):
        with pytest.raises(ValueError):
            run_pullback(PullbackExperiment(cfg(), 0, [random_field(G, 0)], [-2.0, -1.0]))

    def test_zero_noise_converges_to_zero(self):
        c = cfg(kappa=2.0, integrator="etd2")
        th = [random_field(G, 1), random_field(G, 1, 1)]
        r = run_pullback(PullbackExperiment(c, 1, th, [-4.0, -8.0, -12.0]))
        rows = r.series["pullback"]
        assert rows[-1]["Hs:1.0"] < 1e-10
        assert r.verdict == "Cauchy"


    def test_spread_nonincreasing_with_depth(self):
        c = cfg(kappa=2.0, noise_mode="additive", integrator="etd2")
        th = random_field(G, 4)
        r = run_pullback(PullbackExperiment(c, 4, [th, translate(th, (0.7, 0.2))], [-2.0, -4.0, -6.0, -8.0]))
        spreads = [row["spread"] for row in r.series["pullback"]]
        assert all(b <= a * (1 + 1e-6) for a, b in zip(spreads, spreads[1:]))


class TestAbsorption:
    def test_zero_radius_zero_noise(self):
        r = run_absorption(AbsorptionExperiment(cfg(), 0, 0.0, [-2.0, -3.0, -4.0]))
        for row in r.series["absorption"]:
            assert row["Q1_Hs_v_at_-1_sq"] == 0 and row["Q2_sup_Hs_v_sq"] == 0 and row["Q3_int_Hs+alpha_v_sq"] == 0
        assert r.verdict == "absorbing"

    def test_zero_noise_radius_bound(self):
        c = cfg(kappa=1.0)
        r = run_absorption(AbsorptionExperiment(c, 0, 2.0, [-2.0, -3.0, -4.0], n_trig=2, n_random=1))
        for row in r.series["absorption"]:
            t0 = row["t0"]
            assert row["Q1_Hs_v_at_-1_sq"] <= 4.0 * math.exp(-2 * (-1 - t0)) * 1.02

    def test_start_must_precede_window(self):
        with pytest.raises(ValueError):
            run_absorption(AbsorptionExperiment(cfg(), 0, 1.0, [-0.5, -1.0]))


class TestSemicontinuity:
    def test_zero_amplitude_is_exactly_deterministic(self):
        c = cfg(noise_mode="additive")
        r = run_semicontinuity(SemicontinuitySweep(c, 0, [0.1, 0.0], [random_field(G, 0)], 1.0))
        assert r.summary["D"][-1] == 0.0

    def test_halving_ratio_in_linear_regime(self):
        c = cfg(noise_mode="additive")
        r = run_semicontinuity(SemicontinuitySweep(c, 1, [0.2, 0.1, 0.05], [random_field(G, 1)], 2.0))
        assert all(0.3 <= h <= 0.7 for h in r.summary["halving_ratios"])
        assert r.summary["monotone_within_slack"]

    def test_hausdorff_proxy_bounded_by_pairwise(self):
        c = cfg(noise_mode="additive")
        th = [random_field(G, 2), random_field(G, 2, 1)]
        r = run_semicontinuity(SemicontinuitySweep(c, 2, [0.2, 0.1], th, 1.0))
        for h, d in zip(r.summary["hausdorff_proxy"], r.summary["D"]):
            assert 0 <= h <= d

    def test_needs_additive(self):
        with pytest.raises(ValueError):
            run_semicontinuity(SemicontinuitySweep(cfg(), 0, [0.1], [random_field(G, 0)], 1.0))


def test_reports_are_reproducible():
    c = cfg(noise_mode="additive", integrator="etd2")
    e = SyncExperiment(c, 3, random_field(G, 3), random_field(G, 3, 1), 1.0, stride=8)
    a, b = run_sync(e), run_sync(e)
    assert a.summary == b.summary
    assert a.series == b.series
