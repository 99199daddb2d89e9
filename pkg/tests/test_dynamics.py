import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qglab.dynamics import (
    BlowUpError,
    FlowConfig,
    FlowState,
    StabilityWarning,
    SupercriticalWarning,
    advance,
    em_flow,
    em_oracle_step,
    flow,
    flow_batch,
    global_beta,
    step_additive,
    step_multiplicative,
    transformed,
)
from qglab.lab import random_field
from qglab.noise import CovarianceSpectrum
from qglab.spectral import SpectralField, TorusGrid, sobolev_norm_coeffs

G32 = TorusGrid(32)
DT = 2.0**-6


def cfg(**kw):
    base = dict(grid=G32, dt=DT)
    base.update(kw)
    return FlowConfig(**base)


class TestConfig:
    def test_subcritical_error(self):
        with pytest.raises(ValueError, match="subcritical regime requires alpha > 1/2"):
            cfg(alpha=0.4)

    def test_override_warns(self):
        with pytest.warns(SupercriticalWarning):
            c = cfg(alpha=0.4, allow_supercritical=True)
        assert c.alpha == 0.4

    def test_defaults(self):
        c = cfg(kappa=3.0)
        assert c.gamma == 30.0
        assert c.bin_width == DT
        assert c.lambda1 == 3.0
        assert c.integrator == "imex-cnab"

    def test_bin_width_must_be_dyadic_multiple(self):
        with pytest.raises(ValueError) as e:
            cfg(bin_width=3 * DT)
        assert str(DT) in str(e.value)

    def test_anchor_alignment(self):
        with pytest.raises(ValueError):
            cfg(anchor_period=0.3)

    @pytest.mark.parametrize("kw", [dict(integrator="rk4"), dict(noise_mode="both"), dict(kappa=0.0),
                                    dict(eps=-1.0), dict(dt=0.0), dict(b=(math.nan,))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            cfg(**kw)


def test_zero_stays_zero():
    c = cfg()
    z = SpectralField.zeros(G32)
    out = flow(c, c.path(0), 0.0, 1.0, z)
    assert np.all(out.coeffs == 0)


@pytest.mark.parametrize("integrator", ["etd1", "etd2", "imex-cnab"])
def test_single_mode_linear_decay(integrator):
    c = cfg(integrator=integrator, alpha=0.75, kappa=1.5)
    th = SpectralField.from_function(G32, lambda x, y: np.cos(x - y))
    out = flow(c, c.path(0), 0.0, 1.0, th)
    expect = math.exp(-1.5 * 2**0.75)
    tol = 1e-12 if integrator.startswith("etd") else 1e-3
    assert out.coeff(1, -1) == pytest.approx(0.5 * expect, rel=tol)


def test_energy_decreases_without_noise():
    c = cfg(integrator="etd2")
    th = random_field(G32, 1, norm=3.0)
    rows = []
    flow_batch(c, c.path(0), 0.0, 2.0, th.coeffs, observe=lambda J, x: rows.append(
        float(sobolev_norm_coeffs(G32, x, 0.0))), stride=4)
    assert all(b < a for a, b in zip(rows, rows[1:]))


@pytest.mark.parametrize("mode", ["none", "additive", "multiplicative"])
@pytest.mark.parametrize("integrator", ["etd1", "etd2", "imex-cnab"])
def test_cocycle_and_shift_bitwise(mode, integrator):
    c = cfg(noise_mode=mode, integrator=integrator, b=(0.3, -0.2), anchor_period=0.25)
    path = c.path(3)
    th = random_field(G32, 3, norm=2.0)
    r, l, t = -0.75, 0.5, 1.25
    direct = advance(FlowState(r, th), c, path, t)
    mid = advance(FlowState(r, th), c, path, l)
    two = advance(mid, c, path, t)
    assert np.array_equal(direct.theta.coeffs, two.theta.coeffs)
    shifted = flow(c, path.shift(r), 0.0, t - r, th)
    assert np.array_equal(flow(c, path, r, t, th).coeffs, shifted.coeffs)


def test_history_matters_for_imex():
    c = cfg(integrator="imex-cnab")
    path = c.path(0)
    th = random_field(G32, 4, norm=3.0)
    mid = flow(c, path, 0.0, 0.5, th)
    restart = flow(c, path, 0.5, 1.0, mid)
    carried = advance(advance(FlowState(0.0, th), c, path, 0.5), c, path, 1.0).theta
    assert not np.array_equal(restart.coeffs, carried.coeffs)
    assert np.allclose(restart.coeffs, carried.coeffs, atol=1e-4)


def test_single_step_helpers():
    c = cfg(noise_mode="additive", integrator="etd1")
    path = c.path(1)
    s = FlowState(0.0, random_field(G32, 1))
    s1 = step_additive(s, c, path)
    assert s1.time == pytest.approx(DT)
    with pytest.raises(ValueError):
        step_multiplicative(s, c, path)
    m = cfg(noise_mode="multiplicative", b=(0.2,))
    assert step_multiplicative(s, m, m.path(1)).time == pytest.approx(DT)


def test_flow_rejects_backwards_and_misaligned():
    c = cfg()
    th = random_field(G32, 0)
    with pytest.raises(ValueError):
        flow(c, c.path(0), 1.0, 0.0, th)
    with pytest.raises(ValueError):
        flow(c, c.path(0), 0.0, 0.3 * DT, th)
    with pytest.raises(ValueError):
        flow(c, c.path(0), 0.0, 1.0, random_field(TorusGrid(16), 0))


def test_batch_matches_individual_runs():
    c = cfg(noise_mode="additive")
    path = c.path(2)
    fields = [random_field(G32, 2, i) for i in range(3)]
    batch = flow_batch(c, path, 0.0, 0.5, np.stack([f.coeffs for f in fields]))
    for f, b in zip(fields, batch):
        assert np.array_equal(flow(c, path, 0.0, 0.5, f).coeffs, b)


def test_batch_amplitudes_match_scaled_configs():
    c = cfg(noise_mode="additive", integrator="etd2")
    path = c.path(2)
    th = random_field(G32, 2)
    eps = np.array([0.5, 0.0])[:, None, None]
    out = flow_batch(c, path, 0.0, 0.5, np.stack([th.coeffs, th.coeffs]), eps=eps)
    for e, o in zip((0.5, 0.0), out):
        ref = flow(c.with_(eps=e), path, 0.0, 0.5, th)
        assert np.allclose(o, ref.coeffs, atol=1e-15)


def test_multiplicative_linear_is_scaled_semigroup():
    c = cfg(noise_mode="multiplicative", b=(0.5, 0.25), integrator="etd1", nonlinear=False)
    path = c.path(9)
    th = random_field(G32, 9)
    out = flow(c, path, 0.0, 1.0, th)
    det = flow(c.with_(noise_mode="none"), path, 0.0, 1.0, th)
    scale = 1.0 / global_beta(c, path, 1.0)
    assert np.allclose(out.coeffs, scale * det.coeffs, rtol=1e-10, atol=1e-15)


def test_transformed_variables():
    c = cfg(noise_mode="additive", eps=0.5)
    path = c.path(4)
    st_ = advance(FlowState(0.0, random_field(G32, 4)), c, path, 0.25)
    tr = transformed(st_, c, path)
    assert np.allclose((tr.v + tr.z * 0.5).coeffs, st_.theta.coeffs)
    m = cfg(noise_mode="multiplicative", b=(0.3,))
    tm = transformed(st_, m, m.path(4))
    assert tm.beta == pytest.approx(global_beta(m, m.path(4), 0.25))


def test_beta_at_origin_is_one():
    m = cfg(noise_mode="multiplicative", b=(0.3,))
    assert global_beta(m, m.path(0), 0.0) == 1.0


def test_blow_up_reports_time():
    c = cfg(dt=0.25, integrator="etd1", anchor_period=1.0)
    th = random_field(G32, 0, norm=1e8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(BlowUpError) as e:
            flow(c, c.path(0), 0.0, 50.0, th)
    assert 0 < e.value.time <= 50.0


def test_cfl_warning():
    c = cfg(dt=0.25, integrator="etd1", anchor_period=1.0)
    with pytest.warns(StabilityWarning):
        flow(c, c.path(0), 0.0, 0.25, random_field(G32, 0, norm=50.0))


def test_em_single_step_matches_run():
    c = cfg(noise_mode="additive", dt=2.0**-8, bin_width=2.0**-6)
    path = c.path(5)
    th = random_field(G32, 5)
    a = em_flow(c, path, 0.0, 2 * c.dt, th)
    b = em_oracle_step(em_oracle_step(th, c, path, 0.0), c, path, c.dt)
    assert np.allclose(a.coeffs, b.coeffs, atol=1e-15)


def test_em_warns_when_unstable():
    c = cfg(dt=2.0**-4, anchor_period=1.0)
    with pytest.warns(StabilityWarning):
        em_flow(c, c.path(0), 0.0, c.dt, random_field(G32, 0, norm=1e-3))


@pytest.mark.parametrize("integrator,order", [("etd1", 1), ("etd2", 2), ("imex-cnab", 2)])
def test_observed_order(integrator, order):
    th = random_field(G32, 6, norm=3.0)
    ref_cfg = cfg(integrator="etd2", dt=2.0**-11)
    ref = flow(ref_cfg, ref_cfg.path(0), 0.0, 0.5, th).coeffs
    errs = []
    for L in (6, 7, 8):
        c = cfg(integrator=integrator, dt=2.0**-L)
        errs.append(sobolev_norm_coeffs(G32, flow(c, c.path(0), 0.0, 0.5, th).coeffs - ref, 0.0))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(r - order) < 0.35 for r in rates), rates


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**32), shift=st.integers(-40, 40))
def test_shift_equivariance_property(seed, shift):
    c = cfg(noise_mode="additive", integrator="etd2", anchor_period=0.25)
    path = c.path(seed)
    th = random_field(G32, seed % 1000)
    r = shift * DT
    a = flow(c, path, r, r + 8 * DT, th)
    b = flow(c, path.shift(r), 0.0, 8 * DT, th)
    assert np.array_equal(a.coeffs, b.coeffs)
