import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qglab.noise import (
    COMPONENT_SCALE,
    CovarianceSpectrum,
    Stream,
    WienerRealization,
    canonical_modes,
    check_hypothesis_e1,
    default_spectrum,
    dyadic_level,
    keyed_normals,
    mode_layout,
)
from qglab.spectral import SpectralField, TorusGrid, sobolev_norm_coeffs


class TestHash:
    def test_deterministic(self):
        a = keyed_normals(5, Stream.INCREMENT, np.arange(10))
        b = keyed_normals(5, Stream.INCREMENT, np.arange(10))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_streams_differ(self):
        a, _ = keyed_normals(5, Stream.INCREMENT, np.arange(10))
        b, _ = keyed_normals(5, Stream.BRIDGE, np.arange(10))
        assert not np.any(a == b)

    def test_moments(self):
        za, zb = keyed_normals(1, Stream.ENSEMBLE, np.arange(200_000))
        for z in (za, zb):
            assert abs(z.mean()) < 0.01
            assert abs(z.var() - 1) < 0.01
            assert abs(np.mean(z**4) - 3) < 0.05
        assert abs(np.corrcoef(za, zb)[0, 1]) < 0.01


def test_canonical_modes_cover_half_lattice():
    k1, k2 = canonical_modes(4)
    assert k1.size == ((2 * 4 + 1) ** 2 - 1) // 2
    pairs = set(zip(k1.tolist(), k2.tolist()))
    for a, b in pairs:
        assert (-a, -b) not in pairs
        assert b > 0 or (b == 0 and a > 0)


def test_layout_round_trip_and_scale():
    g = TorusGrid(16)
    lay = mode_layout(g)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, lay.size))
    c = lay.to_coeffs(a, b)
    a2, b2 = lay.from_coeffs(c)
    assert np.allclose(a, a2) and np.allclose(b, b2)
    # cos and sin basis functions have unit L2 norm
    e = np.zeros(lay.size)
    e[0] = 1.0
    assert sobolev_norm_coeffs(g, lay.to_coeffs(e, 0 * e), 0.0) == pytest.approx(1.0)
    assert sobolev_norm_coeffs(g, lay.to_coeffs(0 * e, e), 0.0) == pytest.approx(1.0)
    assert COMPONENT_SCALE == pytest.approx(1 / (2 * math.sqrt(2) * math.pi))
    assert np.array_equal(SpectralField(g, c).coeffs, c)


class TestSpectrum:
    def test_power_law_amplitude(self):
        sp = CovarianceSpectrum(sigma=2.0, q=3.0)
        assert sp.amplitude(3, 4) == pytest.approx(2.0 / 125.0)
        assert sp.amplitude(0, 0) == 0

    def test_table(self):
        sp = CovarianceSpectrum("table", table={(1, 0): 0.5, (0, -2): 0.25})
        assert sp.amplitude(-1, 0) == 0.5
        assert sp.amplitude(0, 2) == 0.25
        assert sp.amplitude(3, 3) == 0
        assert sp.support_radius == 2

    def test_zero_mean_mode_rejected(self):
        with pytest.raises(ValueError, match="noise has zero mean mode"):
            CovarianceSpectrum("table", table={(0, 0): 1.0})

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValueError):
            CovarianceSpectrum(sigma=-1.0)

    def test_conflicting_partner(self):
        with pytest.raises(ValueError):
            CovarianceSpectrum("table", table={(1, 1): 1.0, (-1, -1): 2.0})

    def test_hashable(self):
        a = CovarianceSpectrum("table", table={(1, 0): 0.5})
        b = CovarianceSpectrum("table", table={(-1, 0): 0.5})
        assert a == b and hash(a) == hash(b)


class TestAdmissibility:
    def test_default_is_admissible(self):
        r = check_hypothesis_e1(default_spectrum(), 1.0, 0.75, 0.3, 0.1, 32)
        assert r.verdict == "admissible"
        assert r.m_star == pytest.approx(4.2)
        assert "verdict = admissible" in r.to_text()

    def test_slow_power_law_is_inadmissible(self):
        r = check_hypothesis_e1(CovarianceSpectrum(q=2.0), 1.0, 0.75, 0.3, 0.1, 32)
        assert r.verdict == "inadmissible"

    def test_finite_table_is_admissible(self):
        sp = CovarianceSpectrum("table", table={(1, 0): 1.0, (2, 3): 0.1})
        r = check_hypothesis_e1(sp, 1.0, 0.75, 0.3, 0.1, 8)
        assert r.verdict == "admissible"
        assert r.truncated_trace == pytest.approx(2 * (1.0 + 13 ** 2.1 * 0.01))

    def test_alpha_outside_range_is_inconclusive(self):
        r = check_hypothesis_e1(default_spectrum(), 1.0, 0.4, 0.3, 0.1, 16)
        assert r.verdict == "inconclusive"

    def test_parameter_errors(self):
        with pytest.raises(ValueError, match="hypothesis parameters out of range"):
            check_hypothesis_e1(default_spectrum(), 0.5, 0.75, 0.3, 0.1, 16)
        with pytest.raises(ValueError):
            check_hypothesis_e1(default_spectrum(), 1.0, 0.75, 0.3, 0.0, 16)
        with pytest.raises(ValueError):
            check_hypothesis_e1(default_spectrum(), 1.0, 0.75, 0.3, 0.1, 3)

    def test_truncated_trace_grows_with_radius(self):
        sp = default_spectrum()
        t = [check_hypothesis_e1(sp, 1.0, 0.75, 0.3, 0.1, K).truncated_trace for K in (8, 16, 32, 64)]
        assert all(b > a for a, b in zip(t, t[1:]))
        # convergent tail: the last doubling adds little
        assert (t[3] - t[2]) < 0.05 * t[3]


class TestDyadic:
    def test_levels(self):
        assert dyadic_level(1.0, 1.0) == 0
        assert dyadic_level(1.0, 0.125) == 3
        assert dyadic_level(1e-3, 1e-3 / 4) == 2

    def test_error_names_both(self):
        with pytest.raises(ValueError) as e:
            dyadic_level(1e-3, 3e-4)
        assert "0.001" in str(e.value) and "0.0003" in str(e.value)


class TestWiener:
    spec = CovarianceSpectrum(sigma=1.0, q=1.0)

    def test_increment_variance(self):
        w = WienerRealization(3, 0.01, self.spec)
        a, b = w.bin_components(4, np.arange(20_000))
        g = self.spec.canonical_amplitudes(4)
        ratio = a.var(axis=0) / (g**2 * 0.01)
        assert np.all(np.abs(ratio - 1) < 0.06)
        assert abs(np.mean(b.var(axis=0) / (g**2 * 0.01)) - 1) < 0.01

    def test_single_increment_matches_batch(self):
        w = WienerRealization(3, 0.01, self.spec)
        k1, k2 = canonical_modes(4)
        a, b = w.bin_components(4, 17)
        i = 7
        assert w.increment((int(k1[i]), int(k2[i])), 17) == pytest.approx((a[i], b[i]))
        ap, bp = w.increment((-int(k1[i]), -int(k2[i])), 17)
        assert (ap, bp) == pytest.approx((a[i], -b[i]))

    def test_increment_zero_mode(self):
        with pytest.raises(ValueError, match="noise has zero mean mode"):
            WienerRealization(3, 0.01, self.spec).increment((0, 0), 0)

    def test_sub_increments_sum_to_bin(self):
        w = WienerRealization(4, 0.5, self.spec)
        a, b = w.bin_components(6, 3)
        sa, sb = w.sub_components(6, 3, 4)
        assert sa.shape[0] == 16
        assert np.allclose(sa.sum(axis=0), a, atol=1e-14)
        assert np.allclose(sb.sum(axis=0), b, atol=1e-14)

    def test_bridge_is_nested(self):
        w = WienerRealization(4, 0.5, self.spec)
        fine, _ = w.sub_components(6, -2, 3)
        coarse, _ = w.sub_components(6, -2, 2)
        assert np.allclose(fine.reshape(4, 2, -1).sum(axis=1), coarse, atol=1e-14)

    def test_bridge_variance(self):
        w = WienerRealization(8, 1.0, self.spec)
        g = self.spec.canonical_amplitudes(3)
        parts = np.concatenate([w.sub_components(3, j, 2)[0] for j in range(3000)])
        assert np.all(np.abs(parts.var(axis=0) / (g**2 * 0.25) - 1) < 0.08)

    def test_value_at_zero_and_additivity(self):
        w = WienerRealization(9, 0.25, self.spec)
        a0, _ = w.mode_values(4, 0.0)
        assert np.all(a0 == 0)
        a1, _ = w.mode_values(4, 1.0)
        inc, _ = w.window_components(4, 0.25, 0, 4)
        assert np.allclose(a1, inc.sum(axis=0), atol=1e-14)
        am, _ = w.mode_values(4, -0.75, level=0)
        inc_m, _ = w.window_components(4, 0.25, -3, 3)
        assert np.allclose(am, -inc_m.sum(axis=0), atol=1e-14)

    def test_value_on_sub_grid(self):
        w = WienerRealization(9, 0.25, self.spec)
        v, _ = w.mode_values(4, 0.375, level=1)
        inc, _ = w.window_components(4, 0.125, 0, 3)
        assert np.allclose(v, inc.sum(axis=0), atol=1e-14)

    def test_shift(self):
        w = WienerRealization(9, 0.25, self.spec)
        ws = w.shift(1.5)
        assert ws.origin_offset == pytest.approx(1.5)
        a, _ = ws.window_components(4, 0.125, 0, 8)
        b, _ = w.window_components(4, 0.125, 12, 8)
        assert np.array_equal(a, b)
        with pytest.raises(ValueError, match="shift must align with the bin grid"):
            w.shift(0.1)

    def test_coarse_windows_sum_bins(self):
        w = WienerRealization(2, 0.1, self.spec)
        c, _ = w.window_components(3, 0.3, 1, 2)
        f, _ = w.window_components(3, 0.1, 3, 6)
        assert np.allclose(c, f.reshape(2, 3, -1).sum(axis=1), atol=1e-15)

    def test_scalar_paths(self):
        w = WienerRealization(2, 0.01, self.spec)
        inc = w.scalar_bins(2, np.arange(50_000))
        assert np.allclose(inc.var(axis=0), 0.01, rtol=0.03)
        v = w.scalar_value(2, 0.05)
        assert np.allclose(v, inc[:5].sum(axis=0))
        s = w.scalar_sub(2, 4, 3)
        assert np.allclose(s.sum(axis=0), inc[4], atol=1e-15)

    def test_field_value_is_real_field(self):
        g = TorusGrid(16)
        w = WienerRealization(2, 0.1, self.spec)
        c = w.field_value(g, 0.3)
        assert np.array_equal(SpectralField(g, c).coeffs, c)

    def test_lattice_code(self):
        w = WienerRealization(2, 0.1, self.spec)
        assert w.lattice_code(0.1) == 0
        assert w.lattice_code(0.025) == 2
        assert w.lattice_code(0.3) == -3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63), j=st.integers(-10**6, 10**6), r=st.integers(-50, 50))
def test_shift_moves_only_the_index(seed, j, r):
    w = WienerRealization(seed, 0.5, CovarianceSpectrum())
    a, b = w.shift(0.5 * r).bin_components(3, j)
    a2, b2 = w.bin_components(3, j + r)
    assert np.array_equal(a, a2) and np.array_equal(b, b2)
