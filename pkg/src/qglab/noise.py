"""
Trace-class noise spectra, the admissibility check on their weighted trace,
and reproducible two-sided Wiener paths.

Randomness is counter based: every Gaussian variate is a pure function of
``(seed, stream, key...)`` evaluated through a SplitMix64-style avalanche,
so extending a path into the past, refining a bin, or querying from several
workers never alters an already realized value.

A mode ``k`` of the real noise carries two independent components ``(a, b)``
along ``cos(k.xi)/(pi*sqrt(2))`` and ``sin(k.xi)/(pi*sqrt(2))``.  Only the
canonical half-lattice (``k2 > 0`` or ``k2 == 0, k1 > 0``) is keyed; the
partner ``-k`` is its complex conjugate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal, Mapping

import numpy as np

from .spectral import TorusGrid

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi

# coefficient of exp(i k.xi) per unit of (a - i b)
COMPONENT_SCALE = 1.0 / (2.0 * math.sqrt(2.0) * math.pi)


class Stream:
    """Disjoint key spaces of the counter-based generator."""

    INCREMENT = 1
    BRIDGE = 2
    OU_RESIDUAL = 3
    STATIONARY = 4
    SCALAR = 5
    SCALAR_BRIDGE = 6
    ENSEMBLE = 7
    INITIAL_DATA = 8


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.array(int(x) & _MASK64, dtype=np.uint64)
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    return a.astype(np.int64).view(np.uint64)


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_hash(*parts) -> np.ndarray:
    """Avalanche hash of a sequence of integer (or integer array) keys."""
    with np.errstate(over="ignore"):
        h = _mix(_u64(parts[0]))
        for p in parts[1:]:
            h = _mix(h ^ _u64(p))
    return h


def _unit(h: np.ndarray) -> np.ndarray:
    # 53-bit uniform in (0, 1]
    return ((h >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def normal_pair(prefix: np.ndarray, *parts) -> tuple[np.ndarray, np.ndarray]:
    """Two independent standard normals per key via Box-Muller."""
    with np.errstate(over="ignore"):
        h = prefix
        for p in parts:
            h = _mix(h ^ _u64(p))
        u1 = _unit(h)
        u2 = _unit(_mix(h ^ np.uint64(0x14057B7EF767814F)))
    r = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    return r * np.cos(ang), r * np.sin(ang)


def keyed_normals(seed: int, stream: int, *parts) -> tuple[np.ndarray, np.ndarray]:
    return normal_pair(keyed_hash(seed, stream), *parts)


# --------------------------------------------------------------------------
# Lattice bookkeeping


@lru_cache(maxsize=32)
def canonical_modes(kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical half-lattice of the box |k_i| <= kmax, lexicographic in (k2, k1)."""
    k1, k2 = [], []
    for b in range(0, kmax + 1):
        for a in range(-kmax, kmax + 1):
            if b > 0 or a > 0:
                k1.append(a)
                k2.append(b)
    a1 = np.array(k1, dtype=np.int64)
    a2 = np.array(k2, dtype=np.int64)
    a1.flags.writeable = False
    a2.flags.writeable = False
    return a1, a2


@dataclass(frozen=True)
class ModeLayout:
    """Scatter map from canonical modes to the stored half-plane array of a grid."""

    grid: TorusGrid
    k1: np.ndarray
    k2: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    mirror_src: np.ndarray
    mirror_rows: np.ndarray

    @property
    def size(self) -> int:
        return self.k1.size

    def to_coeffs(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Stored spectral array of sum_k a_k cos-basis + b_k sin-basis (orthonormal)."""
        lead = a.shape[:-1]
        out = np.zeros(lead + self.grid.spectral_shape, dtype=complex)
        c = COMPONENT_SCALE * (a - 1j * b)
        out[..., self.rows, self.cols] = c
        out[..., self.mirror_rows, 0] = np.conj(c[..., self.mirror_src])
        return out

    def from_coeffs(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = coeffs[..., self.rows, self.cols] / COMPONENT_SCALE
        return c.real, -c.imag


@lru_cache(maxsize=32)
def mode_layout(grid: TorusGrid) -> ModeLayout:
    k1, k2 = canonical_modes(grid.kmax)
    rows = k1 % grid.n
    mirror_src = np.nonzero(k2 == 0)[0]
    mirror_rows = (-k1[mirror_src]) % grid.n
    return ModeLayout(grid, k1, k2, rows, k2.copy(), mirror_src, mirror_rows)


# --------------------------------------------------------------------------
# Covariance spectra


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Diagonal covariance: mode k carries amplitude g_k on each of its two components.

    ``kind="power-law"`` gives ``g_k = sigma |k|^{-q}``; ``kind="table"`` reads
    amplitudes from ``table`` (keys are lattice points, the partner -k is implied).
    """

    kind: Literal["power-law", "table"] = "power-law"
    sigma: float = 0.1
    q: float = 3.6
    table: Mapping[tuple[int, int], float] | None = field(default=None, hash=False)

    def __post_init__(self) -> None:
        if self.kind == "power-law":
            if not (math.isfinite(self.sigma) and self.sigma >= 0):
                raise ValueError(f"spectrum amplitude sigma must be finite and >= 0, got {self.sigma}")
            if not math.isfinite(self.q):
                raise ValueError(f"spectral exponent q must be finite, got {self.q}")
        elif self.kind == "table":
            if self.table is None:
                raise ValueError("table spectrum needs per-mode amplitudes")
            clean: dict[tuple[int, int], float] = {}
            for (a, b), g in self.table.items():
                a, b, g = int(a), int(b), float(g)
                if not (math.isfinite(g) and g >= 0):
                    raise ValueError(f"amplitude at mode ({a}, {b}) must be finite and >= 0, got {g}")
                if a == 0 and b == 0:
                    if g != 0:
                        raise ValueError("noise has zero mean mode")
                    continue
                key = (a, b) if (b > 0 or (b == 0 and a > 0)) else (-a, -b)
                if key in clean and clean[key] != g:
                    raise ValueError(f"conflicting amplitudes for modes {key} and its partner")
                clean[key] = g
            object.__setattr__(self, "table", dict(sorted(clean.items())))
        else:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")

    def __hash__(self) -> int:
        tab = tuple(self.table.items()) if self.table else None
        return hash((self.kind, self.sigma, self.q, tab))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CovarianceSpectrum):
            return NotImplemented
        return (self.kind, self.sigma, self.q, self.table) == (
            other.kind,
            other.sigma,
            other.q,
            other.table,
        )

    @property
    def is_zero(self) -> bool:
        if self.kind == "power-law":
            return self.sigma == 0
        return not any(self.table.values())

    @property
    def support_radius(self) -> float:
        """Largest |k| with nonzero amplitude (inf for a nonzero power law)."""
        if self.is_zero:
            return 0.0
        if self.kind == "power-law":
            return math.inf
        return max(math.hypot(a, b) for (a, b), g in self.table.items() if g > 0)

    def amplitude(self, k1, k2) -> np.ndarray:
        """g_k at integer lattice points (broadcasting); g_0 = 0."""
        k1 = np.asarray(k1)
        k2 = np.asarray(k2)
        if self.kind == "power-law":
            r2 = (k1.astype(float) ** 2 + k2.astype(float) ** 2)
            with np.errstate(divide="ignore"):
                g = np.where(r2 > 0, self.sigma * r2 ** (-0.5 * self.q), 0.0)
            return g
        out = np.zeros(np.broadcast(k1, k2).shape)
        b1, b2 = np.broadcast_arrays(k1, k2)
        for idx in np.ndindex(out.shape):
            a, b = int(b1[idx]), int(b2[idx])
            if not (b > 0 or (b == 0 and a > 0)):
                a, b = -a, -b
            out[idx] = self.table.get((a, b), 0.0)
        return out

    def canonical_amplitudes(self, kmax: int) -> np.ndarray:
        return _canonical_amplitudes(self, kmax)

    def stored_amplitudes(self, grid: TorusGrid) -> np.ndarray:
        """g_k on the stored half-plane array of ``grid`` (zero off the lattice)."""
        g = self.amplitude(grid.k1.astype(np.int64), grid.k2.astype(np.int64))
        return np.where(grid.mask, g, 0.0)

    def scaled(self, factor: float) -> "CovarianceSpectrum":
        if self.kind == "power-law":
            return replace(self, sigma=self.sigma * factor)
        return replace(self, table={k: g * factor for k, g in self.table.items()})


@lru_cache(maxsize=64)
def _canonical_amplitudes(spectrum: CovarianceSpectrum, kmax: int) -> np.ndarray:
    k1, k2 = canonical_modes(kmax)
    g = spectrum.amplitude(k1, k2).astype(float)
    g.flags.writeable = False
    return g


def default_sigma0(s: float) -> float:
    return max(0.0, 1.0 - s) + 0.3


def trace_exponent(s: float, alpha: float, sigma0: float, eps0: float) -> float:
    return max(2 * s + 2 - 2 * alpha + 2 * sigma0, 4 + 2 * eps0)


def default_spectrum(
    s: float = 1.0,
    alpha: float = 0.75,
    sigma0: float | None = None,
    eps0: float = 0.1,
    sigma: float = 0.1,
) -> CovarianceSpectrum:
    """Power law whose weighted trace converges with one and a half powers to spare."""
    if sigma0 is None:
        sigma0 = default_sigma0(s)
    m = trace_exponent(s, alpha, sigma0, eps0)
    return CovarianceSpectrum("power-law", sigma=sigma, q=m / 2 + 1.5)


# --------------------------------------------------------------------------
# Admissibility of the weighted trace


@dataclass(frozen=True)
class E1Report:
    m_star: float
    truncated_trace: float
    verdict: Literal["admissible", "inadmissible", "inconclusive"]
    analytic_condition: bool | None
    inputs: dict

    def to_text(self) -> str:
        lines = ["# weighted-trace admissibility report"]
        for k, v in self.inputs.items():
            lines.append(f"{k} = {v}")
        lines.append(f"m_star = {self.m_star!r}")
        lines.append(f"truncated_trace = {self.truncated_trace!r}")
        cond = "n/a" if self.analytic_condition is None else str(self.analytic_condition).lower()
        lines.append(f"analytic_condition = {cond}")
        lines.append(f"verdict = {self.verdict}")
        return "\n".join(lines) + "\n"


def check_hypothesis_e1(
    spectrum: CovarianceSpectrum,
    s: float,
    alpha: float,
    sigma0: float,
    eps0: float,
    K: int,
) -> E1Report:
    """Decide whether Tr(Lambda^{m*} G G*) is finite for the given spectrum.

    ``m* = max(2s + 2 - 2 alpha + 2 sigma0, 4 + 2 eps0)``.  A power law
    ``sigma |k|^-q`` qualifies iff ``2q - m* > 2`` (lattice sum versus the
    planar integral of ``r^{m* - 2q} r dr``); a table of finite support
    always qualifies.  Outside ``alpha in (1/2, 1)`` the verdict is
    ``inconclusive``.
    """
    if not sigma0 > max(0.0, 1.0 - s) or not eps0 > 0:
        raise ValueError(
            f"hypothesis parameters out of range: need sigma0 > max(0, 1 - s) = "
            f"{max(0.0, 1.0 - s)} and eps0 > 0, got sigma0={sigma0}, eps0={eps0}"
        )
    if K < 4:
        raise ValueError(f"truncation radius K must be >= 4, got {K}")
    m = trace_exponent(s, alpha, sigma0, eps0)

    r = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    r2 = (k1**2 + k2**2).astype(float)
    inside = (r2 > 0) & (r2 <= K * K)
    g = spectrum.amplitude(k1, k2)
    trace = float(np.sum(np.where(inside, r2 ** (m / 2) * g**2, 0.0)))

    if spectrum.kind == "power-law":
        cond = bool(spectrum.is_zero or 2 * spectrum.q - m > 2)
    else:
        cond = None
    ok = cond if cond is not None else math.isfinite(spectrum.support_radius)
    if not 0.5 < alpha < 1.0:
        verdict = "inconclusive"
    else:
        verdict = "admissible" if ok else "inadmissible"
    inputs = {
        "kind": spectrum.kind,
        "sigma": spectrum.sigma if spectrum.kind == "power-law" else None,
        "q": spectrum.q if spectrum.kind == "power-law" else None,
        "table_modes": len(spectrum.table) if spectrum.table else None,
        "s": s,
        "alpha": alpha,
        "sigma0": sigma0,
        "eps0": eps0,
        "K": K,
    }
    return E1Report(m, trace, verdict, cond, {k: v for k, v in inputs.items() if v is not None})


# --------------------------------------------------------------------------
# Wiener realizations


def dyadic_level(bin_width: float, dt: float) -> int:
    """L with bin_width = 2**L * dt, or ValueError naming both values."""
    if dt <= 0 or bin_width <= 0:
        raise ValueError(f"time step dt={dt} and bin width {bin_width} must be positive")
    ratio = bin_width / dt
    L = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if L < 0 or L > 30 or not math.isclose(2.0**L, ratio, rel_tol=1e-9, abs_tol=0.0):
        raise ValueError(
            f"time step dt={dt} must divide the Wiener bin width {bin_width} "
            f"by a power of two"
        )
    return L


def _bridge(
    prefix: np.ndarray, scale: np.ndarray, total: np.ndarray, bin_index: int, level: int, bin_width: float
) -> np.ndarray:
    """Dyadic Brownian-bridge refinement of one bin into 2**level sub-increments.

    ``total`` has shape (..., M); returns shape (2**level, ..., M).  The
    midpoint at depth l and absolute interval index j is keyed by (l, j),
    so values at shared points agree across refinement levels.
    """
    pts = np.stack([np.zeros_like(total), total])
    for lvl in range(1, level + 1):
        cnt = 1 << (lvl - 1)
        length = bin_width / cnt
        j = np.arange(cnt, dtype=np.int64) + np.int64(bin_index) * cnt
        z, _ = normal_pair(prefix[None, ...], lvl, j.reshape((cnt,) + (1,) * prefix.ndim))
        mid = 0.5 * (pts[:-1] + pts[1:]) + np.sqrt(length / 4.0) * scale * z.reshape(
            (cnt,) + (1,) * (total.ndim - prefix.ndim) + prefix.shape
        )
        new = np.empty((2 * cnt + 1,) + total.shape)
        new[0::2] = pts
        new[1::2] = mid
        pts = new
    return np.diff(pts, axis=0)


@dataclass(frozen=True)
class WienerRealization:
    """Two-sided Wiener path W(t) = sum_k (a_k(t) cos-mode + b_k(t) sin-mode).

    Increments live on bins ``[j*bin_width, (j+1)*bin_width)`` indexed by
    absolute bin ``j + offset_bins``; shifting only moves the offset.
    Scalar companion paths w_1, w_2, ... (unit variance rate) share the
    seed and the bin grid and serve multiplicative noise.
    """

    seed: int
    bin_width: float
    spectrum: CovarianceSpectrum = field(default_factory=CovarianceSpectrum)
    offset_bins: int = 0

    def __post_init__(self) -> None:
        if not (0 <= int(self.seed) <= _MASK64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.bin_width > 0:
            raise ValueError(f"bin width must be positive, got {self.bin_width}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "offset_bins", int(self.offset_bins))

    @property
    def origin_offset(self) -> float:
        return self.offset_bins * self.bin_width

    def shift(self, r: float) -> "WienerRealization":
        """The shifted path t -> W(t + r) - W(r); r must be a whole number of bins."""
        j = round(r / self.bin_width)
        if not math.isclose(j * self.bin_width, r, rel_tol=1e-12, abs_tol=1e-12 * self.bin_width):
            raise ValueError(f"shift must align with the bin grid (r={r}, bin width {self.bin_width})")
        return replace(self, offset_bins=self.offset_bins + j)

    def bin_of(self, t: float) -> int:
        """Local bin index of a bin-aligned time t."""
        j = round(t / self.bin_width)
        if not math.isclose(j * self.bin_width, t, rel_tol=1e-12, abs_tol=1e-12 * self.bin_width):
            raise ValueError(f"time {t} is not aligned with bin width {self.bin_width}")
        return j

    # -- mode increments ---------------------------------------------------

    def _prefix(self, stream: int, kmax: int) -> np.ndarray:
        return _mode_prefix(self.seed, stream, kmax)

    def bin_components(self, kmax: int, bins) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) increments over local bins for all canonical modes of the kmax box.

        ``bins`` may be an int or an integer array; output shape is
        ``shape(bins) + (M,)``.
        """
        bins = np.asarray(bins, dtype=np.int64) + np.int64(self.offset_bins)
        pre = self._prefix(Stream.INCREMENT, kmax)
        za, zb = normal_pair(pre, bins[..., None])
        sd = self.spectrum.canonical_amplitudes(kmax) * math.sqrt(self.bin_width)
        return sd * za, sd * zb

    def increment(self, mode: tuple[int, int], bin: int) -> tuple[float, float]:
        """(a, b) increment of one mode over one local bin."""
        k1, k2 = int(mode[0]), int(mode[1])
        if k1 == 0 and k2 == 0:
            raise ValueError("noise has zero mean mode")
        sign = 1.0
        if not (k2 > 0 or (k2 == 0 and k1 > 0)):
            k1, k2, sign = -k1, -k2, -1.0
        pre = keyed_hash(self.seed, Stream.INCREMENT, k1, k2)
        za, zb = normal_pair(pre, np.int64(bin + self.offset_bins))
        sd = float(self.spectrum.amplitude(k1, k2)) * math.sqrt(self.bin_width)
        # the partner -k has the same cosine component and opposite sine component
        return float(sd * za), float(sign * sd * zb)

    def sub_components(self, kmax: int, bin: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) over the 2**level equal sub-intervals of one local bin, shape (2**level, M)."""
        a, b = self.bin_components(kmax, bin)
        if level == 0:
            return a[None], b[None]
        absbin = bin + self.offset_bins
        g = self.spectrum.canonical_amplitudes(kmax)
        pre = self._prefix(Stream.BRIDGE, kmax)
        pre2 = np.stack([pre, _mix_const(pre, 0xA5A5)])
        tot = np.stack([a, b])
        inc = _bridge(pre2, g, tot, absbin, level, self.bin_width)
        return inc[:, 0], inc[:, 1]

    def mode_values(self, kmax: int, t: float, level: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) of W(t) for all canonical modes; t on the level-``level`` dyadic grid."""
        return self._value(t, level, lambda j: self.bin_components(kmax, j),
                           lambda j, L: self.sub_components(kmax, j, L))

    def field_value(self, grid: TorusGrid, t: float, level: int = 0) -> np.ndarray:
        """W(t) as a stored spectral array on ``grid``."""
        a, b = self.mode_values(grid.kmax, t, level)
        return mode_layout(grid).to_coeffs(a, b)

    def lattice_code(self, dt: float) -> int:
        """Key for the time lattice of spacing dt: L for bin/2**L, -M for M bins."""
        ratio = dt / self.bin_width
        M = round(ratio)
        if M >= 2 and math.isclose(M, ratio, rel_tol=1e-9):
            return -M
        return dyadic_level(self.bin_width, dt)

    def window_components(self, kmax: int, dt: float, start: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) increments over local steps [start+i, start+i+1) * dt, shape (count, M)."""
        return self._window(
            dt, start, count,
            lambda j: self.bin_components(kmax, j),
            lambda j, L: self.sub_components(kmax, j, L),
        )

    def window_scalars(self, m: int, dt: float, start: int, count: int) -> np.ndarray:
        return self._window(
            dt, start, count,
            lambda j: (self.scalar_bins(m, j),),
            lambda j, L: (self.scalar_sub(m, j, L),),
        )[0]

    def _window(self, dt, start, count, whole, sub):
        code = self.lattice_code(dt)
        if code < 0:
            M = -code
            parts = whole(np.arange(start * M, (start + count) * M))
            return tuple(p.reshape((count, M) + p.shape[1:]).sum(axis=1) for p in parts)
        if code == 0:
            return tuple(whole(np.arange(start, start + count)))
        per = 1 << code
        chunks: list[tuple[np.ndarray, ...]] = []
        for j in range(start // per, (start + count - 1) // per + 1):
            lo = max(start, j * per) - j * per
            hi = min(start + count, (j + 1) * per) - j * per
            chunks.append(tuple(p[lo:hi] for p in sub(j, code)))
        return tuple(np.concatenate(c) for c in zip(*chunks))

    # -- scalar companions -------------------------------------------------

    def scalar_bins(self, m: int, bins) -> np.ndarray:
        """Increments of w_1..w_m over local bins, shape shape(bins) + (m,)."""
        bins = np.asarray(bins, dtype=np.int64) + np.int64(self.offset_bins)
        pre = keyed_hash(self.seed, Stream.SCALAR, np.arange(1, m + 1, dtype=np.int64))
        z, _ = normal_pair(pre, bins[..., None])
        return math.sqrt(self.bin_width) * z

    def scalar_sub(self, m: int, bin: int, level: int) -> np.ndarray:
        tot = self.scalar_bins(m, bin)
        if level == 0:
            return tot[None]
        pre = keyed_hash(self.seed, Stream.SCALAR_BRIDGE, np.arange(1, m + 1, dtype=np.int64))
        return _bridge(pre, np.ones(m), tot, bin + self.offset_bins, level, self.bin_width)

    def scalar_value(self, m: int, t: float, level: int = 0) -> np.ndarray:
        """(w_1(t), ..., w_m(t)) with w(0) = 0."""
        v = self._value(t, level, lambda j: (self.scalar_bins(m, j),),
                        lambda j, L: (self.scalar_sub(m, j, L),))
        return v[0]

    def _value(self, t, level, whole, sub):
        per = 1 << level
        steps = t * per / self.bin_width
        J = round(steps)
        if not math.isclose(J, steps, rel_tol=1e-12, abs_tol=1e-9):
            raise ValueError(f"time {t} is not on the dyadic grid of level {level}")
        lo, hi = min(0, J), max(0, J)
        # whole bins first, then partial bins at either end
        sums = [p.sum(axis=0) for p in whole(np.arange(-(-lo // per), hi // per))]
        if hi > lo:
            for j in sorted({lo // per, (hi - 1) // per}):
                s0 = max(lo, j * per) - j * per
                s1 = min(hi, (j + 1) * per) - j * per
                if s1 - s0 < per:
                    sums = [a + p[s0:s1].sum(axis=0) for a, p in zip(sums, sub(j, level))]
        sign = 1.0 if J >= 0 else -1.0
        return tuple(sign * s for s in sums)


def _mix_const(h: np.ndarray, c: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix(h ^ np.uint64(c))


@lru_cache(maxsize=64)
def _mode_prefix(seed: int, stream: int, kmax: int) -> np.ndarray:
    k1, k2 = canonical_modes(kmax)
    h = keyed_hash(seed, stream, k1, k2)
    h.flags.writeable = False
    return h
