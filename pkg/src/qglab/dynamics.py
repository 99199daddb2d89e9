"""
Pathwise integration of the stochastic QG equation

    d theta + (kappa Lambda^{2 alpha} theta + u . grad theta) dt = eps dW              (additive)
    d theta + (kappa Lambda^{2 alpha} theta + u . grad theta) dt + sum_j b_j theta o dw_j = 0   (multiplicative)

through the transformed random PDEs.

Additive noise uses v = theta - eps z with z the OU process of ``ou.py``, so
that dv/dt + A v + u(theta) . grad theta = gamma eps z.  Multiplicative
noise uses v = beta theta with beta = exp(sum_j b_j w_j), so that
dv/dt + A v + beta^{-1} u(v) . grad v = 0.

Every step is a map theta_J -> theta_{J+1} built from quantities keyed to the
absolute step index J: the transform is re-based at the start of each step,
and z is taken from an anchored chain (a stationary draw at each anchor time,
advanced exactly in between).  This makes the cocycle and shift identities
hold bit for bit, while theta itself stays the pathwise solution driven by W.
"""

from __future__ import annotations

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Literal

import numpy as np

from .noise import CovarianceSpectrum, WienerRealization, default_spectrum, dyadic_level, mode_layout
from .ou import OUParams, stationary_components, step_components
from .spectral import SpectralField, TorusGrid, nonlinear_coeffs, velocity_coeffs

Integrator = Literal["imex-cnab", "etd1", "etd2"]
NoiseMode = Literal["none", "additive", "multiplicative"]
INTEGRATORS = ("imex-cnab", "etd1", "etd2")
NOISE_MODES = ("none", "additive", "multiplicative")

CFL_LIMIT = 0.5
_RHO_CHUNK = 1024


class BlowUpError(RuntimeError):
    """Non-finite coefficients appeared; carries the simulation time of the failing step."""

    def __init__(self, time: float, detail: str = "") -> None:
        self.time = time
        super().__init__(f"blow-up detected at t={time:.6g}" + (f": {detail}" if detail else ""))


class StabilityWarning(UserWarning):
    pass


class SupercriticalWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FlowConfig:
    """Equation, noise and discretization parameters of one stochastic flow.

    ``eps`` scales the additive noise amplitude.  ``bin_width`` (default dt)
    must be dt times a power of two.  ``nonlinear=False`` drops u . grad theta
    (used for linear reference solutions).
    """

    grid: TorusGrid = field(default_factory=lambda: TorusGrid(64))
    alpha: float = 0.75
    kappa: float = 1.0
    dt: float = 1e-3
    integrator: Integrator = "imex-cnab"
    noise_mode: NoiseMode = "none"
    gamma: float | None = None
    spectrum: CovarianceSpectrum = field(default_factory=default_spectrum)
    b: tuple[float, ...] = ()
    eps: float = 1.0
    bin_width: float | None = None
    anchor_period: float = 1.0
    nonlinear: bool = True
    allow_supercritical: bool = False

    def __post_init__(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.alpha < 1:
            if not (self.allow_supercritical and 0 < self.alpha <= 1):
                raise ValueError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        if self.alpha <= 0.5:
            if not self.allow_supercritical:
                raise ValueError("subcritical regime requires alpha > 1/2")
            warnings.warn(
                f"alpha={self.alpha} is outside the subcritical regime alpha > 1/2",
                SupercriticalWarning,
                stacklevel=3,
            )
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.bin_width is None:
            object.__setattr__(self, "bin_width", self.dt)
        dyadic_level(self.bin_width, self.dt)
        if self.gamma is None:
            object.__setattr__(self, "gamma", 10.0 * self.kappa)
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if not all(math.isfinite(x) for x in self.b):
            raise ValueError("multiplicative coefficients b must be finite")
        ab = self.anchor_period / self.bin_width
        if round(ab) < 1 or not math.isclose(round(ab), ab, rel_tol=1e-9):
            raise ValueError(
                f"anchor period {self.anchor_period} must be a whole number of bins of width {self.bin_width}"
            )

    @property
    def lambda1(self) -> float:
        return self.kappa

    @property
    def level(self) -> int:
        return dyadic_level(self.bin_width, self.dt)

    @property
    def anchor_bins(self) -> int:
        return int(round(self.anchor_period / self.bin_width))

    @property
    def ou_params(self) -> OUParams:
        return OUParams(self.kappa, self.alpha, self.gamma, self.spectrum)

    @property
    def additive_active(self) -> bool:
        return self.noise_mode == "additive" and self.eps > 0 and not self.spectrum.is_zero

    @property
    def multiplicative_active(self) -> bool:
        return self.noise_mode == "multiplicative" and any(x != 0 for x in self.b)

    def linear_symbol(self) -> np.ndarray:
        return self.kappa * self.grid.multiplier(2 * self.alpha)

    def path(self, seed: int) -> WienerRealization:
        return WienerRealization(seed, self.bin_width, self.spectrum)

    def with_(self, **kw) -> "FlowConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# Step coefficients


def _phi1(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 1e-8, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1.0 - x / 2)


def _phi2(x: np.ndarray) -> np.ndarray:
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    direct = (np.expm1(-xs) + xs) / xs**2
    series = 0.5 - x / 6 + x**2 / 24 - x**3 / 120 + x**4 / 720
    return np.where(small, series, direct)


@dataclass(frozen=True)
class _Coefficients:
    E: np.ndarray
    p1: np.ndarray  # dt * phi1
    p2: np.ndarray  # dt * phi2
    cn: np.ndarray  # (1 - dt L/2) / (1 + dt L/2)
    cnd: np.ndarray  # dt / (1 + dt L/2)
    L: np.ndarray


@lru_cache(maxsize=64)
def _coefficients(cfg: FlowConfig) -> _Coefficients:
    L = cfg.linear_symbol()
    x = L * cfg.dt
    den = 1.0 + 0.5 * x
    return _Coefficients(
        np.exp(-x), cfg.dt * _phi1(x), cfg.dt * _phi2(x), (1.0 - 0.5 * x) / den, cfg.dt / den, L
    )


# --------------------------------------------------------------------------
# State


@dataclass(frozen=True, eq=False)
class History:
    """Previous-step data required by the two-step integrator."""

    nonlinear: np.ndarray
    rho: float


@dataclass(frozen=True, eq=False)
class FlowState:
    """theta at ``time`` plus the multistep history (None for one-step methods and fresh starts).

    The transformed variables are derived on demand with :func:`transformed`.
    """

    time: float
    theta: SpectralField
    history: History | None = None


# --------------------------------------------------------------------------
# Driver: per-(config, path) caches of z chains and scalar increments


class _Driver:
    def __init__(self, cfg: FlowConfig, path: WienerRealization) -> None:
        if not math.isclose(path.bin_width, cfg.bin_width, rel_tol=1e-12):
            raise ValueError(
                f"path bin width {path.bin_width} differs from configured bin width {cfg.bin_width}"
            )
        self.cfg = cfg
        self.path = path
        self.grid = cfg.grid
        self.co = _coefficients(cfg)
        self.per = 1 << cfg.level
        self.block = cfg.anchor_bins * self.per
        self.off = path.offset_bins * self.per
        self.lay = mode_layout(cfg.grid)
        self._z: OrderedDict[int, tuple[np.ndarray, np.ndarray]] = OrderedDict()
        self._rho: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    # z chain ---------------------------------------------------------------

    def _z_block(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            hit = self._z.get(b)
            if hit is not None:
                self._z.move_to_end(b)
                return hit
        cfg = self.cfg
        start = b * self.block - self.off
        za, zb = stationary_components(cfg.ou_params, self.path, self.grid.kmax, start * cfg.dt)
        chain = step_components(za, zb, cfg.ou_params, self.path, self.grid.kmax, cfg.dt, start, self.block)
        with self._lock:
            self._z[b] = chain
            while len(self._z) > 3:
                self._z.popitem(last=False)
        return chain

    def z_pair(self, J: int) -> tuple[np.ndarray, np.ndarray]:
        """z at steps J and J+1 from the anchored chain containing step J."""
        b, i = divmod(J + self.off, self.block)
        ca, cb = self._z_block(b)
        return self.lay.to_coeffs(ca[i], cb[i]), self.lay.to_coeffs(ca[i + 1], cb[i + 1])

    def z_at(self, J: int) -> np.ndarray:
        return self.z_pair(J)[0]

    # multiplicative factor -----------------------------------------------

    def rho(self, J: int) -> float:
        """exp(-sum_j b_j dw_j) over step J."""
        c, i = divmod(J + self.off, _RHO_CHUNK)
        with self._lock:
            hit = self._rho.get(c)
        if hit is None:
            b = self.cfg.b
            dw = self.path.window_scalars(len(b), self.cfg.dt, c * _RHO_CHUNK - self.off, _RHO_CHUNK)
            s = b[0] * dw[:, 0]
            for j in range(1, len(b)):
                s = s + b[j] * dw[:, j]
            hit = np.exp(-s)
            with self._lock:
                self._rho[c] = hit
                while len(self._rho) > 4:
                    self._rho.popitem(last=False)
        return float(hit[i])

    # stepping ---------------------------------------------------------------

    def _nl(self, th: np.ndarray) -> np.ndarray:
        if not self.cfg.nonlinear:
            return np.zeros_like(th)
        return nonlinear_coeffs(self.grid, th)

    def step(self, th: np.ndarray, J: int, hist: History | None, eps) -> tuple[np.ndarray, History | None]:
        cfg, co = self.cfg, self.co
        method = cfg.integrator
        if method == "imex-cnab" and hist is None:
            method = "etd1"
        N0 = self._nl(th)
        if cfg.noise_mode == "additive" and cfg.additive_active:
            zJ, zJ1 = self.z_pair(J)
            ez0 = eps * zJ
            ez1 = eps * zJ1
            v = th - ez0
            F0 = cfg.gamma * ez0 - N0
            if method == "etd1":
                v1 = co.E * v + co.p1 * F0
            elif method == "etd2":
                a = co.E * v + co.p1 * F0
                Fa = cfg.gamma * ez1 - self._nl(a + ez1)
                v1 = a + co.p2 * (Fa - F0)
            else:
                v1 = co.cn * v + co.cnd * (-1.5 * N0 + 0.5 * hist.nonlinear + cfg.gamma * 0.5 * (ez0 + ez1))
            out = v1 + ez1
            return out, History(N0, 1.0) if cfg.integrator == "imex-cnab" else None
        rho = self.rho(J) if cfg.multiplicative_active else 1.0
        if method == "etd1":
            v1 = co.E * th - co.p1 * N0
        elif method == "etd2":
            a = co.E * th - co.p1 * N0
            v1 = a + co.p2 * (N0 - rho * self._nl(a))
        else:
            v1 = co.cn * th + co.cnd * (-1.5 * N0 + 0.5 * (hist.rho * hist.nonlinear))
        out = rho * v1 if rho != 1.0 else v1
        return out, History(N0, rho) if cfg.integrator == "imex-cnab" else None

    def _cfl(self, th: np.ndarray, J: int) -> bool:
        """Warn when the advective CFL number exceeds the limit; True if it did."""
        u1, u2 = velocity_coeffs(self.grid, th)
        umax = max(np.abs(self.grid.to_physical(u1)).max(), np.abs(self.grid.to_physical(u2)).max())
        c = self.cfg.dt * umax * self.grid.kmax * math.sqrt(2)
        if c > CFL_LIMIT:
            warnings.warn(
                f"advective CFL number {c:.3g} exceeds {CFL_LIMIT} at t={J * self.cfg.dt:.6g}; "
                f"consider reducing dt={self.cfg.dt}",
                StabilityWarning,
                stacklevel=4,
            )
            return True
        return False

    def run(
        self,
        th: np.ndarray,
        j0: int,
        j1: int,
        hist: History | None = None,
        eps=None,
        observe: Callable[[int, np.ndarray], None] | None = None,
        stride: int = 1,
    ) -> tuple[np.ndarray, History | None]:
        if eps is None:
            eps = self.cfg.eps
        dt = self.cfg.dt
        warned = False
        for J in range(j0, j1):
            if not warned and (J - j0) % 256 == 0 and self.cfg.nonlinear:
                warned = self._cfl(th, J)
            th, hist = self.step(th, J, hist, eps)
            if not np.isfinite(th).all():
                raise BlowUpError((J + 1) * dt, f"non-finite coefficients after step {J + 1}")
            if observe is not None and (J + 1 - j0) % stride == 0:
                observe(J + 1, th)
        return th, hist


_driver_lock = threading.Lock()


@lru_cache(maxsize=32)
def _cached_driver(cfg: FlowConfig, path: WienerRealization) -> _Driver:
    return _Driver(cfg, path)


def driver(cfg: FlowConfig, path: WienerRealization) -> _Driver:
    with _driver_lock:
        return _cached_driver(cfg, path)


def step_index(t: float, dt: float) -> int:
    s = t / dt
    j = round(s)
    if not math.isclose(j, s, rel_tol=1e-12, abs_tol=1e-9):
        raise ValueError(f"time {t} is not aligned with the step dt={dt}")
    return j


# --------------------------------------------------------------------------
# Public flow interface


def advance(
    state: FlowState,
    cfg: FlowConfig,
    path: WienerRealization,
    t: float,
    observe: Callable[[float, SpectralField], None] | None = None,
    stride: int = 1,
) -> FlowState:
    """Advance ``state`` to time t, carrying the integrator history."""
    d = driver(cfg, path)
    j0, j1 = step_index(state.time, cfg.dt), step_index(t, cfg.dt)
    if j1 < j0:
        raise ValueError(f"cannot advance backwards from t={state.time} to t={t}")
    hook = None
    if observe is not None:
        g = cfg.grid

        def hook(J: int, th: np.ndarray) -> None:
            observe(J * cfg.dt, SpectralField(g, th))

    th, hist = d.run(state.theta.coeffs, j0, j1, state.history, observe=hook, stride=stride)
    return FlowState(j1 * cfg.dt, SpectralField(cfg.grid, th), hist)


def step_additive(state: FlowState, cfg: FlowConfig, path: WienerRealization) -> FlowState:
    """One step of the v-equation; theta = v + eps z before and after."""
    if cfg.noise_mode != "additive":
        raise ValueError("step_additive requires noise_mode='additive'")
    return advance(state, cfg, path, state.time + cfg.dt)


def step_multiplicative(state: FlowState, cfg: FlowConfig, path: WienerRealization) -> FlowState:
    """One step of the beta-transformed equation; theta = beta^{-1} v before and after."""
    if cfg.noise_mode != "multiplicative":
        raise ValueError("step_multiplicative requires noise_mode='multiplicative'")
    return advance(state, cfg, path, state.time + cfg.dt)


def flow(
    cfg: FlowConfig, path: WienerRealization, r: float, t: float, theta0: SpectralField
) -> SpectralField:
    """S(t, r; omega) theta0 from a fresh start at r."""
    if t < r:
        raise ValueError(f"flow needs r <= t, got r={r}, t={t}")
    if theta0.grid != cfg.grid:
        raise ValueError("initial field lives on a different grid than the flow")
    return advance(FlowState(r, theta0), cfg, path, t).theta


def flow_batch(
    cfg: FlowConfig,
    path: WienerRealization,
    r: float,
    t: float,
    theta0: np.ndarray,
    eps=None,
    observe: Callable[[int, np.ndarray], None] | None = None,
    stride: int = 1,
) -> np.ndarray:
    """Array form of :func:`flow` for a stack of initial coefficient arrays sharing one path.

    ``eps`` may be an array broadcasting against the stack (one amplitude per member).
    """
    d = driver(cfg, path)
    th, _ = d.run(
        np.asarray(theta0, dtype=complex),
        step_index(r, cfg.dt),
        step_index(t, cfg.dt),
        eps=eps,
        observe=observe,
        stride=stride,
    )
    return th


def global_beta(cfg: FlowConfig, path: WienerRealization, t: float) -> float:
    """beta(t) = exp(sum_j b_j w_j(t)) with w(0) = 0."""
    if not cfg.b:
        return 1.0
    w = path.scalar_value(len(cfg.b), t, cfg.level)
    s = 0.0
    for bj, wj in zip(cfg.b, w):
        s = s + bj * wj
    return math.exp(s)


@dataclass(frozen=True, eq=False)
class Transformed:
    v: SpectralField
    z: SpectralField | None = None
    beta: float | None = None


def transformed(state: FlowState, cfg: FlowConfig, path: WienerRealization) -> Transformed:
    """Transformed variables at the state's time: (v, z) additive, (v, beta) multiplicative."""
    g = cfg.grid
    if cfg.noise_mode == "additive":
        z = driver(cfg, path).z_at(step_index(state.time, cfg.dt)) if cfg.additive_active else np.zeros(
            g.spectral_shape, complex
        )
        return Transformed(SpectralField(g, state.theta.coeffs - cfg.eps * z), SpectralField(g, z))
    if cfg.noise_mode == "multiplicative":
        beta = global_beta(cfg, path, state.time)
        return Transformed(state.theta * beta, beta=beta)
    return Transformed(state.theta)


def transform_coeffs(cfg: FlowConfig, path: WienerRealization, J: int, th: np.ndarray) -> np.ndarray:
    """v at absolute step J for a raw coefficient stack."""
    if cfg.noise_mode == "additive" and cfg.additive_active:
        return th - cfg.eps * driver(cfg, path).z_at(J)
    if cfg.noise_mode == "multiplicative" and cfg.b:
        return global_beta(cfg, path, J * cfg.dt) * th
    return th


# --------------------------------------------------------------------------
# Euler-Maruyama oracle on theta


def em_stability_bound(cfg: FlowConfig) -> float:
    """Largest dt for which explicit Euler is stable on the linear part."""
    return 2.0 / float(cfg.linear_symbol().max())


def _em_step(cfg, co, th, dW, dw):
    N = nonlinear_coeffs(cfg.grid, th) if cfg.nonlinear else 0.0
    out = th + cfg.dt * (-co.L * th - N)
    if cfg.noise_mode == "additive" and cfg.additive_active:
        out = out + cfg.eps * dW
    elif cfg.noise_mode == "multiplicative" and cfg.b:
        s = 0.0
        for bj, wj in zip(cfg.b, dw):
            s = s + bj * wj
        b2 = sum(bj * bj for bj in cfg.b)
        out = out + (0.5 * b2 * cfg.dt - s) * th
    return out


def em_oracle_step(
    theta: SpectralField, cfg: FlowConfig, path: WienerRealization, t: float
) -> SpectralField:
    """One explicit Euler-Maruyama step on theta over [t, t + dt] with the path's own increments.

    The Stratonovich multiplicative term enters through its Ito form
    ``-sum_j b_j theta dw_j + (1/2) sum_j b_j^2 theta dt``.
    """
    J = step_index(t, cfg.dt)
    co = _coefficients(cfg)
    dW = dw = None
    if cfg.noise_mode == "additive" and cfg.additive_active:
        a, b = path.window_components(cfg.grid.kmax, cfg.dt, J, 1)
        dW = mode_layout(cfg.grid).to_coeffs(a[0], b[0])
    elif cfg.noise_mode == "multiplicative" and cfg.b:
        dw = path.window_scalars(len(cfg.b), cfg.dt, J, 1)[0]
    out = _em_step(cfg, co, theta.coeffs, dW, dw)
    if not np.isfinite(out).all():
        raise BlowUpError(t + cfg.dt, "Euler-Maruyama step produced non-finite coefficients")
    return SpectralField(cfg.grid, out)


def em_flow(
    cfg: FlowConfig, path: WienerRealization, r: float, t: float, theta0: SpectralField, chunk: int = 512
) -> SpectralField:
    """Iterated Euler-Maruyama from r to t."""
    if cfg.dt > em_stability_bound(cfg):
        warnings.warn(
            f"dt={cfg.dt} exceeds the explicit stability bound {em_stability_bound(cfg):.3g}",
            StabilityWarning,
            stacklevel=2,
        )
    co = _coefficients(cfg)
    lay = mode_layout(cfg.grid)
    j0, j1 = step_index(r, cfg.dt), step_index(t, cfg.dt)
    th = theta0.coeffs
    J = j0
    while J < j1:
        n = min(chunk, j1 - J)
        dA = dB = dws = None
        if cfg.noise_mode == "additive" and cfg.additive_active:
            dA, dB = path.window_components(cfg.grid.kmax, cfg.dt, J, n)
        elif cfg.noise_mode == "multiplicative" and cfg.b:
            dws = path.window_scalars(len(cfg.b), cfg.dt, J, n)
        for i in range(n):
            dW = lay.to_coeffs(dA[i], dB[i]) if dA is not None else None
            th = _em_step(cfg, co, th, dW, None if dws is None else dws[i])
        if not np.isfinite(th).all():
            raise BlowUpError((J + n) * cfg.dt, "Euler-Maruyama run produced non-finite coefficients")
        J += n
    return SpectralField(cfg.grid, th)
