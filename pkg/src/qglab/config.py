"""
Run configuration: a TOML document with ``[equation]``, ``[discretization]``,
``[experiment]`` and ``[output]`` sections plus a top-level ``seed``.

Equation and discretization keys may also be written at top level; unknown
keys are rejected.  Parsing materializes every default, so the echoed
configuration fully determines a run.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dynamics import FlowConfig
from .noise import CovarianceSpectrum, default_sigma0, default_spectrum, dyadic_level, trace_exponent
from .spectral import TorusGrid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = (
    "simulate",
    "pullback",
    "sync",
    "absorb",
    "decay",
    "semicontinuity",
    "check-e1",
    "ou-diag",
    "positivity",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and the violated rule."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpectrumConfig(_Strict):
    kind: Literal["power-law", "table"] = "power-law"
    sigma: float = Field(0.1, ge=0)
    q: float | None = None
    # rows of (k1, k2, amplitude)
    table: list[tuple[int, int, float]] | None = None

    @model_validator(mode="after")
    def _table_needed(self) -> "SpectrumConfig":
        if self.kind == "table" and not self.table:
            raise ValueError("table spectrum needs per-mode amplitudes in 'table'")
        return self


class EquationConfig(_Strict):
    alpha: float = 0.75
    kappa: float = Field(1.0, gt=0)
    gamma: float | None = Field(None, ge=0)
    noise: Literal["none", "additive", "multiplicative"] = "none"
    eps: float = Field(1.0, ge=0)
    b: list[float] = Field(default_factory=list)
    spectrum: SpectrumConfig = Field(default_factory=SpectrumConfig)
    # parameters of the admissibility check that fixes the default spectral exponent
    s: float = 1.0
    sigma0: float | None = None
    eps0: float = Field(0.1, gt=0)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {v}")
        return v


class DiscretizationConfig(_Strict):
    n: int = 64
    dt: float = Field(1e-3, gt=0)
    dealias_fraction: float = Field(2.0 / 3.0, gt=0, le=1)
    integrator: Literal["imex-cnab", "etd1", "etd2"] = "imex-cnab"
    bin_width: float | None = Field(None, gt=0)
    anchor_period: float = Field(1.0, gt=0)

    @field_validator("n")
    @classmethod
    def _even(cls, v: int) -> int:
        if v < 8 or v % 2:
            raise ValueError(f"n must be an even integer >= 8, got {v}")
        return v


class OutputConfig(_Strict):
    directory: str = "runs"
    stride: int = Field(10, ge=1)
    snapshots: bool = False


# --------------------------------------------------------------------------
# Driver parameter blocks


class SimulateParams(_Strict):
    kind: Literal["simulate"] = "simulate"
    t_start: float = 0.0
    t_end: float = 1.0
    init_norm: float = Field(1.0, ge=0)
    init_s: float = 1.0


class PullbackParams(_Strict):
    kind: Literal["pullback"] = "pullback"
    t0_schedule: list[float] = Field(default_factory=lambda: [-2.5, -5.0, -7.5, -10.0, -12.5, -15.0])
    eval_time: float = 0.0
    norm_order: float = 1.0
    n_theta0: int = Field(2, ge=1)
    init_norm: float = Field(1.0, ge=0)
    tol: float = Field(1e-6, gt=0)


class SyncParams(_Strict):
    kind: Literal["sync"] = "sync"
    horizon: float = Field(4.0, gt=0)
    t0: float = 0.0
    init_norm: float = Field(1.0, gt=0)
    n_seeds: int = Field(1, ge=1)
    min_pass_fraction: float = Field(0.9, gt=0, le=1)


class AbsorbParams(_Strict):
    kind: Literal["absorb"] = "absorb"
    rho: float = Field(1.0, ge=0)
    t0_schedule: list[float] = Field(default_factory=lambda: [-15.0, -20.0, -25.0])
    s: float = 1.0
    n_trig: int = Field(2, ge=0)
    n_random: int = Field(2, ge=0)
    delta: float | None = Field(None, gt=0)


class DecayParams(_Strict):
    kind: Literal["decay"] = "decay"
    p: float = Field(2.0, ge=2)
    horizon: float = Field(2.0, gt=0)
    t0: float = 0.0
    init_norm: float = Field(3.0, ge=0)
    n_seeds: int = Field(1, ge=1)


class SemicontinuityParams(_Strict):
    kind: Literal["semicontinuity"] = "semicontinuity"
    eps_schedule: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    depth: float = Field(5.0, gt=0)
    n_theta0: int = Field(2, ge=1)
    init_norm: float = Field(1.0, ge=0)
    s: float = 1.0
    slack: float = Field(0.05, ge=0)
    ratio_max: float = Field(0.1, gt=0)


class CheckE1Params(_Strict):
    kind: Literal["check-e1"] = "check-e1"
    K: int = Field(64, ge=4)


class OUDiagParams(_Strict):
    kind: Literal["ou-diag"] = "ou-diag"
    m: float = 1.0
    k_pow: int = Field(2, ge=1)
    horizon: float = Field(100.0, gt=1)
    sample_dt: float | None = Field(None, gt=0)
    n_ensemble: int = Field(2000, ge=1)
    tol: float = Field(0.05, gt=0)


class PositivityParams(_Strict):
    kind: Literal["positivity"] = "positivity"
    p_values: list[float] = Field(default_factory=lambda: [3.0, 4.0, 7.0])
    n_fields: int = Field(100, ge=1)
    init_norm: float = Field(1.0, gt=0)
    tol: float = Field(1e-8, ge=0)

    @field_validator("p_values")
    @classmethod
    def _p_range(cls, v: list[float]) -> list[float]:
        for p in v:
            if not 2 < p < math.inf:
                raise ValueError(f"positivity exponents must lie in (2, inf), got {p}")
        return v


PARAMS: dict[str, type[_Strict]] = {
    "simulate": SimulateParams,
    "pullback": PullbackParams,
    "sync": SyncParams,
    "absorb": AbsorbParams,
    "decay": DecayParams,
    "semicontinuity": SemicontinuityParams,
    "check-e1": CheckE1Params,
    "ou-diag": OUDiagParams,
    "positivity": PositivityParams,
}


class RunConfig(_Strict):
    seed: int = Field(0, ge=0)
    equation: EquationConfig = Field(default_factory=EquationConfig)
    discretization: DiscretizationConfig = Field(default_factory=DiscretizationConfig)
    experiment: dict[str, Any] = Field(default_factory=lambda: {"kind": "simulate"})
    output: OutputConfig = Field(default_factory=OutputConfig)
    override_subcritical: bool = False

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    def params(self) -> _Strict:
        return PARAMS[self.kind].model_validate(self.experiment)

    def flow_config(self, **changes) -> FlowConfig:
        eq, dz = self.equation, self.discretization
        fc = FlowConfig(
            grid=TorusGrid(dz.n, dz.dealias_fraction),
            alpha=eq.alpha,
            kappa=eq.kappa,
            dt=dz.dt,
            integrator=dz.integrator,
            noise_mode=eq.noise,
            gamma=eq.gamma,
            spectrum=self.spectrum(),
            b=tuple(eq.b),
            eps=eq.eps,
            bin_width=dz.bin_width,
            anchor_period=dz.anchor_period,
            allow_supercritical=self.override_subcritical,
        )
        return fc.with_(**changes) if changes else fc

    def spectrum(self) -> CovarianceSpectrum:
        sp = self.equation.spectrum
        if sp.kind == "table":
            return CovarianceSpectrum("table", table={(a, b): g for a, b, g in sp.table})
        return CovarianceSpectrum("power-law", sigma=sp.sigma, q=sp.q)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def semantic(self) -> dict:
        d = self.echo()
        d["output"].pop("directory")
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_EQUATION_KEYS = set(EquationConfig.model_fields)
_DISC_KEYS = set(DiscretizationConfig.model_fields)


def _lift_flat(raw: dict) -> dict:
    """Move top-level equation/discretization keys into their sections."""
    out = dict(raw)
    for section, keys in (("equation", _EQUATION_KEYS), ("discretization", _DISC_KEYS)):
        flat = {k: out.pop(k) for k in list(out) if k in keys}
        if flat:
            block = dict(out.get(section, {}))
            for k, v in flat.items():
                if k in block:
                    raise ConfigError(f"{section}.{k}: given both at top level and in [{section}]")
                block[k] = v
            out[section] = block
    return out


def _format_error(err: ValidationError, prefix: str = "") -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        msg = e["msg"]
        if e["type"] == "extra_forbidden":
            msg = "unknown key"
        parts.append(f"{prefix}{loc}: {msg}")
    return "; ".join(parts)


def _materialize(raw: dict) -> dict:
    """Fill derived defaults into a dump of an already validated config."""
    eq = raw["equation"]
    if eq["gamma"] is None:
        eq["gamma"] = 10.0 * eq["kappa"]
    if eq["sigma0"] is None:
        eq["sigma0"] = default_sigma0(eq["s"])
    spec = eq["spectrum"]
    if spec["kind"] == "power-law" and spec["q"] is None:
        spec["q"] = default_spectrum(eq["s"], eq["alpha"], eq["sigma0"], eq["eps0"]).q
    dz = raw["discretization"]
    if dz["bin_width"] is None:
        dz["bin_width"] = dz["dt"]
    return raw


def parse_config(
    text: str,
    *,
    seed: int | None = None,
    experiment: str | None = None,
    override_subcritical: bool = False,
    output_dir: str | None = None,
) -> RunConfig:
    """Parse and validate a TOML run configuration; raises :class:`ConfigError`.

    ``experiment`` (the CLI subcommand) selects the driver when the document
    does not; a document naming a different driver is rejected.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed configuration: {e}") from None
    raw = _lift_flat(raw)

    exp = raw.get("experiment", {})
    if isinstance(exp, str):
        exp = {"kind": exp}
    if not isinstance(exp, dict):
        raise ConfigError("experiment: expected a driver name or a table")
    exp = dict(exp)
    kind = exp.get("kind", experiment or "simulate")
    if kind not in PARAMS:
        raise ConfigError(f"experiment.kind: unknown driver {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    if experiment is not None and kind != experiment:
        raise ConfigError(f"experiment.kind: document configures {kind!r} but the command is {experiment!r}")
    try:
        params = PARAMS[kind].model_validate({**exp, "kind": kind})
    except ValidationError as e:
        raise ConfigError(_format_error(e, "experiment.")) from None
    raw["experiment"] = params.model_dump(mode="json")

    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw.setdefault("output", {})
        raw["output"] = {**raw["output"], "directory": output_dir}
    if override_subcritical:
        raw["override_subcritical"] = True

    try:
        cfg = RunConfig.model_validate(raw)
        cfg = RunConfig.model_validate(_materialize(cfg.model_dump(mode="json")))
    except ValidationError as e:
        raise ConfigError(_format_error(e)) from None

    eq, dz = cfg.equation, cfg.discretization
    if eq.alpha <= 0.5 and not cfg.override_subcritical:
        raise ConfigError("equation.alpha: subcritical regime requires alpha > 1/2")
    if eq.sigma0 <= max(0.0, 1.0 - eq.s):
        raise ConfigError(f"equation.sigma0: must exceed max(0, 1 - s) = {max(0.0, 1.0 - eq.s)}, got {eq.sigma0}")
    try:
        dyadic_level(dz.bin_width, dz.dt)
    except ValueError as e:
        raise ConfigError(f"discretization.dt: {e}") from None
    if eq.noise == "multiplicative" and not eq.b:
        raise ConfigError("equation.b: multiplicative noise needs at least one coefficient")
    try:
        cfg.flow_config()
    except ValueError as e:
        raise ConfigError(f"config: {e}") from None
    return cfg


def load_config(path: str, **kw) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e.strerror}") from None
    return parse_config(text, **kw)


def e1_exponent(cfg: RunConfig) -> float:
    eq = cfg.equation
    return trace_exponent(eq.s, eq.alpha, eq.sigma0, eq.eps0)
