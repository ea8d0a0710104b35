"""Scenario runner: ``quaddrift <scenario> --config FILE [--out DIR] [--seed N]``.

Configs are flat ``key = value`` text.  Each scenario validates its
parameters, runs, and writes ``<scenario>.csv``, ``<scenario>.json``,
``<scenario>.gp`` (a gnuplot script) and ``config.txt`` into the output
directory.  Exit status: 0 success, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidInput, QuaddriftError
from .kernels import KernelSpec, TailLaw, coefficients, gamma_s, kernel_hat
from .moments import MomentProblem, lift_linear_invariant, linear_null_control, solve_moments
from .profiles import build_periodic_theta, build_sparse_theta_family
from .signals import ControlSignal, fit_step
from .simulate import drift_series, ibp_identity_check, measure_drift, simulate_nonlinear
from .synthesis import (
    elementary_drift_control,
    fixed_point_recover,
    odd_targets,
    physical_control,
)
from .system import example_spec, make_magic_infinite, make_magic_single

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
THREADS_ENV = "QUADDRIFT_THREADS"
EXAMPLE_ORDER = 0.75

SCENARIOS = ("kernel-spectrum", "drift-integer", "drift-fractional", "ibp-check",
             "moment-solve", "magic-steer", "infinite-recover", "cost-scaling")


class ConfigError(InvalidInput):
    code = "invalid-config"


# ------------------------------------------------------------------ config


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, dict):
        return ", ".join(f"{k}:{_fmt(x)}" for k, x in v.items())
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_modes(text: str) -> dict[int, float]:
    out = {}
    for item in text.split(","):
        if item.strip():
            k, v = item.split(":")
            out[int(k)] = float(v)
    return out


# name -> (parser, check or None, description)
_SCHEMA: dict[str, tuple[Callable[[str], Any], Callable[[Any], bool] | None, str]] = {
    "s": (float, lambda v: 0 < v < 1, "fractional order in (0, 1)"),
    "n": (int, lambda v: 0 <= v <= 4, "primitive order in [0, 4]"),
    "T": (float, lambda v: 0 < v <= 100, "horizon in (0, 100]"),
    "N": (int, lambda v: 1 <= v <= 1024, "Galerkin truncation in [1, 1024]"),
    "J": (int, lambda v: 1 <= v <= 10 ** 7, "explicit kernel terms in [1, 1e7]"),
    "dt": (float, lambda v: v >= 0, "time step (0 = automatic)"),
    "m": (int, lambda v: 0 <= v <= 4, "control regularity in [0, 4]"),
    "example": (int, lambda v: v in (1, 2, 3), "example nonlinearity 1, 2 or 3"),
    "variant": (str, lambda v: v in ("integer", "fractional"), "integer or fractional"),
    "amplitudes": (_parse_floats, lambda v: len(v) > 0 and all(0 < a <= 10 for a in v),
                   "positive amplitudes up to 10"),
    "frequency": (float, lambda v: 0 < v <= 1e3, "base control frequency in cycles per horizon"),
    "delta": (float, lambda v: 0 < v <= 10, "initial lost-mode size in (0, 10]"),
    "tol": (float, lambda v: 0 < v < 1, "relative tolerance in (0, 1)"),
    "xi": (_parse_floats, lambda v: len(v) > 0 and all(x > 0 for x in v), "positive frequencies"),
    "omegas": (_parse_floats, lambda v: all(x > 0 for x in v), "positive atom frequencies"),
    "count": (int, lambda v: 1 <= v <= 10 ** 4, "number of random samples"),
    "L": (float, lambda v: 0 < v <= 10, "plateau half-width in (0, 10]"),
    "K_max": (int, lambda v: 1 <= v <= 6, "number of odd targets in [1, 6]"),
    "refine": (int, lambda v: 1 <= v <= 64, "simulation refinement in [1, 64]"),
    "sign": (int, lambda v: v in (1, -1), "drift sign +1 or -1"),
    "z0": (_parse_modes, lambda v: all(k >= 0 for k in v), "initial modes as k:value pairs"),
    "cross_check": (_parse_bool, None, "run the time-domain simulation cross-check"),
    "verify": (_parse_bool, None, "simulate every synthesized control"),
    "seed": (int, lambda v: v >= 0, "nonnegative seed"),
    "out": (str, None, "output directory"),
}


@dataclass
class ScenarioConfig:
    """Typed scenario parameters with documented ranges (see ``_SCHEMA``)."""

    scenario: str
    s: float = 0.25
    n: int = 1
    T: float = 1.0
    N: int = 32
    J: int = 50
    dt: float = 0.0
    m: int = 1
    example: int = 1
    variant: str = "integer"
    amplitudes: tuple = (1e-1, 1e-2, 1e-3)
    frequency: float = 2.0
    delta: float = 1e-2
    tol: float = 1e-3
    xi: tuple = (1e2, 1e3, 1e4)
    omegas: tuple = (1e3, 1e4)
    count: int = 20
    L: float = 0.25
    K_max: int = 3
    refine: int = 4
    sign: int = 1
    z0: dict = field(default_factory=lambda: {0: 1.0, 3: 0.1})
    cross_check: bool = False
    verify: bool = False
    seed: int = 0
    out: str = "out"

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        for f in fields(self):
            if f.name == "scenario":
                continue
            _, check, doc = _SCHEMA[f.name]
            v = getattr(self, f.name)
            if check is not None and not check(v):
                raise ConfigError(f"{f.name} = {_fmt(v)} out of range: {doc}")
        if self.scenario == "drift-fractional" and self.example == 1:
            raise ConfigError("example 1 has an integer-order drift")
        if self.scenario == "drift-integer" and self.example == 2:
            raise ConfigError("example 2 has a fractional-order drift")
        if self.scenario == "magic-steer" and any(k > self.N for k in self.z0):
            raise ConfigError("z0 has modes beyond N")
        return self

    def to_text(self) -> str:
        lines = [f"scenario = {self.scenario}"]
        lines += [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)
                  if f.name != "scenario"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, scenario: str | None = None) -> "ScenarioConfig":
        values: dict[str, Any] = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected 'key = value'")
            key, val = (x.strip() for x in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {num}: duplicate key {key!r}")
            if key == "scenario":
                values[key] = val
                continue
            if key not in _SCHEMA:
                raise ConfigError(f"line {num}: unknown key {key!r}")
            try:
                values[key] = _SCHEMA[key][0](val)
            except ValueError as exc:
                raise ConfigError(f"line {num}: bad value for {key}: {exc}") from None
        if scenario is not None:
            if values.get("scenario", scenario) != scenario:
                raise ConfigError(f"config names scenario {values['scenario']!r}, not {scenario!r}")
            values["scenario"] = scenario
        if "scenario" not in values:
            raise ConfigError("no scenario given")
        return cls(**values).validate()

    @classmethod
    def from_file(cls, path: str | Path, scenario: str | None = None) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_text(text, scenario)


# ---------------------------------------------------------------- results


@dataclass
class ScenarioResult:
    name: str
    columns: tuple
    rows: list
    summary: dict
    plot: tuple = ()  # (x column, y column, log axes)
    config: ScenarioConfig | None = None


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from None
    if v < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    return v


def _sweep(fn: Callable, items: Sequence) -> list:
    """Ordered parallel map capped by the thread limit."""
    workers = min(thread_cap(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _dt(cfg: ScenarioConfig, default_steps: int = 4000) -> float:
    return fit_step(cfg.T, cfg.dt if cfg.dt > 0 else cfg.T / default_steps)


def _base_control(T: float, dt: float, freq: float) -> ControlSignal:
    return ControlSignal.from_function(
        lambda t: np.sin(math.pi * t / T) ** 2 * np.sin(2 * math.pi * freq * t / T), T, dt)


def _trig_control(rng: np.random.Generator, T: float, dt: float, terms: int = 6) -> ControlSignal:
    a = rng.standard_normal(terms) / np.arange(1, terms + 1)
    b = rng.standard_normal(terms) / np.arange(1, terms + 1)
    k = np.arange(1, terms + 1)

    def f(t):
        ph = np.outer(t, k) * math.pi / T
        return np.sin(ph) @ a + np.cos(ph) @ b

    return ControlSignal.from_function(f, T, dt)


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# --------------------------------------------------------------- scenarios


def _kernel_spectrum(cfg, rng):
    j = np.arange(1, cfg.J + 1, dtype=float)
    k = KernelSpec(j ** (1 - 4 * cfg.s), tail=TailLaw(cfg.s), asymptotic=(None, cfg.s, 0))
    g = gamma_s(cfg.s)
    xi = np.asarray(cfg.xi)
    kh = kernel_hat(k, xi)
    norm = xi ** (2 * cfg.s) * kh / 2
    rows = [(x, v, nv, g, abs(nv - g) / g) for x, v, nv in zip(xi, kh, norm)]
    return ScenarioResult("kernel-spectrum", ("xi", "khat", "normalized", "gamma", "rel_err"),
                          rows, {"gamma": g, "s": cfg.s, "J": cfg.J},
                          ("xi", "rel_err", True))


def _drift(cfg, rng, fractional: bool):
    variant = "fractional" if fractional else "integer"
    if cfg.example == 3:
        spec = example_spec(3, cfg.N, variant)
    else:
        spec = example_spec(cfg.example, cfg.N)
    dt = _dt(cfg)
    base = lift_linear_invariant(_base_control(cfg.T, dt, cfg.frequency), spec, cfg.T, cfg.m)
    n = cfg.n
    # examples 2 and 3 (fractional variant) have order s = 3/4
    s = EXAMPLE_ORDER if fractional else None

    def one(amp):
        u = amp * base
        rep = measure_drift(spec, u, cfg.delta * amp ** 2, n=n, s=s)
        second = measure_drift(spec, u, n=n, s=s, system="second_order")
        un = rep.un_hs_sq if fractional else rep.un_l2_sq
        return (amp, rep.drift, un, rep.coefficient, second.coefficient)

    rows = _sweep(one, list(cfg.amplitudes))
    amps = [r[0] for r in rows]
    drifts = [abs(r[1]) for r in rows]
    summary = {"example": cfg.example, "variant": variant, "n": n, "T": cfg.T,
               "coefficient_second_order": rows[0][4]}
    if fractional:
        c = coefficients(spec, 0, cfg.N).c
        j = np.arange(cfg.N - 1, cfg.N + 1, dtype=float)
        # parity-averaged envelope of c_j j^(4s+4n-1)
        summary["a_envelope"] = float(np.mean(c[-2:] * j ** (4 * s + 4 * n - 1)))
        summary["s"] = s
    else:
        summary["series_oracle"] = drift_series(coefficients(spec, 0, 100_000), n)
    if len(rows) > 1 and all(d > 0 for d in drifts):
        summary["slope"] = _slope(amps, drifts)
    cols = ("amplitude", "drift", "un_norm_sq", "ratio", "ratio_second_order")
    return ScenarioResult(f"drift-{variant}", cols, rows, summary, ("amplitude", "drift", True))


def _ibp_check(cfg, rng):
    spec = example_spec(cfg.example, max(cfg.N, 2), cfg.variant)
    k = KernelSpec(coefficients(spec, 0, cfg.J).c)
    dt = _dt(cfg, 2000)
    rows = []
    for i in range(cfg.count):
        u = _trig_control(rng, cfg.T, dt)
        for n in (1, 2):
            rows.append((i, n, ibp_identity_check(k, u, n)))
    worst = max(r[2] for r in rows)
    return ScenarioResult("ibp-check", ("sample", "n", "residual"), rows,
                          {"max_residual": worst, "J": cfg.J}, ("sample", "residual", False))


def _moment_solve(cfg, rng):
    d = rng.standard_normal(cfg.N) * np.exp(-0.5 * np.arange(cfg.N))
    sol = solve_moments(MomentProblem(d, cfg.T, cfg.m), _dt(cfg) if cfg.dt else None)
    u = sol.control
    rows = [(int(k), t, r) for k, t, r in zip(sol.modes, sol.targets, sol.residuals)]
    summary = {"max_residual": sol.max_residual, "condition": sol.condition, "rank": sol.rank,
               "l2_norm": u.l2_norm(), "endpoints": [float(u(0.0)), float(u(cfg.T))]}
    return ScenarioResult("moment-solve", ("mode", "target", "residual"), rows, summary,
                          ("mode", "residual", False))


def _magic_spec(cfg):
    return make_magic_single(build_periodic_theta(cfg.L, strict=False), cfg.s, cfg.N)


def _magic_steer(cfg, rng):
    spec = _magic_spec(cfg)
    z0 = np.zeros(cfg.N + 1)
    for k, v in cfg.z0.items():
        z0[k] = v
    half = cfg.T / 2
    tracked = list(range(1, cfg.N + 1))

    def phase1(dt):
        u1 = linear_null_control(spec, z0, half, cfg.m, modes=tracked, dt=dt).control
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mid = simulate_nonlinear(spec, z0, u1, dt / cfg.refine, save_every=10 ** 9)
        return u1, mid.final.coeffs

    # a coarse pass fixes the drift sign, hence the atom frequency and the grid
    _, mid = phase1(fit_step(half, cfg.dt if cfg.dt > 0 else half / 4000))
    sign = 1 if mid[0] > 0 else -1
    dt2 = elementary_drift_control(spec, sign, half, cfg.m, delta=max(abs(mid[0]), 1e-300)).control.dt
    u1, mid = phase1(dt2)
    delta = float(mid[0])
    if delta * sign <= 0:
        raise InvalidInput("phase 1 changed the sign of the lost mode")
    ec = elementary_drift_control(spec, sign, half, cfg.m, dt2, abs(delta))
    u2 = ec.control
    fine = dt2 / cfg.refine
    samples = np.concatenate([u1.samples, u2.samples[1:]])
    u = ControlSignal.from_samples(samples, u1.T + u2.T, dt2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tr = simulate_nonlinear(spec, z0, u, fine, save_every=max(1, u.n_cells * cfg.refine // 400))
    final = float(np.linalg.norm(tr.final.coeffs))
    rows = [(t, float(c[0]), float(np.linalg.norm(c))) for t, c in zip(tr.times, tr.coeffs)]
    summary = {"final_norm": final, "phase1_l2": u1.l2_norm(), "phase2_l2": u2.l2_norm(),
               "mid_norm_tracked": float(np.linalg.norm(mid[1:])), "mid_z0": delta,
               "ln_omega": ec.ln_omega, "form": ec.form, "tries": ec.tries,
               "dt": dt2, "simulation_dt": fine}
    return ScenarioResult("magic-steer", ("t", "z0", "norm"), rows, summary, ("t", "norm", False))


def _cost_scaling(cfg, rng):
    spec = _magic_spec(cfg)
    deltas = list(cfg.amplitudes)

    def one(d):
        ec = elementary_drift_control(spec, cfg.sign, cfg.T, cfg.m, delta=d)
        final = math.nan
        if cfg.verify:
            z0 = np.zeros(cfg.N + 1)
            z0[0] = cfg.sign * d
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                tr = simulate_nonlinear(spec, z0, ec.control, ec.control.dt / cfg.refine,
                                        save_every=10 ** 9)
            final = float(np.linalg.norm(tr.final.coeffs))
        return (d, ec.control.l2_norm(), ec.amplitude, final)

    rows = _sweep(one, deltas)
    summary = {"sign": cfg.sign}
    if len(rows) > 1:
        summary["slope"] = _slope([r[0] for r in rows], [r[1] for r in rows])
    return ScenarioResult("cost-scaling", ("delta", "control_l2", "amplitude", "final_norm"),
                          rows, summary, ("delta", "control_l2", True))


def _infinite_recover(cfg, rng):
    K = cfg.K_max
    H = max(K, cfg.n + 1)
    fam = build_sparse_theta_family(cfg.L, K - 1, H, strict=False)
    ybar = cfg.delta * rng.uniform(-1, 1, K)
    v, rep = fixed_point_recover(ybar, cfg.T, fam, cfg.s, cfg.n, cfg.tol)
    rows = [(e.target, ybar[e.target], rep.q[e.target], e.ln_omega, e.sign, e.amplitude)
            for e in rep.plan.entries]
    summary = json.loads(rep.to_json())
    summary["ybar"] = [float(y) for y in ybar]
    if cfg.cross_check:
        summary["cross_check"] = time_cross_check(cfg.N, cfg.L, cfg.s, cfg.T, cfg.delta)
    return ScenarioResult("infinite-recover", ("target", "ybar", "q", "ln_omega", "sign", "amplitude"),
                          rows, summary, ("target", "q", False))


def time_cross_check(N: int, L: float, s: float, T: float, delta: float,
                     refine: int = 4) -> dict:
    """One odd target recovered in the time domain and checked by simulation."""
    fam = build_sparse_theta_family(L, 0, 1, strict=False)
    spec = make_magic_infinite(fam, s, N)
    z0 = np.zeros(N + 1)
    z0[1] = delta
    v, rep = fixed_point_recover(odd_targets(spec, z0, 1), T, fam, s, n=0, engine="time",
                                 truncate=N // 2, tol=1e-6)
    u = physical_control(v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        zf = simulate_nonlinear(spec, z0, u, u.dt / refine, save_every=10 ** 9).final.coeffs
    return {"odd_residual": float(np.abs(zf[1::2]).max()),
            "even_residual": float(np.abs(zf[0::2]).max()),
            "iterations": rep.iterations, "ln_omega": rep.plan.entries[0].ln_omega}


_RUNNERS = {
    "kernel-spectrum": _kernel_spectrum,
    "drift-integer": lambda c, r: _drift(c, r, False),
    "drift-fractional": lambda c, r: _drift(c, r, True),
    "ibp-check": _ibp_check,
    "moment-solve": _moment_solve,
    "magic-steer": _magic_steer,
    "infinite-recover": _infinite_recover,
    "cost-scaling": _cost_scaling,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Validate and run one scenario (files are written by ``emit_report``)."""
    cfg.validate()
    thread_cap()
    rng = np.random.default_rng(cfg.seed)
    res = _RUNNERS[cfg.scenario](cfg, rng)
    res.config = cfg
    return res


# ----------------------------------------------------------------- report


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def csv_text(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def gnuplot_script(name: str, columns: Sequence[str], plot: tuple) -> str:
    lines = ["set datafile separator ','", f"set title '{name}'", "set key off"]
    if plot:
        x, y, log = plot
        if log:
            lines.append("set logscale xy")
        lines += [f"set xlabel '{x}'", f"set ylabel '{y}'",
                  f"plot '{name}.csv' using (column('{x}')):(abs(column('{y}'))) "
                  "skip 1 with linespoints"]
    return "\n".join(lines) + "\n"


def emit_report(result: ScenarioResult, out: str | Path) -> dict:
    """Write the CSV, JSON summary, gnuplot script and config; return paths and digest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    body = csv_text(result.columns, result.rows)
    digest = hashlib.sha256(body.encode()).hexdigest()
    paths = {"csv": out / f"{result.name}.csv", "json": out / f"{result.name}.json",
             "gnuplot": out / f"{result.name}.gp"}
    paths["csv"].write_text(body)
    summary = {"scenario": result.name, "status": "ok", "csv_sha256": digest,
               "rows": len(result.rows), "summary": _jsonable(result.summary)}
    paths["json"].write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    paths["gnuplot"].write_text(gnuplot_script(result.name, result.columns, result.plot))
    if result.config is not None:
        paths["config"] = out / "config.txt"
        paths["config"].write_text(result.config.to_text())
    return {"paths": {k: str(v) for k, v in paths.items()}, "digest": digest}


# -------------------------------------------------------------------- main


def _error(exc: BaseException, status: int, out: str | None) -> int:
    payload = {"status": "error", "exit": status, "type": type(exc).__name__,
               "code": getattr(exc, "code", "numerical-failure" if status == EXIT_NUMERICAL
                               else "invalid-config"),
               "message": str(exc)}
    text = json.dumps(payload, sort_keys=True)
    print(text)
    if out is not None:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="quaddrift", description=__doc__.splitlines()[0])
    parser.add_argument("scenario")
    parser.add_argument("--config", required=True)
    parser.add_argument("--out")
    parser.add_argument("--seed", type=int)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = args.out
    try:
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {args.scenario!r}")
        cfg = ScenarioConfig.from_file(args.config, args.scenario)
        if args.seed is not None:
            cfg.seed = args.seed
        if out is not None:
            cfg.out = out
        cfg.validate()
        out = cfg.out
        result = run_scenario(cfg)
    except InvalidInput as exc:
        return _error(exc, EXIT_CONFIG, out)
    except (QuaddriftError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        return _error(exc, EXIT_NUMERICAL, out)
    try:
        info = emit_report(result, out)
    except OSError as exc:
        return _error(exc, EXIT_NUMERICAL, None)
    print(json.dumps({"status": "ok", "scenario": cfg.scenario, **info}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
