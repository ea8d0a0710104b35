"""Quadratic control synthesis from oscillating atoms.

Single lost direction: an atom whose ``ln sqrt(omega)`` sits in the middle
of a plateau of ``Theta`` produces a quadratic drift of mode 0 with the
plateau's sign; lifting its moments leaves the linear order untouched and a
scalar amplitude then cancels ``<z0, phi_0>``.

Infinitely many lost directions: one atom per target ``k`` at a plateau of
``Theta_k``, combined into ``V_n(y)``; a Picard iteration on ``y`` matches
the quadratic forms ``Q_k(v, v)`` to the targets.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import special

from . import _exact
from .errors import (
    ConvergenceError,
    FrequencyOverflow,
    InsufficientHorizon,
    InvalidInput,
    NoPlateauFound,
    SignMismatch,
    UnderResolvedControl,
)
from .kernels import (
    EPSILON,
    KernelSpec,
    TailLaw,
    coefficients,
    gamma_pm,
    gamma_s,
    lambda_k,
    quadratic_form_freq,
    quadratic_form_time,
)
from .moments import lift_linear_invariant, solve_moments, MomentProblem
from .profiles import BlockProfile, plateau_center
from .signals import Atom, ControlSignal, atom_hat as _atom_hat, fit_step, sobolev_norm_neg
from .system import MAGIC_SINGLE, NonlinearitySpec

SAMPLES_PER_RADIAN = 40.0
PLATEAU_POINTS = 101


# ------------------------------------------------------------------ atoms


def oscillating_atom(omega: float, tau: float, lam: float = 0.0, dt: float | None = None,
                     T: float | None = None, t0: float = 0.0, amplitude: float = 1.0,
                     log_omega: float | None = None, sample: bool | None = None) -> ControlSignal:
    """``amplitude sin(omega (t - t0)) exp(-lam (t - t0))`` on ``[t0, t0 + tau]``.

    Sampled when ``dt <= 1/(40 omega)``; otherwise (or for a log-space
    frequency) only the atom descriptor is kept.
    """
    if tau <= 0 or lam < 0:
        raise InvalidInput("need tau > 0 and lam >= 0")
    atom = Atom(amplitude, omega, tau, lam, t0, 0.0, log_omega)
    T = t0 + tau if T is None else T
    if t0 < 0 or t0 + tau > T * (1 + 1e-12):
        raise InvalidInput("atom support must lie in [0, T]")
    w = atom.omega
    if dt is None:
        dt = fit_step(T, 1.0 / (SAMPLES_PER_RADIAN * w)) if 0 < w < 1e7 else T / 1000
    resolved = math.isfinite(w) and w * dt <= 1.0 / SAMPLES_PER_RADIAN
    if sample and not resolved:
        raise UnderResolvedControl(f"dt = {dt:g} cannot sample omega = {w:g}")
    sample = resolved if sample is None else sample
    return ControlSignal.from_atoms([atom], T, dt, sample=sample)


def atom_hat(omega: float, tau: float, lam: float, xi) -> np.ndarray:
    """Closed-form Fourier transform of ``sin(omega t) exp(-lam t) 1_[0, tau]``."""
    return _atom_hat(Atom(1.0, omega, tau, lam), xi)


def _window(t: np.ndarray, a: float, b: float, width: float, m: int) -> np.ndarray:
    """``C^m`` cutoff equal to 1 on ``[a + width, b - width]`` and 0 outside ``[a, b]``."""
    x_lo = np.clip((t - a) / width, 0.0, 1.0)
    x_hi = np.clip((b - t) / width, 0.0, 1.0)
    return special.betainc(m + 1, m + 1, x_lo) * special.betainc(m + 1, m + 1, x_hi)


# -------------------------------------------------------------- frequencies


def _verify_plateau(p: BlockProfile, center: float, sign: int) -> bool:
    x = np.linspace(center - p.L, center + p.L, PLATEAU_POINTS)
    return bool(np.all(np.abs(np.asarray(p(x)) - sign) <= 1e-12))


def select_frequency(p: BlockProfile, sign: int, min_ln_omega: float = 0.0,
                     rounds=None) -> float:
    """``ln omega = 2 x*`` for the first plateau center ``x* >= min_ln_omega / 2`` of value ``sign``."""
    x = plateau_center(p, sign, min_x=min_ln_omega / 2, rounds=rounds)
    if not _verify_plateau(p, x, sign):
        raise NoPlateauFound(f"profile is not constant {sign:+d} on [{x - p.L}, {x + p.L}]")
    return 2 * x


# ------------------------------------------------------ single direction


@dataclass(frozen=True, eq=False)
class ElementaryControl:
    control: ControlSignal
    amplitude: float
    ln_omega: float
    form: float
    tries: int
    correction_l2: float
    sign: int
    delta: float

    def summary(self) -> dict:
        return {"amplitude": self.amplitude, "ln_omega": self.ln_omega, "form": self.form,
                "tries": self.tries, "correction_l2": self.correction_l2, "sign": self.sign,
                "delta": self.delta, "control_l2": self.control.l2_norm()}


def truncated_kernel(spec: NonlinearitySpec, target: int = 0) -> KernelSpec:
    """Kernel of ``target`` restricted to the simulated modes (no tail)."""
    return KernelSpec(coefficients(spec, target, spec.N).c)


def elementary_drift_control(spec: NonlinearitySpec, sign: int, T: float = 1.0, m: int = 1,
                             dt: float | None = None, delta: float = 1.0, t0: float = 0.0,
                             tau: float | None = None, min_cycles: float = 1.0,
                             max_tries: int = 8, kernel: KernelSpec | None = None) -> ElementaryControl:
    """Control steering ``z0 = sign * delta * phi_0`` to rest for a single-direction spec.

    The atom is placed on ``[t0, t0 + tau]`` (default ``tau = T/4``) at a
    plateau of value ``-sign``; its moments for modes ``0..N`` are lifted,
    and the amplitude is solved from the measured (exact) quadratic form.
    A form of the wrong sign moves on to the next plateau.
    """
    if spec.variant != MAGIC_SINGLE:
        raise InvalidInput("elementary drift controls need a single-direction spec")
    if sign not in (1, -1) or delta <= 0:
        raise InvalidInput("sign must be +-1 and delta positive")
    theta = spec.params["theta"]
    tau = T / 4 if tau is None else tau
    if t0 < 0 or t0 + tau > T * (1 + 1e-12):
        raise InvalidInput("atom support must lie in [0, T]")
    kernel = truncated_kernel(spec) if kernel is None else kernel
    min_ln = math.log(2 * math.pi * min_cycles / tau) if min_cycles > 0 else 0.0
    want = -sign
    for attempt in range(1, max_tries + 1):
        ln_w = select_frequency(theta, want, min_ln)
        w = math.exp(ln_w)
        step = fit_step(T, 1.0 / (SAMPLES_PER_RADIAN * w)) if dt is None else dt
        base = oscillating_atom(w, tau, 0.0, step, T, t0)
        t = base.times
        width = min(tau / 8, 4 * math.pi / w)
        vals = base.samples * (_window(t, t0, t0 + tau, width, m) if m > 0 else 1.0)
        v = ControlSignal.from_samples(vals, T, base.dt)
        vt = lift_linear_invariant(v, spec, T, m)
        F = quadratic_form_time(kernel, vt)
        if F * want > 0:
            c = math.sqrt(delta / abs(F))
            return ElementaryControl(c * vt, c, ln_w, F, attempt,
                                     c * vt._meta["correction_l2"], sign, delta)
        min_ln = ln_w + 1e-9
    raise SignMismatch(f"no plateau within {max_tries} tries gave a form of sign {want:+d}")


# ---------------------------------------------------- infinite directions


@dataclass(frozen=True)
class PlanEntry:
    target: int
    sign: int
    y: float
    beta: float
    gamma_sign: float
    amplitude: float
    ln_omega: float
    tau: float
    lam: float
    plateau_center: float
    round: int


@dataclass(frozen=True)
class AtomPlan:
    entries: tuple
    T: float
    s: float
    L: float
    n: int
    correction_h1: float = 0.0
    correction_bound: float = 0.0

    def atoms(self) -> tuple[Atom, ...]:
        return tuple(Atom(e.amplitude, math.inf, e.tau, e.lam, 0.0, 0.0, e.ln_omega)
                     if e.ln_omega > 700 else
                     Atom(e.amplitude, math.exp(e.ln_omega), e.tau, e.lam)
                     for e in self.entries)

    def verify_plateaus(self, family: Sequence[BlockProfile]) -> bool:
        return all(_verify_plateau(family[e.target], e.plateau_center, e.sign)
                   for e in self.entries)

    def to_json(self) -> str:
        d = {"T": self.T, "s": self.s, "L": self.L, "n": self.n,
             "correction_h1": self.correction_h1, "correction_bound": self.correction_bound,
             "entries": [asdict(e) for e in self.entries]}
        return json.dumps(d, sort_keys=True, indent=2)


def theta_kernel(profile: BlockProfile, s: float, lam: float = 0.0, J: int = 2000,
                 truncate: int | None = None) -> KernelSpec:
    """``K_{Theta_k}`` with coefficients ``Theta_k(ln j) j^(1-4s)`` and shift ``lam``.

    ``truncate`` keeps only ``j <= truncate`` (no tail), matching a Galerkin
    truncation; otherwise the tail law continues the explicit part.
    """
    Jx = truncate if truncate is not None else J
    j = np.arange(1, Jx + 1, dtype=float)
    c = np.asarray(profile(np.log(j)), dtype=float) * j ** (1 - 4 * s)
    tail = None if truncate is not None else TailLaw(s, profile)
    return KernelSpec(c, shift=lam, tail=tail, asymptotic=(None, s, 0))


def _atom_moments(a: Atom, T: float, rates: np.ndarray) -> tuple[np.ndarray, float]:
    """Closed-form ``int a(t) exp(-r (T - t))`` and a bound used when the phase is lost."""
    w = a.omega
    bound = 2 * abs(a.amplitude) / w * np.exp(-rates * (T - a.end)) if w > 0 else np.zeros_like(rates)
    if not math.isfinite(w) or w * a.tau > 1e12:
        return np.zeros_like(rates), float(np.max(bound)) if rates.size else 0.0
    z = rates - a.lam + 1j * w
    # int_0^tau exp(z t) dt * exp(-r (T - t0))
    integral = a.tau * _exact.m_moments(z * a.tau, 0)[..., 0]
    vals = a.amplitude * np.exp(-rates * (T - a.t0)) * integral
    return vals.imag, 0.0


def build_Vn(y: Sequence[float], n: int, family: Sequence[BlockProfile], s: float, T: float,
             dt: float | None = None, lift_modes: int = 12, m: int = 1):
    """``V_n(y) = sum_l beta_l |y_l|^(1/2) omega_l^s v_{omega_l, T/4, lambda_l}`` and its plan.

    ``omega_l`` sits at the plateau of value ``sign(y_l)`` of ``Theta_l`` in
    generation round ``max(l + 1, n + 1)``.  Sampled controls (all
    frequencies resolvable with ``dt``) are returned moment-lifted; otherwise
    the atoms are returned with the lifting correction recorded in the plan.
    """
    y = np.asarray(y, dtype=float)
    if y.size > len(family):
        raise InvalidInput("one profile per target is required")
    L = family[0].L
    entries = []
    for l, yl in enumerate(y):
        if yl == 0:
            continue
        sg = 1 if yl > 0 else -1
        prof = family[l]
        r = max(l + 1, n + 1)
        if prof.horizon is not None and r > prof.horizon:
            raise InsufficientHorizon(f"round {r} is beyond the horizon {prof.horizon}")
        center = plateau_center(prof, sg, rounds={r})
        if not _verify_plateau(prof, center, sg):
            raise NoPlateauFound(f"plateau of Theta_{l} at {center} is not flat")
        g = gamma_pm(s, L, sg)
        beta = math.sqrt(4 / (T * g))
        ln_w = 2 * center
        amp = beta * math.sqrt(abs(yl)) * math.exp(s * ln_w)
        entries.append(PlanEntry(l, sg, float(yl), beta, g, amp, ln_w, T / 4,
                                 float(lambda_k(l)), center, r))
    plan = AtomPlan(tuple(entries), T, s, L, n)
    atoms = plan.atoms()
    if not atoms:
        step = T / 1000 if dt is None else dt
        return ControlSignal.zeros(T, step), plan
    wmax = max(a.omega for a in atoms)
    if dt is None:
        dt = fit_step(T, 1.0 / (SAMPLES_PER_RADIAN * wmax)) if wmax < 1e7 else T / 1000
    if math.isfinite(wmax) and wmax * dt <= 1.0 / SAMPLES_PER_RADIAN:
        v = ControlSignal.from_atoms(atoms, T, dt, sample=True)
        vt = lift_linear_invariant(v, None, T, m, modes=np.arange(lift_modes + 1))
        corr = ControlSignal(T, dt, v.cells - vt.cells)
        plan = replace(plan, correction_h1=_h1_norm(corr))
        return vt, plan
    rates = np.arange(lift_modes + 1, dtype=float) ** 2
    d = np.zeros(rates.size)
    bound = 0.0
    for a in atoms:
        vals, b = _atom_moments(a, T, rates)
        d += vals
        bound += b
    corr = solve_moments(MomentProblem(d, T, m, 64, np.sqrt(rates)), T / 1000).control
    plan = replace(plan, correction_h1=_h1_norm(corr), correction_bound=bound)
    return ControlSignal(T, T / 1000, None, atoms), plan


def _h1_norm(u: ControlSignal) -> float:
    du = np.diff(u.samples) / u.dt
    return math.sqrt(u.l2_norm_sq() + float(np.sum(du ** 2) * u.dt))


def _q_time(c: np.ndarray, lam: float, v: ControlSignal, tau: float) -> float:
    """Symmetric ``Q`` in the time domain for a truncated kernel with shift ``lam``."""
    a = v.restricted(tau) if tau < v.T else v
    a = a.exp_weighted(lam)
    j = np.arange(1, c.size + 1, dtype=float)
    return 2 * float(_exact.quadratic_form(a.cells, a.cells, a.dt, j ** 2 - lam, c))


@dataclass(frozen=True, eq=False)
class RecoverReport:
    converged: bool
    iterations: int
    residual: float
    history: tuple
    y: np.ndarray
    q: np.ndarray
    plan: AtomPlan
    hs_norm: float | None
    hs_bound: float
    diagonal_ratio: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"converged": self.converged, "iterations": self.iterations,
                           "residual": self.residual, "history": list(self.history),
                           "y": [float(v) for v in self.y], "q": [float(v) for v in self.q],
                           "hs_norm": self.hs_norm, "hs_bound": self.hs_bound,
                           "diagonal_ratio": self.diagonal_ratio}, sort_keys=True, indent=2)


def fixed_point_recover(ybar: Sequence[float], T: float, family: Sequence[BlockProfile],
                        s: float, n: int = 1, tol: float = 1e-3, max_iter: int = 50,
                        engine: str = "freq", truncate: int | None = None,
                        dt: float | None = None, J: int = 2000):
    """Find ``v`` with ``Q_{k,T}(v, v) = ybar_k`` for ``k <= K_max`` by Picard iteration.

    ``F(y) = ybar + y - Q(V_n(y))``; ``engine="freq"`` evaluates ``Q`` by
    Plancherel with shifted tail-law kernels, ``engine="time"`` exactly in
    the time domain with the kernel truncated at ``j <= truncate``.
    Returns ``(v, report)``.
    """
    ybar = np.asarray(ybar, dtype=float)
    K = ybar.size
    if K > len(family):
        raise InvalidInput("one profile per target is required")
    norm_bar = float(np.sum(np.abs(ybar)))
    g = gamma_s(s)
    bound = 2 / math.sqrt(g) * math.sqrt(norm_bar)
    if norm_bar == 0:
        v, plan = build_Vn(ybar, n, family, s, T, dt)
        return v, RecoverReport(True, 0, 0.0, (), ybar, ybar, plan, 0.0, bound)
    if engine == "time":
        if truncate is None:
            raise InvalidInput("the time engine needs a truncation")
        cs = [theta_kernel(family[k], s, truncate=truncate).c for k in range(K)]

        def Q(v):
            if v.cells is None:
                raise FrequencyOverflow("time-domain evaluation needs sampled controls")
            return np.array([_q_time(cs[k], lambda_k(k), v, T) for k in range(K)])
    elif engine == "freq":
        kers = [theta_kernel(family[k], s, float(lambda_k(k)), J) for k in range(K)]

        def Q(v):
            return np.array([quadratic_form_freq(kers[k], v, tau=T) for k in range(K)])
    else:
        raise InvalidInput("engine is 'freq' or 'time'")
    y = ybar.copy()
    history = []
    for it in range(1, max_iter + 1):
        v, plan = build_Vn(y, n, family, s, T, dt)
        q = Q(v)
        r = float(np.sum(np.abs(q - ybar)))
        history.append(r)
        if r <= tol * norm_bar:
            hs = _hs(v, s)
            diag = _diagonal_ratio(plan, Q, T, dt, family, s, n)
            return v, RecoverReport(True, it, r, tuple(history), y, q, plan, hs, bound, diag)
        y = ybar + y - q
    raise ConvergenceError(f"Picard did not reach {tol:g} in {max_iter} iterations",
                           history=history)


def _hs(v: ControlSignal, s: float) -> float | None:
    try:
        return float(sobolev_norm_neg(v, s, rtol=1e-2))
    except Exception:  # noqa: BLE001 - diagnostic only
        return None


def _diagonal_ratio(plan: AtomPlan, Q, T, dt, family, s, n) -> float | None:
    """Largest ``|Q_k(v_l, v_l)| / |Q_l(v_l, v_l)|`` over ``l != k``."""
    if len(plan.entries) < 2:
        return None
    worst = 0.0
    K = len(family)
    for e in plan.entries:
        y1 = np.zeros(K)
        y1[e.target] = e.y
        v1, _ = build_Vn(y1, n, family, s, T, dt)
        q = Q(v1)
        d = abs(q[e.target])
        off = np.delete(np.abs(q), e.target)
        if off.size and d > 0:
            worst = max(worst, float(off.max() / d))
    return worst


__all__ = ["AtomPlan", "ElementaryControl", "PlanEntry", "RecoverReport", "atom_hat",
           "build_Vn", "elementary_drift_control", "fixed_point_recover", "odd_targets",
           "oscillating_atom", "physical_control",
           "select_frequency", "theta_kernel", "truncated_kernel", "EPSILON"]


def physical_control(v: ControlSignal) -> ControlSignal:
    """``u(t) = v(4t)`` on ``[0, T/4]`` for a sampled rescaled control ``v``."""
    if v.cells is None:
        raise UnderResolvedControl("only sampled controls can be simulated")
    return ControlSignal.from_samples(v.samples, v.T / 4, v.dt / 4)


def odd_targets(spec: NonlinearitySpec, z0, K: int) -> np.ndarray:
    """``y_k = -32 <z0, phi_{2k+1}> / C_Theta`` for ``k < K``."""
    z0 = np.asarray(getattr(z0, "coeffs", z0), dtype=float)
    C = spec.params["C_theta"]
    return np.array([-32 * z0[2 * k + 1] / C for k in range(K)])
