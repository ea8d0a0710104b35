"""Quadratic kernels ``K(s) = sum_j c_j exp(-j^2 |s|)`` and the forms they define.

A :class:`KernelSpec` keeps ``c_1 .. c_J`` explicitly.  Beyond ``J`` it may
carry a :class:`TailLaw` ``c_j = scale * Theta(ln j) * j^(1-4s)``; sums over
the tail are then replaced by integrals (midpoint Euler-Maclaurin from
``J + 1/2``), which is what makes ``J = 10^6`` or frequencies like
``exp(1000)`` affordable.  Frequency-domain quantities are computed in the
scaled form ``xi^(2s) Khat(xi) / 2`` so that nothing overflows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from . import _exact
from .errors import DivergentDerivative, InvalidInput, ResolutionError, TruncationError
from .signals import (
    ControlSignal,
    FrequencyGrid,
    _atom_peak_l2,
    _strip_atoms,
    spectral_integral,
)

_GL16 = np.polynomial.legendre.leggauss(16)
EPSILON = 1.0 / 6.0


# ------------------------------------------------------------ constants


def gamma_s(s: float) -> float:
    """``int_0^inf y^(3-4s) / (1 + y^4) dy`` by quadrature.

    The range is split at ``y = 1`` and the upper half mapped to ``(0, 1]``
    by ``y -> 1/y``; both pieces carry an algebraic endpoint weight.
    """
    if not 0 < s < 1:
        raise InvalidInput("s must lie in (0, 1)")
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    lo = integrate.quad(lambda y: 1.0 / (1 + y ** 4), 0.0, 1.0,
                        weight="alg", wvar=(3 - 4 * s, 0.0), **opts)[0]
    hi = integrate.quad(lambda y: 1.0 / (1 + y ** 4), 0.0, 1.0,
                        weight="alg", wvar=(4 * s - 1, 0.0), **opts)[0]
    return lo + hi


def gamma_closed_form(s: float) -> float:
    """Closed form ``pi / (4 sin(pi s))`` of :func:`gamma_s`."""
    return math.pi / (4 * math.sin(math.pi * s))


def outside_mass(L: float, s: float) -> float:
    """``int`` of ``y^(3-4s)/(1+y^4)`` over ``R+ minus [e^-L, e^L]``."""
    b = math.exp(-L)
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    f = lambda y: 1.0 / (1 + y ** 4)  # noqa: E731
    lo = integrate.quad(f, 0.0, b, weight="alg", wvar=(3 - 4 * s, 0.0), **opts)[0]
    hi = integrate.quad(f, 0.0, b, weight="alg", wvar=(4 * s - 1, 0.0), **opts)[0]
    return lo + hi


def solve_L(eps: float = EPSILON, s: float = 0.25) -> float:
    """Smallest ``L >= 1`` whose outside mass is at most ``eps * gamma(s)``."""
    if not (0 < eps < 1 and 0 < s < 1):
        raise InvalidInput("need 0 < eps < 1 and 0 < s < 1")
    g = gamma_s(s)
    fn = lambda L: outside_mass(L, s) - eps * g  # noqa: E731
    if fn(1.0) <= 0:
        return 1.0
    hi = 2.0
    while fn(hi) > 0:
        hi *= 2
    return optimize.brentq(fn, 1.0, hi, xtol=1e-13, rtol=1e-14)


def lambda_k(k) -> np.ndarray | float:
    """Shift ``(2k+1)^2 / 8`` attached to the odd mode ``2k+1``."""
    k = np.asarray(k, dtype=float)
    out = (2 * k + 1) ** 2 / 8
    return float(out) if out.ndim == 0 else out


def _theta_panels(theta, lo: float, hi: float, step: float | None) -> np.ndarray:
    """Panel edges on ``[lo, hi]`` aligned with the profile's breakpoints."""
    L = getattr(theta, "L", None)
    h = step if step is not None else (L / 2 if L is not None else 0.25)
    h = min(h, 0.25)
    a = math.floor(lo / h) * h
    edges = np.arange(a, hi + h, h)
    edges = np.clip(edges, lo, hi)
    return np.unique(edges)


def _panel_rule(edges: np.ndarray):
    x, w = _GL16
    a, b = edges[:-1], edges[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def g_factor(s: float, theta: Callable | None, omega: float | None = None,
             log_omega: float | None = None, lower: float | None = None) -> float:
    """``int_0^inf y^(3-4s)/(1+y^4) Theta(ln(y sqrt(omega))) dy``.

    ``theta=None`` stands for ``Theta = 1``.  Integration runs in
    ``x = ln y`` on Gauss panels aligned with the profile's kinks.  ``lower``
    restricts to ``y >= lower`` (used for truncated tails).
    """
    if not 0 < s < 1:
        raise InvalidInput("s must lie in (0, 1)")
    if log_omega is None:
        if omega is None or omega <= 0:
            raise InvalidInput("give omega > 0 or log_omega")
        log_omega = math.log(omega)
    half = 0.5 * log_omega
    x_lo = -40.0 / (4 - 4 * s)
    x_hi = 40.0 / (4 * s)
    if lower is not None:
        x_lo = max(x_lo, math.log(lower)) if lower > 0 else x_lo
    if theta is None and lower is None:
        return gamma_s(s)
    if x_hi <= x_lo:
        return 0.0
    # panels aligned in the profile's own coordinate X = x + half
    edges = _theta_panels(theta, x_lo + half, x_hi + half, None) - half
    xs, ws = _panel_rule(edges)
    dens = np.exp((4 - 4 * s) * xs) / (1 + np.exp(4 * xs))
    th = 1.0 if theta is None else np.asarray(theta(xs + half), dtype=float)
    return float(np.sum(ws * dens * th))


def gamma_pm(s: float, L: float, sign: int) -> float:
    """Plateau constant of an isolated ``+/-`` block pair seen from a plateau center."""
    from .profiles import Block, BlockProfile, SPARSE

    pair = BlockProfile(L, SPARSE, (Block(0.0, +1), Block(3.0, -1)))
    center = 2 * L * (1.5 if sign > 0 else 4.5)
    return sign * g_factor(s, pair, log_omega=2 * center)


# --------------------------------------------------------------- kernel


@dataclass(frozen=True)
class TailLaw:
    """``c_j = scale * Theta(ln j) * j^(1-4s)`` (``theta=None`` means 1)."""

    s: float
    theta: Callable | None = None
    scale: float = 1.0

    def __call__(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=float)
        th = 1.0 if self.theta is None else np.asarray(self.theta(np.log(j)), dtype=float)
        return self.scale * th * j ** (1 - 4 * self.s)

    def integral(self, g: Callable[[np.ndarray], np.ndarray], x_lo: float, x_hi: float,
                 x_ref: float = 0.0) -> float:
        """``int c(y) g(ln y) dy`` over ``ln y in [x_lo, x_hi]``, divided by ``exp((2-4s) x_ref)``.

        The reference point keeps the integrand representable for huge ``y``.
        """
        if x_hi <= x_lo:
            return 0.0
        edges = _theta_panels(self.theta, x_lo, x_hi, None)
        xs, ws = _panel_rule(edges)
        th = 1.0 if self.theta is None else np.asarray(self.theta(xs), dtype=float)
        carrier = np.exp((2 - 4 * self.s) * (xs - x_ref))
        return float(self.scale * np.sum(ws * th * carrier * g(xs)))

    def upper(self, x_lo: float) -> float:
        """Log-abscissa beyond which ``c(y)/y^2`` weighted integrals are negligible."""
        return x_lo + 40.0 / max(4 * self.s, 1e-2)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Coefficients ``c_1..c_J`` (rate ``j^2``) with optional shift and tail.

    ``shift`` is the exponential factor ``lam`` in ``exp(lam |s|) K(s)``.
    ``asymptotic`` is ``(a, s, n)``: ``a`` the drift coefficient of the
    leading behaviour, ``s`` the fractional order, ``n`` the integer order.
    ``envelope`` ``(C, p)`` bounds ``|c_j| <= C j^p`` beyond ``J`` when no
    tail law is known.
    """

    c: np.ndarray
    shift: float = 0.0
    asymptotic: tuple | None = None
    tail: TailLaw | None = None
    envelope: tuple[float, float] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise InvalidInput("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        lam = float(self.shift)
        if lam < 0:
            raise InvalidInput("shift must be nonnegative")
        if lam > 0:
            nz = np.nonzero(c)[0]
            first = (nz[0] + 1) if nz.size else (c.size + 1)
            if first ** 2 < 2 * lam:
                raise InvalidInput("shift too large: some summand would not decay")

    @property
    def J(self) -> int:
        return self.c.size

    @property
    def j(self) -> np.ndarray:
        return np.arange(1, self.J + 1, dtype=float)

    @property
    def s_scale(self) -> float:
        """Fractional order used for the scaled spectrum (0 when summable)."""
        if self.tail is not None:
            return self.tail.s
        if self.asymptotic is not None and self.asymptotic[1] is not None:
            return float(self.asymptotic[1])
        return 0.0

    @property
    def tail_bound(self) -> float:
        """Bound on ``sum_{j>J} |c_j|`` (``inf`` when the tail is not summable)."""
        J = self.J
        if self.tail is not None:
            p = 1 - 4 * self.tail.s
            return math.inf if p >= -1 else abs(self.tail.scale) * (J + 0.5) ** (p + 1) / (-p - 1)
        if self.envelope is not None:
            C, p = self.envelope
            return math.inf if p >= -1 else C * J ** (p + 1) / (-p - 1)
        return 0.0

    def with_shift(self, lam: float) -> "KernelSpec":
        return replace(self, shift=lam, _cache={})

    def derivative_kernel(self, order: int) -> "KernelSpec":
        """Kernel of ``K^(order)`` away from 0 (even orders only)."""
        if order % 2:
            raise InvalidInput("only even derivative orders give a kernel of the same form")
        if self.tail is not None:
            raise DivergentDerivative("derivative kernels need a finite coefficient list")
        cj = self.c * self.j ** (2 * order)
        env = None
        if self.envelope is not None:
            env = (self.envelope[0], self.envelope[1] + 2 * order)
        return KernelSpec(cj, self.shift, None, None, env)

    def check_derivative(self, order: int, rtol: float = 1e-8) -> float:
        """Check ``sum j^(2 order) |c_j|`` converges on the truncation; return it."""
        if self.tail is not None and 1 - 4 * self.tail.s + 2 * order >= -1:
            raise DivergentDerivative(f"tail law not summable at derivative order {order}")
        if self.envelope is not None and self.envelope[1] + 2 * order >= -1:
            raise DivergentDerivative(f"envelope not summable at derivative order {order}")
        w = np.abs(self.c) * self.j ** (2 * order)
        total = float(w.sum())
        if self.J >= 4 and self.envelope is None and total > 0:
            last = float(w[-max(1, self.J // 10):].sum())
            if last > max(rtol, 1e-3) * total:
                raise DivergentDerivative(
                    f"weighted coefficients not decaying at order {order}")
        return total

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "c_j"])
            for jj, cc in zip(range(1, self.J + 1), self.c):
                w.writerow([jj, repr(float(cc))])
        return path


def fit_envelope(c: np.ndarray) -> tuple[float, float] | None:
    """Power-law envelope ``C j^p`` fitted to the upper half of nonzero coefficients."""
    j = np.arange(1, c.size + 1, dtype=float)
    sel = (j > c.size / 2) & (np.abs(c) > 0)
    if sel.sum() < 3:
        return None
    p = np.polyfit(np.log(j[sel]), np.log(np.abs(c[sel])), 1)[0]
    C = float(np.max(np.abs(c[sel]) / j[sel] ** p))
    return C, float(p)


def coefficients(spec, target_mode: int, J: int, tol: float | None = None) -> KernelSpec:
    """``c_j = <mu, phi_j> <Gamma'[0] phi_j, phi_target>`` for ``j = 1..J``.

    ``spec`` is a :class:`quaddrift.system.NonlinearitySpec`; magic variants
    return their closed form with the matching tail law.
    """
    if J < 1:
        raise InvalidInput("J must be positive")
    kernel = spec.kernel_spec(target_mode, J)
    if tol is not None and kernel.tail_bound > tol:
        raise TruncationError(f"tail bound {kernel.tail_bound:.3e} exceeds {tol:g}")
    return kernel


# ---------------------------------------------------------- evaluation


def kernel_eval(k: KernelSpec, sigma, deriv: int = 0, full: bool = False):
    """``K^(deriv)(sigma) = sum c_j (-j^2)^deriv exp(-j^2 |sigma|)`` (times ``exp(lam|sigma|)``).

    At ``sigma = 0`` this is the one-sided limit.  With ``full=True`` a tail
    bound (or tail-law correction size) is returned alongside.
    """
    if deriv < 0 or int(deriv) != deriv:
        raise InvalidInput("deriv must be a nonnegative integer")
    if deriv and k.shift:
        raise InvalidInput("derivatives of shifted kernels are not supported")
    sig = np.abs(np.asarray(sigma, dtype=float))
    flat = sig.ravel()
    j2 = k.j ** 2
    if np.any(flat == 0):
        k.check_derivative(deriv)
    out = np.empty(flat.size)
    tails = np.zeros(flat.size)
    cw = k.c * (-j2) ** deriv
    for i, sv in enumerate(flat):
        out[i] = float(cw @ np.exp(-j2 * sv))
        if k.tail is not None:
            xlo = math.log(k.J + 0.5)
            if sv == 0:
                xhi = k.tail.upper(xlo)
            else:
                xhi = max(xlo, 0.5 * math.log(60.0 / sv) + 1)
            t = k.tail.integral(lambda x: (-np.exp(2 * x)) ** deriv * np.exp(-np.exp(2 * x) * sv), xlo, xhi)
            out[i] += t
            tails[i] = abs(t)
        elif k.envelope is not None:
            C, p = k.envelope
            q = p + 2 * deriv
            tails[i] = C * integrate.quad(lambda y: y ** q * math.exp(-y * y * sv), k.J, np.inf)[0] \
                if (sv > 0 or q < -1) else math.inf
    if k.shift:
        out *= np.exp(k.shift * flat)
    out = out.reshape(sig.shape)
    tails = tails.reshape(sig.shape)
    if out.ndim == 0:
        out, tails = float(out), float(tails)
    return (out, tails) if full else out


def kernel_hat_scaled(k: KernelSpec, log_xi) -> np.ndarray:
    """``xi^(2s) Khat_lam(xi) / 2`` at ``xi = exp(log_xi)``, overflow-free.

    ``s`` is :attr:`KernelSpec.s_scale`.  Uses
    ``Khat_lam(xi) = 2 sum c_j (j^2 - lam) / ((j^2 - lam)^2 + xi^2)``.
    """
    lx = np.atleast_1d(np.asarray(log_xi, dtype=float))
    s = k.s_scale
    lam = k.shift
    num = k.j ** 2 - lam
    out = np.empty(lx.size)
    for i, l in enumerate(lx):
        inv = math.exp(-l)
        t = num * inv
        direct = float(np.sum(k.c * t / (1 + t * t))) * math.exp((2 * s - 1) * l)
        out[i] = direct
        if k.tail is not None:
            out[i] += _tail_hat_scaled(k, l)
    return out


def _tail_hat_scaled(k: KernelSpec, l: float) -> float:
    law = k.tail
    s = law.s
    half = 0.5 * l
    X_lo = math.log(k.J + 0.5) - half
    X_hi = max(X_lo, 0.0) + 40.0 / (4 * s) + 2.0
    ell = k.shift * math.exp(-l)

    def g(x):
        Y2 = np.exp(2 * (x - half))
        return (Y2 - ell) / ((Y2 - ell) ** 2 + 1)

    return law.integral(g, X_lo + half, X_hi + half, x_ref=half)


def kernel_hat(k: KernelSpec, xi, full: bool = False):
    """``Khat(xi) = 2 sum c_j j^2 / (j^4 + xi^2)`` (shift-adjusted when ``lam > 0``)."""
    xi = np.abs(np.asarray(xi, dtype=float))
    flat = xi.ravel()
    s = k.s_scale
    out = np.empty(flat.size)
    small = flat < 1e-300
    if np.any(small):
        num = k.j ** 2 - k.shift
        v = 2 * float(np.sum(k.c / num))
        if k.tail is not None:
            law = k.tail
            xlo = math.log(k.J + 0.5)
            v += 2 * law.integral(lambda x: np.exp(-2 * x), xlo, law.upper(xlo))
        out[small] = v
    big = ~small
    if np.any(big):
        lx = np.log(flat[big])
        out[big] = 2 * np.exp(-2 * s * lx) * kernel_hat_scaled(k, lx)
    out = out.reshape(xi.shape)
    err = _hat_tail_error(k, flat).reshape(xi.shape)
    if out.ndim == 0:
        out, err = float(out), float(err)
    return (out, err) if full else out


def _hat_tail_error(k: KernelSpec, xi: np.ndarray) -> np.ndarray:
    J = k.J
    if k.tail is not None:
        # midpoint Euler-Maclaurin error ~ |f'(J)| / 24, f' from the last two terms
        f = lambda jj: 2 * k.tail(jj) * jj ** 2 / (jj ** 4 + xi ** 2)  # noqa: E731
        return np.abs(f(float(J)) - f(float(J - 1))) / 24 if J > 1 else np.abs(f(1.0))
    if k.envelope is not None:
        C, p = k.envelope
        if p + 2 < -1:
            return np.full(xi.shape, 2 * C * J ** (p - 1) / (-(p - 2) - 1))
        return np.full(xi.shape, math.inf)
    return np.zeros(xi.shape)


def export_spectrum(k: KernelSpec, xi, path: str | Path) -> Path:
    """CSV with columns ``xi, khat, tail_bound``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals, errs = kernel_hat(k, xi, full=True)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "khat", "tail_bound"])
        for a, b, c in zip(xi, np.atleast_1d(vals), np.atleast_1d(errs)):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}"])
    return path


class _HatTable:
    """Cubic spline of the scaled spectrum in ``asinh(xi)`` for dense quadrature."""

    def __init__(self, k: KernelSpec, xi_max: float, step: float = 0.01):
        self.s = k.s_scale
        top = math.asinh(xi_max) + 4 * step
        self.x = np.arange(0.0, top + step, step)
        xi = np.sinh(self.x)
        vals = kernel_hat(k, xi)
        # smooth carrier: (1 + xi^2)^s Khat varies slowly in x
        self.spline = CubicSpline(self.x, vals * (1 + xi ** 2) ** self.s)

    def __call__(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        return self.spline(np.arcsinh(xi)) * (1 + xi ** 2) ** (-self.s)


def hat_callable(k: KernelSpec, xi_max: float) -> Callable[[np.ndarray], np.ndarray]:
    key = ("table", float(xi_max))
    tab = k._cache.get(key)
    if tab is None:
        tab = _HatTable(k, xi_max)
        k._cache[key] = tab
    return tab


# ------------------------------------------------------ quadratic forms


def quadratic_form_time(k: KernelSpec, u: ControlSignal, tau: float | None = None,
                        w: ControlSignal | None = None, full: bool = False):
    """One-sided ``int_0^tau u(t) int_0^t w(t') K(t - t') dt' dt`` in the time domain.

    Exact for the piecewise-polynomial representation.  With ``w = u`` this
    is half of the symmetric double integral.  A tail law adds the local
    correction ``sum_{j>J} c_j / j^2 int u w``.
    """
    if k.shift:
        raise InvalidInput("time-domain forms are defined for unshifted kernels")
    w = u if w is None else w
    if u.cells is None or w.cells is None:
        raise ResolutionError("time-domain evaluation refused: signal not sampled")
    if tau is not None and tau < u.T:
        u, w = u.restricted(tau), w.restricted(tau)
    val = float(_exact.quadratic_form(u.cells, w.cells, u.dt, k.j ** 2, k.c))
    tail = 0.0
    if k.tail is not None:
        xlo = math.log(k.J + 0.5)
        ratio = k.tail.integral(lambda x: np.exp(-2 * x), xlo, k.tail.upper(xlo))
        tail = ratio * u.inner(w)
        val += tail
    return (val, abs(tail)) if full else val


def _peak_form(k: KernelSpec, atoms, tau: float) -> float:
    """Diagonal peak approximation of the symmetric form for huge-frequency atoms."""
    total = 0.0
    for a in atoms:
        a2 = a.truncated(tau)
        if a2 is None:
            continue
        a2 = a2.weighted(k.shift)
        lx = a2.ln_omega
        s = k.s_scale
        kh = kernel_hat_scaled(k, lx)[0]
        # (1/2pi) int |a^|^2 Khat ~ Khat(omega) |a|^2 ; Khat = 2 xi^-2s * scaled
        la = math.log(abs(a2.amplitude)) if a2.amplitude else -math.inf
        mass = _atom_peak_l2(replace(a2, amplitude=1.0))
        total += 2 * kh * mass * math.exp(2 * la - 2 * s * lx)
    return total


def quadratic_form_freq(k: KernelSpec, u: ControlSignal, w: ControlSignal | None = None,
                        tau: float | None = None, grid: FrequencyGrid | None = None,
                        rtol: float = 1e-4, full: bool = False, source: str = "auto"):
    """Symmetric ``int int_[0,tau]^2 a(t) b(t') exp(lam|t-t'|) K(t-t')`` via Plancherel.

    ``a = exp(lam t) u`` and ``b = exp(lam t) w`` restricted to ``[0, tau]``;
    the value is ``(1/2pi) int conj(a^) b^ Khat_lam``.  Controls whose atoms
    sit beyond any grid use the diagonal peak approximation.  ``source``
    picks samples or atoms as the spectral representation.
    """
    w = u if w is None else w
    if abs(u.T - w.T) > 1e-12 * u.T:
        from .errors import IncompatibleDurations
        raise IncompatibleDurations("signals have different durations")
    tau = u.T if tau is None else tau
    if not 0 < tau <= u.T * (1 + 1e-12):
        raise InvalidInput("tau must lie in (0, T]")
    peak = any(a.peak for a in u.atoms) or any(a.peak for a in w.atoms)
    if peak:
        if w is not u:
            raise ResolutionError("peak-regime cross forms need identical signals")
        val = _peak_form(k, u.atoms, tau)
        return (val, None) if full else val
    a = _prepare(u, tau, k.shift)
    b = a if w is u else _prepare(w, tau, k.shift)
    if grid is None:
        if source == "samples":
            grid = FrequencyGrid.default(_strip_atoms(a), _strip_atoms(b))
        else:
            grid = FrequencyGrid.default(a, b)
    khat = hat_callable(k, grid.xi_max)
    s_dec = k.s_scale if k.s_scale > 0 else 1.0
    sv = spectral_integral(a, khat, s_dec, grid, w=b, source=source)
    if sv.tail_error > rtol * max(abs(sv.value), 1e-300) and sv.value != 0:
        from .errors import TailToleranceError
        raise TailToleranceError(f"tail error {sv.tail_error:.3e} too large")
    return (sv.value, sv) if full else sv.value


def _prepare(u: ControlSignal, tau: float, lam: float) -> ControlSignal:
    if tau < u.T * (1 - 1e-12):
        if u.cells is not None:
            u = u.restricted(tau)
        else:
            atoms = tuple(x for x in (a.truncated(tau) for a in u.atoms) if x is not None)
            u = ControlSignal(u.T, u.dt, None, atoms)
    if lam:
        u = u.exp_weighted(lam)
    return u
