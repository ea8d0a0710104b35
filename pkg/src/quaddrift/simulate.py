"""Time integration of ``z' + A z = u(t) Gamma[z]`` in the cosine basis.

``A = diag(k^2)`` is integrated exactly; the source is advanced with the
two-stage exponential Runge-Kutta rule (ETD2RK), globally second order.
The same stepping drives the linearized system ``z1`` and the second-order
system ``z2`` (source ``u Gamma'[0] z1``).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BlowUpError, InvalidInput, UnderResolvedControl
from .kernels import KernelSpec, coefficients, quadratic_form_time
from .signals import ControlSignal, _grid_count, iterated_primitive, sobolev_norm_neg_sq
from .system import NonlinearitySpec

WELL_POSED_UMAX = 1.0
BLOW_UP = 1e8
_ATOM_RESOLUTION = 40.0


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients ``<z, phi_k>`` for ``k = 0..N``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise InvalidInput("field coefficients must be finite and nonempty")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        return cls(np.zeros(N + 1))

    @classmethod
    def mode(cls, N: int, k: int, value: float = 1.0) -> "SpectralField":
        c = np.zeros(N + 1)
        c[k] = value
        return cls(c)

    @property
    def N(self) -> int:
        return self.coeffs.size - 1

    def _w(self) -> np.ndarray:
        return 1.0 + np.arange(self.N + 1)

    def l2(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def h1(self) -> float:
        return float(np.linalg.norm(self._w() * self.coeffs))

    def hm1(self) -> float:
        return float(np.linalg.norm(self.coeffs / self._w()))

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = np.arange(self.N + 1)
        n = np.full(k.size, math.sqrt(2 / math.pi))
        n[0] = 1 / math.sqrt(math.pi)
        return np.cos(np.multiply.outer(x, k)) @ (n * self.coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + _as_coeffs(other, self.N))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - _as_coeffs(other, self.N))

    def __mul__(self, k: float) -> "SpectralField":
        return SpectralField(float(k) * self.coeffs)

    __rmul__ = __mul__

    def __getitem__(self, k: int) -> float:
        return float(self.coeffs[k])


def _as_coeffs(z, N: int) -> np.ndarray:
    c = np.asarray(getattr(z, "coeffs", z), dtype=float)
    if c.shape != (N + 1,):
        raise InvalidInput(f"expected {N + 1} coefficients, got {c.shape}")
    return c


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Saved states ``coeffs[i]`` at ``times[i]``; ``diagnostics`` holds per-step data."""

    times: np.ndarray
    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise InvalidInput("times must be strictly increasing")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape[0] != t.size:
            raise InvalidInput("one state per time is required")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @property
    def fields(self) -> list[SpectralField]:
        return [SpectralField(c) for c in self.coeffs]

    @property
    def final(self) -> SpectralField:
        return SpectralField(self.coeffs[-1])

    @property
    def initial(self) -> SpectralField:
        return SpectralField(self.coeffs[0])

    def l2_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    def to_csv(self, path: str | Path) -> Path:
        """Long format ``t,k,coeff``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "k", "coeff"])
            for t, row in zip(self.times, self.coeffs):
                for k, v in enumerate(row):
                    w.writerow([f"{t:.17g}", k, f"{v:.17g}"])
        return path


# ------------------------------------------------------------- stepping


def _phi_weights(rates: np.ndarray, h: float):
    """``exp(-r h)``, ``h phi1(-r h)`` and ``h phi2(-r h)`` without cancellation."""
    x = rates * h
    e = np.exp(-x)
    p1 = np.empty_like(x)
    p2 = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    p1[small] = 1 - xs / 2 + xs ** 2 / 6 - xs ** 3 / 24
    p2[small] = 0.5 - xs / 6 + xs ** 2 / 24 - xs ** 3 / 120
    xb = x[~small]
    p1[~small] = -np.expm1(-xb) / xb
    p2[~small] = (np.expm1(-xb) + xb) / xb ** 2
    return e, h * p1, h * p2


def _control_grid(u: ControlSignal, T: float | None, dt: float | None) -> tuple[float, int]:
    if u.cells is None:
        raise UnderResolvedControl("the control has atoms beyond grid resolution and no samples")
    T = u.T if T is None else T
    if abs(T - u.T) > 1e-9 * u.T:
        raise InvalidInput("simulation horizon must equal the control duration")
    dt = u.dt if dt is None else dt
    ratio = u.dt / dt
    r = round(ratio)
    if r < 1 or abs(ratio - r) > 1e-9 * ratio:
        raise InvalidInput("simulation step must divide the control step")
    wmax = max((a.omega for a in u.atoms), default=0.0)
    if wmax * dt > 1.0 / _ATOM_RESOLUTION:
        raise UnderResolvedControl(
            f"dt = {dt:g} does not resolve omega = {wmax:g} (need dt <= 1/(40 omega))")
    return dt, _grid_count(T, dt)


def _etd2rk(rates, source, z0, dt, steps, save_every, bound):
    e, w1, w2 = _phi_weights(rates, dt)
    z = z0.copy()
    saved_t, saved = [0.0], [z.copy()]
    src_norm = np.empty(steps)
    f = source(z, 0)
    for n in range(steps):
        a = e * z + w1 * f
        fa = source(a, n + 1)
        z = a + w2 * (fa - f)
        f = source(z, n + 1)
        src_norm[n] = np.linalg.norm(f)
        nz = np.linalg.norm(z)
        if not math.isfinite(nz) or nz > bound:
            raise BlowUpError(f"state norm {nz:.3e} exceeded {bound:g} at step {n + 1}")
        if (n + 1) % save_every == 0 or n + 1 == steps:
            saved_t.append((n + 1) * dt)
            saved.append(z.copy())
    return np.array(saved_t), np.array(saved), src_norm


def _check_amplitude(u: ControlSignal, umax: float):
    m = u.max_abs()
    if m > umax:
        warnings.warn(f"|u|_inf = {m:.3g} exceeds the well-posedness threshold {umax:g}",
                      RuntimeWarning, stacklevel=3)


def simulate_nonlinear(spec: NonlinearitySpec, z0, u: ControlSignal, dt: float | None = None,
                       save_every: int = 1, bound: float = BLOW_UP,
                       umax: float = WELL_POSED_UMAX) -> Trajectory:
    """``z' + A z = u Gamma[z]`` from ``z0`` over the control's horizon."""
    N = spec.N
    z0 = _as_coeffs(z0, N)
    dt, steps = _control_grid(u, None, dt)
    _check_amplitude(u, umax)
    uv = u(dt * np.arange(steps + 1))
    mu, G = spec.mu_coeffs, spec.G
    rates = np.arange(N + 1, dtype=float) ** 2

    def source(z, n):
        return uv[n] * (mu + G @ z)

    t, c, sn = _etd2rk(rates, source, z0, dt, steps, save_every, bound)
    return Trajectory(t, c, {"source_norm": sn, "dt": dt})


def simulate_linearized(spec: NonlinearitySpec, u: ControlSignal, T: float | None = None,
                        dt: float | None = None, save_every: int = 1) -> Trajectory:
    """``z1' + A z1 = u mu`` from rest (exact for piecewise-linear controls)."""
    N = spec.N
    dt, steps = _control_grid(u, T, dt)
    uv = u(dt * np.arange(steps + 1))
    mu = spec.mu_coeffs
    rates = np.arange(N + 1, dtype=float) ** 2

    def source(z, n):
        return uv[n] * mu

    t, c, sn = _etd2rk(rates, source, np.zeros(N + 1), dt, steps, save_every, math.inf)
    return Trajectory(t, c, {"source_norm": sn, "dt": dt})


def simulate_second_order(spec: NonlinearitySpec, u: ControlSignal, T: float | None = None,
                          dt: float | None = None, save_every: int = 1) -> Trajectory:
    """``z2' + A z2 = u Gamma'[0] z1`` from rest; ``z1`` is stepped alongside."""
    N = spec.N
    dt, steps = _control_grid(u, T, dt)
    uv = u(dt * np.arange(steps + 1))
    mu, G = spec.mu_coeffs, spec.G
    k2 = np.arange(N + 1, dtype=float) ** 2
    rates = np.concatenate([k2, k2])

    def source(y, n):
        return uv[n] * np.concatenate([mu, G @ y[: N + 1]])

    t, c, sn = _etd2rk(rates, source, np.zeros(2 * N + 2), dt, steps, save_every, math.inf)
    return Trajectory(t, c[:, N + 1:], {"source_norm": sn, "dt": dt, "z1": c[:, : N + 1]})


# ---------------------------------------------------------------- drift


@dataclass(frozen=True)
class DriftReport:
    delta: float
    drift: float
    un_l2_sq: float
    un_hs_sq: float | None
    n: int
    s: float | None
    a: float | None
    predicted: float | None
    ratio: float | None
    coefficient: float | None
    system: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def drift_series(k: KernelSpec, n: int) -> float:
    """``sum_j j^(2(2n-1)) c_j`` over the explicit coefficients."""
    return float(np.sum(k.c * k.j ** (2 * (2 * n - 1))))


def measure_drift(spec: NonlinearitySpec, u: ControlSignal, delta: float = 0.0,
                  dt: float | None = None, n: int = 1, s: float | None = None,
                  a: float | None = None, system: str = "nonlinear",
                  series_terms: int | None = None) -> DriftReport:
    """Drift of the lost mode 0 from ``z0 = delta phi_0`` against its prediction.

    Integer order (``s=None``): prediction ``-a (-1)^n |u_n|^2_{L2}`` with
    ``a`` the kernel series.  Fractional order: ``a gamma(s) (-1)^n
    |u_n|^2_{H^-s}`` with ``a`` supplied by the caller.  ``coefficient`` is
    the measured drift divided by the norm factor, to be compared with ``a``.
    """
    if system == "nonlinear":
        z0 = np.zeros(spec.N + 1)
        z0[0] = delta
        tr = simulate_nonlinear(spec, z0, u, dt, save_every=10 ** 9)
        drift = float(tr.final[0] - delta)
    elif system == "second_order":
        tr = simulate_second_order(spec, u, None, dt, save_every=10 ** 9)
        drift = float(tr.final[0])
    else:
        raise InvalidInput("system is 'nonlinear' or 'second_order'")
    un = iterated_primitive(u, n) if n > 0 else u
    l2 = un.l2_norm_sq()
    hs = None
    sign = (-1.0) ** n
    if s is None:
        if a is None:
            a = drift_series(coefficients(spec, 0, series_terms or spec.N), n)
        norm = -sign * l2
        predicted = a * norm
    else:
        from .kernels import gamma_s
        hs = float(sobolev_norm_neg_sq(un, s).value)
        norm = sign * gamma_s(s) * hs
        predicted = None if a is None else a * norm
    coef = drift / norm if norm else None
    ratio = drift / predicted if predicted else None
    return DriftReport(delta, drift, l2, hs, n, s, a, predicted, ratio, coef, system)


# ---------------------------------------------------------------- identity


def kernel_derivative_at_zero(k: KernelSpec, p: int) -> float:
    """``K^(p)(0+) = sum c_j (-j^2)^p``."""
    return float(np.sum(k.c * (-k.j ** 2) ** p))


def ibp_identity_check(k: KernelSpec, u: ControlSignal, n: int, T: float | None = None,
                       full: bool = False):
    """Relative residual of the ``n``-fold integration by parts identity

    ``F(u; K) = (-1)^n F(u_n; K^(2n)) + sum_l (-1)^l K^(2l-1)(0) |u_l|^2 + Q_n``

    with ``F(u; K) = int_0^T u(t) int_0^t u(t') K(t - t')`` and boundary part
    ``Q_n = sum_l (-1)^(l-1) [K^(2l-2)(0) u_l(T)^2 / 2 + u_l(T) alpha_l]``,
    ``alpha_l = int_0^T u_l(t) K^(2l-1)(T - t) dt``.
    """
    if n < 1:
        raise InvalidInput("n must be at least 1")
    if k.shift:
        raise InvalidInput("the identity is stated for unshifted kernels")
    if k.tail is not None or k.envelope is not None:
        k.check_derivative(2 * n)
    if T is not None and T < u.T:
        u = u.restricted(T)
    lhs = quadratic_form_time(k, u)
    j2 = k.j ** 2
    bulk = (-1.0) ** n * quadratic_form_time(k.derivative_kernel(2 * n), iterated_primitive(u, n))
    middle = 0.0
    boundary = 0.0
    from . import _exact
    for ell in range(1, n + 1):
        ul = iterated_primitive(u, ell)
        sgn = (-1.0) ** ell
        middle += sgn * kernel_derivative_at_zero(k, 2 * ell - 1) * ul.l2_norm_sq()
        uT = float(ul(ul.T))
        mom = _exact.decay_moments(ul.cells, ul.dt, j2)
        alpha = float(np.sum(k.c * (-j2) ** (2 * ell - 1) * mom))
        boundary += -sgn * (kernel_derivative_at_zero(k, 2 * ell - 2) * uT ** 2 / 2 + uT * alpha)
    rhs = bulk + middle + boundary
    scale = max(abs(lhs), abs(bulk), abs(middle), abs(boundary), 1e-300)
    res = abs(lhs - rhs) / scale if (lhs or rhs) else 0.0
    if full:
        return res, {"lhs": lhs, "bulk": bulk, "middle": middle, "boundary": boundary}
    return res
