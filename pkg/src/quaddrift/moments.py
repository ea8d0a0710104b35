"""Exponential moment problems and the null controls built on them.

A moment problem asks for ``u`` on ``[0, T]`` with

    int_0^T u(t) exp(-k^2 (T - t)) dt = d_k

for the tracked modes ``k`` and ``u^(j)(0) = u^(j)(T) = 0`` for ``j < m``.
The minimum ``L2`` norm solution is sought in the span of
``sin(pi t/T)^m cos(i pi t/T)``, ``i < basis_dim``, sampled on the control
grid, by truncated-SVD least squares.  All moments are exact integrals of
the piecewise-linear control, so residuals re-measured by
:func:`quaddrift._exact.decay_moments` agree with the solver's own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _exact
from .errors import (
    ConvergenceError,
    IllConditioned,
    InfeasibleConstraints,
    InvalidInput,
    LostDirectionError,
)
from .signals import ControlSignal, _grid_count, fit_step
from .simulate import Trajectory, simulate_nonlinear
from .system import NonlinearitySpec

SVD_CUTOFF = 1e-12
DEFAULT_BASIS = 64
DEFAULT_STEPS = 4000
LOST_TOL = 1e-10
REFINE_STEPS = 2


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """Targets ``d`` for the modes ``modes`` (default ``0..len(d)-1``)."""

    targets: np.ndarray
    T: float
    m: int = 1
    basis_dim: int = DEFAULT_BASIS
    modes: np.ndarray | None = None

    def __post_init__(self):
        d = np.array(self.targets, dtype=float).ravel()
        if d.size == 0 or not np.all(np.isfinite(d)):
            raise InvalidInput("targets must be finite and nonempty")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidInput("T must be positive")
        if self.m < 0:
            raise InvalidInput("smoothness order must be nonnegative")
        modes = np.arange(d.size) if self.modes is None else np.array(self.modes, dtype=float)
        if modes.shape != d.shape or np.any(modes < 0):
            raise InvalidInput("one nonnegative mode per target")
        d.setflags(write=False)
        modes.setflags(write=False)
        object.__setattr__(self, "targets", d)
        object.__setattr__(self, "modes", modes)

    @property
    def N_m(self) -> int:
        return self.targets.size - 1

    def dt_weight(self, eta: float) -> float:
        """``sup_k |d_k| exp(eta T k^2)``."""
        return float(np.max(np.abs(self.targets) * np.exp(eta * self.T * self.modes ** 2)))


@dataclass(frozen=True, eq=False)
class MomentSolution:
    control: ControlSignal
    targets: np.ndarray
    modes: np.ndarray
    residuals: np.ndarray
    condition: float
    rank: int
    singular_values: np.ndarray = field(repr=False)

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    @property
    def norm(self) -> float:
        return self.control.l2_norm()

    def to_json(self) -> str:
        return json.dumps({"targets": [float(x) for x in self.targets],
                           "modes": [float(x) for x in self.modes],
                           "residuals": [float(x) for x in self.residuals],
                           "max_residual": self.max_residual,
                           "condition": self.condition, "rank": self.rank,
                           "norm": self.norm}, sort_keys=True, indent=2)


def basis_samples(T: float, dt: float, m: int, dim: int) -> np.ndarray:
    """Nodal samples (rows: nodes) of ``sin(pi t/T)^m cos(i pi t/T)``."""
    t = dt * np.arange(_grid_count(T, dt) + 1)
    w = np.sin(math.pi * t / T) ** m
    if m > 0:
        w[[0, -1]] = 0.0
    return w[:, None] * np.cos(np.outer(t, np.arange(dim)) * math.pi / T)


def moment_weights(T: float, dt: float, rates) -> np.ndarray:
    """Rows ``W_k`` with ``int u exp(-r_k (T - t)) = W_k . samples`` for piecewise-linear ``u``."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    n = _grid_count(T, dt)
    x = rates * dt
    E = _exact.e_moments(x, 1)  # (K, 2)
    out = np.zeros((rates.size, n + 1))
    # cell i contributes exp(-r (T - t_{i+1})) (s_i (E0 - E1) + s_{i+1} E1)
    back = np.exp(-np.outer(x, np.arange(n - 1, -1, -1, dtype=float)))
    out[:, :-1] += back * (E[:, 0] - E[:, 1])[:, None]
    out[:, 1:] += back * E[:, 1][:, None]
    return dt * out


def _pl_mass(S: np.ndarray, dt: float) -> np.ndarray:
    a, b = S[:-1], S[1:]
    return dt * (a.T @ a + b.T @ b + 0.5 * (a.T @ b + b.T @ a)) / 3


def solve_moments(p: MomentProblem, dt: float | None = None, cutoff: float = SVD_CUTOFF,
                  residual_tol: float | None = None) -> MomentSolution:
    """Minimum-norm control meeting the moment targets."""
    need = p.targets.size + 2 * p.m
    if p.basis_dim < need:
        raise InfeasibleConstraints(f"basis of {p.basis_dim} functions cannot meet {need} conditions")
    dt = fit_step(p.T, p.T / DEFAULT_STEPS if dt is None else dt)
    if not np.any(p.targets):
        u = ControlSignal.zeros(p.T, dt)
        return MomentSolution(u, p.targets, p.modes, np.zeros_like(p.targets), 1.0, 0, np.zeros(0))
    S = basis_samples(p.T, dt, p.m, p.basis_dim)
    # orthonormalise the sampled basis in L2
    lam, V = np.linalg.eigh(_pl_mass(S, dt))
    keep = lam > 1e-13 * lam.max()
    Q = V[:, keep] / np.sqrt(lam[keep])
    W = moment_weights(p.T, dt, p.modes ** 2)
    B = W @ (S @ Q)
    scale = np.linalg.norm(B, axis=1)
    scale[scale == 0] = 1.0
    U, sig, Vt = np.linalg.svd(B / scale[:, None], full_matrices=False)
    rank = int(np.sum(sig > cutoff * sig[0]))

    def pinv(d):
        return Vt[:rank].T @ ((U[:, :rank].T @ (d / scale)) / sig[:rank])

    y = pinv(p.targets)
    res = None
    # iterative refinement against the exactly re-measured moments
    for _ in range(1 + REFINE_STEPS):
        if res is not None:
            y_new = y - pinv(res)
            u_new = ControlSignal.from_samples(S @ (Q @ y_new), p.T, dt)
            res_new = _exact.decay_moments(u_new.cells, dt, p.modes ** 2) - p.targets
            if np.max(np.abs(res_new)) >= np.max(np.abs(res)):
                break
            y, u, res = y_new, u_new, res_new
            continue
        u = ControlSignal.from_samples(S @ (Q @ y), p.T, dt)
        res = _exact.decay_moments(u.cells, dt, p.modes ** 2) - p.targets
    cond = float(sig[0] / sig[rank - 1]) if rank else math.inf
    sol = MomentSolution(u, p.targets, p.modes, res, cond, rank, sig)
    if residual_tol is not None and sol.max_residual > residual_tol:
        err = IllConditioned(f"moment residual {sol.max_residual:.3e} exceeds {residual_tol:g} "
                             f"(condition {cond:.3e}, rank {rank}/{sig.size})")
        err.solution = sol
        raise err
    return sol


# --------------------------------------------------------------- controls


def _tracked(spec: NonlinearitySpec, z0: np.ndarray, modes, tol: float) -> np.ndarray:
    ks = np.arange(spec.N + 1) if modes is None else np.asarray(modes, dtype=int)
    mu = spec.mu_coeffs[ks]
    lost = np.abs(mu) <= tol
    bad = ks[lost & (np.abs(z0[ks]) > 0)]
    if bad.size:
        raise LostDirectionError(f"modes {bad.tolist()} have <mu, phi_k> = 0 and cannot be steered")
    return ks[~lost]


def linear_null_control(spec: NonlinearitySpec, z0, T: float, m: int = 1, modes=None,
                        dt: float | None = None, source_moments: np.ndarray | None = None,
                        basis_dim: int = DEFAULT_BASIS, lost_tol: float = LOST_TOL) -> MomentSolution:
    """Control steering the linearized state from ``z0`` to zero on tracked modes.

    ``source_moments[k] = int exp(-k^2 (T - t)) f_k(t) dt`` accounts for a
    frozen additional source ``f``; targets are
    ``d_k = -(exp(-k^2 T) z0_k + source_k) / <mu, phi_k>``.
    """
    z0 = np.asarray(getattr(z0, "coeffs", z0), dtype=float)
    if z0.shape != (spec.N + 1,):
        raise InvalidInput("initial state does not match the truncation")
    ks = _tracked(spec, z0, modes, lost_tol)
    rhs = np.exp(-(ks ** 2) * T) * z0[ks]
    if source_moments is not None:
        rhs = rhs + np.asarray(source_moments, dtype=float)[ks]
    d = -rhs / spec.mu_coeffs[ks]
    return solve_moments(MomentProblem(d, T, m, max(basis_dim, ks.size + 2 * m), ks), dt)


def lift_linear_invariant(u_base: ControlSignal, spec: NonlinearitySpec | None = None,
                          T: float | None = None, m: int = 1, modes=None,
                          basis_dim: int = DEFAULT_BASIS) -> ControlSignal:
    """``u_base`` minus the minimum-norm control with the same tracked moments.

    Default tracked modes: ``0..N`` of ``spec`` (``0..12`` without a spec).
    The correction's ``L2`` norm and the largest remaining moment are stored
    in the returned signal's metadata.
    """
    if u_base.cells is None:
        from .errors import ResolutionError
        raise ResolutionError("moment lifting needs a sampled control")
    T = u_base.T if T is None else T
    if abs(T - u_base.T) > 1e-9 * T:
        raise InvalidInput("lifting horizon must equal the control duration")
    if modes is None:
        modes = np.arange((spec.N if spec is not None else 12) + 1)
    modes = np.asarray(modes, dtype=float)
    d = _exact.decay_moments(u_base.cells, u_base.dt, modes ** 2)
    p = MomentProblem(d, T, m, max(basis_dim, modes.size + 2 * m), modes)
    corr = solve_moments(p, u_base.dt).control
    if u_base.degree > 1:
        raise InvalidInput("lifting applies to piecewise-linear controls")
    out = ControlSignal(u_base.T, u_base.dt, u_base.cells - corr.cells, (),
                        {"correction_l2": corr.l2_norm(), "modes": modes})
    rem = _exact.decay_moments(out.cells, out.dt, modes ** 2)
    out._meta["max_moment"] = float(np.max(np.abs(rem)))
    return out


@dataclass(frozen=True)
class PicardReport:
    iterations: int
    residuals: tuple
    control_norms: tuple
    converged: bool
    modes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def nonlinear_null_control(spec: NonlinearitySpec, z0, T: float, m: int = 1,
                           max_iter: int = 8, tol: float = 1e-6, dt: float | None = None,
                           radius: float = 0.1, modes=None, basis_dim: int = DEFAULT_BASIS):
    """Picard iteration of source-aware linear null controls.

    Iterate ``u <- linear_null_control(z0, source = u (Gamma[z] - Gamma[0]))``
    along the simulated trajectory until ``|z(T)| <= tol |z0|`` on the tracked
    modes (by default every mode with ``<mu, phi_k> != 0``; lost directions
    drift at second order and are reported, not steered).  Returns
    ``(control, trajectory, report)``.
    """
    z0 = np.asarray(getattr(z0, "coeffs", z0), dtype=float)
    nz0 = float(np.linalg.norm(z0))
    if nz0 > radius:
        raise InvalidInput(f"|z0| = {nz0:.3g} exceeds the smallness radius {radius:g}")
    dt = fit_step(T, T / DEFAULT_STEPS if dt is None else dt)
    ks = _tracked(spec, z0, modes, LOST_TOL)
    if nz0 == 0:
        u = ControlSignal.zeros(T, dt)
        tr = Trajectory(np.array([0.0, T]), np.zeros((2, spec.N + 1)))
        return u, tr, PicardReport(0, (), (), True, ks)
    rates = np.arange(spec.N + 1, dtype=float) ** 2
    source = None
    residuals, norms = [], []
    for it in range(1, max_iter + 1):
        sol = linear_null_control(spec, z0, T, m, modes=ks, dt=dt, source_moments=source,
                                  basis_dim=basis_dim)
        u = sol.control
        tr = simulate_nonlinear(spec, z0, u, dt)
        r = float(np.linalg.norm(tr.coeffs[-1][ks])) / nz0
        residuals.append(r)
        norms.append(u.l2_norm())
        if r <= tol:
            return u, tr, PicardReport(it, tuple(residuals), tuple(norms), True, ks)
        f = u.samples[:, None] * (tr.coeffs @ spec.G.T)
        source = np.zeros(spec.N + 1)
        for k in ks:
            source[k] = _exact.decay_moments(_exact.pl_coeffs(f[:, k]), dt, rates[k])[0]
    raise ConvergenceError(f"no convergence in {max_iter} iterations (last residual {residuals[-1]:.3e})",
                           history=list(zip(residuals, norms)))


__all__ = ["MomentProblem", "MomentSolution", "PicardReport", "basis_samples",
           "linear_null_control", "lift_linear_invariant", "moment_weights",
           "nonlinear_null_control", "solve_moments"]
