"""Scalar controls on [0, T]: representation, Fourier transforms, norms.

A :class:`ControlSignal` is a piecewise polynomial on a uniform grid, extended
by zero outside ``[0, T]``.  Controls built from sine atoms also keep the
atom list so that their transforms and norms can be evaluated in closed form,
including at frequencies far beyond anything a grid can resolve.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _exact
from .errors import (
    AliasingError,
    DerivativeUnavailable,
    IncompatibleDurations,
    InvalidInput,
    ResolutionError,
    TailToleranceError,
)

# ratio omega * tau above which an atom is treated through its spectral peak only
PEAK_REGIME = 1e9
_GRID_TOL = 1e-9
_MAX_PANELS = 200_000
_GL16 = np.polynomial.legendre.leggauss(16)


# --------------------------------------------------------------------- atoms


@dataclass(frozen=True)
class Atom:
    """``A exp(-lam (t - t0)) sin(omega (t - t0) + phase)`` on ``[t0, t0 + tau]``.

    ``log_omega`` stores ``ln(omega)`` for frequencies that overflow a double;
    when it is set, ``omega`` is derived from it.
    """

    amplitude: float
    omega: float
    tau: float
    lam: float = 0.0
    t0: float = 0.0
    phase: float = 0.0
    log_omega: float | None = None

    def __post_init__(self):
        if self.log_omega is not None:
            object.__setattr__(self, "omega", _safe_exp(self.log_omega))
        vals = (self.amplitude, self.tau, self.lam, self.t0, self.phase)
        if not all(math.isfinite(v) for v in vals) or self.tau <= 0:
            raise InvalidInput(f"malformed atom {self!r}")
        if self.log_omega is None and not math.isfinite(self.omega):
            raise InvalidInput("atom frequency must be finite or given in log space")

    @property
    def ln_omega(self) -> float:
        if self.log_omega is not None:
            return self.log_omega
        return math.log(self.omega) if self.omega > 0 else -math.inf

    @property
    def end(self) -> float:
        return self.t0 + self.tau

    @property
    def peak(self) -> bool:
        """True when only the spectral peak of the atom can be represented."""
        return self.ln_omega + math.log(self.tau) > math.log(PEAK_REGIME)

    def __call__(self, t) -> np.ndarray:
        """Pointwise value; at the two ends the mean of the one-sided limits."""
        t = np.asarray(t, dtype=float)
        s = t - self.t0
        eps = 1e-12 * max(self.tau, abs(self.t0))
        inside = (s >= -eps) & (s <= self.tau + eps)
        edge = inside & ((np.abs(s) <= eps) | (np.abs(s - self.tau) <= eps))
        sc = np.where(inside, np.clip(s, 0.0, self.tau), 0.0)
        val = self.amplitude * np.exp(-self.lam * sc) * np.sin(self.omega * sc + self.phase)
        return np.where(inside, np.where(edge, 0.5 * val, val), 0.0)

    def derivative(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        """k-th derivative inside the support (jumps at the ends are ignored)."""
        z = complex(-self.lam, self.omega) ** k

        def f(t):
            t = np.asarray(t, dtype=float)
            s = t - self.t0
            inside = (s >= 0) & (s <= self.tau)
            sc = np.where(inside, s, 0.0)
            w = np.exp(-self.lam * sc) * np.exp(1j * (self.omega * sc + self.phase))
            return np.where(inside, self.amplitude * (z * w).imag, 0.0)

        return f

    def weighted(self, lam: float) -> "Atom":
        """The atom multiplied by ``exp(lam t)``."""
        return replace(self, amplitude=self.amplitude * math.exp(lam * self.t0),
                       lam=self.lam - lam)

    def truncated(self, t_end: float) -> "Atom | None":
        if t_end <= self.t0:
            return None
        return replace(self, tau=min(self.tau, t_end - self.t0))

    def to_dict(self) -> dict:
        d = {"amplitude": self.amplitude, "omega": self.omega, "tau": self.tau,
             "lam": self.lam, "t0": self.t0, "phase": self.phase}
        if self.log_omega is not None:
            d["log_omega"] = self.log_omega
            d["omega"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Atom":
        d = dict(d)
        if d.get("omega") is None:
            d["omega"] = math.inf
        return cls(**d)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _interval_integral(z, length):
    """``int_0^length exp(z s) ds`` computed without cancellation."""
    return length * _exact.m_moments(np.asarray(z, dtype=complex) * length, 0)[..., 0]


def atom_hat(atom: Atom, xi) -> np.ndarray:
    """Closed-form ``int atom(t) exp(-i xi t) dt``.

    Valid at any finite ``xi`` for atoms with a representable frequency.
    """
    if not math.isfinite(atom.omega):
        raise InvalidInput("closed-form transform needs a finite frequency; use the peak path")
    xi = np.asarray(xi, dtype=float)
    tau, lam, w, ph = atom.tau, atom.lam, atom.omega, atom.phase
    plus = np.exp(1j * ph) * _interval_integral(-lam + 1j * (w - xi), tau)
    minus = np.exp(-1j * ph) * _interval_integral(-lam - 1j * (w + xi), tau)
    return atom.amplitude * np.exp(-1j * xi * atom.t0) * (plus - minus) / 2j


def _atom_pair_l2(p: Atom, q: Atom) -> float:
    """Exact ``int p q`` for two atoms with representable frequencies."""
    lo, hi = max(p.t0, q.t0), min(p.end, q.end)
    if hi <= lo:
        return 0.0
    length = hi - lo
    # sin a sin b = Re(exp(i(a-b)) - exp(i(a+b))) / 2, evaluated from t = lo
    decay = -p.lam * (lo - p.t0) - q.lam * (lo - q.t0)
    ap = p.omega * (lo - p.t0) + p.phase
    aq = q.omega * (lo - q.t0) + q.phase
    rate = -(p.lam + q.lam)
    diff = np.exp(1j * (ap - aq)) * _interval_integral(rate + 1j * (p.omega - q.omega), length)
    summ = np.exp(1j * (ap + aq)) * _interval_integral(rate + 1j * (p.omega + q.omega), length)
    return float(p.amplitude * q.amplitude * math.exp(decay) * (diff - summ).real / 2)


def _atom_peak_l2(p: Atom) -> float:
    """Leading-order ``int p^2`` for an atom beyond the representable range."""
    lam, tau = p.lam, p.tau
    mean = tau if lam == 0 else -math.expm1(-2 * lam * tau) / (2 * lam)
    return 0.5 * p.amplitude ** 2 * mean


# -------------------------------------------------------------------- signal


def _grid_count(T: float, dt: float) -> int:
    if not (math.isfinite(T) and math.isfinite(dt)) or T <= 0 or dt <= 0:
        raise InvalidInput(f"need T > 0 and dt > 0, got T={T}, dt={dt}")
    m = T / dt
    n = round(m)
    if n < 1 or abs(m - n) > _GRID_TOL * max(1.0, m):
        raise InvalidInput(f"T/dt = {m} is not an integer")
    return int(n)


def fit_step(T: float, dt: float) -> float:
    """Largest step not exceeding ``dt`` that divides ``T`` exactly."""
    if T <= 0 or dt <= 0:
        raise InvalidInput("need T > 0 and dt > 0")
    return T / math.ceil(T / dt - 1e-9)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Control on ``[0, T]`` sampled at ``t_i = i dt``.

    ``cells`` holds per-cell polynomial coefficients in the local variable
    ``theta in [0, 1]``.  Plain sampled controls are piecewise linear; exact
    primitives raise the degree.  A control made only of atoms whose
    frequency cannot be sampled has ``cells = None``.
    """

    T: float
    dt: float
    cells: np.ndarray | None
    atoms: tuple[Atom, ...] = ()
    _meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = _grid_count(self.T, self.dt)
        if self.cells is not None:
            c = np.asarray(self.cells, dtype=float)
            if c.ndim != 2 or c.shape[0] != m:
                raise InvalidInput(f"expected {m} cells, got shape {c.shape}")
            if not np.all(np.isfinite(c)):
                raise InvalidInput("non-finite samples")
            c.setflags(write=False)
            object.__setattr__(self, "cells", c)
        elif not self.atoms:
            raise InvalidInput("a signal needs samples or atoms")
        object.__setattr__(self, "atoms", tuple(self.atoms))

    # construction ----------------------------------------------------------

    @classmethod
    def from_samples(cls, samples, T: float, dt: float,
                     atoms: Sequence[Atom] = ()) -> "ControlSignal":
        s = np.asarray(samples, dtype=float)
        m = _grid_count(T, dt)
        if s.shape != (m + 1,):
            raise InvalidInput(f"expected {m + 1} samples, got {s.shape}")
        return cls(T, dt, _exact.pl_coeffs(s), tuple(atoms))

    @classmethod
    def from_function(cls, f: Callable, T: float, dt: float) -> "ControlSignal":
        m = _grid_count(T, dt)
        t = dt * np.arange(m + 1)
        return cls.from_samples(np.broadcast_to(f(t), t.shape).astype(float), T, dt)

    @classmethod
    def from_atoms(cls, atoms: Iterable[Atom], T: float, dt: float,
                   sample: bool | None = None) -> "ControlSignal":
        """Sum of atoms; sampled only when every atom is resolved by the grid."""
        atoms = tuple(atoms)
        m = _grid_count(T, dt)
        resolved = all(math.isfinite(a.omega) and a.omega * dt <= 1.0 for a in atoms)
        if sample is None:
            sample = resolved
        if sample and not resolved:
            raise AliasingError("atom frequency exceeds the grid resolution")
        if not sample:
            return cls(T, dt, None, atoms)
        t = dt * np.arange(m + 1)
        vals = np.zeros_like(t)
        for a in atoms:
            vals += a(t)
        return cls.from_samples(vals, T, dt, atoms)

    @classmethod
    def zeros(cls, T: float, dt: float) -> "ControlSignal":
        return cls.from_samples(np.zeros(_grid_count(T, dt) + 1), T, dt)

    # basic views -----------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return _grid_count(self.T, self.dt)

    @property
    def sampled(self) -> bool:
        return self.cells is not None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_cells + 1)

    @property
    def samples(self) -> np.ndarray:
        self._need_cells()
        return _exact.node_values(self.cells)

    @property
    def degree(self) -> int:
        self._need_cells()
        return self.cells.shape[1] - 1

    def _need_cells(self):
        if self.cells is None:
            raise ResolutionError("signal has atoms beyond grid resolution and no samples")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.cells is None:
            out = np.zeros_like(t)
            for a in self.atoms:
                out = out + a(t)
            return out
        m = self.n_cells
        pos = t / self.dt
        i = np.clip(np.floor(pos).astype(int), 0, m - 1)
        th = pos - i
        val = np.polynomial.polynomial.polyval(th, self.cells[i].T, tensor=False)
        return np.where((t >= 0) & (t <= self.T * (1 + 1e-14)), val, 0.0)

    def max_abs(self) -> float:
        if self.cells is None:
            return float(sum(abs(a.amplitude) for a in self.atoms))
        return float(np.max(np.abs(self.samples)))

    # arithmetic ------------------------------------------------------------

    def _check_compatible(self, other: "ControlSignal"):
        if abs(self.T - other.T) > _GRID_TOL * self.T:
            raise IncompatibleDurations("signals have different durations")
        if abs(self.dt - other.dt) > _GRID_TOL * self.dt:
            raise InvalidInput("signals live on different grids")

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        if not isinstance(other, ControlSignal):
            return NotImplemented
        self._check_compatible(other)
        atoms = self.atoms + other.atoms if (self.atoms and other.atoms) else ()
        if self.cells is None or other.cells is None:
            if not (self.atoms and other.atoms):
                raise ResolutionError("cannot add a sampled signal to an unsampled one")
            return ControlSignal(self.T, self.dt, None, self.atoms + other.atoms)
        d = max(self.cells.shape[1], other.cells.shape[1])
        c = _pad(self.cells, d) + _pad(other.cells, d)
        return ControlSignal(self.T, self.dt, c, atoms)

    def __mul__(self, k: float) -> "ControlSignal":
        k = float(k)
        atoms = tuple(replace(a, amplitude=k * a.amplitude) for a in self.atoms)
        cells = None if self.cells is None else k * self.cells
        return ControlSignal(self.T, self.dt, cells, atoms)

    __rmul__ = __mul__

    def __neg__(self) -> "ControlSignal":
        return self * -1.0

    def __sub__(self, other: "ControlSignal") -> "ControlSignal":
        return self + (-other)

    def exp_weighted(self, lam: float) -> "ControlSignal":
        """``t -> exp(lam t) u(t)`` (sampled part re-interpolated)."""
        atoms = tuple(a.weighted(lam) for a in self.atoms)
        if self.cells is None:
            return ControlSignal(self.T, self.dt, None, atoms)
        if self.degree > 1:
            raise InvalidInput("exponential weighting is defined for sampled signals")
        s = self.samples * np.exp(lam * self.times)
        return ControlSignal.from_samples(s, self.T, self.dt, atoms)

    def restricted(self, t_end: float) -> "ControlSignal":
        """Restriction to ``[0, t_end]``; ``t_end`` must be a grid point."""
        n = _grid_count(t_end, self.dt) if t_end < self.T else self.n_cells
        T = n * self.dt
        atoms = tuple(a2 for a2 in (a.truncated(T) for a in self.atoms) if a2 is not None)
        cells = None if self.cells is None else self.cells[:n]
        return ControlSignal(T, self.dt, cells, atoms)

    # exact integrals ------------------------------------------------------

    def inner(self, other: "ControlSignal") -> float:
        """Exact ``int_0^T u w``."""
        self._check_compatible(other)
        if self.cells is None or other.cells is None:
            return _atoms_inner(self.atoms, other.atoms)
        a, b = self.cells, other.cells
        p = np.arange(a.shape[1])[:, None]
        q = np.arange(b.shape[1])[None, :]
        gram = (a.T @ b) / (p + q + 1)
        return float(self.dt * gram.sum())

    def l2_norm_sq(self) -> float:
        return self.inner(self)

    def l2_norm(self) -> float:
        return math.sqrt(max(self.l2_norm_sq(), 0.0))

    def l1_norm(self) -> float:
        if self.cells is None:
            return float(sum(abs(a.amplitude) * _abs_decay_integral(a) for a in self.atoms))
        # 8-point Gauss rule per cell is exact for |PL| away from sign changes
        x, w = np.polynomial.legendre.leggauss(8)
        th = (x + 1) / 2
        vals = np.polynomial.polynomial.polyval(th[:, None], self.cells.T, tensor=True)
        return float(self.dt * np.sum(np.abs(vals).T @ (w / 2)))

    def integral(self) -> float:
        if self.cells is None:
            return float(fourier_transform(self, 0.0).real)
        q = np.arange(self.cells.shape[1])
        return float(self.dt * np.sum(self.cells / (q + 1)))

    # io -------------------------------------------------------------------

    def to_csv(self, path: str | Path) -> Path:
        """Write ``t,u`` samples and a JSON sidecar with ``T``, ``dt`` and atoms."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u"])
            if self.cells is not None:
                for t, u in zip(self.times, self.samples):
                    w.writerow([repr(float(t)), repr(float(u))])
        side = path.with_suffix(".json")
        side.write_text(json.dumps({"T": self.T, "dt": self.dt,
                                    "sampled": self.cells is not None,
                                    "atoms": [a.to_dict() for a in self.atoms]},
                                   indent=2, sort_keys=True))
        return side

    @classmethod
    def from_csv(cls, path: str | Path) -> "ControlSignal":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        atoms = tuple(Atom.from_dict(d) for d in meta.get("atoms", []))
        if not meta.get("sampled", True):
            return cls(meta["T"], meta["dt"], None, atoms)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        u = np.array([float(r["u"]) for r in rows])
        return cls.from_samples(u, meta["T"], meta["dt"], atoms)


def _pad(c: np.ndarray, d: int) -> np.ndarray:
    if c.shape[1] == d:
        return c
    return np.pad(c, ((0, 0), (0, d - c.shape[1])))


def _atoms_inner(xs: Sequence[Atom], ys: Sequence[Atom]) -> float:
    total = 0.0
    for p in xs:
        for q in ys:
            if p.peak or q.peak:
                if p is q or (p == q):
                    total += _atom_peak_l2(p)
                # distinct peak-regime atoms are orthogonal to leading order
                continue
            total += _atom_pair_l2(p, q)
    return total


def _abs_decay_integral(a: Atom) -> float:
    mean_abs_sin = 2 / math.pi
    if a.lam == 0:
        return mean_abs_sin * a.tau
    return mean_abs_sin * (-math.expm1(-a.lam * a.tau)) / a.lam


# ------------------------------------------------------------ transforms


def fourier_transform(u: ControlSignal, xi, method: str = "auto"):
    """Non-unitary transform ``int_0^T u(t) exp(-i xi t) dt``.

    ``method="samples"`` integrates the cell polynomials exactly;
    ``method="atoms"`` sums closed-form atom transforms.  ``"auto"`` uses the
    samples when present.  Scalar input returns a complex scalar.
    """
    arr = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("frequency must be finite")
    if method == "auto":
        method = "samples" if u.cells is not None else "atoms"
    if method == "samples":
        u._need_cells()
        out = _exact.fourier(u.cells, u.dt, arr.ravel()).reshape(arr.shape)
    elif method == "atoms":
        if not u.atoms:
            raise InvalidInput("signal carries no atoms")
        out = np.zeros(arr.shape, dtype=complex)
        for a in u.atoms:
            out = out + atom_hat(a, arr)
    else:
        raise InvalidInput(f"unknown method {method!r}")
    return complex(out) if arr.ndim == 0 else out


def iterated_primitive(u: ControlSignal, n: int) -> ControlSignal:
    """``u_n`` with ``u_0 = u`` and ``u_{m+1}(t) = int_0^t u_m``, integrated exactly."""
    if n < 0 or int(n) != n:
        raise InvalidInput("n must be a nonnegative integer")
    u._need_cells()
    c = u.cells
    for _ in range(int(n)):
        c = _exact.primitive_coeffs(c, u.dt)
    atoms = u.atoms if n == 0 else ()
    return ControlSignal(u.T, u.dt, c, atoms)


# --------------------------------------------------------- frequency grid


@dataclass(frozen=True)
class FrequencyGrid:
    """Gauss panels on ``[0, xi_max]``, mirrored to a symmetric node set.

    Spectral integrands of real signals are even (or have even real part), so
    integrals over the line are twice the half-line integrals.
    """

    xi_max: float
    half_nodes: np.ndarray
    half_weights: np.ndarray
    tail_rule: str = "l2-complement"

    def __post_init__(self):
        if not self.xi_max > 0:
            raise InvalidInput("xi_max must be positive")

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([-self.half_nodes[::-1], self.half_nodes])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.half_weights[::-1], self.half_weights])

    @classmethod
    def panels(cls, xi_max: float, width: float, centers: Sequence[float] = (),
               refine: int = 4) -> "FrequencyGrid":
        """Uniform panels of ``width``, refined ``refine``-fold near ``centers``."""
        n = int(math.ceil(xi_max / width))
        if n > _MAX_PANELS:
            raise ResolutionError(f"frequency grid needs {n} panels; use the resolvent method")
        edges = np.linspace(0.0, xi_max, n + 1)
        if centers:
            fine = []
            for c in centers:
                lo, hi = max(0.0, c - 20 * width), min(xi_max, c + 20 * width)
                if hi > lo:
                    fine.append(np.linspace(lo, hi, int(math.ceil((hi - lo) / width)) * refine + 1))
            edges = np.unique(np.concatenate([edges] + fine))
        x, w = _GL16
        a, b = edges[:-1], edges[1:]
        mid, half = (a + b) / 2, (b - a) / 2
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return cls(float(xi_max), nodes, weights)

    @classmethod
    def default(cls, *signals: ControlSignal, xi_max: float | None = None) -> "FrequencyGrid":
        """Cutoff ``max(1e3, 50/dt_eff)``, panels ``pi/span`` wide.

        ``dt_eff`` is the grid step for sampled spectra.  Signals evaluated
        through their atoms have analytic spectra, and ``dt_eff`` becomes
        ``2.5 / omega_max`` (cutoff twenty times the top frequency).
        """
        span = max(_support_span(s) for s in signals)
        centers = sorted({a.omega for s in signals for a in s.atoms
                          if math.isfinite(a.omega)})
        tau_min = min((a.tau for s in signals for a in s.atoms), default=span)
        if xi_max is None:
            steps = []
            for s in signals:
                if _uses_atoms(s):
                    top = max((a.omega for a in s.atoms), default=1.0)
                    steps.append(2.5 / max(top, 1.0))
                else:
                    steps.append(s.dt)
            xi_max = max(1e3, 50.0 / min(steps))
            if centers:
                xi_max = max(xi_max, centers[-1] + 400.0 / tau_min)
        return cls.panels(xi_max, math.pi / span, centers)


def _support_span(u: ControlSignal) -> float:
    if u.cells is not None or not u.atoms:
        return u.T
    return max(a.end for a in u.atoms) - min(a.t0 for a in u.atoms)


@dataclass(frozen=True)
class SpectralValue:
    """A spectral integral with its tail estimate.

    ``value`` already includes ``tail_estimate``; ``tail_error`` bounds the
    error committed by that estimate.
    """

    value: float
    tail_estimate: float
    tail_error: float
    xi_max: float
    method: str


def _uses_atoms(u: ControlSignal, source: str = "auto") -> bool:
    """Whether spectral quantities of ``u`` come from its atoms."""
    if source == "samples":
        u._need_cells()
        return False
    if source == "atoms":
        if not u.atoms:
            raise InvalidInput("signal carries no atoms")
        return True
    return bool(u.atoms) and (u.cells is None or u.degree <= 1)


def _half_hat(u: ControlSignal, grid: FrequencyGrid, source: str = "auto") -> np.ndarray:
    if _uses_atoms(u, source):
        if any(a.peak for a in u.atoms):
            raise ResolutionError("atoms in the peak regime need the peak path")
        return fourier_transform(u, grid.half_nodes, method="atoms")
    return fourier_transform(u, grid.half_nodes, method="samples")


def _exact_l2(u: ControlSignal, source: str = "auto") -> float:
    if _uses_atoms(u, source):
        return _atoms_inner(u.atoms, u.atoms)
    return u.l2_norm_sq()


def spectral_integral(u: ControlSignal, weight: Callable[[np.ndarray], np.ndarray],
                      s_decay: float, grid: FrequencyGrid | None = None,
                      w: ControlSignal | None = None, source: str = "auto") -> SpectralValue:
    """``(1/2pi) int conj(u^) w^ weight`` for an even weight decaying like ``|xi|^-2s``.

    The part beyond ``xi_max`` is estimated from the exact L2 mass missing
    from the quadrature, assuming ``|u^|^2`` decays like ``xi^-2`` there.
    ``source`` selects samples or atoms as the spectral representation.
    """
    w = u if w is None else w
    if grid is None:
        if source == "samples":
            grid = FrequencyGrid.default(_strip_atoms(u), _strip_atoms(w))
        else:
            grid = FrequencyGrid.default(u, w)
    uh = _half_hat(u, grid, source)
    wh = uh if w is u else _half_hat(w, grid, source)
    wt = np.asarray(weight(grid.half_nodes), dtype=float)
    prod = (np.conj(uh) * wh).real
    core = float(np.sum(grid.half_weights * prod * wt) / math.pi)
    l2_core = float(np.sum(grid.half_weights * prod) / math.pi)
    exact = _exact_l2(u, source) if w is u else _cross_l2(u, w, source)
    missing = exact - l2_core
    X = grid.xi_max
    w_end = float(np.asarray(weight(np.array([X])))[0])
    est = missing * w_end / (1 + 2 * s_decay)
    err = abs(missing) * w_end * (2 * s_decay / (1 + 2 * s_decay)) + 1e-14 * abs(core)
    return SpectralValue(core + est, est, err, X, "frequency")


def _strip_atoms(u: ControlSignal) -> ControlSignal:
    u._need_cells()
    return ControlSignal(u.T, u.dt, u.cells)


def _cross_l2(u: ControlSignal, w: ControlSignal, source: str = "auto") -> float:
    if _uses_atoms(u, source) and _uses_atoms(w, source):
        return _atoms_inner(u.atoms, w.atoms)
    return u.inner(w)


# ----------------------------------------------------------------- norms


def _resolvent_sq(u: ControlSignal, s: float, step: float = 0.1) -> SpectralValue:
    """Squared H^-s norm from exponential-kernel double integrals.

    Uses ``(1+xi^2)^-s = sin(pi s)/pi int_0^inf rho^-s / (rho + 1 + xi^2) drho``
    and the identity ``(1/2pi) int |u^|^2 / (a^2 + xi^2) = S(a) / (2a)`` with
    ``S(a) = int int u(t) u(t') exp(-a |t - t'|)``, evaluated exactly.
    """
    u._need_cells()
    c, h = u.cells, u.dt
    e2 = u.l2_norm_sq()
    if s == 0:
        return SpectralValue(e2, 0.0, 0.0, math.inf, "resolvent")
    if s == 1:
        val = 2 * float(_exact.quadratic_form(c, c, h, [1.0], [1.0])) / 2
        return SpectralValue(val, 0.0, 0.0, math.inf, "resolvent")
    x_lo = -40.0
    x_hi = max(20.0, 2 * math.log(1e3 / h))
    x = np.arange(x_lo, x_hi + step / 2, step)
    a = np.sqrt(1 + np.exp(x))
    S = 2 * _exact.quadratic_form(c, c, h, a)
    pref = math.sin(math.pi * s) / math.pi
    g = pref * np.exp((1 - s) * x) * S / (2 * a)
    # trapezoid with end corrections (g' ~ (1-s) g on the left, ~ -s g on the right)
    body = step * (g.sum() - (g[0] + g[-1]) / 2)
    body -= step ** 2 / 12 * ((-s) * g[-1] - (1 - s) * g[0])
    left = pref * S[0] / 2 * math.exp((1 - s) * x[0]) / (1 - s)
    ends = float(c[0, 0] ** 2 + c[-1].sum() ** 2)
    xh = x[-1]
    right = pref * (e2 * math.exp(-s * xh) / s
                    - ends / 2 * math.exp(-(s + 0.5) * xh) / (s + 0.5))
    total = float(body + left + right)
    return SpectralValue(total, float(left + right), 1e-12 * abs(total), math.inf, "resolvent")


def sobolev_norm_neg_sq(u: ControlSignal, s: float, grid: FrequencyGrid | None = None,
                        method: str = "auto") -> SpectralValue:
    """Squared ``H^-s`` norm with its tail diagnostics."""
    if not 0 <= s <= 1:
        raise InvalidInput("s must lie in [0, 1]")
    if u.cells is None and any(a.peak for a in u.atoms):
        # diagonal peak approximation: |a|^2 concentrates at +-omega
        val = sum(_atom_peak_l2(replace(a, amplitude=1.0))
                  * math.exp(2 * math.log(abs(a.amplitude)) - 2 * s * a.ln_omega)
                  for a in u.atoms if a.amplitude)
        return SpectralValue(float(val), 0.0, 0.0, math.inf, "peak")
    if method == "auto":
        heavy = u.cells is not None and not u.atoms and u.n_cells > 1000
        method = "resolvent" if heavy and grid is None else "frequency"
    if method == "resolvent":
        return _resolvent_sq(u, s)
    if method != "frequency":
        raise InvalidInput(f"unknown method {method!r}")
    if s == 0:
        v = _exact_l2(u)
        return SpectralValue(v, 0.0, 0.0, math.inf, "exact")
    return spectral_integral(u, lambda xi: (1 + xi ** 2) ** (-s), s, grid)


def sobolev_norm_neg(u: ControlSignal, s: float, grid: FrequencyGrid | None = None,
                     method: str = "auto", rtol: float = 1e-4, full: bool = False):
    """``(1/2pi int |u^|^2 (1 + xi^2)^-s)^(1/2)``.

    Raises :class:`TailToleranceError` when the tail error exceeds ``rtol``
    relative to the result.  With ``full=True`` the :class:`SpectralValue` of
    the squared norm is returned alongside the norm.
    """
    sv = sobolev_norm_neg_sq(u, s, grid, method)
    if sv.tail_error > rtol * max(abs(sv.value), 1e-300) and sv.value != 0:
        raise TailToleranceError(
            f"tail error {sv.tail_error:.3e} exceeds {rtol:g} of {sv.value:.3e}")
    val = math.sqrt(max(sv.value, 0.0))
    return (val, sv) if full else val


def weighted_norm_theta(u: ControlSignal, s: float, theta: Callable, gamma: float | None = None,
                        grid: FrequencyGrid | None = None, rtol: float = 1e-4,
                        full: bool = False):
    """Squared weighted norm ``(gamma/2pi) int |u^|^2 (1+xi^2)^-s Theta(|xi|^(1/2))``."""
    if not 0 < s < 1:
        raise InvalidInput("s must lie in (0, 1)")
    if gamma is None:
        gamma = math.pi / (4 * math.sin(math.pi * s))

    def weight(xi):
        th = np.asarray(theta(np.sqrt(np.abs(xi))), dtype=float)
        if np.any(th < 0):
            raise InvalidInput("Theta must be nonnegative")
        return (1 + xi ** 2) ** (-s) * th

    sv = spectral_integral(u, weight, s, grid)
    sv = replace(sv, value=gamma * sv.value, tail_estimate=gamma * sv.tail_estimate,
                 tail_error=gamma * sv.tail_error)
    if sv.value != 0 and sv.tail_error > rtol * abs(sv.value):
        raise TailToleranceError(f"tail error {sv.tail_error:.3e} too large")
    return (sv.value, sv) if full else sv.value


def sobolev_norm_int(u: ControlSignal, m: int, noise_ratio: float = 0.5) -> float:
    """``(sum_{k<=m} int |u^(k)|^2)^(1/2)`` from central differences of the samples.

    Each derivative is compared with the same difference taken at twice the
    step; a relative disagreement above ``noise_ratio`` signals that the
    samples do not resolve that derivative.
    """
    if m < 0 or int(m) != m:
        raise InvalidInput("m must be a nonnegative integer")
    vals = u.samples
    h = u.dt
    total = _pl_sq(vals, h)
    d = vals
    for k in range(1, int(m) + 1):
        if d.size < 5:
            raise ResolutionError("too few samples for the requested order")
        d_new = np.gradient(d, h, edge_order=2)
        coarse = np.gradient(d[::2], 2 * h, edge_order=2)
        ref = d_new[::2][: coarse.size]
        scale = math.sqrt(_pl_sq(d_new, h) / u.T) + 1e-300
        if np.sqrt(np.mean((ref - coarse) ** 2)) > noise_ratio * scale:
            raise ResolutionError(f"derivative of order {k} is not resolved")
        d = d_new
        total += _pl_sq(d, h)
    return math.sqrt(total)


def _pl_sq(vals: np.ndarray, h: float) -> float:
    a, b = vals[:-1], vals[1:]
    return float(h * np.sum(a * a + a * b + b * b) / 3)


def gn_ratio(v: ControlSignal, n: int,
             derivative: Callable[[int], Callable[[np.ndarray], np.ndarray]] | None = None,
             points: int = 40001) -> float:
    """``|v^(n)|_inf^3 / (|v|_2^2 |v^(3n+2)|_1 + T^(-3n-3/2) |v|_2^3)``.

    Derivatives come from ``derivative(k)`` or, for atom sums, from the atoms.
    """
    if n < 0 or int(n) != n:
        raise InvalidInput("n must be a nonnegative integer")
    if derivative is None:
        if not v.atoms:
            raise DerivativeUnavailable("supply analytic derivatives or an atom decomposition")
        atoms = v.atoms

        def derivative(k):
            fs = [a.derivative(k) for a in atoms]
            return lambda t: sum(f(t) for f in fs)

    t = np.linspace(0.0, v.T, points)
    x, w = np.polynomial.legendre.leggauss(16)
    panels = np.linspace(0.0, v.T, (points - 1) // 16 + 1)
    mid, half = (panels[:-1] + panels[1:]) / 2, np.diff(panels) / 2
    tq = (mid[:, None] + half[:, None] * x).ravel()
    wq = (half[:, None] * w).ravel()
    f0 = derivative(0)
    l2sq = float(wq @ f0(tq) ** 2)
    if l2sq == 0:
        return 0.0
    sup = float(np.max(np.abs(derivative(n)(t))))
    l1 = float(wq @ np.abs(derivative(3 * n + 2)(tq)))
    l2 = math.sqrt(l2sq)
    return sup ** 3 / (l2sq * l1 + v.T ** (-3 * n - 1.5) * l2 ** 3)
