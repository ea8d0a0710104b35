"""Nonlinearities ``Gamma`` in the Neumann cosine basis of (0, pi).

Every supported variant is affine in the state, ``Gamma[z] = mu + G z``, so
a spec stores the coefficients ``<mu, phi_k>`` and the Galerkin matrix
``G[t, j] = <Gamma'[0] phi_j, phi_t>`` for ``t, j <= N``.  Kernel
coefficients may need modes beyond ``N``; each variant knows how to produce
those on demand.

Basis: ``phi_0 = 1/sqrt(pi)`` and ``phi_k = sqrt(2/pi) cos(k x)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import fft

from .errors import AliasingError, InvalidInput
from .kernels import KernelSpec, TailLaw, fit_envelope, gamma_s

AFFINE = "affine"
MAGIC_SINGLE = "magic_single"
MAGIC_INFINITE = "magic_infinite"

SQRT_2PI = math.sqrt(2 * math.pi)


def basis_norms(n: int) -> np.ndarray:
    """Normalisation factors ``n_k`` with ``phi_k = n_k cos(k x)``."""
    out = np.full(n + 1, math.sqrt(2 / math.pi))
    out[0] = 1 / math.sqrt(math.pi)
    return out


def basis_eval(k: int, x) -> np.ndarray:
    return basis_norms(k)[k] * np.cos(k * np.asarray(x, dtype=float))


# --------------------------------------------------------- example data


def rho1(x):
    x = np.asarray(x, dtype=float)
    return x ** 2 - math.pi ** 2 / 3


def rho2(x):
    x = np.asarray(x, dtype=float)
    return x ** 4 / 4 - math.pi * x ** 3 / 3 + math.pi ** 4 / 30


def rho3(x):
    """Zero-mean solution of ``rho3'' = rho2`` with Neumann conditions."""
    x = np.asarray(x, dtype=float)
    return x ** 6 / 120 - math.pi * x ** 5 / 60 + math.pi ** 4 * x ** 2 / 60 - math.pi ** 6 / 252


def rho1_coeffs(n: int) -> np.ndarray:
    j = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    out[1:] = 2 * SQRT_2PI * (-1.0) ** j[1:] / j[1:] ** 2
    return out


def rho2_coeffs(n: int) -> np.ndarray:
    j = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    out[1:] = -2 * SQRT_2PI * (2 * (-1.0) ** j[1:] + 1) / j[1:] ** 4
    return out


def rho3_coeffs(n: int) -> np.ndarray:
    j = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    out[1:] = 2 * SQRT_2PI * (2 * (-1.0) ** j[1:] + 1) / j[1:] ** 6
    return out


# ------------------------------------------------------ cosine transforms


def cosine_moments(f: Callable, m_max: int, nodes: int | None = None) -> np.ndarray:
    """``int_0^pi f(x) cos(m x) dx`` for ``m <= m_max`` by Gauss-Legendre quadrature."""
    n = nodes or (m_max + 96)
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1) * math.pi / 2
    w = w * math.pi / 2
    fw = np.asarray(f(x), dtype=float) * w
    out = np.empty(m_max + 1)
    step = max(1, 2 ** 24 // n)
    for a in range(0, m_max + 1, step):
        m = np.arange(a, min(m_max + 1, a + step))
        out[m] = np.cos(np.outer(m, x)) @ fw
    return out


def grid_points(P: int) -> np.ndarray:
    """Midpoint grid ``x_p = pi (p + 1/2) / P`` used by the cosine transform pair."""
    return math.pi * (np.arange(P) + 0.5) / P


def to_grid(coeffs: np.ndarray, P: int) -> np.ndarray:
    """Values of ``sum_k coeffs_k phi_k`` on the midpoint grid."""
    c = np.asarray(coeffs, dtype=float)
    a = np.zeros(P)
    a[: c.size] = c * basis_norms(c.size - 1)
    # DCT-III: y_p = a_0 + 2 sum_k a_k cos(pi k (2p+1) / 2P)
    y = fft.dct(a, type=3)
    return (y + a[0]) / 2


def from_grid(values: np.ndarray, n: int) -> np.ndarray:
    """Midpoint-rule coefficients ``<f, phi_k>`` for ``k <= n``."""
    v = np.asarray(values, dtype=float)
    P = v.size
    y = fft.dct(v, type=2)[: n + 1]  # 2 sum_p v_p cos(...)
    return (math.pi / P) * basis_norms(n) * y / 2


# ------------------------------------------------------------------ spec


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """Affine-in-state nonlinearity truncated at mode ``N``.

    ``params`` carries variant data: for ``affine`` the cosine moments of
    ``mu`` and ``lambda`` (and the multiplier on the midpoint grid); for the
    magic variants the profile(s), ``s`` and the coupling constant.
    """

    variant: str
    N: int
    mu_coeffs: np.ndarray
    G: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in (AFFINE, MAGIC_SINGLE, MAGIC_INFINITE):
            raise InvalidInput(f"unknown variant {self.variant!r}")
        mu = np.asarray(self.mu_coeffs, dtype=float)
        G = np.asarray(self.G, dtype=float)
        if mu.shape != (self.N + 1,) or G.shape != (self.N + 1, self.N + 1):
            raise InvalidInput("coefficient shapes do not match the truncation")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(G))):
            raise InvalidInput("non-finite coefficients")
        mu.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "mu_coeffs", mu)
        object.__setattr__(self, "G", G)

    # --- evaluation ------------------------------------------------------

    def gamma(self, z) -> np.ndarray:
        z = _coeffs(z, self.N)
        return self.mu_coeffs + self.G @ z

    def mu_extended(self, J: int) -> np.ndarray:
        """``<mu, phi_j>`` for ``j <= J`` (beyond ``N`` when the variant allows)."""
        if J <= self.N:
            return self.mu_coeffs[: J + 1]
        if self.variant == AFFINE:
            mm = self.params.get("mu_moments_fn")
            if mm is None:
                raise InvalidInput("mu known only up to the truncation")
            return mm(J)
        j = np.arange(J + 1, dtype=float)
        s = self.params["s"]
        out = np.zeros(J + 1)
        if self.variant == MAGIC_SINGLE:
            out[1:] = j[1:] ** (0.5 - 3 * s)
        else:
            out[0] = 1.0
            half = j[2::2] / 2
            out[2::2] = half ** (0.5 - 3 * s)
        return out

    def coupling(self, target: int, J: int) -> np.ndarray:
        """``<Gamma'[0] phi_j, phi_target>`` for ``j <= J``."""
        if target < 0:
            raise InvalidInput("target mode must be nonnegative")
        if J <= self.N and target <= self.N:
            return self.G[target, : J + 1].copy()
        if self.variant == AFFINE:
            ell = self.params["lambda_moments_fn"](J + target)
            j = np.arange(J + 1)
            nj = basis_norms(J)
            nt = basis_norms(target)[target]
            return nj * nt * 0.5 * (ell[np.abs(j - target)] + ell[j + target])
        j = np.arange(J + 1, dtype=float)
        s = self.params["s"]
        out = np.zeros(J + 1)
        if self.variant == MAGIC_SINGLE:
            if target == 0:
                th = self.params["theta"]
                out[1:] = np.asarray(th(np.log(j[1:])), dtype=float) * j[1:] ** (0.5 - s)
            return out
        if target % 2 == 1:
            k = (target - 1) // 2
            fam = self.params["family"]
            if k < len(fam):
                half = j[2::2] / 2
                out[2::2] = (self.params["C_theta"] * np.asarray(fam[k](np.log(half)), dtype=float)
                             * half ** (0.5 - s))
        return out

    def kernel_spec(self, target: int, J: int) -> KernelSpec:
        """Quadratic kernel of the mode ``target`` with ``J`` explicit coefficients."""
        if self.variant == MAGIC_SINGLE and target == 0:
            s, th = self.params["s"], self.params["theta"]
            j = np.arange(1, J + 1, dtype=float)
            c = np.asarray(th(np.log(j)), dtype=float) * j ** (1 - 4 * s)
            return KernelSpec(c, tail=TailLaw(s, th), asymptotic=(None, s, 0))
        mu = self.mu_extended(J)
        cp = self.coupling(target, J)
        c = (mu * cp)[1:]
        if self.variant == AFFINE:
            return KernelSpec(c, envelope=fit_envelope(c))
        return KernelSpec(c)

    # --- serialisation ---------------------------------------------------

    def to_json(self) -> str:
        digest = hashlib.sha256(np.ascontiguousarray(self.mu_coeffs).tobytes()).hexdigest()
        data = {"variant": self.variant, "N": self.N, "mu_coeffs_sha256": digest,
                "mu_coeffs": [float(v) for v in self.mu_coeffs]}
        for key in ("s", "C_theta", "label", "P"):
            if key in self.params:
                data[key] = self.params[key]
        theta = self.params.get("theta")
        if theta is not None and hasattr(theta, "L"):
            data["L"] = theta.L
        fam = self.params.get("family")
        if fam:
            data["L"] = fam[0].L
            data["K_max"] = len(fam) - 1
            data["H"] = fam[0].horizon
        return json.dumps(data, sort_keys=True, indent=2)


def _coeffs(z, N: int) -> np.ndarray:
    c = np.asarray(getattr(z, "coeffs", z), dtype=float)
    if c.shape != (N + 1,):
        raise InvalidInput(f"state must have {N + 1} coefficients, got {c.shape}")
    return c


# ------------------------------------------------------------ builders


def make_affine(mu, lam, N: int, P: int | None = None, label: str = "",
                mu_coeffs: Callable | None = None,
                lambda_coeffs: Callable | None = None) -> NonlinearitySpec:
    """``Gamma[z] = mu + lambda z`` from callables or midpoint-grid samples.

    Callables are integrated by Gauss-Legendre quadrature (accurate to
    ~1e-13 on smooth data) and can be refined to any mode; arrays are taken
    as samples on the midpoint grid of size ``P`` and transformed there.
    ``mu_coeffs`` / ``lambda_coeffs`` optionally map ``m`` to the exact
    coefficients ``<f, phi_k>``, ``k <= m``, overriding quadrature.
    """
    if N < 1:
        raise InvalidInput("N must be at least 1")
    P = P or 4 * N
    if P < 4 * N:
        raise AliasingError(f"grid of {P} points under-resolves {N} modes (need >= {4 * N})")
    x = grid_points(P)

    def moments(f, arr_label):
        if callable(f):
            return lambda m: cosine_moments(f, m)
        arr = np.asarray(f, dtype=float)
        if arr.shape != (P,):
            raise AliasingError(f"{arr_label} samples must live on the {P}-point grid")

        def from_samples(m):
            if m >= P:
                raise AliasingError(f"{arr_label} known only up to mode {P - 1}")
            c = from_grid(arr, m)
            return c / basis_norms(m)
        return from_samples

    mu_mom = moments(mu, "mu")
    lam_mom = moments(lam, "lambda")

    def mu_fn(J):
        return mu_mom(J) * basis_norms(J)

    if mu_coeffs is not None:
        mu_fn = mu_coeffs
    if lambda_coeffs is not None:
        lam_mom = lambda m: lambda_coeffs(m) / basis_norms(m)  # noqa: E731
    mu_c = np.asarray(mu_fn(N), dtype=float)
    ell = lam_mom(2 * N)
    n = basis_norms(N)
    t = np.arange(N + 1)
    G = np.outer(n, n) * 0.5 * (ell[np.abs(t[:, None] - t[None, :])] + ell[t[:, None] + t[None, :]])
    lam_grid = np.asarray(lam(x), dtype=float) if callable(lam) else np.asarray(lam, dtype=float)
    params = {"mu_moments_fn": mu_fn, "lambda_moments_fn": lam_mom, "lambda_grid": lam_grid,
              "P": P, "label": label}
    return NonlinearitySpec(AFFINE, N, mu_c, G, params)


def example_spec(number: int, N: int, variant: str = "integer") -> NonlinearitySpec:
    """The three worked examples: 1 (integer, n=1), 2 (fractional, n=1),
    3 (integer or fractional, n=2).  Coefficients are used in closed form."""
    if number == 1:
        return make_affine(rho1, rho2, N, mu_coeffs=rho1_coeffs, lambda_coeffs=rho2_coeffs,
                           label="example-1")
    if number == 2:
        alpha = example2_alpha()

        def lam2(m):
            c = rho2_coeffs(m)
            c[1] -= alpha
            return c
        return make_affine(rho1, lambda x: rho2(x) - alpha * basis_eval(1, x), N,
                           mu_coeffs=rho1_coeffs, lambda_coeffs=lam2, label="example-2")
    if number == 3:
        beta, gam = example3_parameters(variant)

        def lam3(m):
            c = rho3_coeffs(max(m, 2))
            c[1] += beta
            c[2] += gam
            return c[: m + 1]
        fn = lambda x: rho3(x) + beta * basis_eval(1, x) + gam * basis_eval(2, x)  # noqa: E731
        return make_affine(rho2, fn, N, mu_coeffs=rho2_coeffs, lambda_coeffs=lam3,
                           label=f"example-3-{variant}")
    raise InvalidInput("examples are numbered 1 to 3")


def _series(f, terms: int = 200_000) -> float:
    j = np.arange(1, terms + 1, dtype=float)
    return float(np.sum(f(j)[::-1]))


def example2_alpha() -> float:
    """Multiplier shift making ``sum j^2 c_j`` vanish: ``2 sqrt(2pi) sum (2 + (-1)^j)/j^4``."""
    # sum (2 + (-1)^j) / j^4 = 2 zeta(4) - eta(4) = pi^4 / 80
    return 2 * SQRT_2PI * math.pi ** 4 / 80


def example3_parameters(variant: str = "integer") -> tuple[float, float]:
    """``(beta, gamma)``: the ``j^2`` moment vanishes; the ``j^6`` one too if fractional."""
    m = rho2_coeffs(2)
    s8 = _series(lambda j: (2 * (-1.0) ** j + 1) ** 2 / j ** 8)
    s4 = _series(lambda j: (2 * (-1.0) ** j + 1) ** 2 / j ** 4)
    r8 = -(2 * SQRT_2PI) ** 2 * s8   # sum j^2 m_j r_j
    r4 = -(2 * SQRT_2PI) ** 2 * s4   # sum j^6 m_j r_j
    if variant == "integer":
        return -r8 / m[1], 0.0
    if variant == "fractional":
        A = np.array([[m[1], 4 * m[2]], [m[1], 64 * m[2]]])
        beta, gam = np.linalg.solve(A, [-r8, -r4])
        return float(beta), float(gam)
    raise InvalidInput("variant is 'integer' or 'fractional'")


def make_magic_single(theta, s: float, N: int) -> NonlinearitySpec:
    """``Gamma[z] = sum_k k^(1/2-3s) phi_k + (sum_j Theta(ln j) j^(1/2-s) z_j) phi_0``."""
    if not 0 < s < 1:
        raise InvalidInput("s must lie in (0, 1)")
    j = np.arange(N + 1, dtype=float)
    mu = np.zeros(N + 1)
    mu[1:] = j[1:] ** (0.5 - 3 * s)
    G = np.zeros((N + 1, N + 1))
    G[0, 1:] = np.asarray(theta(np.log(j[1:])), dtype=float) * j[1:] ** (0.5 - s)
    return NonlinearitySpec(MAGIC_SINGLE, N, mu, G, {"theta": theta, "s": s})


def make_magic_infinite(family: Sequence, s: float, N: int,
                        C_theta: float | None = None) -> NonlinearitySpec:
    """``phi_0 + sum_j j^(1/2-3s) phi_2j`` plus odd modes fed by even ones through ``Theta_k``."""
    if not 0 < s < 1:
        raise InvalidInput("s must lie in (0, 1)")
    C = 32 / gamma_s(s) if C_theta is None else C_theta
    # truncation 0 forces the closed-form branches of mu_extended and coupling
    spec0 = NonlinearitySpec(MAGIC_INFINITE, 0, np.zeros(1), np.zeros((1, 1)),
                             {"family": list(family), "s": s, "C_theta": C})
    mu = spec0.mu_extended(N)
    G = np.zeros((N + 1, N + 1))
    for t in range(1, N + 1, 2):
        G[t] = spec0.coupling(t, N)
    return NonlinearitySpec(MAGIC_INFINITE, N, mu, G, spec0.params)


# ------------------------------------------------------------ operations


def gamma_apply(spec: NonlinearitySpec, z, method: str = "matrix"):
    """``<Gamma[z], phi_k>`` for ``k <= N``.

    ``method="dct"`` multiplies by ``lambda`` on the midpoint grid and
    transforms back (affine specs only); it serves as an independent route.
    """
    from .simulate import SpectralField

    zc = _coeffs(z, spec.N)
    if method == "matrix":
        out = spec.gamma(zc)
    elif method == "dct":
        if spec.variant != AFFINE:
            raise InvalidInput("grid multiplication applies to affine specs")
        P = spec.params["P"]
        prod = spec.params["lambda_grid"] * to_grid(zc, P)
        out = spec.mu_coeffs + from_grid(prod, spec.N)
    else:
        raise InvalidInput(f"unknown method {method!r}")
    return SpectralField(out)


def lost_directions(spec: NonlinearitySpec, tol: float = 1e-10) -> list[int]:
    """Modes ``k <= N`` with ``|<mu, phi_k>| <= tol``."""
    return [int(k) for k in np.nonzero(np.abs(spec.mu_coeffs) <= tol)[0]]


def _norm_h1(z: np.ndarray) -> float:
    k = np.arange(z.size)
    return float(np.linalg.norm((1 + k) * z))


def _norm_hm1(z: np.ndarray) -> float:
    k = np.arange(z.size)
    return float(np.linalg.norm(z / (1 + k)))


def check_regularity(spec: NonlinearitySpec, sample_states: Sequence | None = None,
                     rng: np.random.Generator | None = None, pairs: int = 64) -> dict:
    """Empirical Lipschitz and second-difference diagnostics of ``Gamma``.

    The Lipschitz ratio ``|Gamma[z1]-Gamma[z2]|_{H^-1} / |z1-z2|_{H^1}`` is
    compared with the exact operator norm of ``G`` between those weighted
    spaces; ``flag`` is set if a sample exceeds it.
    """
    rng = rng or np.random.default_rng(0)
    N = spec.N
    if sample_states is None:
        k = np.arange(N + 1)
        sample_states = [rng.standard_normal(N + 1) / (1 + k) ** 2 for _ in range(2 * pairs)]
    states = [_coeffs(z, N) for z in sample_states]
    k = np.arange(N + 1)
    op = float(np.linalg.norm((spec.G / (1 + k)[:, None]) / (1 + k)[None, :], 2))
    lip, second = 0.0, 0.0
    g0 = spec.gamma(np.zeros(N + 1))
    for a, b in zip(states[::2], states[1::2]):
        d = _norm_h1(a - b)
        if d > 0:
            lip = max(lip, _norm_hm1(spec.gamma(a) - spec.gamma(b)) / d)
        sd = spec.gamma(a + b) - spec.gamma(a) - spec.gamma(b) + g0
        scale = max(_norm_hm1(spec.gamma(a)), _norm_hm1(spec.gamma(b)), 1e-300)
        second = max(second, _norm_hm1(sd) / scale)
    return {"lipschitz_estimate": lip, "operator_norm": op,
            "second_difference": second, "samples": len(states) // 2,
            "flag": bool(lip > op * (1 + 1e-9) + 1e-14)}
