"""Exact integrals of piecewise polynomials against exponentials.

Signals are stored cell by cell on a uniform grid: on cell ``i`` the value is
``sum_q a[i, q] * theta**q`` with local variable ``theta in [0, 1]``.  Every
integral below is evaluated in closed form, so results do not depend on the
time step beyond the representation of the signal itself.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import signal as _sig

_SERIES_RADIUS = 2.0
_SERIES_TERMS = 48
_TINY = 1e-18


def m_moments(z, p: int) -> np.ndarray:
    """Return ``m_q(z) = int_0^1 theta^q exp(z theta) dtheta`` for ``q <= p``.

    The result has shape ``z.shape + (p + 1,)``.
    """
    z = np.asarray(z)
    dtype = np.complex128 if np.iscomplexobj(z) else np.float64
    out = np.empty(z.shape + (p + 1,), dtype=dtype)
    small = np.abs(z) < _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        terms = np.ones_like(zs, dtype=dtype)
        acc = np.zeros(zs.shape + (p + 1,), dtype=dtype)
        q = np.arange(p + 1)
        for n in range(_SERIES_TERMS):
            acc += terms[..., None] / (q + n + 1)
            terms = terms * zs / (n + 1)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        cur = np.expm1(zb) / zb
        res = [cur]
        for q in range(1, p + 1):
            cur = (ez - q * cur) / zb
            res.append(cur)
        out[big] = np.stack(res, axis=-1)
    return out


def e_moments(z, p: int) -> np.ndarray:
    """Return ``E_q(z) = int_0^1 theta^q exp(-z (1 - theta)) dtheta`` for ``q <= p``."""
    z = np.asarray(z)
    dtype = np.complex128 if np.iscomplexobj(z) else np.float64
    out = np.empty(z.shape + (p + 1,), dtype=dtype)
    small = np.abs(z) < _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        acc = np.zeros(zs.shape + (p + 1,), dtype=dtype)
        for q in range(p + 1):
            # sum_n (-z)^n q! / (q + n + 1)!
            term = np.full(zs.shape, 1.0 / (q + 1), dtype=dtype)
            s = term.copy()
            for n in range(1, _SERIES_TERMS):
                term = term * (-zs) / (q + n + 1)
                s = s + term
            acc[..., q] = s
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        cur = -np.expm1(-zb) / zb
        res = [cur]
        for q in range(1, p + 1):
            cur = (1.0 - q * cur) / zb
            res.append(cur)
        out[big] = np.stack(res, axis=-1)
    return out


def _double_poly(p: int, q: int) -> np.ndarray:
    """Coefficients (ascending) of ``P(s) = int_s^1 th^p (th - s)^q dth``."""
    coef = np.zeros(p + q + 2)
    for k in range(q + 1):
        b = math.comb(q, k) * (-1.0) ** (q - k) / (p + k + 1)
        # (-s)^(q-k) * (1 - s^(p+k+1)) / (p+k+1)
        coef[q - k] += b
        coef[q - k + p + k + 1] -= b
    return coef


def d_moments(x, p: int, q: int) -> np.ndarray:
    """``D_pq(x) = int_0^1 th^p int_0^th th'^q exp(-x (th - th')) dth' dth``."""
    x = np.asarray(x, dtype=float)
    coef = _double_poly(p, q)
    m = m_moments(-x, len(coef) - 1)
    return m @ coef


def pl_coeffs(samples: np.ndarray) -> np.ndarray:
    """Cell coefficients of the piecewise-linear interpolant of nodal samples."""
    s = np.asarray(samples, dtype=float)
    return np.stack([s[:-1], np.diff(s)], axis=1)


def node_values(coeffs: np.ndarray) -> np.ndarray:
    """Values at the grid nodes of a (possibly discontinuous-free) cell polynomial."""
    return np.concatenate([coeffs[:, 0], [coeffs[-1].sum()]])


def primitive_coeffs(coeffs: np.ndarray, h: float) -> np.ndarray:
    """Cell coefficients of ``t -> int_0^t u``; degree rises by one."""
    m, d = coeffs.shape
    q = np.arange(d)
    inc = h * coeffs / (q + 1)
    start = np.concatenate([[0.0], np.cumsum(inc.sum(axis=1))[:-1]])
    out = np.zeros((m, d + 1))
    out[:, 0] = start
    out[:, 1:] = inc
    return out


def fourier(coeffs: np.ndarray, h: float, xi, chunk: int = 2 ** 22) -> np.ndarray:
    """``int_0^{Mh} u(t) exp(-i xi t) dt`` for an array of frequencies."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    m, d = coeffs.shape
    t0 = h * np.arange(m)
    out = np.empty(xi.shape, dtype=np.complex128)
    step = max(1, chunk // max(m, 1))
    for a in range(0, xi.size, step):
        xs = xi[a:a + step]
        mm = m_moments(-1j * xs * h, d - 1)  # (nx, d)
        ph = np.exp(-1j * np.outer(xs, t0))  # (nx, m)
        out[a:a + step] = h * np.einsum("xq,xq->x", mm, ph @ coeffs)
    return out


def decay_moments(coeffs: np.ndarray, h: float, kappa) -> np.ndarray:
    """``int_0^{Mh} u(t) exp(-kappa (Mh - t)) dt`` for nonnegative rates."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    m, d = coeffs.shape
    out = np.empty(kappa.shape)
    for idx, k in enumerate(kappa):
        x = k * h
        e = e_moments(np.array(x), d - 1)
        if x > 0:
            n = int(min(m, math.ceil(42.0 / x) + 1))
        else:
            n = m
        tail = coeffs[m - n:]
        rho = math.exp(-x)
        pw = rho ** np.arange(n - 1, -1, -1, dtype=float)
        out[idx] = h * float(e @ (pw @ tail))
    return out


def quadratic_form(a: np.ndarray, b: np.ndarray, h: float, rates, weights=None,
                   chunk: int = 64):
    """``sum_j w_j int u(t) int_0^t v(t') exp(-r_j (t - t')) dt' dt``.

    ``a`` and ``b`` hold the cell coefficients of the outer signal ``u`` and of
    the inner signal ``v`` on the same grid.  With ``weights=None`` the
    per-rate values are returned instead of the weighted sum.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if weights is None:
        return _quadratic_form_modes(a, b, h, rates, chunk)
    weights = np.asarray(weights, dtype=float)
    keep = weights != 0
    rates, weights = rates[keep], weights[keep]
    if rates.size == 0:
        return 0.0
    return float(np.sum(weights * _quadratic_form_modes(a, b, h, rates, chunk)))


def _quadratic_form_modes(a, b, h, rates, chunk):
    if rates.size == 0:
        return np.zeros(0)
    m, pa = a.shape
    _, pb = b.shape
    x = rates * h
    em = e_moments(x, pb - 1)   # inner, per mode (J, pb)
    mm = m_moments(-x, pa - 1)  # outer, per mode (J, pa)
    # local (same-cell) part
    local = np.zeros_like(x)
    for p in range(pa):
        for q in range(pb):
            apq = float(a[:, p] @ b[:, q])
            if apq != 0.0:
                local += apq * d_moments(x, p, q)
    # lagged part: C_{q,p}(d) = sum_i b[i-1-d, q] a[i, p]
    nlag = m - 1
    total_lag = np.zeros_like(x)
    if nlag > 0:
        corr = np.empty((pb, pa, nlag))
        for q in range(pb):
            for p in range(pa):
                full = _sig.correlate(a[1:, p], b[:-1, q], mode="full")
                corr[q, p] = full[nlag - 1:]
        corr = corr.reshape(pb * pa, nlag)
        logr = -x
        nl = np.where(x > 0, np.minimum(nlag, np.ceil(42.0 / np.maximum(x, 1e-300)) + 1), nlag)
        nl = nl.astype(int)
        order = np.argsort(-nl)
        for s in range(0, order.size, chunk):
            idx = order[s:s + chunk]
            n = int(nl[idx].max())
            pw = np.exp(np.outer(logr[idx], np.arange(n)))
            z = pw @ corr[:, :n].T  # (chunk, pb*pa)
            z = z.reshape(idx.size, pb, pa)
            total_lag[idx] = np.einsum("jq,jp,jqp->j", em[idx], mm[idx], z)
    return h * h * (local + total_lag)
