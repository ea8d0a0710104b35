"""Trapezoidal block functions and the oscillating profiles built from them.

A block placed at position ``X`` (in units of ``2L``) is ``chi(x / 2L - X)``:
it rises over one unit, stays at 1 over one unit (a plateau of length ``2L``
in ``x``) and falls over one unit.  Profiles alternate positive and negative
blocks.  The periodic profile repeats a ``+/-`` pair every 6 units.  The
sparse family interleaves pairs belonging to different indices ``k`` with
gaps that grow with ``k`` and with the generation round ``h``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientHorizon, InvalidInput, NoPlateauFound

PERIODIC = "periodic"
SPARSE = "sparse"


def chi_eval(x):
    """Trapezoid: ``x`` on [0,1], 1 on [1,2], ``3 - x`` on [2,3], 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.clip(np.minimum(x, 3.0 - x), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Block:
    start: float  # in units of 2L
    sign: int
    round: int = 0


@dataclass(frozen=True, eq=False)
class BlockProfile:
    """Piecewise-linear profile with slopes ``+-1/(2L)`` and values in [-1, 1].

    Periodic profiles are evaluated in closed form; sparse profiles keep the
    explicit list of blocks materialized up to ``horizon`` rounds.
    """

    L: float
    kind: str
    blocks: tuple[Block, ...] = ()
    k: int | None = None
    horizon: int | None = None
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise InvalidInput("L must be positive")
        if self.kind not in (PERIODIC, SPARSE):
            raise InvalidInput(f"unknown profile kind {self.kind!r}")
        starts = [b.start for b in self.blocks]
        if any(b - a < 3 for a, b in zip(starts, starts[1:])):
            raise InvalidInput("blocks overlap")
        object.__setattr__(self, "_starts", np.array(starts, dtype=float))
        object.__setattr__(self, "_signs", np.array([b.sign for b in self.blocks], dtype=float))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = x / (2 * self.L)
        if self.kind == PERIODIC:
            r = np.mod(y, 6.0)
            out = chi_eval(r) - chi_eval(r - 3.0)
            out = np.where(y >= 0, out, 0.0)
        else:
            out = np.zeros_like(y)
            if self._starts.size:
                i = np.clip(np.searchsorted(self._starts, y, side="right") - 1, 0, None)
                out = self._signs[i] * chi_eval(y - self._starts[i])
        return float(out) if np.ndim(out) == 0 else out

    @property
    def support_start(self) -> float:
        """``inf supp`` in x-units."""
        if self.kind == PERIODIC:
            return 0.0
        if not self.blocks:
            return math.inf
        return 2 * self.L * self.blocks[0].start

    @property
    def log_omega_bar(self) -> float:
        """``ln`` of the threshold frequency ``exp(2 inf supp)``."""
        return 2 * self.support_start

    def support_intervals(self) -> list[tuple[float, float]]:
        """Closed supports of the blocks in x-units (sparse kind only)."""
        return [(2 * self.L * b.start, 2 * self.L * (b.start + 3)) for b in self.blocks]

    def plateaus(self, sign: int, rounds=None) -> list[float]:
        """Plateau centers (x-units) of the given sign among materialized blocks."""
        out = []
        for b in self.blocks:
            if b.sign == sign and (rounds is None or b.round in rounds):
                out.append(2 * self.L * (b.start + 1.5))
        return out

    def to_csv(self, path: str | Path) -> Path:
        """Write ``block_start,sign`` rows and a JSON header next to them."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block_start", "sign"])
            for b in self.blocks:
                w.writerow([repr(b.start), b.sign])
        side = path.with_suffix(".json")
        side.write_text(json.dumps({"L": self.L, "kind": self.kind, "k": self.k,
                                    "H": self.horizon}, sort_keys=True, indent=2))
        return side


def _check_L(L: float, strict: bool):
    if not math.isfinite(L) or L <= 0:
        raise InvalidInput("L must be positive")
    if strict and L < 1:
        raise InvalidInput("L must be at least 1 (pass strict=False for desk-scale runs)")


def build_periodic_theta(L: float, strict: bool = True) -> BlockProfile:
    """Period-``12L`` profile ``chi(x/2L) - chi(x/2L - 3)`` on ``x >= 0``."""
    _check_L(L, strict)
    return BlockProfile(L, PERIODIC)


def build_sparse_theta_family(L: float, K_max: int, H: int,
                              strict: bool = True) -> list[BlockProfile]:
    """Profiles ``Theta_0 .. Theta_K_max`` materialized over ``H`` rounds.

    Round ``h`` places one ``+/-`` pair for each ``k < h`` and advances the
    cursor by ``6 + k^2 + h^2`` after each pair.
    """
    _check_L(L, strict)
    if K_max < 0 or H < 1:
        raise InvalidInput("need K_max >= 0 and H >= 1")
    if H < K_max + 1:
        raise InsufficientHorizon(f"Theta_{K_max} receives its first pair in round {K_max + 1}")
    blocks: list[list[Block]] = [[] for _ in range(K_max + 1)]
    x = 0.0
    ends = []
    for h in range(1, H + 1):
        for k in range(h):
            if k <= K_max:
                blocks[k].append(Block(x, +1, h))
                blocks[k].append(Block(x + 3, -1, h))
            x += 6 + k * k + h * h
        ends.append(x)
    meta = {"round_ends": tuple(ends)}
    return [BlockProfile(L, SPARSE, tuple(b), k, H, meta) for k, b in enumerate(blocks)]


def plateau_center(p: BlockProfile, sign: int, min_x: float = 0.0, rounds=None) -> float:
    """Smallest ``x* >= min_x`` with ``Theta = sign`` on ``[x* - L, x* + L]``."""
    if sign not in (1, -1):
        raise InvalidInput("sign must be +1 or -1")
    if p.kind == PERIODIC:
        # centers at 2L (6n + 1.5) for +, 2L (6n + 4.5) for -
        off = 1.5 if sign > 0 else 4.5
        n = max(0, math.ceil((min_x / (2 * p.L) - off) / 6 - 1e-12))
        return 2 * p.L * (6 * n + off)
    for c in p.plateaus(sign, rounds):
        if c >= min_x:
            return c
    raise NoPlateauFound(f"no plateau of sign {sign} beyond {min_x} within horizon {p.horizon}")
