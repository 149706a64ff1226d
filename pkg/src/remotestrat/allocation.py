"""Stratum summaries, Neyman and proportional allocation, and the stratified variance of the mean."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .composite import CensusBlockFrame
from .exceptions import AllocationError
from .stratification import CrossStrataDesign

MIN_PER_STRATUM = 2


@dataclass(frozen=True)
class StratumSummary:
    stratum: int
    label: str
    N: int
    W: float
    S: float
    mean_difficulty: float
    mean_wealth: float = float("nan")


def summarize_strata(frame: CensusBlockFrame, design: CrossStrataDesign) -> list[StratumSummary]:
    """N_h, W_h, the sd of wealth concentration (divisor N_h - 1) and mean difficulty per stratum."""
    N = len(frame)
    out = []
    labels = design.labels()
    for h in range(1, design.n_strata + 1):
        mask = design.stratum == h
        # sorted so the summaries do not depend on block order in the frame
        y = np.sort(frame.wealth[mask])
        out.append(
            StratumSummary(
                stratum=h,
                label=labels[h - 1],
                N=int(mask.sum()),
                W=mask.sum() / N,
                S=float(y.std(ddof=1)) if len(y) > 1 else 0.0,
                mean_difficulty=float(np.sort(frame.difficulty[mask]).mean()),
                mean_wealth=float(y.mean()),
            )
        )
    return out


def single_stratum_summary(frame: CensusBlockFrame) -> list[StratumSummary]:
    return [
        StratumSummary(1, "all", len(frame), 1.0, float(np.std(np.sort(frame.wealth), ddof=1)),
                       float(np.mean(np.sort(frame.difficulty))), float(np.mean(np.sort(frame.wealth))))
    ]


@dataclass(frozen=True)
class Allocation:
    n_h: tuple[int, ...]
    method: str
    targets: tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return sum(self.n_h)


def largest_remainder(targets: Sequence[float], total: int, gain: Sequence[float] | None = None) -> list[int]:
    """Round nonnegative reals to integers summing to ``total``.

    Floors first, then hands the missing units to the largest fractional
    parts (earlier position wins a tie). With ``gain``, the units go instead
    to the fractional entries with the largest ``gain[i]``, ties broken by
    fractional part; every entry still ends at its floor or ceiling.
    """
    t = np.asarray(targets, dtype=float)
    floors = np.floor(t).astype(int)
    extra = total - int(floors.sum())
    frac = t - floors
    if gain is None:
        order = sorted(range(len(t)), key=lambda i: (-frac[i], i))
    else:
        order = sorted(np.flatnonzero(frac > 0), key=lambda i: (-gain[i], -frac[i], i))
    if extra < 0 or extra > len(order):
        raise AllocationError(f"cannot round {t.sum():.6g} to {total}")
    for i in order[:extra]:
        floors[i] += 1
    return floors.tolist()


def _box_targets(key: np.ndarray, lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Real targets clip(lam * key, lo, hi) with lam chosen so they sum to ``n``.

    The clipped sum is piecewise linear and nondecreasing in lam, so lam is
    found exactly by scanning its breakpoints. Zero-key strata sit at ``lo``.
    """
    pos = key > 0

    def total(lam):
        return float(np.where(pos, np.clip(lam * key, lo, hi), lo).sum())

    breaks = np.unique(np.concatenate(([0.0], lo[pos] / key[pos], hi[pos] / key[pos])))
    sums = np.array([total(b) for b in breaks])
    i = int(np.searchsorted(sums, n, side="left"))
    if i == 0:
        lam = breaks[0]
    elif i == len(breaks):
        lam = breaks[-1]
    else:
        a, b = breaks[i - 1], breaks[i]
        lam = a + (n - sums[i - 1]) * (b - a) / (sums[i] - sums[i - 1])
    return np.where(pos, np.clip(lam * key, lo, hi), lo)


def _allocate(sizes, key, n: int, min_per_stratum: int, method: str, min_variance_rounding: bool = False) -> Allocation:
    """Allocate proportionally to ``key`` under floor ``min_per_stratum`` and cap N_h.

    With ``min_variance_rounding`` the fractional targets are rounded to the
    floor/ceiling vector with the smallest sum of key^2 / n_h, which is the
    Neyman variance up to a constant.
    """
    N_h = np.asarray(sizes, dtype=int)
    key = np.asarray(key, dtype=float)
    H = len(N_h)
    floor = np.minimum(min_per_stratum, N_h)
    if n < int(floor.sum()) or n > int(N_h.sum()):
        raise AllocationError(f"n={n} infeasible for {H} strata (needs {int(floor.sum())}..{int(N_h.sum())})")

    targets = _box_targets(key, floor.astype(float), N_h.astype(float), n)
    pinned = np.isclose(targets, floor) | np.isclose(targets, N_h) | (key <= 0)
    n_h = np.where(pinned, np.rint(targets), 0).astype(int)
    free = ~pinned
    if free.any():
        t = targets[free]
        # variance drop from one more unit in each stratum, taken at its floor
        gain = None
        if min_variance_rounding:
            with np.errstate(divide="ignore"):
                gain = key[free] ** 2 / (np.floor(t) * (np.floor(t) + 1))
        n_h[free] = largest_remainder(t, n - int(n_h[pinned].sum()), gain)
    else:
        # every stratum pinned (e.g. all S_h = 0): spread what is left over the slack
        deficit = n - int(n_h.sum())
        slack = N_h - n_h
        if deficit > 0:
            n_h += np.asarray(largest_remainder(deficit * slack / slack.sum(), deficit))
    if int(n_h.sum()) != n or np.any(n_h < floor) or np.any(n_h > N_h):
        raise AllocationError(f"allocation for n={n} did not settle (got {n_h.tolist()})")
    return Allocation(tuple(int(v) for v in n_h), method, tuple(float(v) for v in targets))


def neyman_allocate(summaries: Sequence[StratumSummary], n: int, min_per_stratum: int = MIN_PER_STRATUM) -> Allocation:
    """Optimum allocation n_h proportional to N_h * S_h."""
    return _allocate(
        [s.N for s in summaries], [s.N * s.S for s in summaries], n, min_per_stratum, "neyman",
        min_variance_rounding=True,
    )


def proportional_allocate(
    summaries: Sequence[StratumSummary], n: int, min_per_stratum: int = MIN_PER_STRATUM
) -> Allocation:
    return _allocate([s.N for s in summaries], [s.N for s in summaries], n, min_per_stratum, "proportional")


def custom_allocation(n_h: Sequence[int]) -> Allocation:
    return Allocation(tuple(int(v) for v in n_h), "custom")


def stratified_variance(summaries: Sequence[StratumSummary], allocation: Allocation, fpc: bool = True) -> float:
    """Variance of the stratified estimator of the mean: sum W_h^2 (1 - n_h/N_h) S_h^2 / n_h."""
    if len(summaries) != len(allocation.n_h):
        raise AllocationError("allocation does not match the strata")
    V = 0.0
    for s, nh in zip(summaries, allocation.n_h):
        if nh < 1 or nh > s.N:
            raise AllocationError(f"stratum {s.stratum}: n_h={nh} outside 1..{s.N}")
        f = 1.0 - nh / s.N if fpc else 1.0
        V += s.W**2 * f * s.S**2 / nh
    return V


def cost_proxy(summaries: Sequence[StratumSummary], allocation: Allocation) -> float:
    """Sample-weighted mean difficulty: sum n_h * mean difficulty_h / n."""
    n = allocation.n
    return math.fsum(nh * s.mean_difficulty for s, nh in zip(summaries, allocation.n_h)) / n


def write_allocation_csv(summaries: Sequence[StratumSummary], allocation: Allocation, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "label", "N_h", "W_h", "S_h", "mean_difficulty", "n_h"])
        for s, nh in zip(summaries, allocation.n_h):
            w.writerow([s.stratum, s.label, s.N, f"{s.W:.10g}", f"{s.S:.10g}", f"{s.mean_difficulty:.10g}", nh])
