"""Sweep of (wealth strata, difficulty strata) scenarios and their variance/cost quadrants."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .allocation import (
    MIN_PER_STRATUM,
    cost_proxy,
    neyman_allocate,
    stratified_variance,
    summarize_strata,
)
from .composite import CensusBlockFrame
from .exceptions import RemoteStratError
from .stratification import cross_stratify

DEFAULT_GRID = (4, 4)
DEFAULT_SAMPLE_FRACTION = 0.02


class Quadrant(str, Enum):
    Q1 = "Q1_small_var_low_cost"
    Q2 = "Q2_big_var_low_cost"
    Q3 = "Q3_big_var_high_cost"
    Q4 = "Q4_small_var_high_cost"


@dataclass(frozen=True)
class ScenarioResult:
    L_w: int
    L_g: int
    n: int
    effective_strata: int = 0
    variance: float = math.nan
    cost: float = math.nan
    allocation: tuple[int, ...] = ()
    strata: tuple[str, ...] = ()
    collapses: int = 0
    quadrant: Quadrant | None = None
    above_mean_cost: bool = False
    error: str = ""

    @property
    def label(self) -> str:
        return f"w{self.L_w}g{self.L_g}"

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class ScenarioGrid:
    results: tuple[ScenarioResult, ...]
    max_w: int
    max_g: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.results)

    @property
    def successful(self) -> list[ScenarioResult]:
        return [r for r in self.results if r.ok]

    @property
    def failed(self) -> list[ScenarioResult]:
        return [r for r in self.results if not r.ok]

    def get(self, L_w: int, L_g: int) -> ScenarioResult | None:
        for r in self.results:
            if (r.L_w, r.L_g) == (L_w, L_g):
                return r
        return None

    def variance_matrix(self) -> np.ndarray:
        """Rows are wealth strata counts, columns difficulty strata counts; NaN where not computed."""
        M = np.full((self.max_w, self.max_g), np.nan)
        for r in self.successful:
            M[r.L_w - 1, r.L_g - 1] = r.variance
        return M


def default_sample_size(n_blocks: int, max_strata: int) -> int:
    """2% of the frame, but never fewer than the per-stratum minimum for the largest design."""
    return max(int(round(DEFAULT_SAMPLE_FRACTION * n_blocks)), MIN_PER_STRATUM * max_strata)


def frame_fingerprint(frame: CensusBlockFrame) -> str:
    h = hashlib.sha256()
    for bid, vid in zip(frame.block_ids, frame.village_ids):
        h.update(f"{bid}\x1f{vid}\x1e".encode())
    for arr in (frame.wealth, frame.households, frame.difficulty):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def evaluate_scenario(
    frame: CensusBlockFrame,
    L_w: int,
    L_g: int,
    n: int,
    J: int | None = None,
    fpc: bool = True,
    min_per_stratum: int = MIN_PER_STRATUM,
) -> ScenarioResult:
    """Cross-stratify, allocate by Neyman, and score one scenario; failures are captured, not raised."""
    try:
        design = cross_stratify(frame, L_w, L_g, J)
        summaries = summarize_strata(frame, design)
        alloc = neyman_allocate(summaries, n, min_per_stratum)
        V = stratified_variance(summaries, alloc, fpc=fpc)
        C = cost_proxy(summaries, alloc)
    except RemoteStratError as exc:
        return ScenarioResult(L_w, L_g, n, error=str(exc))
    return ScenarioResult(
        L_w,
        L_g,
        n,
        effective_strata=design.n_strata,
        variance=V,
        cost=C,
        allocation=alloc.n_h,
        strata=tuple(design.labels()),
        collapses=len(design.collapses),
    )


def run_grid(
    frame: CensusBlockFrame,
    n: int | None = None,
    J: int | None = None,
    grid: tuple[int, int] = DEFAULT_GRID,
    include_corner: bool = False,
    fpc: bool = True,
    min_per_stratum: int = MIN_PER_STRATUM,
) -> ScenarioGrid:
    """Evaluate every (L_w, L_g) in 1..W x 1..G; (1, 1) only when ``include_corner``.

    Scenarios are ordered by L_w then L_g. Each is scored against the
    frame's population mean difficulty; ``above_mean_cost`` flags the ones
    whose sample would be harder to reach than the population on average.
    """
    max_w, max_g = grid
    if max_w < 1 or max_g < 1:
        raise RemoteStratError("grid bounds must be at least 1x1")
    if n is None:
        n = default_sample_size(len(frame), max_w * max_g)
    pop_mean = float(np.mean(np.sort(frame.difficulty)))
    results = []
    for w in range(1, max_w + 1):
        for g in range(1, max_g + 1):
            if (w, g) == (1, 1) and not include_corner:
                continue
            r = evaluate_scenario(frame, w, g, n, J, fpc, min_per_stratum)
            if r.ok:
                r = replace(r, above_mean_cost=r.cost > pop_mean)
            results.append(r)
    meta = {
        "n": n,
        "J": J,
        "fpc": fpc,
        "min_per_stratum": min_per_stratum,
        "grid": [max_w, max_g],
        "include_corner": include_corner,
        "n_blocks": len(frame),
        "population_mean_difficulty": pop_mean,
        "frame_fingerprint": frame_fingerprint(frame),
    }
    return ScenarioGrid(tuple(results), max_w, max_g, meta)


def classify_quadrants(grid: ScenarioGrid) -> ScenarioGrid:
    """Label scenarios by variance and cost relative to the medians over successful scenarios.

    At or below the median counts as small variance / low cost.
    """
    ok = grid.successful
    if not ok:
        raise RemoteStratError("no successful scenarios to classify")
    if len(ok) < 2:
        raise RemoteStratError("quadrant classification needs at least two successful scenarios")
    v_med = float(np.median([r.variance for r in ok]))
    c_med = float(np.median([r.cost for r in ok]))
    out = []
    for r in grid.results:
        if r.ok:
            small, low = r.variance <= v_med, r.cost <= c_med
            q = {(True, True): Quadrant.Q1, (False, True): Quadrant.Q2,
                 (False, False): Quadrant.Q3, (True, False): Quadrant.Q4}[(small, low)]
            r = replace(r, quadrant=q)
        out.append(r)
    meta = dict(grid.meta, variance_median=v_med, cost_median=c_med)
    return ScenarioGrid(tuple(out), grid.max_w, grid.max_g, meta)


def quadrant_counts(grid: ScenarioGrid) -> dict[Quadrant, int]:
    counts = {q: 0 for q in Quadrant}
    for r in grid.successful:
        if r.quadrant is not None:
            counts[r.quadrant] += 1
    return counts
