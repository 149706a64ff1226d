"""Cumulative root-frequency strata boundaries and wealth x difficulty cross-strata."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .composite import CensusBlockFrame
from .exceptions import StratificationError

MIN_STRATUM_SIZE = 2


def default_classes(L: int) -> int:
    return max(20, 15 * L)


@dataclass(frozen=True)
class StrataBoundaries:
    dimension: str
    L: int
    cuts: tuple[float, ...]
    J: int
    cut_classes: tuple[int, ...] = ()

    def assign(self, values) -> np.ndarray:
        """1-based stratum of each value; a value equal to a cut goes to the upper stratum."""
        return np.searchsorted(np.asarray(self.cuts), np.asarray(values, dtype=float), side="right") + 1


def class_edges(values: np.ndarray, J: int) -> np.ndarray:
    return np.linspace(values.min(), values.max(), J + 1)


def class_counts(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Counts in J equal-width classes, half-open except the last, which includes the max."""
    J = len(edges) - 1
    cls = np.searchsorted(edges[1:-1], values, side="right")
    return np.bincount(cls, minlength=J)


def cum_root_freq_boundaries(values, L: int, J: int | None = None, dimension: str = "") -> StrataBoundaries:
    """Dalenius-Hodges boundaries: cut where cumulative sqrt(frequency) crosses k*T/L.

    Cut ``k`` sits at the upper edge of the class whose cumulative sqrt(f) is
    closest to ``k * T / L`` (lowest class on ties). A cut that would repeat
    or leave a stratum without observations is moved to the upper edge of
    the next nonempty class.
    """
    x = np.asarray(values, dtype=float)
    if L < 1:
        raise StratificationError("number of strata must be at least 1")
    J = default_classes(L) if J is None else int(J)
    if J < L:
        raise StratificationError(f"class count J={J} smaller than L={L}")
    if L == 1:
        return StrataBoundaries(dimension, 1, (), J)
    if len(np.unique(x)) < L:
        raise StratificationError(f"{dimension or 'index'}: fewer than {L} distinct values")

    edges = class_edges(x, J)
    f = class_counts(x, edges)
    cum = np.cumsum(np.sqrt(f))
    T = cum[-1]
    nonempty = np.flatnonzero(f > 0) + 1  # 1-based class numbers
    if len(nonempty) < L:
        raise StratificationError(
            f"{dimension or 'index'}: only {len(nonempty)} nonempty classes for {L} strata; raise J"
        )

    # cut j means "upper edge of class j", j in 1..J-1
    candidates = cum[:-1]
    chosen = []
    prev = 0
    for k in range(1, L):
        j = int(np.argmin(np.abs(candidates - k * T / L))) + 1
        # stratum k must contain a nonempty class; leave room for the L-k strata above
        lo = int(nonempty[np.searchsorted(nonempty, prev, side="right")])
        hi = int(nonempty[len(nonempty) - L + k]) - 1
        j = min(max(j, lo), hi)
        chosen.append(j)
        prev = j
    return StrataBoundaries(dimension, L, tuple(float(edges[j]) for j in chosen), J, tuple(chosen))


def crf_discrepancy(values, cut_classes, L: int, J: int) -> float:
    """max_k |cum sqrt(f) at cut k - k*T/L| for a given choice of class edges."""
    x = np.asarray(values, dtype=float)
    cum = np.cumsum(np.sqrt(class_counts(x, class_edges(x, J))))
    T = cum[-1]
    return max((abs(cum[j - 1] - k * T / L) for k, j in enumerate(cut_classes, start=1)), default=0.0)


@dataclass(frozen=True)
class Collapse:
    kind: str  # "empty" (cell dropped) or "merge"
    cell: str
    into: str = ""
    size: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cell": self.cell, "into": self.into, "size": self.size}


@dataclass(frozen=True)
class CrossStrataDesign:
    """Cross-stratification of blocks.

    ``cells`` holds the (w, g) label of every block, ``stratum`` its 1-based
    effective stratum after collapsing, and ``strata`` the cell labels that
    make up each effective stratum.
    """

    L_w: int
    L_g: int
    J_w: int
    J_g: int
    wealth: StrataBoundaries
    difficulty: StrataBoundaries
    cells: np.ndarray
    stratum: np.ndarray
    strata: tuple[tuple[str, ...], ...]
    collapses: tuple[Collapse, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_strata(self) -> int:
        return len(self.strata)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.stratum - 1, minlength=self.n_strata)

    def labels(self) -> list[str]:
        return ["+".join(cells) for cells in self.strata]


def cell_label(w: int, g: int) -> str:
    return f"w{w}g{g}"


def _collapse_cells(counts: np.ndarray, min_size: int):
    """Group the L_w x L_g cells into effective strata of at least ``min_size`` blocks.

    Returns ``(groups, log)`` where ``groups`` maps each cell (w, g), 0-based,
    to a group id.
    """
    L_w, L_g = counts.shape
    log: list[Collapse] = []
    group = {}
    members: dict[int, list[tuple[int, int]]] = {}
    gid = 0
    for w in range(L_w):
        for g in range(L_g):
            if counts[w, g] == 0:
                log.append(Collapse("empty", cell_label(w + 1, g + 1)))
                continue
            group[(w, g)] = gid
            members[gid] = [(w, g)]
            gid += 1

    def size(i):
        return int(sum(counts[c] for c in members[i]))

    def name(i):
        return "+".join(cell_label(w + 1, g + 1) for w, g in sorted(members[i]))

    def merge(src, dst):
        log.append(Collapse("merge", name(src), name(dst), size(src)))
        for c in members[src]:
            group[c] = dst
        members[dst].extend(members.pop(src))

    def row_groups(w):
        seen = []
        for g in range(L_g):
            i = group.get((w, g))
            if i is not None and i not in seen:
                seen.append(i)
        return seen

    # along the difficulty dimension first, within each wealth row
    for w in range(L_w):
        while True:
            row = row_groups(w)
            small = [i for i in row if size(i) < min_size]
            if not small or len(row) < 2:
                break
            i = small[0]
            pos = row.index(i)
            neighbours = [row[p] for p in (pos - 1, pos + 1) if 0 <= p < len(row)]
            dst = max(neighbours, key=lambda n: (size(n), -row.index(n)))
            merge(i, dst)

    # rows left with a single deficient group fold into an adjacent wealth row, same difficulty column
    while True:
        deficient = [i for i in sorted(members) if size(i) < min_size]
        if not deficient:
            break
        i = deficient[0]
        w0 = min(w for w, _ in members[i])
        g0 = min(g for _, g in members[i])
        rows = [w for w in (w0 - 1, w0 + 1) if 0 <= w < L_w and row_groups(w)]
        rows = [w for w in rows if any(j != i for j in row_groups(w))]
        if not rows:
            raise StratificationError("frame too small: cannot form strata of at least two blocks")
        w_dst = max(rows, key=lambda w: (sum(counts[w]), -w))
        cols = sorted(
            ((abs(g - g0), g) for g in range(L_g) if group.get((w_dst, g)) not in (None, i)),
        )
        merge(i, group[(w_dst, cols[0][1])])

    return group, members, log


def cross_stratify(
    frame: CensusBlockFrame,
    L_w: int,
    L_g: int,
    J: int | None = None,
    min_size: int = MIN_STRATUM_SIZE,
) -> CrossStrataDesign:
    """Stratify blocks on wealth concentration and difficulty, then collapse thin cells.

    ``J`` applies to both dimensions; when omitted each dimension uses
    :func:`default_classes` of its own stratum count.
    """
    if L_w < 1 or L_g < 1:
        raise StratificationError("stratum counts must be at least 1")
    N = len(frame)
    if N < 2 * L_w * L_g:
        raise StratificationError(f"frame of {N} blocks too small for {L_w}x{L_g} design (needs {2 * L_w * L_g})")
    if not frame.has_difficulty:
        raise StratificationError("frame lacks a difficulty index for some blocks")
    J_w = default_classes(L_w) if J is None else J
    J_g = default_classes(L_g) if J is None else J
    wb = cum_root_freq_boundaries(frame.wealth, L_w, J_w, "wealth")
    gb = cum_root_freq_boundaries(frame.difficulty, L_g, J_g, "difficulty")
    w = wb.assign(frame.wealth)
    g = gb.assign(frame.difficulty)
    counts = np.zeros((L_w, L_g), dtype=int)
    np.add.at(counts, (w - 1, g - 1), 1)

    group, members, log = _collapse_cells(counts, min_size)
    order = sorted(members, key=lambda i: min(members[i]))
    renum = {old: new for new, old in enumerate(order, start=1)}
    strata = tuple(
        tuple(cell_label(a + 1, b + 1) for a, b in sorted(members[i])) for i in order
    )
    stratum = np.array([renum[group[(a - 1, b - 1)]] for a, b in zip(w, g)], dtype=int)
    cells = np.column_stack([w, g])
    return CrossStrataDesign(L_w, L_g, J_w, J_g, wb, gb, cells, stratum, strata, tuple(log))


def write_design_json(design: CrossStrataDesign, path: str | Path) -> None:
    doc = {
        "L_w": design.L_w,
        "L_g": design.L_g,
        "J": {"wealth": design.J_w, "difficulty": design.J_g},
        "wealth_cuts": list(design.wealth.cuts),
        "difficulty_cuts": list(design.difficulty.cuts),
        "strata": design.labels(),
        "collapses": [c.to_dict() for c in design.collapses],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_assignment_csv(frame: CensusBlockFrame, design: CrossStrataDesign, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["block_id", "w", "g", "stratum"])
        for bid, (w, g), h in zip(frame.block_ids, design.cells, design.stratum):
            out.writerow([bid, int(w), int(g), int(h)])
