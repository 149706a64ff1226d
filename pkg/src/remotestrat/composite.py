"""Composite indexes from a polychoric matrix.

Per-category weights are the first-eigenvector loading of a variable times
the mean of the standard normal truncated to that category's threshold
interval. A unit's raw index is the sum of the weights of its categories;
indexes are min-max normalized to [0, 100] and household indexes are
averaged up to census blocks.
"""
from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import CompositeIndexError
from .polychoric import PolychoricMatrix, ThresholdSet, VariableThresholds
from .schema import OrdinalDataset, Schema

EIGEN_GAP = 1e-12
MONOTONE_TOL = 1e-9


class Orientation(str, Enum):
    AS_COMPUTED = "as_computed"
    FLIPPED = "flipped"


class OrientationReference(str, Enum):
    # keep the solver's eigenvector sign
    AS_COMPUTED = "as_computed"
    # choose the sign that makes the loadings sum nonnegative
    POSITIVE_SUM = "positive_sum"


@dataclass(frozen=True)
class WeightTable:
    names: tuple[str, ...]
    weights: tuple[np.ndarray, ...]
    loadings: np.ndarray
    eigenvalue: float
    orientation: Orientation = Orientation.AS_COMPUTED
    eigenvalues: np.ndarray | None = None
    violations: tuple[str, ...] = ()

    @property
    def category_counts(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.weights)

    @classmethod
    def from_rows(cls, names: Sequence[str], rows: Sequence[Sequence[float]]) -> "WeightTable":
        """Literal table (e.g. read from a report); loadings and eigenvalue are unknown."""
        weights = tuple(np.asarray(r, dtype=float) for r in rows)
        return cls(tuple(names), weights, np.full(len(weights), np.nan), float("nan"))

    def __add__(self, other: "WeightTable") -> "WeightTable":
        if self.category_counts != other.category_counts:
            raise CompositeIndexError("weight tables cover different categories")
        return WeightTable.from_rows(self.names, [a + b for a, b in zip(self.weights, other.weights)])


def truncated_normal_means(vt: VariableThresholds | Sequence[float]) -> np.ndarray:
    """Mean of N(0, 1) restricted to each category interval (effective categories)."""
    edges = vt.edges if isinstance(vt, VariableThresholds) else np.concatenate(([-np.inf], vt, [np.inf]))
    pdf = np.exp(-0.5 * edges**2) / np.sqrt(2.0 * np.pi)
    mass = np.diff(ndtr(edges))
    return (pdf[:-1] - pdf[1:]) / mass


def category_probabilities(vt: VariableThresholds) -> np.ndarray:
    return np.diff(ndtr(vt.edges))


def leading_eigenpair(matrix: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if len(vals) > 1 and vals[0] - vals[1] <= EIGEN_GAP:
        raise CompositeIndexError(
            f"first component is ambiguous: leading eigenvalues {vals[0]:.6g} and {vals[1]:.6g} coincide"
        )
    return float(vals[0]), vecs[:, 0].copy(), vals


def derive_weights(
    matrix: PolychoricMatrix,
    thresholds: ThresholdSet,
    orientation_reference: OrientationReference | str = OrientationReference.POSITIVE_SUM,
) -> WeightTable:
    if len(thresholds) != len(matrix.names):
        raise CompositeIndexError("threshold set and matrix cover different variables")
    lam, e, vals = leading_eigenpair(matrix.matrix)
    orientation = Orientation.AS_COMPUTED
    if OrientationReference(orientation_reference) is OrientationReference.POSITIVE_SUM and e.sum() < 0:
        e = -e
        orientation = Orientation.FLIPPED

    weights, violations = [], []
    for a, vt in enumerate(thresholds.entries):
        scores = truncated_normal_means(vt)
        gamma = e[a] * scores[np.asarray(vt.collapse_map) - 1]
        d = np.diff(gamma)
        if not (np.all(d >= -MONOTONE_TOL) or np.all(d <= MONOTONE_TOL)):
            violations.append(vt.name)
        weights.append(gamma)
    return WeightTable(
        names=tuple(matrix.names),
        weights=tuple(weights),
        loadings=e,
        eigenvalue=lam,
        orientation=orientation,
        eigenvalues=vals,
        violations=tuple(violations),
    )


def compute_index(dataset: OrdinalDataset, weights: WeightTable) -> np.ndarray:
    """Raw composite index: for each unit, the sum over variables of the weight of its category."""
    if tuple(dataset.schema.names) != tuple(weights.names) or dataset.schema.category_counts != weights.category_counts:
        raise CompositeIndexError("dataset schema does not match the weight table")
    out = np.zeros(len(dataset))
    for a, w in enumerate(weights.weights):
        out += w[dataset.codes[:, a] - 1]
    return out


@dataclass(frozen=True)
class Normalized:
    values: np.ndarray
    bounds: tuple[float, float]
    degenerate: bool = False


def minmax_normalize(raw, reference) -> Normalized:
    """Scale ``raw`` to 0..100 using the min and max of ``reference``.

    A constant reference maps everything to 50 and sets ``degenerate``.
    """
    ref = np.asarray(reference, dtype=float)
    if ref.size == 0:
        raise CompositeIndexError("normalization reference is empty")
    x = np.asarray(raw, dtype=float)
    lo, hi = float(ref.min()), float(ref.max())
    if hi == lo:
        return Normalized(np.full(x.shape, 50.0), (lo, hi), degenerate=True)
    # divide first so x == hi gives exactly 1.0 and thus exactly 100
    return Normalized(100.0 * ((x - lo) / (hi - lo)), (lo, hi))


@dataclass(frozen=True)
class IndexVector:
    unit_ids: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray
    bounds: tuple[float, float]
    flipped: bool = False
    degenerate: bool = False
    clamped: np.ndarray | None = None

    def __len__(self):
        return len(self.unit_ids)


def build_index(dataset: OrdinalDataset, weights: WeightTable) -> IndexVector:
    """Raw and normalized index with bounds taken from the dataset itself."""
    raw = compute_index(dataset, weights)
    norm = minmax_normalize(raw, raw)
    return IndexVector(dataset.unit_ids, raw, norm.values, norm.bounds, degenerate=norm.degenerate)


def project(dataset: OrdinalDataset, weights: WeightTable, reference: IndexVector) -> IndexVector:
    """Score units outside the reference population on its persisted bounds, clamping to [0, 100]."""
    raw = compute_index(dataset, weights)
    lo, hi = reference.bounds
    norm = minmax_normalize(raw, [lo, hi]).values
    if reference.flipped:
        norm = 100.0 - norm
    clamped = (norm < 0.0) | (norm > 100.0)
    return IndexVector(
        dataset.unit_ids,
        raw,
        np.clip(norm, 0.0, 100.0),
        (lo, hi),
        flipped=reference.flipped,
        degenerate=hi == lo,
        clamped=clamped,
    )


def flip(index: IndexVector) -> IndexVector:
    return replace(index, normalized=100.0 - index.normalized, flipped=not index.flipped)


def difficulty_scores(dataset: OrdinalDataset, schema: Schema | None = None) -> np.ndarray:
    """Per-unit sum of reversed codes; larger means more difficult (or less wealthy)."""
    schema = schema or dataset.schema
    return sum(
        var.difficulty_score(dataset.codes[:, a]) for a, var in enumerate(schema.variables)
    ).astype(float)


def _orient(index: IndexVector, reference: np.ndarray, what: str) -> IndexVector:
    if np.ptp(reference) == 0:
        raise CompositeIndexError(f"{what} reference score has zero variance; orientation undecidable")
    x = index.normalized
    if np.ptp(x) == 0:
        return index
    if np.corrcoef(x, reference)[0, 1] < 0:
        return flip(index)
    return index


def orient_difficulty(index: IndexVector, dataset: OrdinalDataset, schema: Schema | None = None) -> IndexVector:
    """Make the normalized index increase with difficulty (0 easy, 100 hard)."""
    return _orient(index, difficulty_scores(dataset, schema), "difficulty")


def orient_wealth(index: IndexVector, dataset: OrdinalDataset, schema: Schema | None = None) -> IndexVector:
    """Make the normalized index increase with wealth."""
    return _orient(index, -difficulty_scores(dataset, schema), "wealth")


@dataclass(frozen=True)
class CensusBlockFrame:
    """Sampling frame of census blocks.

    ``difficulty`` is NaN for blocks whose village has no difficulty index yet.
    """

    block_ids: tuple[str, ...]
    village_ids: tuple[str, ...]
    wealth: np.ndarray
    households: np.ndarray
    difficulty: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.block_ids)
        wealth = np.asarray(self.wealth, dtype=float)
        households = np.asarray(self.households, dtype=np.int64)
        difficulty = np.asarray(self.difficulty, dtype=float)
        if not (len(self.village_ids) == len(wealth) == len(households) == len(difficulty) == n):
            raise CompositeIndexError("frame columns differ in length")
        if len(set(self.block_ids)) != n:
            raise CompositeIndexError("duplicate block ids in frame")
        if n and households.min() < 1:
            raise CompositeIndexError("every block must hold at least one household")
        if n and (wealth.min() < 0.0 or wealth.max() > 100.0):
            raise CompositeIndexError("wealth concentration outside [0, 100]")
        for arr in (wealth, households, difficulty):
            arr.setflags(write=False)
        object.__setattr__(self, "wealth", wealth)
        object.__setattr__(self, "households", households)
        object.__setattr__(self, "difficulty", difficulty)

    def __len__(self) -> int:
        return len(self.block_ids)

    @property
    def has_difficulty(self) -> bool:
        return bool(len(self)) and not np.isnan(self.difficulty).any()

    def take(self, order: Sequence[int]) -> "CensusBlockFrame":
        order = np.asarray(order, dtype=int)
        return CensusBlockFrame(
            tuple(self.block_ids[i] for i in order),
            tuple(self.village_ids[i] for i in order),
            self.wealth[order],
            self.households[order],
            self.difficulty[order],
            dict(self.meta),
        )


@dataclass(frozen=True)
class BlockAggregation:
    frame: CensusBlockFrame
    empty_blocks: tuple[str, ...] = ()


def aggregate_blocks(
    household_norm: IndexVector,
    household_block: Sequence[str] | Mapping[str, str],
    block_village: Mapping[str, str] | None = None,
    declared_blocks: Sequence[str] = (),
) -> BlockAggregation:
    """Average normalized household indexes within each block.

    ``household_block`` is either aligned with ``household_norm.unit_ids`` or a
    mapping from household id to block id. Blocks listed in
    ``declared_blocks`` that receive no household are dropped and reported.
    """
    if isinstance(household_block, Mapping):
        try:
            blocks = [household_block[u] for u in household_norm.unit_ids]
        except KeyError as exc:
            raise CompositeIndexError(f"household {exc.args[0]!r} has no block") from None
    else:
        blocks = list(household_block)
        if len(blocks) != len(household_norm):
            raise CompositeIndexError("household-to-block map does not cover every household")

    sums: OrderedDict[str, float] = OrderedDict()
    counts: dict[str, int] = {}
    for b, v in zip(blocks, household_norm.normalized):
        sums[b] = sums.get(b, 0.0) + float(v)
        counts[b] = counts.get(b, 0) + 1
    ids = sorted(sums)
    block_village = block_village or {}
    frame = CensusBlockFrame(
        block_ids=tuple(ids),
        village_ids=tuple(block_village.get(b, "") for b in ids),
        wealth=np.array([sums[b] / counts[b] for b in ids]),
        households=np.array([counts[b] for b in ids]),
        difficulty=np.full(len(ids), np.nan),
    )
    empty = tuple(sorted(set(declared_blocks) - set(ids)))
    return BlockAggregation(frame, empty)


def attach_difficulty(frame: CensusBlockFrame, village_index: IndexVector) -> CensusBlockFrame:
    """Blocks inherit the normalized difficulty of their parent village."""
    lookup = dict(zip(village_index.unit_ids, village_index.normalized))
    missing = sorted({v for v in frame.village_ids if v not in lookup})
    if missing:
        raise CompositeIndexError(f"no difficulty index for village(s): {', '.join(missing[:5])}")
    return replace(frame, difficulty=np.array([lookup[v] for v in frame.village_ids]))


@dataclass(frozen=True)
class GroupSummary:
    groups: tuple[str, ...]
    means: np.ndarray
    counts: np.ndarray
    overall_mean: float


def summarize_by_group(values, group_key: Sequence[str]) -> GroupSummary:
    x = np.asarray(values.normalized if isinstance(values, IndexVector) else values, dtype=float)
    if len(group_key) != len(x):
        raise CompositeIndexError("every unit needs a group key")
    groups = sorted(set(group_key))
    pos = {g: i for i, g in enumerate(groups)}
    idx = np.array([pos[g] for g in group_key], dtype=int)
    counts = np.bincount(idx, minlength=len(groups))
    sums = np.bincount(idx, weights=x, minlength=len(groups))
    return GroupSummary(tuple(groups), sums / counts, counts, float(x.mean()) if len(x) else float("nan"))


# --- exports ---------------------------------------------------------------


def write_weights_csv(wt: WeightTable, path: str | Path) -> None:
    """One row per variable, columns score1..scoreB (blank where a variable has fewer categories)."""
    width = max(wt.category_counts)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", *(f"score{b}" for b in range(1, width + 1))])
        for name, row in zip(wt.names, wt.weights):
            w.writerow([name, *(f"{g:.6f}" for g in row), *([""] * (width - len(row)))])


def read_weights_csv(path: str | Path) -> WeightTable:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return WeightTable.from_rows(
        [r[0] for r in rows], [[float(c) for c in r[1:] if c.strip()] for r in rows]
    )


def write_index_csv(index: IndexVector, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "raw", "normalized"])
        for uid, r, n in zip(index.unit_ids, index.raw, index.normalized):
            w.writerow([uid, repr(float(r)), repr(float(n))])


def read_index_csv(path: str | Path) -> IndexVector:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    raw = np.array([float(r[1]) for r in rows])
    norm = np.array([float(r[2]) for r in rows])
    bounds = (float(raw.min()), float(raw.max())) if len(raw) else (0.0, 0.0)
    return IndexVector(tuple(r[0] for r in rows), raw, norm, bounds)


FRAME_COLUMNS = ["block_id", "village_id", "wealth_concentration", "households", "difficulty"]


def write_frame_csv(frame: CensusBlockFrame, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        for i, bid in enumerate(frame.block_ids):
            d = frame.difficulty[i]
            w.writerow([
                bid,
                frame.village_ids[i],
                repr(float(frame.wealth[i])),
                int(frame.households[i]),
                "" if np.isnan(d) else repr(float(d)),
            ])


def read_frame_csv(path: str | Path) -> CensusBlockFrame:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise CompositeIndexError(f"frame file not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in FRAME_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise CompositeIndexError(f"{path}: missing column(s): {', '.join(missing)}")
        rows = list(reader)
    try:
        return CensusBlockFrame(
            block_ids=tuple(r["block_id"] for r in rows),
            village_ids=tuple(r["village_id"] for r in rows),
            wealth=np.array([float(r["wealth_concentration"]) for r in rows]),
            households=np.array([int(r["households"]) for r in rows]),
            difficulty=np.array([float(r["difficulty"]) if r["difficulty"].strip() else np.nan for r in rows]),
            meta={"source": str(path)},
        )
    except ValueError as exc:
        raise CompositeIndexError(f"{path}: {exc}") from None
