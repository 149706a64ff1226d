"""Two-step polychoric correlation estimation.

Step 1 places thresholds on the standard normal scale from each variable's
marginal cumulative proportions. Step 2 maximizes, pair by pair, the
multinomial log-likelihood of the contingency table over the latent
correlation with the thresholds held fixed.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri

from .bvn import bvn_grid
from .exceptions import EstimationError
from .schema import OrdinalDataset

RHO_BOUND = 0.999
RHO_TOL = 1e-6
PROB_FLOOR = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class VariableThresholds:
    """Interior thresholds of one variable after empty-category collapsing.

    ``collapse_map[b - 1]`` is the effective (1-based) category that original
    category ``b`` was folded into; it is the identity when every category
    was observed.
    """

    name: str
    alphas: np.ndarray
    collapse_map: tuple[int, ...]

    @property
    def n_effective(self) -> int:
        return len(self.alphas) + 1

    @property
    def collapsed(self) -> bool:
        return self.n_effective < len(self.collapse_map)

    @property
    def edges(self) -> np.ndarray:
        """Thresholds padded with -inf and +inf."""
        return np.concatenate(([-np.inf], self.alphas, [np.inf]))

    def effective_codes(self, codes: np.ndarray) -> np.ndarray:
        return np.asarray(self.collapse_map)[np.asarray(codes) - 1]


@dataclass(frozen=True)
class ThresholdSet:
    entries: tuple[VariableThresholds, ...]

    def __getitem__(self, i: int) -> VariableThresholds:
        return self.entries[i]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]


@dataclass(frozen=True)
class PolychoricMatrix:
    names: tuple[str, ...]
    matrix: np.ndarray
    psd_repaired: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def thresholds_from_counts(counts: Sequence[int], name: str = "") -> VariableThresholds:
    counts = np.asarray(counts, dtype=float)
    nonempty = np.flatnonzero(counts > 0)
    if len(nonempty) < 2:
        raise EstimationError(
            f"variable {name!r}: all observations fall in one category, no threshold can be placed"
        )
    # empty categories fold into the nearest lower observed one; leading empties into the first observed
    effective = np.searchsorted(nonempty, np.arange(len(counts)), side="right")
    effective = np.maximum(effective, 1)
    cum = np.cumsum(counts[nonempty])[:-1] / counts.sum()
    return VariableThresholds(name=name, alphas=ndtri(cum), collapse_map=tuple(int(e) for e in effective))


def estimate_thresholds(dataset: OrdinalDataset, variable: int) -> VariableThresholds:
    name = dataset.schema.variables[variable].name
    return thresholds_from_counts(dataset.category_counts(variable), name)


def _edges(t) -> np.ndarray:
    if isinstance(t, VariableThresholds):
        return t.edges
    return np.concatenate(([-np.inf], np.asarray(t, dtype=float), [np.inf]))


def cell_probabilities(edges_a: np.ndarray, edges_b: np.ndarray, rho: float) -> np.ndarray:
    """Rectangle probabilities of the latent bivariate normal over the threshold grid."""
    F = bvn_grid(edges_a, edges_b, rho)
    return F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]


def log_likelihood(table: np.ndarray, edges_a: np.ndarray, edges_b: np.ndarray, rho: float) -> float:
    pi = cell_probabilities(edges_a, edges_b, rho)
    return float(np.sum(table * np.log(np.maximum(pi, PROB_FLOOR))))


def estimate_rho(table, thresholds_a, thresholds_b, tol: float = RHO_TOL) -> float:
    """Maximum-likelihood latent correlation for a contingency table with fixed thresholds.

    Parameters
    ----------
    table : array_like
        Counts, rows indexed by categories of the first variable.
    thresholds_a, thresholds_b : VariableThresholds or array_like
        Interior thresholds (length = categories - 1).
    tol : float
        Absolute tolerance of the bounded scalar search in rho.

    Returns
    -------
    float
        The estimate in [-0.999, 0.999].
    """
    table = np.asarray(table, dtype=float)
    ea, eb = _edges(thresholds_a), _edges(thresholds_b)
    if table.shape != (len(ea) - 1, len(eb) - 1):
        raise EstimationError(
            f"table shape {table.shape} does not match threshold categories ({len(ea) - 1}, {len(eb) - 1})"
        )
    if min(table.shape) < 2:
        raise EstimationError("degenerate table: a variable has a single category")
    if table.sum() < 1:
        raise EstimationError("empty contingency table")

    def nll(r):
        return -log_likelihood(table, ea, eb, r)

    res = minimize_scalar(nll, bounds=(-RHO_BOUND, RHO_BOUND), method="bounded", options={"xatol": tol})
    # the bounded search never evaluates the endpoints themselves; perfect association sits there
    candidates = [float(res.x), -RHO_BOUND, RHO_BOUND, 0.0]
    values = [nll(r) for r in candidates]
    return candidates[int(np.argmin(values))]


def contingency_table(codes_a: np.ndarray, codes_b: np.ndarray, Ba: int, Bb: int) -> np.ndarray:
    table = np.zeros((Ba, Bb))
    np.add.at(table, (np.asarray(codes_a) - 1, np.asarray(codes_b) - 1), 1)
    return table


def polychoric_matrix(dataset: OrdinalDataset, tol: float = RHO_TOL) -> tuple[PolychoricMatrix, ThresholdSet]:
    m = dataset.n_variables
    if m < 2:
        raise EstimationError("polychoric matrix needs at least two variables")
    entries = tuple(estimate_thresholds(dataset, a) for a in range(m))
    eff = [t.effective_codes(dataset.codes[:, a]) for a, t in enumerate(entries)]
    R = np.eye(m)
    for a, b in itertools.combinations(range(m), 2):
        ta, tb = entries[a], entries[b]
        table = contingency_table(eff[a], eff[b], ta.n_effective, tb.n_effective)
        try:
            r = estimate_rho(table, ta, tb, tol=tol)
        except EstimationError as exc:
            raise EstimationError(f"pair ({ta.name}, {tb.name}): {exc}") from None
        R[a, b] = R[b, a] = r
    return psd_repair(R, names=dataset.schema.names), ThresholdSet(entries)


def psd_repair(matrix, names: Sequence[str] | None = None) -> PolychoricMatrix:
    """Clip negative eigenvalues to zero and rescale back to a unit diagonal.

    A matrix that is already positive semidefinite is returned unchanged.
    """
    M = np.asarray(matrix, dtype=float)
    if names is None:
        names = [f"v{i + 1}" for i in range(M.shape[0])]
    names = tuple(names)
    vals, vecs = np.linalg.eigh(M)
    if vals.min() >= 0.0:
        return PolychoricMatrix(names, M.copy(), psd_repaired=False)
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = 1.0 / np.sqrt(np.diag(fixed))
    fixed = fixed * np.outer(d, d)
    fixed = (fixed + fixed.T) / 2.0
    np.fill_diagonal(fixed, 1.0)
    return PolychoricMatrix(names, np.clip(fixed, -1.0, 1.0), psd_repaired=True)


def write_correlation_csv(pm: PolychoricMatrix, path: str | Path) -> None:
    """Lower-triangular layout with variable names along both margins."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *pm.names])
        for i, name in enumerate(pm.names):
            w.writerow([name, *(f"{pm.matrix[i, j]:.6f}" for j in range(i + 1))] + [""] * (len(pm.names) - i - 1))


def read_correlation_csv(path: str | Path) -> PolychoricMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    m = len(names)
    R = np.eye(m)
    for i, row in enumerate(rows[1 : m + 1]):
        for j, cell in enumerate(row[1 : m + 1]):
            if cell.strip():
                R[i, j] = R[j, i] = float(cell)
    return PolychoricMatrix(names, R)


def write_thresholds_csv(ts: ThresholdSet, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "k", "alpha_k"])
        for e in ts.entries:
            for k, alpha in enumerate(e.alphas, start=1):
                w.writerow([e.name, k, f"{alpha:.10f}"])
