"""Gaussian-copula generators for ordinal datasets and census-block frames.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` so a seed
reproduces the same draws on every platform numpy supports.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from scipy.stats import skew

from .composite import CensusBlockFrame
from .exceptions import SynthesisError
from .polychoric import psd_repair
from .schema import Direction, OrdinalDataset, Role, Schema, VariableSpec

GENERATOR = "numpy.random.PCG64"
MIN_BLOCKS = 4

# published Papua wealth-concentration moments and wealth/difficulty correlation
PAPUA_WEALTH_MOMENTS = (38.5756, 17.9029, 0.6920)
PAPUA_CORRELATION = -0.7983
# population mean difficulty of the Papua frame the scenarios were run on
PAPUA_DIFFICULTY_MEAN = 52.0


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def semidefinite_cholesky(R: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular L with L @ L.T == R; zero pivots (rank deficiency) give zero columns."""
    R = np.asarray(R, dtype=float)
    m = R.shape[0]
    L = np.zeros_like(R)
    for j in range(m):
        d = R[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (R[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True)
class CopulaSpec:
    correlation: np.ndarray
    thresholds: tuple[np.ndarray, ...]
    n: int
    seed: int = 0
    names: tuple[str, ...] | None = None
    n_groups: int | None = None

    def __post_init__(self):
        R = np.asarray(self.correlation, dtype=float)
        m = R.shape[0]
        if R.shape != (m, m) or not np.allclose(R, R.T) or not np.allclose(np.diag(R), 1.0):
            raise SynthesisError("correlation must be symmetric with unit diagonal")
        if len(self.thresholds) != m:
            raise SynthesisError(f"{len(self.thresholds)} threshold vectors for {m} variables")
        ths = []
        for t in self.thresholds:
            t = np.asarray(t, dtype=float)
            if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
                raise SynthesisError("thresholds must be non-empty and strictly increasing")
            ths.append(t)
        if self.n < 0:
            raise SynthesisError("record count must be nonnegative")
        object.__setattr__(self, "correlation", psd_repair(R).matrix)
        object.__setattr__(self, "thresholds", tuple(ths))

    def schema(self) -> Schema:
        names = self.names or tuple(f"x{i + 1}" for i in range(len(self.thresholds)))
        return Schema(
            tuple(
                VariableSpec(nm, tuple(str(b) for b in range(1, len(t) + 2)), Direction.HARD_TO_EASY)
                for nm, t in zip(names, self.thresholds)
            ),
            Role.WEALTH,
        )


def sample_ordinal(spec: CopulaSpec, schema: Schema | None = None) -> OrdinalDataset:
    """Draw latent normals with the spec's correlation and cut them at the thresholds."""
    schema = schema or spec.schema()
    if schema.category_counts != tuple(len(t) + 1 for t in spec.thresholds):
        raise SynthesisError("schema category counts do not match the threshold vectors")
    rng = rng_for(spec.seed)
    L = semidefinite_cholesky(spec.correlation)
    z = rng.standard_normal((spec.n, L.shape[0])) @ L.T
    codes = np.column_stack(
        [np.searchsorted(t, z[:, a], side="right") + 1 for a, t in enumerate(spec.thresholds)]
    )
    groups = None
    if spec.n_groups:
        groups = tuple(f"g{int(g) + 1}" for g in rng.integers(0, spec.n_groups, size=spec.n))
    width = len(str(max(spec.n, 1)))
    return OrdinalDataset(
        schema=schema,
        unit_ids=tuple(f"u{i + 1:0{width}d}" for i in range(spec.n)),
        codes=codes.reshape(spec.n, -1),
        group_key=groups,
        meta={"generator": GENERATOR, "seed": spec.seed},
    )


@dataclass(frozen=True)
class FrameSpec:
    n_blocks: int
    households_mean: float = 100.0
    correlation: float = PAPUA_CORRELATION
    wealth_mean: float = PAPUA_WEALTH_MOMENTS[0]
    wealth_sd: float = PAPUA_WEALTH_MOMENTS[1]
    wealth_skew: float = PAPUA_WEALTH_MOMENTS[2]
    difficulty_mean: float | None = PAPUA_DIFFICULTY_MEAN
    villages: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_blocks < MIN_BLOCKS:
            raise SynthesisError(f"block count {self.n_blocks} below minimum {MIN_BLOCKS}")
        if not -1.0 <= self.correlation <= 1.0:
            raise SynthesisError(f"correlation {self.correlation} outside [-1, 1]")
        if self.wealth_sd <= 0:
            raise SynthesisError("wealth sd must be positive")
        if self.difficulty_mean is not None and not 0.0 < self.difficulty_mean < 100.0:
            raise SynthesisError("difficulty mean must lie strictly inside (0, 100)")
        if self.households_mean < 1:
            raise SynthesisError("households_mean must be at least 1")


def papua_like(n_blocks: int = 5000, **overrides) -> FrameSpec:
    return FrameSpec(n_blocks=n_blocks, **overrides)


def power_transform(z: np.ndarray, power: float) -> np.ndarray:
    """Monotone bounded map Phi(z) ** power; power > 1 skews right, power < 1 left."""
    return ndtr(z) ** power


POWER_RANGE = (0.05, 40.0)


def fit_power(z: np.ndarray, target_skew: float) -> float:
    """Power whose transform of ``z`` has sample skewness ``target_skew``."""
    lo, hi = POWER_RANGE
    f = lambda p: float(skew(power_transform(z, p))) - target_skew  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise SynthesisError(
            f"skewness {target_skew} unattainable; power map covers "
            f"[{flo + target_skew:.4f}, {fhi + target_skew:.4f}]"
        )
    return brentq(f, lo, hi, xtol=1e-12)


def _minmax100(x: np.ndarray) -> np.ndarray:
    return 100.0 * (x - x.min()) / (x.max() - x.min())


def _fit_mean_power(g: np.ndarray, target_mean: float) -> float:
    """Power whose min-max scaled transform of ``g`` averages ``target_mean``."""
    lo, hi = POWER_RANGE
    f = lambda p: float(_minmax100(power_transform(g, p)).mean()) - target_mean  # noqa: E731
    if f(lo) < 0 or f(hi) > 0:
        raise SynthesisError(f"difficulty mean {target_mean} unattainable with the power map")
    return brentq(f, lo, hi, xtol=1e-12)


def sample_frame(spec: FrameSpec, seed: int = 0) -> CensusBlockFrame:
    """Papua-like census-block frame with calibrated wealth moments and wealth/difficulty correlation.

    The wealth latent is pushed through the power map ``Phi(z) ** p`` whose
    exponent is solved on the drawn sample for the target skewness, then affinely matched to the
    target mean and sd, so the frame's sample moments equal the targets.
    The latent correlation of the difficulty draw is likewise solved so the
    Pearson correlation of I_s and difficulty equals the target. Difficulty
    is min-max scaled to [0, 100], after a power map fitted to
    ``difficulty_mean`` when one is given.
    """
    rng = rng_for(seed)
    N = spec.n_blocks
    z = rng.standard_normal((N, 2))
    households = 1 + rng.poisson(spec.households_mean - 1, size=N)
    n_villages = spec.villages or max(1, N // 5)
    village = rng.integers(0, n_villages, size=N)

    power = fit_power(z[:, 0], spec.wealth_skew)
    t = power_transform(z[:, 0], power)
    wealth = spec.wealth_mean + spec.wealth_sd * (t - t.mean()) / t.std(ddof=1)
    if wealth.min() < 0.0 or wealth.max() > 100.0:
        raise SynthesisError(
            f"wealth moments push I_s outside [0, 100] (range {wealth.min():.2f}..{wealth.max():.2f})"
        )

    def difficulty_for(r: float) -> np.ndarray:
        g = r * z[:, 0] + np.sqrt(max(0.0, 1.0 - r * r)) * z[:, 1]
        if spec.difficulty_mean is not None:
            g = power_transform(g, _fit_mean_power(g, spec.difficulty_mean))
        return _minmax100(g)

    def corr_gap(r: float) -> float:
        return float(np.corrcoef(wealth, difficulty_for(r))[0, 1]) - spec.correlation

    # |target| beyond what the skewed marginal allows saturates at the comonotone draw
    if corr_gap(-1.0) >= 0:
        latent = -1.0
    elif corr_gap(1.0) <= 0:
        latent = 1.0
    else:
        latent = brentq(corr_gap, -1.0, 1.0, xtol=1e-12)
    difficulty = difficulty_for(latent)

    width = len(str(N))
    vwidth = len(str(n_villages))
    return CensusBlockFrame(
        block_ids=tuple(f"b{i + 1:0{width}d}" for i in range(N)),
        village_ids=tuple(f"v{int(v) + 1:0{vwidth}d}" for v in village),
        wealth=wealth,
        households=households,
        difficulty=difficulty,
        meta={
            "generator": GENERATOR,
            "seed": seed,
            "power": power,
            "latent_correlation": latent,
        },
    )


def equiprobable_thresholds(k: int = 3) -> np.ndarray:
    """Interior thresholds splitting the standard normal into ``k`` equiprobable categories."""
    return ndtri(np.arange(1, k) / k)


def corr_from_upper(m: int, off: Sequence[float]) -> np.ndarray:
    """Symmetric matrix with unit diagonal from the upper-triangle entries in row order."""
    R = np.eye(m)
    iu = np.triu_indices(m, 1)
    R[iu] = off
    R.T[iu] = off
    return R
