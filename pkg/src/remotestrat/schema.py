"""Ordinal variable schemas and microdata ingestion.

Category codes are 1-based everywhere: code ``b`` of a variable with ``B``
categories refers to ``categories[b - 1]``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import IngestError, SchemaError

MIN_CATEGORIES = 2
MAX_CATEGORIES = 9

DEFAULT_ID_COLUMN = "unit_id"
DEFAULT_GROUP_COLUMN = "group_id"


class Direction(str, Enum):
    # hard_to_easy: category 1 is the most difficult / least wealthy end
    HARD_TO_EASY = "hard_to_easy"
    EASY_TO_HARD = "easy_to_hard"


class Role(str, Enum):
    GEOGRAPHIC = "geographic"
    WEALTH = "wealth"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    categories: tuple[str, ...]
    direction: Direction = Direction.HARD_TO_EASY

    def __post_init__(self):
        if not self.name:
            raise SchemaError("variable name must be non-empty")
        B = len(self.categories)
        if B < MIN_CATEGORIES:
            raise SchemaError(f"variable {self.name!r} has {B} categories; at least {MIN_CATEGORIES} required")
        if B > MAX_CATEGORIES:
            raise SchemaError(f"variable {self.name!r} has {B} categories; at most {MAX_CATEGORIES} allowed")
        if len(set(self.categories)) != B:
            raise SchemaError(f"variable {self.name!r} has duplicate category labels")

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def code_of(self, label: str) -> int | None:
        """Map a raw label (or its 1..B integer code) to a code, ``None`` if unmappable."""
        label = label.strip()
        try:
            return self.categories.index(label) + 1
        except ValueError:
            pass
        try:
            code = int(label)
        except ValueError:
            return None
        return code if 1 <= code <= self.n_categories else None

    def difficulty_score(self, codes: np.ndarray) -> np.ndarray:
        """Reversed-code score: larger means harder / less wealthy."""
        if self.direction is Direction.HARD_TO_EASY:
            return self.n_categories - codes
        return codes - 1


@dataclass(frozen=True)
class Schema:
    variables: tuple[VariableSpec, ...]
    role: Role

    def __post_init__(self):
        if not self.variables:
            raise SchemaError("schema declares no variables")
        names = [v.name for v in self.variables]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate variable names: {', '.join(dupes)}")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def category_counts(self) -> tuple[int, ...]:
        return tuple(v.n_categories for v in self.variables)

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "variables": [
                {"name": v.name, "categories": list(v.categories), "direction": v.direction.value}
                for v in self.variables
            ],
        }


def schema_from_dict(doc: dict) -> Schema:
    if not isinstance(doc, dict):
        raise SchemaError("schema document must be a JSON object")
    try:
        role = Role(doc["role"])
    except KeyError:
        raise SchemaError("schema document lacks 'role'") from None
    except ValueError:
        raise SchemaError(f"unknown role {doc['role']!r}") from None
    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, list):
        raise SchemaError("schema document lacks a 'variables' list")
    variables = []
    for i, v in enumerate(raw_vars):
        try:
            name = v["name"]
            cats = tuple(str(c) for c in v["categories"])
        except (KeyError, TypeError):
            raise SchemaError(f"variable entry {i} must carry 'name' and 'categories'") from None
        try:
            direction = Direction(v.get("direction", Direction.HARD_TO_EASY.value))
        except ValueError:
            raise SchemaError(f"variable {name!r}: unknown direction {v.get('direction')!r}") from None
        variables.append(VariableSpec(str(name), cats, direction))
    return Schema(tuple(variables), role)


def load_schema(path: str | Path) -> Schema:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(f"schema file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return schema_from_dict(doc)


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def default_schema(role: Role | str) -> Schema:
    """Bundled schema: geographic scoring of village variables, or an illustrative wealth schema."""
    role = Role(role)
    text = resources.files("remotestrat.schemas").joinpath(f"{role.value}.json").read_text(encoding="utf-8")
    return schema_from_dict(json.loads(text))


@dataclass(frozen=True)
class OrdinalDataset:
    """Records coded 1..B per variable; ``codes`` has shape (records, variables)."""

    schema: Schema
    unit_ids: tuple[str, ...]
    codes: np.ndarray
    group_key: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1, len(self.schema.variables))
        if codes.shape[0] != len(self.unit_ids):
            raise IngestError("codes and unit_ids disagree in length")
        if len(set(self.unit_ids)) != len(self.unit_ids):
            raise IngestError("unit ids are not unique")
        B = np.array(self.schema.category_counts)
        if codes.size and ((codes < 1).any() or (codes > B).any()):
            raise IngestError("codes outside 1..B")
        if self.group_key is not None and len(self.group_key) != len(self.unit_ids):
            raise IngestError("group_key and unit_ids disagree in length")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return len(self.unit_ids)

    @property
    def n_variables(self) -> int:
        return len(self.schema.variables)

    def column(self, variable: int | str) -> np.ndarray:
        if isinstance(variable, str):
            variable = self.schema.names.index(variable)
        return self.codes[:, variable]

    def category_counts(self, variable: int) -> np.ndarray:
        B = self.schema.variables[variable].n_categories
        return np.bincount(self.codes[:, variable] - 1, minlength=B)


def one_hot(dataset: OrdinalDataset, unit: int) -> np.ndarray:
    """Dummy expansion of one record: one block of length B_a per variable, a single 1 per block."""
    if not 0 <= unit < len(dataset):
        raise IndexError(f"unit {unit} out of range for {len(dataset)} records")
    counts = dataset.schema.category_counts
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = np.zeros(sum(counts), dtype=np.int64)
    out[offsets + dataset.codes[unit] - 1] = 1
    return out


def ingest_records(
    path: str | Path,
    schema: Schema,
    id_column: str = DEFAULT_ID_COLUMN,
    group_column: str | None = DEFAULT_GROUP_COLUMN,
) -> OrdinalDataset:
    """Read a UTF-8 CSV of labels or integer codes into an :class:`OrdinalDataset`.

    The group column is optional: if ``group_column`` is absent from the
    header the dataset carries no grouping. Any unmappable label aborts the
    load with the offending row number (1-based, header is row 1) and variable.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise IngestError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row expected") from None
        missing = [c for c in [id_column, *schema.names] if c not in header]
        if missing:
            raise IngestError(f"{path}: missing column(s): {', '.join(missing)}")
        id_idx = header.index(id_column)
        grp_idx = header.index(group_column) if group_column and group_column in header else None
        var_idx = [header.index(n) for n in schema.names]

        ids: list[str] = []
        groups: list[str] = []
        rows: list[list[int]] = []
        seen: set[str] = set()
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise IngestError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
            uid = row[id_idx].strip()
            if uid in seen:
                raise IngestError(f"{path}: row {rowno}: duplicate unit id {uid!r}")
            seen.add(uid)
            coded = []
            for var, j in zip(schema.variables, var_idx):
                code = var.code_of(row[j])
                if code is None:
                    raise IngestError(
                        f"{path}: row {rowno}: unknown category {row[j]!r} for variable {var.name!r}"
                    )
                coded.append(code)
            ids.append(uid)
            rows.append(coded)
            if grp_idx is not None:
                groups.append(row[grp_idx].strip())

    codes = np.array(rows, dtype=np.int64).reshape(len(rows), len(schema.variables))
    return OrdinalDataset(
        schema=schema,
        unit_ids=tuple(ids),
        codes=codes,
        group_key=tuple(groups) if grp_idx is not None else None,
        meta={"source": str(path)},
    )


def write_records(
    dataset: OrdinalDataset,
    path: str | Path,
    labels: bool = True,
    id_column: str = DEFAULT_ID_COLUMN,
    group_column: str = DEFAULT_GROUP_COLUMN,
) -> None:
    """Inverse of :func:`ingest_records`."""
    header = [id_column]
    if dataset.group_key is not None:
        header.append(group_column)
    header += dataset.schema.names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, uid in enumerate(dataset.unit_ids):
            row = [uid]
            if dataset.group_key is not None:
                row.append(dataset.group_key[i])
            for var, c in zip(dataset.schema.variables, dataset.codes[i]):
                row.append(var.categories[c - 1] if labels else str(int(c)))
            w.writerow(row)


def subset(dataset: OrdinalDataset, mask: Sequence[bool] | np.ndarray) -> OrdinalDataset:
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    return OrdinalDataset(
        schema=dataset.schema,
        unit_ids=tuple(dataset.unit_ids[i] for i in idx),
        codes=dataset.codes[idx],
        group_key=None if dataset.group_key is None else tuple(dataset.group_key[i] for i in idx),
        meta=dict(dataset.meta),
    )
