import numpy as np
import pytest

from remotestrat.schema import OrdinalDataset, Role, Schema, VariableSpec, default_schema

# literal weights of the published geographic table (score1..scoreB per variable)
PUBLISHED_WEIGHTS = [
    [-0.756, -0.385, -0.215, 0.142],
    [-0.515, -0.231, 0.133],
    [-0.707, -0.369, 0.131],
    [-0.953, -0.613, -0.328, 0.217],
    [-1.069, -0.657, 0.121],
    [-0.395, -0.002, 0.392],
    [-0.803, -0.545, -0.455, 0.160],
]


@pytest.fixture
def geo_schema():
    return default_schema(Role.GEOGRAPHIC)


@pytest.fixture
def small_schema():
    return Schema(
        (
            VariableSpec("a", ("lo", "mid", "hi")),
            VariableSpec("b", ("no", "yes")),
        ),
        Role.WEALTH,
    )


def make_dataset(schema, codes, groups=None):
    codes = np.asarray(codes, dtype=int).reshape(-1, len(schema.variables))
    return OrdinalDataset(
        schema=schema,
        unit_ids=tuple(f"u{i}" for i in range(len(codes))),
        codes=codes,
        group_key=None if groups is None else tuple(groups),
    )


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, outcome, detail in sorted(lines, key=lambda x: int(x[0].split()[0][2:])):
            terminalreporter.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {crit}  {detail}")
