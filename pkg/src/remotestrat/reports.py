"""Report files for a scenario grid: variance matrix, scenario table, manifest and quadrant scatter."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from xml.sax.saxutils import escape

from . import __version__
from .exceptions import ReportError
from .scenarios import ScenarioGrid, quadrant_counts

SCENARIO_COLUMNS = ["L_w", "L_g", "effective_strata", "n", "variance", "cost", "quadrant", "allocation", "status"]


def _num(x: float) -> str:
    return f"{x:.10g}"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_variance_matrix(grid: ScenarioGrid, path: Path) -> None:
    M = grid.variance_matrix()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strata_wealth", *(f"g{g}" for g in range(1, grid.max_g + 1))])
        for i in range(grid.max_w):
            w.writerow([i + 1, *("" if v != v else _num(v) for v in M[i])])


def write_scenarios(grid: ScenarioGrid, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_COLUMNS)
        for r in grid.results:
            if r.ok:
                w.writerow([
                    r.L_w, r.L_g, r.effective_strata, r.n, _num(r.variance), _num(r.cost),
                    r.quadrant.value if r.quadrant else "", ";".join(map(str, r.allocation)), "ok",
                ])
            else:
                w.writerow([r.L_w, r.L_g, "", r.n, "", "", "", "", f"failed: {r.error}"])


def render_svg(grid: ScenarioGrid, width: int = 640, height: int = 480) -> str:
    """Scatter of cost (x) against variance (y) with median gridlines and w{L_w}g{L_g} labels."""
    pts = grid.successful
    margin_l, margin_r, margin_t, margin_b = 80, 30, 40, 60
    xs = [r.cost for r in pts]
    ys = [r.variance for r in pts]

    def span(vals):
        lo, hi = min(vals), max(vals)
        pad = (hi - lo) * 0.08 or abs(hi) * 0.05 or 1.0
        return lo - pad, hi + pad

    x0, x1 = span(xs)
    y0, y1 = span(ys)
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b

    def sx(x):
        return margin_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return margin_t + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
        "Sampling scenarios by variance and difficulty</text>",
        f'<text x="{margin_l + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">'
        "cost proxy (mean difficulty of allocated sample)</text>",
        f'<text x="18" y="{margin_t + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {margin_t + ph / 2:.1f})">variance of estimated mean</text>',
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{margin_t + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{margin_l - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    vm, cm = grid.meta.get("variance_median"), grid.meta.get("cost_median")
    if cm is not None:
        out.append(f'<line x1="{sx(cm):.1f}" y1="{margin_t}" x2="{sx(cm):.1f}" y2="{margin_t + ph}" '
                   'stroke="grey" stroke-dasharray="4 3"/>')
    if vm is not None:
        out.append(f'<line x1="{margin_l}" y1="{sy(vm):.1f}" x2="{margin_l + pw}" y2="{sy(vm):.1f}" '
                   'stroke="grey" stroke-dasharray="4 3"/>')
    for r in pts:
        out.append(f'<circle cx="{sx(r.cost):.1f}" cy="{sy(r.variance):.1f}" r="3.5" fill="steelblue"/>')
        out.append(f'<text x="{sx(r.cost) + 5:.1f}" y="{sy(r.variance) - 5:.1f}">{escape(r.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_reports(grid: ScenarioGrid, out_dir: str | Path, manifest_extra: dict | None = None) -> dict[str, Path]:
    """Write variance_matrix.csv, scenarios.csv, manifest.json and quadrants.svg into ``out_dir``."""
    if not grid.results:
        raise ReportError("scenario grid is empty; nothing to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {out}: {exc}") from None
    paths = {
        "variance_matrix": out / "variance_matrix.csv",
        "scenarios": out / "scenarios.csv",
        "manifest": out / "manifest.json",
        "quadrants": out / "quadrants.svg",
    }
    try:
        write_variance_matrix(grid, paths["variance_matrix"])
        write_scenarios(grid, paths["scenarios"])
        if grid.successful:
            paths["quadrants"].write_text(render_svg(grid), encoding="utf-8")
        else:
            del paths["quadrants"]
        manifest = {
            "tool": "remotestrat",
            "version": __version__,
            "parameters": grid.meta,
            "scenarios": len(grid.results),
            "failed": [{"scenario": r.label, "error": r.error} for r in grid.failed],
            "quadrant_counts": {q.value: c for q, c in quadrant_counts(grid).items()},
            "outputs": {k: file_sha256(p) for k, p in sorted(paths.items()) if k != "manifest"},
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write reports to {out}: {exc}") from None
    return paths
