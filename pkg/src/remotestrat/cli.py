"""Command-line front end.

Every long option can also be set through an environment variable named
``REMOTESTRAT_`` + the option's destination in upper case (``--classes`` ->
``REMOTESTRAT_CLASSES``, ``--include-corner`` -> ``REMOTESTRAT_INCLUDE_CORNER``).
Flags given on the command line win over the environment.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .composite import (
    aggregate_blocks,
    attach_difficulty,
    build_index,
    derive_weights,
    orient_difficulty,
    orient_wealth,
    read_index_csv,
    read_frame_csv,
    write_frame_csv,
    write_index_csv,
    write_weights_csv,
)
from .exceptions import RemoteStratError
from .polychoric import polychoric_matrix, write_correlation_csv, write_thresholds_csv
from .reports import emit_reports, file_sha256
from .scenarios import classify_quadrants, run_grid
from .schema import (
    DEFAULT_GROUP_COLUMN,
    DEFAULT_ID_COLUMN,
    Role,
    default_schema,
    ingest_records,
    load_schema,
    save_schema,
    schema_from_dict,
    write_records,
)
from .synth import GENERATOR, CopulaSpec, FrameSpec, sample_frame, sample_ordinal

log = logging.getLogger("remotestrat")

ENV_PREFIX = "REMOTESTRAT_"
EXIT_OK, EXIT_ERROR, EXIT_INPUT = 0, 1, 2


class InputMissing(RemoteStratError):
    pass


def _grid(text: str) -> tuple[int, int]:
    try:
        w, g = text.lower().split("x")
        return int(w), int(g)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 4x4, got {text!r}") from None


def _bool(text: str) -> bool:
    return text.strip().lower() in {"1", "true", "yes", "on"}


def _apply_env(parser: argparse.ArgumentParser, environ) -> None:
    """Turn REMOTESTRAT_* variables into parser defaults."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _apply_env(sub, environ)
            continue
        if not action.option_strings or action.dest in ("help", "version"):
            continue
        raw = environ.get(ENV_PREFIX + action.dest.upper())
        if raw is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            action.default = _bool(raw)
        elif isinstance(action, argparse._StoreFalseAction):
            action.default = not _bool(raw)
        else:
            action.default = action.type(raw) if action.type else raw
        action.required = False


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="remotestrat",
        description="Composite-index weights, cross-stratification and variance/cost scenarios for remote-area surveys.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="lint a schema and optionally a microdata file against it")
    v.add_argument("--schema", required=True, help="schema JSON, or 'geographic' / 'wealth' for the bundled ones")
    v.add_argument("--data")
    v.add_argument("--id-column", default=DEFAULT_ID_COLUMN)
    v.add_argument("--group-column", default=DEFAULT_GROUP_COLUMN)

    i = sub.add_parser("index", help="polychoric weights and composite index for one schema")
    i.add_argument("--schema", required=True, help="schema JSON, or 'geographic' / 'wealth' for the bundled ones")
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--id-column", default=DEFAULT_ID_COLUMN)
    i.add_argument("--group-column", default=DEFAULT_GROUP_COLUMN,
                   help="block id for households (wealth role), province for villages")
    i.add_argument("--block-villages", help="CSV block_id,village_id (wealth role)")
    i.add_argument("--difficulty", help="village index CSV from a geographic run (wealth role)")
    i.add_argument("--rho-tol", type=float, default=1e-6)

    s = sub.add_parser("simulate", help="run the stratification scenario grid on a block frame")
    s.add_argument("--frame", help="block frame CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, help="total sample size (default 2%% of blocks)")
    s.add_argument("--classes", type=int, help="frequency classes J (default max(20, 15L))")
    s.add_argument("--grid", type=_grid, default=(4, 4))
    s.add_argument("--include-corner", action="store_true", help="also evaluate the unstratified w1g1 design")
    s.add_argument("--no-fpc", dest="fpc", action="store_false")
    s.add_argument("--min-per-stratum", type=int, default=2)
    s.add_argument("--replay", help="manifest.json of an earlier simulate run; reuses its settings")

    y = sub.add_parser("synth", help="generate synthetic ordinal data or a block frame")
    y.add_argument("--out", required=True)
    y.add_argument("--preset", choices=["papua"], help="Papua-like block frame")
    y.add_argument("--spec", help="JSON spec with kind 'frame' or 'ordinal'")
    y.add_argument("--blocks", type=int)
    y.add_argument("--seed", type=int, default=0)
    return p


def _schema(arg: str):
    if arg in (Role.GEOGRAPHIC.value, Role.WEALTH.value):
        return default_schema(arg)
    return load_schema(_need(arg, "schema file"))


def _need(path: str | None, what: str = "input") -> Path:
    if path is None:
        raise InputMissing(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        raise InputMissing(f"{what} not found: {p}")
    return p


def _out_dir(out: str, inputs: list[Path]) -> Path:
    o = Path(out).resolve()
    for p in inputs:
        if p.resolve() == o:
            raise RemoteStratError(f"output directory {out} collides with input {p}")
    if o.exists() and not o.is_dir():
        raise RemoteStratError(f"output path {out} exists and is not a directory")
    o.mkdir(parents=True, exist_ok=True)
    return o


def _check_no_overwrite(targets: list[Path], inputs: list[Path]) -> None:
    ins = {p.resolve() for p in inputs}
    for t in targets:
        if t.resolve() in ins:
            raise RemoteStratError(f"refusing to overwrite input file {t}")


def _write_manifest(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _inputs_doc(paths: dict[str, Path | None]) -> dict:
    return {k: {"name": p.name, "sha256": file_sha256(p)} for k, p in sorted(paths.items()) if p is not None}


def cmd_validate(args) -> int:
    schema = _schema(args.schema)
    print(f"schema ok: role={schema.role.value}, {len(schema.variables)} variables, "
          f"categories={list(schema.category_counts)}")
    if args.data:
        ds = ingest_records(_need(args.data, "data file"), schema, args.id_column, args.group_column)
        print(f"data ok: {len(ds)} records")
        for a, var in enumerate(schema.variables):
            counts = ds.category_counts(a)
            empty = [var.categories[b] for b in np.flatnonzero(counts == 0)]
            note = f" (empty: {', '.join(empty)})" if empty else ""
            print(f"  {var.name}: {counts.tolist()}{note}")
    return EXIT_OK


def cmd_index(args) -> int:
    schema = _schema(args.schema)
    data = _need(args.data, "data file")
    extra = {k: _need(getattr(args, k), k.replace("_", " ")) for k in ("block_villages", "difficulty")
             if getattr(args, k)}
    inputs = [data, *extra.values()]
    if args.schema not in (Role.GEOGRAPHIC.value, Role.WEALTH.value):
        inputs.append(Path(args.schema))
    out = _out_dir(args.out, inputs)

    ds = ingest_records(data, schema, args.id_column, args.group_column)
    pm, ts = polychoric_matrix(ds, tol=args.rho_tol)
    weights = derive_weights(pm, ts)
    index = build_index(ds, weights)
    if schema.role is Role.GEOGRAPHIC:
        index = orient_difficulty(index, ds)
    else:
        index = orient_wealth(index, ds)

    targets = {
        "correlation": out / "correlation.csv",
        "thresholds": out / "thresholds.csv",
        "weights": out / "weights.csv",
        "index": out / "index.csv",
        "manifest": out / "manifest.json",
    }
    frame = None
    empty_blocks: tuple[str, ...] = ()
    if schema.role is Role.WEALTH:
        if ds.group_key is None:
            raise RemoteStratError(f"wealth data needs a {args.group_column!r} column with block ids")
        block_village = {}
        if "block_villages" in extra:
            with extra["block_villages"].open(newline="", encoding="utf-8") as fh:
                block_village = {r["block_id"]: r["village_id"] for r in csv.DictReader(fh)}
        agg = aggregate_blocks(index, ds.group_key, block_village, declared_blocks=list(block_village))
        frame, empty_blocks = agg.frame, agg.empty_blocks
        if "difficulty" in extra:
            frame = attach_difficulty(frame, read_index_csv(extra["difficulty"]))
        targets["frame"] = out / "frame.csv"
    _check_no_overwrite(list(targets.values()), inputs)

    write_correlation_csv(pm, targets["correlation"])
    write_thresholds_csv(ts, targets["thresholds"])
    write_weights_csv(weights, targets["weights"])
    write_index_csv(index, targets["index"])
    if frame is not None:
        write_frame_csv(frame, targets["frame"])

    _write_manifest(targets["manifest"], {
        "tool": "remotestrat",
        "version": __version__,
        "command": "index",
        "config": {
            "schema": args.schema if args.schema in ("geographic", "wealth") else Path(args.schema).name,
            "role": schema.role.value,
            "id_column": args.id_column,
            "group_column": args.group_column,
            "rho_tol": args.rho_tol,
            "normalization_reference": "all records in the input file",
            "records_weighted": False,
        },
        "inputs": _inputs_doc({"data": data, **extra}),
        "results": {
            "records": len(ds),
            "psd_repaired": pm.psd_repaired,
            "eigenvalue": weights.eigenvalue,
            "loadings": dict(zip(weights.names, map(float, weights.loadings))),
            "eigenvector_orientation": weights.orientation.value,
            "index_flipped": index.flipped,
            "normalization_bounds": list(index.bounds),
            "normalization_degenerate": index.degenerate,
            "monotonicity_violations": list(weights.violations),
            "collapsed_categories": {t.name: list(t.collapse_map) for t in ts.entries if t.collapsed},
            "blocks": None if frame is None else len(frame),
            "empty_blocks": list(empty_blocks),
        },
        "outputs": {k: p.name for k, p in sorted(targets.items()) if k != "manifest"},
    })
    for k, p in targets.items():
        log.info("wrote %s", p)
    print(f"index: {len(ds)} records, first eigenvalue {weights.eigenvalue:.4f}, outputs in {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = {
        "n": args.n,
        "classes": args.classes,
        "grid": list(args.grid),
        "include_corner": args.include_corner,
        "fpc": args.fpc,
        "min_per_stratum": args.min_per_stratum,
    }
    frame_arg = args.frame
    if args.replay:
        doc = json.loads(_need(args.replay, "manifest").read_text(encoding="utf-8"))
        config.update(doc["config"])
        frame_arg = frame_arg or doc.get("frame_path")
    frame_path = _need(frame_arg, "frame file")
    out = _out_dir(args.out, [frame_path])
    frame = read_frame_csv(frame_path)
    grid = run_grid(
        frame,
        n=config["n"],
        J=config["classes"],
        grid=tuple(config["grid"]),
        include_corner=config["include_corner"],
        fpc=config["fpc"],
        min_per_stratum=config["min_per_stratum"],
    )
    if len(grid.successful) >= 2:
        grid = classify_quadrants(grid)
    emit_reports(grid, out, manifest_extra={
        "command": "simulate",
        "config": config,
        "frame_path": str(frame_path),
        "inputs": _inputs_doc({"frame": frame_path}),
    })
    for r in grid.failed:
        print(f"scenario {r.label} failed: {r.error}", file=sys.stderr)
    print(f"simulate: {len(grid.successful)}/{len(grid)} scenarios, reports in {out}")
    return EXIT_OK


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RemoteStratError(f"{path}: not valid JSON ({exc})") from None


def cmd_synth(args) -> int:
    spec_path = _need(args.spec, "spec file") if args.spec else None
    if spec_path is None and args.preset is None:
        raise RemoteStratError("synth needs --preset or --spec")
    doc = _load_json(spec_path) if spec_path else {"kind": "frame"}
    out = _out_dir(args.out, [spec_path] if spec_path else [])
    seed = int(doc.get("seed", args.seed))
    kind = doc.get("kind", "frame")
    manifest = {
        "tool": "remotestrat",
        "version": __version__,
        "command": "synth",
        "generator": GENERATOR,
        "seed": seed,
        "preset": args.preset,
        "inputs": _inputs_doc({"spec": spec_path}),
    }
    if kind == "frame":
        fields = {k: doc[k] for k in ("households_mean", "correlation", "wealth_mean", "wealth_sd",
                                       "wealth_skew", "difficulty_mean", "villages") if k in doc}
        blocks = args.blocks or doc.get("blocks") or 5000
        try:
            fspec = FrameSpec(n_blocks=int(blocks), **fields)
        except TypeError as exc:
            raise RemoteStratError(f"invalid frame spec: {exc}") from None
        frame = sample_frame(fspec, seed=seed)
        write_frame_csv(frame, out / "frame.csv")
        manifest["frame_spec"] = {"n_blocks": fspec.n_blocks, **{k: getattr(fspec, k) for k in (
            "households_mean", "correlation", "wealth_mean", "wealth_sd", "wealth_skew", "difficulty_mean",
            "villages")}}
        manifest["calibration"] = {k: v for k, v in frame.meta.items() if k not in ("generator", "seed")}
        print(f"synth: frame of {len(frame)} blocks in {out}")
    elif kind == "ordinal":
        schema = None
        if "schema" in doc:
            ref = doc["schema"]
            if isinstance(ref, dict):
                schema = schema_from_dict(ref)
            elif ref in ("geographic", "wealth"):
                schema = default_schema(ref)
            else:
                schema = load_schema(_need(str(spec_path.parent / ref), "schema file"))
        try:
            cspec = CopulaSpec(
                correlation=np.asarray(doc["correlation"], dtype=float),
                thresholds=tuple(np.asarray(t, dtype=float) for t in doc["thresholds"]),
                n=int(doc["n"]),
                seed=seed,
                names=tuple(schema.names) if schema else tuple(doc["names"]) if "names" in doc else None,
                n_groups=doc.get("groups"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteStratError(f"invalid ordinal spec: {exc!r}") from None
        ds = sample_ordinal(cspec, schema)
        write_records(ds, out / "records.csv", labels=True)
        save_schema(ds.schema, out / "schema.json")
        print(f"synth: {len(ds)} ordinal records in {out}")
    else:
        raise RemoteStratError(f"unknown synth kind {kind!r}")
    _write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "index": cmd_index, "simulate": cmd_simulate, "synth": cmd_synth}


def main(argv: list[str] | None = None, environ=None) -> int:
    parser = build_parser()
    _apply_env(parser, os.environ if environ is None else environ)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RemoteStratError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
