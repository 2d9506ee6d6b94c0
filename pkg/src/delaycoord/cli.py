"""Command-line entry point: ``delaycoord <subcommand> [--config FILE] [--key VALUE ...]``.

Results go to ``$DELAYCOORD_OUT/<subcommand>/<timestamp>-<seed>/`` (default
root ``./out``) as ``record.json`` plus one CSV per table.  The exit code is
0 exactly when every check of the run passed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENT_DEFAULTS, SECTION_DEFAULTS, ConfigError, ExperimentConfig
from .runner import SUBCOMMANDS, ExperimentRecord, run

OUT_ENV = "DELAYCOORD_OUT"
log = logging.getLogger("delaycoord")


def build_id() -> str:
    """Package version, plus the git revision when run from a checkout."""
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def jsonable(obj):
    """Plain Python data; non-finite reals become the strings ``NaN``/``Infinity``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return x
    return obj


def record_json(rec: ExperimentRecord, include_timing: bool = True) -> str:
    doc = {
        "subcommand": rec.subcommand,
        "build": build_id(),
        "config": rec.config,
        "results": rec.results,
        "checks": rec.checks,
        "passed": rec.passed,
    }
    if include_timing:
        doc["timings"] = rec.timings
    return json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header, rows) -> None:
    Path(path).write_text(table_csv(header, rows))


def output_dir(subcommand: str, seed: int, root: str | os.PathLike | None = None) -> Path:
    root = Path(root or os.environ.get(OUT_ENV) or "out")
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    base = root / subcommand / f"{stamp}-{seed}"
    path, i = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{i}")
        i += 1
    path.mkdir(parents=True)
    return path


def save(rec: ExperimentRecord, path: Path) -> None:
    (path / "record.json").write_text(record_json(rec))
    for name, (header, rows) in rec.tables.items():
        write_csv(path / f"{name}.csv", header, rows)


def _add_flags(p: argparse.ArgumentParser, section: str | None) -> None:
    p.add_argument("--config", help="INI file; flags override its keys")
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./out)")
    for key in EXPERIMENT_DEFAULTS:
        p.add_argument(f"--{key}", dest=key, default=None)
    if section:
        for key in SECTION_DEFAULTS[section]:
            if key not in EXPERIMENT_DEFAULTS:
                p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delaycoord", description="Delay-coordinate embedding experiments.")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        _add_flags(sub.add_parser(name), name)
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if ns.config:
        cfg = ExperimentConfig.from_ini(Path(ns.config).read_text())
    skip = {"config", "out", "subcommand"}
    values = {k: v for k, v in vars(ns).items() if k not in skip and v is not None}
    return cfg.override(ns.subcommand, values)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    ns = parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        rec = run(cfg, ns.subcommand)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    path = output_dir(ns.subcommand, cfg.seed, ns.out)
    save(rec, path)
    for name, ok in rec.checks.items():
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    print(path)
    return 0 if rec.passed else 1


if __name__ == "__main__":
    sys.exit(main())
