"""Command line: ``newlyap run --config cfg.toml`` and ``newlyap list``.

Configs are TOML documents with a strict schema; unknown keys are errors.
Every report embeds the effective config (defaults filled in) so that it can
be re-run exactly.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from . import experiments as X
from . import maps as M
from .dynball import Ladder
from .errors import ConfigError, NewLyapError
from .exponents import Quadrature, Schedule, default_threads

log = logging.getLogger("newlyap")

EXPERIMENTS = tuple(X.CATALOG)

_SCHEDULE_KEYS = {"n_values", "delta_values", "directions", "tail_window", "ladder"}
_LADDER_KEYS = {"top", "ratio", "count"}
_MAP_KEYS = {"name", "theta", "alpha", "beta", "K", "windings"}
_QUAD_KEYS = {"sample_count", "point_source"}
_OUTPUT_KEYS = {"path", "format"}
_TOP_KEYS = {"experiment", "seed", "threads", "verbosity", "schedule", "map", "quadrature",
             "params", "output"}
_PARAM_KEYS = {
    "example": {"tolerance"},
    "agreement": {"maps", "points", "tol_abs", "tol_rel", "zero_tol"},
    "invariance": {"points", "m_max", "tolerance", "subadditivity_slack"},
    "lambda_jump": {"n_list", "k", "distance_samples", "tolerance", "se_factor"},
    "oseledets": {"points", "n", "stable_n", "tol_unstable", "tol_generic", "tol_stable"},
}
_DEFAULT_MAP = {"example": "example", "agreement": "cat", "invariance": "cat",
                "lambda_jump": "disc_standin", "oseledets": "cat"}
_VERBOSITY = ("quiet", "info", "debug")


@dataclass
class RunConfig:
    experiment: str
    seed: int
    threads: int
    verbosity: str
    schedule: dict[str, Any]
    map: dict[str, Any]
    quadrature: dict[str, Any]
    params: dict[str, Any]
    output: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment, "seed": self.seed, "threads": self.threads,
            "verbosity": self.verbosity, "schedule": copy.deepcopy(self.schedule),
            "map": copy.deepcopy(self.map), "quadrature": copy.deepcopy(self.quadrature),
            "params": copy.deepcopy(self.params), "output": copy.deepcopy(self.output),
        }

    def build_schedule(self) -> Schedule:
        sch = dict(self.schedule)
        ladder = Ladder(**sch.pop("ladder"))
        return Schedule(ladder=ladder, **sch)

    def build_quadrature(self) -> Quadrature:
        return Quadrature(seed=self.seed, **self.quadrature)


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.as_dict())


# ---------------------------------------------------------------------------
# parsing


def _reject_unknown(section: str, got: dict, allowed: set) -> None:
    extra = sorted(set(got) - allowed)
    if extra:
        where = f"{section}." if section else ""
        raise ConfigError(f"{where}{extra[0]}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _table(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a table")
    return dict(val)


def _default_schedule() -> dict:
    s = Schedule()
    return {
        "n_values": list(s.n_values), "delta_values": list(s.delta_values),
        "directions": s.directions, "tail_window": s.tail_window,
        "ladder": {"top": s.ladder.top, "ratio": s.ladder.ratio, "count": s.ladder.count},
    }


def _validate_schedule(sch: dict) -> dict:
    _reject_unknown("schedule", sch, _SCHEDULE_KEYS)
    out = _default_schedule()
    ladder = sch.pop("ladder", {})
    if not isinstance(ladder, dict):
        raise ConfigError("schedule.ladder: expected a table")
    _reject_unknown("schedule.ladder", ladder, _LADDER_KEYS)
    out.update(sch)
    if "delta_values" in sch and not ladder.get("top"):
        # keep the ladder anchored below the smallest radius
        out["ladder"]["top"] = Ladder.for_delta(min(sch["delta_values"])).top
    out["ladder"].update(ladder)
    try:
        lad = Ladder(**out["ladder"])
        Schedule(n_values=tuple(out["n_values"]), delta_values=tuple(out["delta_values"]),
                 directions=out["directions"], tail_window=out["tail_window"], ladder=lad)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule: {exc}") from None
    out["n_values"] = [int(n) for n in out["n_values"]]
    out["delta_values"] = [float(d) for d in out["delta_values"]]
    out["ladder"] = {"top": float(lad.top), "ratio": float(lad.ratio), "count": int(lad.count)}
    return out


def _validate_map(experiment: str, mp: dict) -> dict:
    _reject_unknown("map", mp, _MAP_KEYS)
    out = {"name": _DEFAULT_MAP[experiment], "theta": 1.0, "alpha": M.GOLDEN,
           "beta": math.sqrt(2.0) - 1.0, "K": 1.5, "windings": [1, -1]}
    out.update(mp)
    known = set(M.zoo())
    if out["name"] not in known:
        raise ConfigError(f"map.name: unknown map {out['name']!r} (choose from {', '.join(sorted(known))})")
    w = out["windings"]
    if not (isinstance(w, list) and len(w) == 2 and all(isinstance(v, int) and v != 0 for v in w)):
        raise ConfigError("map.windings: expected two nonzero integers")
    for key in ("theta", "alpha", "beta", "K"):
        if not isinstance(out[key], (int, float)) or not math.isfinite(out[key]):
            raise ConfigError(f"map.{key}: expected a finite number")
        out[key] = float(out[key])
    if experiment == "lambda_jump" and out["name"] != "disc_standin":
        raise ConfigError("map.name: lambda_jump needs the disc_standin base map")
    return out


def _validate_params(experiment: str, params: dict) -> dict:
    _reject_unknown("params", params, _PARAM_KEYS[experiment])
    for key, val in params.items():
        if key == "maps":
            allowed = set(X.default_agreement_maps())
            if not isinstance(val, list) or not val or any(v not in allowed for v in val):
                raise ConfigError(f"params.maps: expected a nonempty list drawn from {sorted(allowed)}")
        elif key == "n_list":
            if not isinstance(val, list) or not val or any(not isinstance(v, int) or v < 1 for v in val):
                raise ConfigError("params.n_list: expected a list of positive integers")
        elif key in ("points", "m_max", "n", "stable_n", "distance_samples"):
            if not isinstance(val, int) or val < 1:
                raise ConfigError(f"params.{key}: expected a positive integer")
        elif not isinstance(val, (int, float)) or not val > 0:
            raise ConfigError(f"params.{key}: expected a positive number")
    return params


def parse_config(source: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML config from a file path or inline text.

    ``overrides`` (e.g. from command-line flags) are applied to the top level
    before validation.
    """
    if isinstance(source, Path) or ("=" not in str(source) and "\n" not in str(source)):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from None
    else:
        text = str(source)
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key == "output":
            raw.setdefault("output", {}).update({k: v for k, v in val.items() if v is not None})
        else:
            raw[key] = val

    _reject_unknown("", raw, _TOP_KEYS)
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: expected one of {', '.join(EXPERIMENTS)}, got {experiment!r}")
    if "seed" not in raw:
        raise ConfigError("seed: required (every run is seeded)")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    threads = raw.get("threads", default_threads())
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads: expected a positive integer")
    verbosity = raw.get("verbosity", "info")
    if verbosity not in _VERBOSITY:
        raise ConfigError(f"verbosity: expected one of {', '.join(_VERBOSITY)}")

    quad = _table(raw, "quadrature")
    _reject_unknown("quadrature", quad, _QUAD_KEYS)
    quad = {"sample_count": 400, "point_source": "uniform", **quad}
    try:
        Quadrature(seed=seed, **quad)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quadrature: {exc}") from None

    output = _table(raw, "output")
    _reject_unknown("output", output, _OUTPUT_KEYS)
    output = {"path": f"{experiment}_report.json", "format": "json", **output}
    if output["format"] not in ("json", "csv"):
        raise ConfigError("output.format: expected 'json' or 'csv'")

    return RunConfig(
        experiment=experiment,
        seed=seed,
        threads=threads,
        verbosity=verbosity,
        schedule=_validate_schedule(_table(raw, "schedule")),
        map=_validate_map(experiment, _table(raw, "map")),
        quadrature=quad,
        params=_validate_params(experiment, _table(raw, "params")),
        output=output,
    )


# ---------------------------------------------------------------------------
# running


def _selected_map(cfg: RunConfig) -> M.MapObject:
    mp = cfg.map
    return M.lookup(mp["name"], theta=mp["theta"], alpha=mp["alpha"], beta=mp["beta"],
                    k_standard=mp["K"], windings=tuple(mp["windings"]))


def execute(cfg: RunConfig) -> X.ExperimentReport:
    s = cfg.build_schedule()
    p = dict(cfg.params)
    if cfg.experiment == "example":
        return X.run_example_experiment(s, seed=cfg.seed, **p)
    if cfg.experiment == "agreement":
        catalogue = X.default_agreement_maps()
        names = p.pop("maps", list(catalogue))
        return X.run_agreement_experiment({n: catalogue[n] for n in names}, s=s, seed=cfg.seed,
                                          threads=cfg.threads, **p)
    if cfg.experiment == "invariance":
        return X.run_invariance_experiment(_selected_map(cfg), s=s, seed=cfg.seed,
                                           threads=cfg.threads, **p)
    if cfg.experiment == "lambda_jump":
        return X.run_lambda_jump_experiment(base=_selected_map(cfg), s=s,
                                            quadrature=cfg.build_quadrature(), seed=cfg.seed,
                                            threads=cfg.threads, **p)
    return X.run_oseledets_experiment(_selected_map(cfg), seed=cfg.seed, s=s, **p)


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def report_document(cfg: RunConfig, rep: X.ExperimentReport) -> dict:
    return _jsonable({
        "config": cfg.as_dict(),
        "checks": [c.as_row() for c in rep.checks],
        "artifacts": rep.artifacts,
        "timing": {"wall_time_s": rep.wall_time, "passed": rep.passed},
    })


def _csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


GRID_COLUMNS = ["n", "delta", "sup_log_delta", "candidates", "s_n_over_n"]
CHECK_COLUMNS = ["description", "measured", "expected", "tolerance", "passed", "source"]


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` so that the file appears complete or not at all."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg: RunConfig, rep: X.ExperimentReport) -> list[Path]:
    """Write the report and any grid tables; returns the written paths."""
    out = Path(cfg.output["path"])
    doc = report_document(cfg, rep)
    files: list[tuple[Path, str]] = []
    if cfg.output["format"] == "json":
        files.append((out, json.dumps(doc, indent=2, sort_keys=True) + "\n"))
    else:
        files.append((out, _csv_text(doc["checks"], CHECK_COLUMNS)))
    for name, rows in sorted(rep.artifacts.items()):
        if name.startswith("grid"):
            files.append((out.with_name(f"{out.stem}.{name}.csv"), _csv_text(_jsonable(rows), GRID_COLUMNS)))
    if not out.parent.is_dir():
        raise ConfigError(f"output.path: directory {out.parent} does not exist")
    for path, text in files:
        atomic_write(path, text)
    return [p for p, _ in files]


def run(cfg: RunConfig) -> int:
    """Run one experiment; exit status 0 on pass, 1 on failed checks, 2 on errors."""
    logging.basicConfig(level={"quiet": logging.WARNING, "info": logging.INFO,
                               "debug": logging.DEBUG}[cfg.verbosity],
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = Path(cfg.output["path"])
    if not out.parent.is_dir():
        log.error("output directory %s does not exist", out.parent)
        return 2
    try:
        rep = execute(cfg)
        paths = emit(cfg, rep)
    except (NewLyapError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    failed = [c for c in rep.checks if not c.passed]
    for c in failed:
        log.warning("FAILED %s: measured %s expected %s tol %s", c.description, c.measured,
                    c.expected, c.tolerance)
    log.info("%s: %d/%d checks passed in %.1fs -> %s", rep.name, len(rep.checks) - len(failed),
             len(rep.checks), rep.wall_time, ", ".join(map(str, paths)))
    return 0 if not failed else 1


def list_experiments() -> str:
    lines = []
    for name, (desc, claim) in X.CATALOG.items():
        lines.append(f"{name:12s} {desc}\n{'':12s} reproduces: {claim}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="newlyap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a TOML config")
    r.add_argument("--config", required=True, help="path to the TOML config")
    r.add_argument("--out", help="report path (overrides output.path)")
    r.add_argument("--format", choices=("json", "csv"), help="report format (overrides output.format)")
    r.add_argument("--seed", type=int, help="seed (overrides the config)")
    r.add_argument("--threads", type=int, help="worker threads (default: $NEWLYAP_THREADS or 1)")
    sub.add_parser("list", help="list available experiments")
    args = parser.parse_args(argv)

    if args.command == "list":
        print(list_experiments())
        return 0
    try:
        cfg = parse_config(Path(args.config), overrides={
            "seed": args.seed, "threads": args.threads,
            "output": {"path": args.out, "format": args.format},
        })
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
