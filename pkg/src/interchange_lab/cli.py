"""Command-line entry point: ``interchange-lab``.

Exit codes: 0 success, 2 invalid configuration, 3 a statistical check failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, experiments as ex
from .coupling import concentration_experiment, default_pairs
from .interchange import PathGraphConfig, rescaled_trajectories, simulate_interchange
from .rng import SEED_SCHEME_VERSION, InvalidParameterError, StreamKey, default_seed
from .stats import Verdict
from .walks import return_scaling_exact_slope, return_scaling_fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3

EXPERIMENTS = ("tightness", "concentration", "visits", "returns-scaling", "hydrodynamic", "independence", "marginals", "excursions", "moments")

CLAIMS = {
    "tightness": "oscillation tail bound for a single trajectory",
    "concentration": "coupled walks stay close after folding",
    "visits": "visit count of a walk grows like sqrt(T)",
    "returns-scaling": "origin returns scale like 1/epsilon",
    "hydrodynamic": "exclusion density follows the reflected heat flow",
    "independence": "two trajectories of one run are asymptotically independent",
    "marginals": "pair marginals approach stationary reflected BM",
    "excursions": "adjacency excursions, the coupled second moment and independence of S1 and S3",
    "moments": "fourth-moment identity of the walk",
}

DEFAULTS = {
    "simulate": {"n": [8], "T": [1.0], "edge_rate": 0.5},
    "tightness": {"n": [32, 128], "T": [1.0], "deltas": [2.0**-k for k in range(4, 9)], "reps": 10_000},
    "concentration": {"n": [64, 256, 1024], "T": [1.0], "reps": 10_000},
    "visits": {"T": [1.0, 4.0, 16.0], "reps": 100_000},
    "returns-scaling": {"eps": [1.0, 0.5, 0.25, 0.125], "T": [1.0], "reps": 100_000},
    "hydrodynamic": {"n": [64, 256, 512], "T": [0.01, 0.1, 1.0], "reps": 200, "profile": {"type": "indicator", "support": [0.0, 0.5]}},
    "independence": {"n": [256], "grid": [0.0, 0.25, 0.5, 1.0], "reps": 10_000},
    "marginals": {"n": [64, 256, 1024], "T": [0.1], "reps": 100_000, "transport_grid": 128},
    "excursions": {"T": [1.0, 4.0, 16.0], "reps": 10_000, "gap": [1, 2]},
    "moments": {"T": [0.5, 1.0, 2.0, 4.0], "reps": 100_000},
}


class ConfigError(ValueError):
    pass


def _schema() -> dict:
    return json.loads(resources.files("interchange_lab").joinpath("manifest.schema.json").read_text())


def validate_manifest(manifest: dict) -> None:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(manifest), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid manifest:\n  " + "\n  ".join(lines))


# ---------------------------------------------------------------- argument parsing


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _pair(s: str) -> list[int]:
    a, b = s.split("-") if "-" in s[1:] else s.split(",")
    return [int(a), int(b)]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=_ints, help="system size(s), comma separated")
    p.add_argument("--T", type=_floats, help="time horizon(s), comma separated")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, help="master seed (default: $INTERCHANGE_LAB_SEED or built-in)")
    p.add_argument("--deltas", type=_floats)
    p.add_argument("--eps", type=_floats)
    p.add_argument("--pair", type=_pair, action="append", dest="pairs", help="particle pair i-j (repeatable)")
    p.add_argument("--gap", type=_ints)
    p.add_argument("--grid", type=_floats)
    p.add_argument("--profile", type=json.loads, help='JSON, e.g. {"type": "indicator", "support": [0, 0.5]}')
    p.add_argument("--particles", type=_ints)
    p.add_argument("--edge-rate", type=float, dest="edge_rate")
    p.add_argument("--transport-grid", type=int, dest="transport_grid")
    p.add_argument("--config", type=Path, help="JSON config; flags take precedence")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interchange-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="simulate the interchange process on P_n and write trajectories"))
    verify = sub.add_parser("verify", help="run one Monte Carlo check")
    vsub = verify.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        _common(vsub.add_parser(name, help=CLAIMS[name]))
    rep = sub.add_parser("report", help="aggregate verdict.json files into one summary")
    rep.add_argument("run_dirs", nargs="*", type=Path)
    rep.add_argument("--out", type=Path, default=None)
    run = sub.add_parser("run", help="re-run a manifest.json")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--workers", type=int, default=1)
    return parser


CONFIG_KEYS = ("n", "T", "reps", "deltas", "eps", "pairs", "gap", "grid", "profile", "particles", "edge_rate", "transport_grid")


def resolve_config(name: str, args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = dict(DEFAULTS[name])
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg.update(loaded.get("config", loaded))
    for k in CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------- output helpers


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_rows(path: Path, rows) -> None:
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not rows:
            return
        fields = [f.name for f in dataclasses.fields(rows[0])]
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in fields])


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_dir(root: Path, sub: str) -> Path:
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    d = root / sub / stamp
    k = 1
    while d.exists():
        d = root / sub / f"{stamp}-{k}"
        k += 1
    d.mkdir(parents=True)
    return d


# ---------------------------------------------------------------- subcommands


def _simulate(cfg: dict, key: StreamKey, out: Path, workers: int) -> tuple[list[str], list[Verdict], dict]:
    n, T = int(cfg["n"][0]), float(cfg["T"][0])
    traj = simulate_interchange(PathGraphConfig(n, float(cfg.get("edge_rate", 0.5)), T * n * n), key)
    if traj.bijection_violations():
        raise RuntimeError("swap log does not define a permutation")
    particles = cfg.get("particles") or list(range(1, min(n, 8) + 1))
    if any(p > n for p in particles):
        raise InvalidParameterError("tracked particle label exceeds n")
    paths = rescaled_trajectories(traj, T)
    files = []
    for p in particles:
        name = f"particle_{p}.csv"
        paths[p - 1].to_csv(out / name)
        files.append(name)
    counts = traj.event_counts()
    extra = {"event_counts": {"total": int(counts.sum()), "per_edge": [int(c) for c in counts]}}
    return files, [], extra


def _verify(name: str, cfg: dict, key: StreamKey, out: Path, workers: int) -> tuple[list[str], list[Verdict], dict]:
    extra_files: list[str] = []
    if name == "tightness":
        rows = []
        for n in cfg["n"]:
            rows += ex.tightness_experiment(n, cfg["T"][0], cfg["deltas"], cfg["reps"], key.child(experiment=f"tightness/n={n}"), workers=workers)
        verdicts = ex.tightness_verdicts(rows)
    elif name == "concentration":
        rows = []
        for n in cfg["n"]:
            pairs = [tuple(p) for p in cfg["pairs"]] if cfg.get("pairs") else default_pairs(n)
            rows += concentration_experiment(n, cfg["T"][0], cfg["reps"], key, pairs=pairs, workers=workers)
        verdicts = ex.concentration_verdicts(rows)
    elif name == "visits":
        rows = ex.visits_experiment(cfg["T"], cfg["reps"], key, workers=workers)
        verdicts = ex.visits_verdicts(rows)
    elif name == "returns-scaling":
        rows, slope = return_scaling_fit(cfg["eps"], cfg["T"][0], cfg["reps"], key)
        exact = return_scaling_exact_slope(cfg["eps"], cfg["T"][0])
        verdicts = [Verdict("log-log slope of returns against 1/epsilon", slope, 1.0, 0.0, 0.8 <= slope <= 1.2, f"accepted range [0.8, 1.2], exact {exact:.4f}")]
    elif name == "hydrodynamic":
        rows = ex.hydrodynamic_experiment(cfg["profile"], cfg["n"], cfg["T"], cfg["reps"], key, workers=workers)
        verdicts = ex.hydrodynamic_verdicts(rows)
    elif name == "independence":
        rows = ex.independence_experiment(cfg["n"][0], cfg["grid"], cfg["reps"], key, workers=workers)
        verdicts = ex.independence_verdicts(rows)
    elif name == "marginals":
        rows = ex.marginal_experiment(cfg["n"], cfg["T"][0], cfg["reps"], key, grid=cfg["transport_grid"], workers=workers)
        verdicts = ex.marginal_verdicts(rows)
    elif name == "excursions":
        rows = []
        for g in cfg["gap"]:
            rows += ex.excursion_experiment(cfg["T"], cfg["reps"], key, gap=g, workers=workers)
        verdicts = ex.returns_verdicts([r for r in rows if r.gap == 2] or rows) + ex.second_moment_verdicts(rows)
        cross, dep = ex.s1_s3_independence(0, int(cfg["gap"][0]), max(cfg["T"]), cfg["reps"], key.child(experiment="excursions/s1-s3"), workers=workers)
        verdicts += ex.s1_s3_verdicts(cross, dep)
        write_rows(out / "s1_s3.csv", cross)
        extra_files = ["s1_s3.csv"]
    elif name == "moments":
        rows = ex.fourth_moment_experiment(cfg["T"], cfg["reps"], key)
        verdicts = ex.fourth_moment_verdicts(rows)
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(f"unknown experiment {name}")
    fname = f"{name}.csv"
    write_rows(out / fname, rows)
    return [fname] + extra_files, verdicts, {}


def execute(subcommand: str, cfg: dict, seed: int, root: Path, workers: int = 1) -> tuple[int, Path]:
    """Validate, run and write one manifest; returns (exit code, run directory)."""
    manifest = {
        "subcommand": subcommand,
        "config": {k: v for k, v in cfg.items() if k != "workers"},
        "seed": int(seed),
        "version": __version__,
        "seed_scheme": SEED_SCHEME_VERSION,
    }
    validate_manifest(manifest)
    name = subcommand.split(" ", 1)[-1]
    out = _run_dir(root, subcommand.replace(" ", "-"))
    key = StreamKey(int(seed), experiment=name)
    if subcommand == "simulate":
        files, verdicts, extra = _simulate(cfg, key, out, workers)
    else:
        files, verdicts, extra = _verify(name, cfg, key, out, workers)
    manifest.update(extra)
    passed = all(v.passed for v in verdicts)
    if subcommand != "simulate":
        verdict = {
            "experiment": name,
            "claim": CLAIMS[name],
            "status": "PASS" if passed else "FAIL",
            "verdicts": [v.to_json() for v in verdicts],
        }
        _json_dump(out / "verdict.json", verdict)
        files.append("verdict.json")
    manifest["outputs"] = files
    _json_dump(out / "manifest.json", manifest)
    for v in verdicts:
        print(f"[{'PASS' if v.passed else 'FAIL'}] {v.test}: statistic={v.statistic:.6g} bound={v.bound:.6g} se={v.std_error:.3g}")
    print(f"wrote {out}")
    return (EXIT_OK if passed else EXIT_FAILED), out


# ---------------------------------------------------------------- report


def build_report(run_dirs) -> dict:
    found = {}
    for d in run_dirs:
        d = Path(d)
        files = [d] if d.is_file() else sorted(d.rglob("verdict.json"))
        for f in files:
            data = json.loads(Path(f).read_text())
            found.setdefault(data["experiment"], []).append((str(f), data))
    table = []
    for name in EXPERIMENTS:
        entries = found.get(name, [])
        if not entries:
            table.append({"claim": CLAIMS[name], "experiment": name, "verdict": "UNTESTED", "source": None})
            continue
        for src, data in entries:
            table.append({"claim": CLAIMS[name], "experiment": name, "verdict": data["status"], "source": src})
    tested = [r for r in table if r["verdict"] != "UNTESTED"]
    failing = [r["claim"] for r in tested if r["verdict"] == "FAIL"]
    status = "UNTESTED" if not tested else ("FAIL" if failing else "PASS")
    return {"status": status, "failing": failing, "table": table}


def report_text(rep: dict) -> str:
    width = max(len(r["claim"]) for r in rep["table"])
    lines = [f"{'claim'.ljust(width)}  {'experiment'.ljust(16)}  verdict"]
    for r in rep["table"]:
        lines.append(f"{r['claim'].ljust(width)}  {r['experiment'].ljust(16)}  {r['verdict']}")
    lines.append(f"status: {rep['status']}")
    if rep["failing"]:
        lines.append("failing: " + "; ".join(rep["failing"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- main


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            rep = build_report(args.run_dirs)
            text = report_text(rep)
            print(text, end="")
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                _json_dump(args.out / "summary.json", rep)
                (args.out / "summary.txt").write_text(text)
            return EXIT_FAILED if rep["status"] == "FAIL" else EXIT_OK
        if args.command == "run":
            try:
                manifest = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read manifest {args.config}: {exc}") from exc
            validate_manifest(manifest)
            code, _ = execute(manifest["subcommand"], manifest["config"], manifest["seed"], args.out, args.workers)
            return code
        name = "simulate" if args.command == "simulate" else args.experiment
        sub = "simulate" if args.command == "simulate" else f"verify {name}"
        cfg = resolve_config(name, args)
        seed = args.seed if args.seed is not None else default_seed()
        code, _ = execute(sub, cfg, seed, args.out, args.workers)
        return code
    except (ConfigError, InvalidParameterError, jsonschema.SchemaError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
