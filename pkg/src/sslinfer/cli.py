"""Command-line front end.

    sslinfer estimate --labeled L.csv [--unlabeled U.csv] --method sssl --component 1 --seed 7 --out res.json
    sslinfer simulate --model 1 --n 100 --ratio 1 --p 50 --reps 2 --seed 1 --out report
    sslinfer holm --pvalues p.txt --out adjusted.json
    sslinfer replay --manifest res.json --out again.json

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Every output carries a manifest (argv, config hash, seeds, version, timings);
``replay`` reruns the recorded argv with a new output path.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import ContrastVector, load_dataset
from .errors import NumericalError, SSLInferError
from .estimators import METHODS, Pipeline, contrast
from .inference import make_interval, method_variance
from .precision import inverse_defect

log = logging.getLogger("sslinfer")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
# flags that do not change results and are left out of the config hash
_NON_CONFIG = {"out", "workers", "func", "verbose"}


class CliError(Exception):
    """Configuration problem detected by the front end (exit 2)."""


def config_hash(args: argparse.Namespace) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONFIG}
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def make_manifest(argv, args, seeds: dict, t0: float, timings: dict, **extra) -> dict:
    out = {
        "argv": list(argv),
        "command": args.command,
        "config_hash": config_hash(args),
        "seeds": seeds,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "stage_timings": {k: float(v) for k, v in sorted(timings.items())},
    }
    out.update(extra)
    return out


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_numbers(path) -> list[float]:
    vals = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            for cell in row:
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CliError(f"{path}: non-numeric value {cell!r} on line {i}") from None
    return vals


# ------------------------------------------------------------------------ estimate


def _contrast_from_args(args, p: int) -> ContrastVector:
    if args.contrast is not None:
        vals = _read_numbers(args.contrast)
        if len(vals) != p:
            raise CliError(f"contrast file has {len(vals)} entries, expected p={p}")
        return ContrastVector(np.array(vals))
    if not 1 <= args.component <= p:
        raise CliError(f"--component must lie in 1..{p}, got {args.component}")
    return ContrastVector.basis(p, args.component - 1)


def cmd_estimate(args, argv) -> int:
    t0 = time.perf_counter()
    ds = load_dataset(args.labeled, args.unlabeled, args.response)
    v = _contrast_from_args(args, ds.p)
    pipe = Pipeline(ds, args.seed)
    est = pipe.run(args.method, args.psi)
    var = method_variance(pipe, est, v)
    # without unlabeled rows psi has no effect, so the effective weight is 0
    res = make_interval(contrast(est, v), var, ds.n, args.alpha, args.method, est.psi if ds.N else 0.0)
    sigma = ds.sigma_n() if est.omega_used.source == "labeled-only" else ds.sigma_pooled()
    diagnostics = {
        "v_l1_l2_ratio": v.l1_l2_ratio(),
        "omega_inverse_defect": inverse_defect(est.omega_used, sigma),
    }
    manifest = make_manifest(argv, args, {"seed": args.seed}, t0, pipe.timings)
    payload = {
        "method": args.method,
        "psi": res.psi,
        "estimate": res.estimate,
        "std_error": res.std_error,
        "ci": [res.ci_low, res.ci_high],
        "z_stat": res.z_stat,
        "alpha": res.alpha,
        "n": ds.n,
        "N": ds.N,
        "p": ds.p,
        "diagnostics": diagnostics,
        "manifest": manifest,
    }
    if args.out:
        if args.format == "json":
            _write_json(args.out, payload)
        else:
            row = {k: payload[k] for k in ("method", "psi", "estimate", "std_error", "z_stat", "alpha", "n", "N", "p")}
            row.update(ci_low=res.ci_low, ci_high=res.ci_high, **diagnostics)
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                w.writeheader()
                w.writerow({k: repr(x) if isinstance(x, float) else x for k, x in row.items()})
            _write_json(str(args.out) + ".manifest.json", manifest)
    print(f"{args.method} estimate={res.estimate:.6g} ci=[{res.ci_low:.6g}, {res.ci_high:.6g}] z={res.z_stat:.4g}")
    return EXIT_OK


# ------------------------------------------------------------------------ simulate


def cmd_simulate(args, argv) -> int:
    from .sim import GENERATOR, SimConfig, report_json, run_simulation

    t0 = time.perf_counter()
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    targets = tuple(int(t) for t in args.targets.split(",") if t.strip()) if args.targets else ()
    cfg = SimConfig(args.model, args.n, args.ratio, args.p, args.reps, args.psi, methods, targets, (), args.seed, args.alpha)
    report = run_simulation(cfg, workers=args.workers)
    timings: dict = {}
    for rec in report.records:
        if rec["method"] == cfg.methods[0] and rec["target"] == report.rows[0]["target"]:
            for k, val in rec.get("timings", {}).items():
                timings[k] = timings.get(k, 0.0) + val
    report.manifest = make_manifest(argv, args, {"seed": args.seed}, t0, timings, generator=GENERATOR)
    if args.out:
        prefix = str(args.out)
        Path(prefix + ".csv").write_text(report.to_csv(), encoding="utf-8")
        Path(prefix + ".json").write_text(report_json(report) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(report.to_csv())
    print(f"simulated {cfg.reps} replications of model {cfg.model}; {len(report.rows)} table rows", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------- holm


def holm_adjust(pvalues) -> np.ndarray:
    from statsmodels.stats.multitest import multipletests

    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return p
    return multipletests(p, method="holm")[1]


def cmd_holm(args, argv) -> int:
    t0 = time.perf_counter()
    vals = _read_numbers(args.pvalues)
    bad = [x for x in vals if not (0.0 <= x <= 1.0) or math.isnan(x)]
    if bad:
        raise CliError(f"p-values must lie in [0, 1]; got {bad[0]!r}")
    adj = holm_adjust(vals)
    payload = {"pvalues": vals, "adjusted": [float(a) for a in adj], "manifest": make_manifest(argv, args, {}, t0, {})}
    if args.out:
        _write_json(args.out, payload)
    print(" ".join(repr(float(a)) for a in adj))
    return EXIT_OK


# -------------------------------------------------------------------------- replay


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        res.append(tok)
    return res + ["--out", out]


def cmd_replay(args, argv) -> int:
    path = Path(args.manifest)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read manifest {path}: {exc}") from None
    manifest = doc.get("manifest", doc)
    if "argv" not in manifest:
        raise CliError(f"{path} has no recorded argv")
    old = list(manifest["argv"])
    if old and old[0] == "replay":
        raise CliError("refusing to replay a replay manifest")
    new_argv = _replace_out(old, args.out) if args.out else old
    return main(new_argv)


# ---------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sslinfer", description="Semi-supervised debiased inference")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate a linear functional with a confidence interval")
    e.add_argument("--labeled", required=True, type=Path)
    e.add_argument("--unlabeled", type=Path)
    e.add_argument("--response", default="y")
    e.add_argument("--method", choices=METHODS, default="sssl")
    e.add_argument("--psi", type=float, default=1.0)
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--contrast", type=Path, help="file of p numbers")
    g.add_argument("--component", type=int, help="1-based coefficient index")
    e.add_argument("--alpha", type=float, default=0.05)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--out", type=Path)
    e.add_argument("--format", choices=("json", "csv"), default="json")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="Monte-Carlo study on the built-in models")
    s.add_argument("--model", type=int, choices=(1, 2), required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--ratio", type=float, required=True, help="N = ratio * n")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--reps", type=int, required=True)
    s.add_argument("--psi", type=float, default=1.0)
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--targets", default="", help="comma-separated 1-based indices")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.json")
    s.set_defaults(func=cmd_simulate)

    h = sub.add_parser("holm", help="Holm step-down adjustment of p-values")
    h.add_argument("--pvalues", required=True, type=Path)
    h.add_argument("--out", type=Path)
    h.set_defaults(func=cmd_holm)

    r = sub.add_parser("replay", help="rerun a command from the manifest in its output")
    r.add_argument("--manifest", required=True, type=Path)
    r.add_argument("--out")
    r.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except NumericalError as exc:
        print(f"error: numerical failure in stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CliError, SSLInferError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
