"""Command-line front end.

Subcommands: ``generate``, ``fit``, ``stats``, ``phase`` and ``demo-needle``.
File formats are described in ``docs/formats.md``. Exit status is 0 on
success, 2 on bad input and 3 when the solver hits its iteration cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .errors import ConvergenceError, InvalidInputError, ReaperError
from .experiments import PhaseGridSpec, run_phase_grid, run_trials
from .geometry import Subspace
from .haystack import HaystackParams, sample_haystack, sample_syringe, validate_in_out
from .pipeline import PipelineConfig, fit
from .recovery import GUARANTEES, InOutDataset, check_deterministic, haystack_guarantee

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INTERRUPTED = 0, 2, 3, 130

log = logging.getLogger("reaper")


# ---- file helpers -----------------------------------------------------------


def write_dataset(path, X):
    """One point per row, 17 significant digits, no header."""
    np.savetxt(path, np.asarray(X).T, fmt="%.17g", delimiter=",")


def read_dataset(path):
    """Inverse of :func:`write_dataset`; returns a ``(D, N)`` array."""
    try:
        A = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read dataset {path}: {exc}") from None
    if A.size == 0:
        raise InvalidInputError(f"dataset {path} is empty")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"dataset {path} has non-finite entries")
    return A.T.copy()


def truth_path_for(path):
    root, ext = os.path.splitext(path)
    return (root if ext.lower() == ".csv" else path) + ".truth.json"


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read JSON {path}: {exc}") from None


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---- subcommands ------------------------------------------------------------


def _haystack_params(args, extra):
    p = {"D": args.D, "d": args.d, "N_in": args.n_in, "N_out": args.n_out,
         "sigma_in": args.sigma_in, "sigma_out": args.sigma_out, "seed": args.seed}
    p.update({k: v for k, v in extra.items() if k in p})
    return HaystackParams(**p)


def cmd_generate(args):
    if args.output is None:
        raise InvalidInputError("generate needs --output")
    extra = _read_json(args.params) if args.params else {}
    if not isinstance(extra, dict):
        raise InvalidInputError("--params must hold a JSON object")
    if args.model == "haystack":
        params = _haystack_params(args, extra)
        ds = sample_haystack(params)
        X, basis, labels = ds.data, ds.subspace.basis, ds.labels
        meta = {"params": params.to_dict(), "resampled_outliers": ds.resampled_outliers}
        seed = params.seed
    else:
        p = {"D": args.D, "N_in": args.n_in, "N_out": args.n_out, "noise_scale": args.noise_scale, "seed": args.seed}
        p.update({k: v for k, v in extra.items() if k in p})
        X, L = sample_syringe(p["D"], p["N_in"], p["N_out"], p["noise_scale"], p["seed"])
        basis = L.basis
        labels = np.r_[np.ones(p["N_in"], dtype=int), np.zeros(p["N_out"], dtype=int)]
        meta = {"params": p}
        seed = p["seed"]
    write_dataset(args.output, X)
    truth = {"model": args.model, "seed": seed, "basis": basis.T.tolist(), "labels": labels.tolist(), **meta}
    _write_json(truth_path_for(args.output), truth)
    print(f"wrote {X.shape[1]} points in R^{X.shape[0]} to {args.output}")
    return EXIT_OK


def cmd_fit(args):
    X = read_dataset(args.dataset)
    cfg = _read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise InvalidInputError("config must be a JSON object")
    if args.d is not None:
        cfg["d"] = args.d
    for key in ("center", "spherize", "rounding"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    config = PipelineConfig.from_dict(cfg)
    result = fit(X, config)
    out = result.to_dict()
    out["config"] = cfg
    _write_json(args.output, out)
    if not result.converged:
        log.error("IRLS did not converge in %d iterations", result.trace.iterations)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _dataset_from_truth(X, truth):
    labels = truth.get("labels")
    basis = truth.get("basis")
    if labels is None or basis is None:
        raise InvalidInputError("truth file needs 'labels' and 'basis'")
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (X.shape[1],):
        raise InvalidInputError(f"{labels.size} labels for {X.shape[1]} points")
    L = Subspace(np.asarray(basis, dtype=float).T)
    if L.dim_ambient != X.shape[0]:
        raise InvalidInputError("truth basis and dataset disagree on the ambient dimension")
    return InOutDataset(X[:, labels == 1], X[:, labels == 0], L)


def cmd_stats(args):
    X = read_dataset(args.dataset)
    truth = _read_json(args.truth or truth_path_for(args.dataset))
    ds = _dataset_from_truth(X, truth)
    report = check_deterministic(ds, seed=args.seed)
    out = {"report": report.to_dict(), "in_out_valid": validate_in_out(ds), "d": ds.d, "D": ds.D,
           "n_in": ds.n_in, "n_out": ds.n_out}
    if truth.get("model") == "haystack" and "params" in truth:
        params = HaystackParams(**truth["params"])
        verdicts = {}
        for which in GUARANTEES:
            try:
                holds, bound = haystack_guarantee(params, args.c, which)
                verdicts[which] = {"holds": holds, "failure_probability_bound": bound}
            except InvalidInputError as exc:
                verdicts[which] = {"holds": None, "failure_probability_bound": None, "error": str(exc)}
        out["haystack_guarantees"] = {"c": args.c, "verdicts": verdicts}
    _write_json(args.output, out)
    return EXIT_OK


def cmd_phase(args):
    cfg = _read_json(args.spec)
    if isinstance(cfg, dict) and args.seed_given:
        cfg = {**cfg, "seed": args.seed}
    spec = PhaseGridSpec.from_dict(cfg)
    csv_path = args.output or "phase.csv"
    root, ext = os.path.splitext(csv_path)
    summary_path = (root if ext.lower() == ".csv" else csv_path) + ".summary.json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho_in", "rho_out", "successes", "trials"])
        fh.flush()

        def on_cell(cell):
            writer.writerow([repr(cell.rho_in), repr(cell.rho_out), cell.successes, cell.trials])
            fh.flush()

        result = run_phase_grid(spec, workers=args.threads, on_cell=on_cell)
    _write_json(summary_path, result.summary())
    trend = result.trend()
    if trend["inverted_slope"] is not None:
        print(f"trend: rho_in = {trend['inverted_slope']:.3f} rho_out + {trend['inverted_intercept']:.3f}")
    if not result.complete:
        log.error("interrupted; partial grid written to %s", csv_path)
        return EXIT_INTERRUPTED
    return EXIT_OK


def cmd_demo_needle(args):
    needle = run_trials("needle", args.trials, seed=args.seed, workers=args.threads, n_in=args.n_in)
    syringe = run_trials("syringe", args.syringe_trials, seed=args.seed, workers=args.threads)
    wins = sum(r["success"] for r in needle)
    if needle:
        print(f"needle: {wins}/{len(needle)} exact recoveries, "
              f"mean angle {np.mean([r['angle_deg'] for r in needle]):.3g} deg")
    if syringe:
        print(f"syringe: mean angle to oracle component "
              f"{np.mean([r['angle_deg'] for r in syringe]):.3f} deg, "
              f"to generating direction {np.mean([r['angle_truth_deg'] for r in syringe]):.3f} deg")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["experiment", "trial", "seed", "angle_deg", "angle_truth_deg", "error", "success"])
            for t, r in enumerate(needle):
                w.writerow(["needle", t, r["seed"], repr(r["angle_deg"]), repr(r["angle_deg"]),
                            repr(r["error"]), int(r["success"])])
            for t, r in enumerate(syringe):
                w.writerow(["syringe", t, r["seed"], repr(r["angle_deg"]), repr(r["angle_truth_deg"]), "", ""])
    if not all(r["converged"] for r in needle + syringe):
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---- argument parsing -------------------------------------------------------


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="master RNG seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trial loops")
    common.add_argument("--output", "-o", default=None, help="output file")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="reaper", description="Robust subspace recovery with REAPER / S-REAPER.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample a synthetic dataset")
    g.add_argument("model", choices=("haystack", "syringe"))
    g.add_argument("--D", type=int, default=100, help="ambient dimension")
    g.add_argument("--d", type=int, default=1, help="subspace dimension (haystack)")
    g.add_argument("--n-in", type=int, default=None, help="inlier count (haystack 13, syringe 10)")
    g.add_argument("--n-out", type=int, default=200)
    g.add_argument("--sigma-in", type=float, default=1.0)
    g.add_argument("--sigma-out", type=float, default=1.0)
    g.add_argument("--noise-scale", type=float, default=0.25, help="syringe inlier noise scale")
    g.add_argument("--params", help="JSON object overriding the flags")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", parents=[common], help="fit a robust linear model to a CSV dataset")
    f.add_argument("dataset")
    f.add_argument("--config", help="JSON pipeline config")
    f.add_argument("--d", type=float, default=None, help="model dimension (overrides config)")
    f.add_argument("--center", type=_bool, default=None)
    f.add_argument("--spherize", type=_bool, default=None)
    f.add_argument("--rounding", choices=("dominant", "bisect_trace"), default=None)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("stats", parents=[common], help="recovery statistics against a truth sidecar")
    s.add_argument("dataset")
    s.add_argument("--truth", help="truth JSON (default: <dataset>.truth.json)")
    s.add_argument("--c", type=float, default=3.0, help="deviation parameter of the Haystack guarantees")
    s.set_defaults(func=cmd_stats)

    p = sub.add_parser("phase", parents=[common], help="run a phase-transition grid")
    p.add_argument("spec", help="JSON phase-grid spec")
    p.set_defaults(func=cmd_phase)

    n = sub.add_parser("demo-needle", parents=[common], help="needle and syringe demonstrations")
    n.add_argument("--trials", type=int, default=25, help="needle trials")
    n.add_argument("--syringe-trials", type=int, default=10)
    n.add_argument("--n-in", type=int, default=13, help="needle inliers")
    n.set_defaults(func=cmd_demo_needle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if getattr(args, "n_in", 0) is None:
        args.n_in = 13 if args.model == "haystack" else 10
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_NONCONVERGED
    except (ReaperError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
