"""Monte Carlo harnesses: phase-transition grids and needle/syringe trials.

Every trial derives its own seed from the experiment seed and a trial key, so
aggregates do not depend on worker count or completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import dominant_subspace, pca_fit, subspace_angle
from .haystack import HaystackParams, derive_seed, sample_haystack, sample_syringe
from .solver import IrlsConfig, s_reaper_solve

__all__ = [
    "PhaseGridSpec",
    "PhaseCell",
    "PhaseGridResult",
    "run_phase_grid",
    "extract_thresholds",
    "fit_trend",
    "recovery_error",
    "needle_trial",
    "syringe_trial",
    "run_trials",
]

# Stream tags for derive_seed, kept distinct per experiment family.
_PHASE, _NEEDLE, _SYRINGE = 11, 12, 13


def recovery_error(P, L):
    """Spectral-norm distance between a solution and the true projector."""
    M = P.matrix if hasattr(P, "matrix") else np.asarray(P)
    return float(np.linalg.norm(M - L.projector, 2))


@dataclass(frozen=True)
class PhaseGridSpec:
    D: int
    d: int
    rho_in_values: tuple
    rho_out_values: tuple
    trials: int = 25
    success_threshold: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rho_in_values", tuple(float(v) for v in self.rho_in_values))
        object.__setattr__(self, "rho_out_values", tuple(float(v) for v in self.rho_out_values))
        if int(self.D) != self.D or int(self.d) != self.d or not 1 <= self.d < self.D:
            raise InvalidInputError(f"need integers 1 <= d < D, got d={self.d}, D={self.D}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidInputError("trials must be a positive integer")
        if not self.success_threshold > 0:
            raise InvalidInputError("success_threshold must be positive")
        if not self.rho_in_values or not self.rho_out_values:
            raise InvalidInputError("both ratio grids must be nonempty")
        if min(self.rho_in_values) < 0 or min(self.rho_out_values) < 0:
            raise InvalidInputError("sampling ratios must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, cfg):
        if not isinstance(cfg, dict):
            raise InvalidInputError("phase spec must be a JSON object")
        known = {"D", "d", "rho_in_values", "rho_out_values", "trials", "success_threshold", "seed"}
        missing = {"D", "d", "rho_in_values", "rho_out_values"} - set(cfg)
        if missing or set(cfg) - known:
            raise InvalidInputError(f"phase spec keys: missing {sorted(missing)}, unknown {sorted(set(cfg) - known)}")
        try:
            return cls(**cfg)
        except TypeError as exc:
            raise InvalidInputError(str(exc)) from None

    def counts(self, rho_in, rho_out):
        return round(rho_in * self.d), round(rho_out * self.D)

    def to_dict(self):
        return {
            "D": self.D,
            "d": self.d,
            "rho_in_values": list(self.rho_in_values),
            "rho_out_values": list(self.rho_out_values),
            "trials": self.trials,
            "success_threshold": self.success_threshold,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PhaseCell:
    rho_in: float
    rho_out: float
    successes: int
    trials: int

    @property
    def probability(self):
        return self.successes / self.trials


@dataclass
class PhaseGridResult:
    spec: PhaseGridSpec
    cells: list = field(default_factory=list)
    complete: bool = True

    def probability(self, rho_in, rho_out):
        for c in self.cells:
            if c.rho_in == rho_in and c.rho_out == rho_out:
                return c.probability
        raise KeyError((rho_in, rho_out))

    def thresholds(self):
        return extract_thresholds(self.cells)

    def trend(self):
        return fit_trend(self.thresholds(), min(self.spec.rho_out_values))

    def summary(self):
        th = self.thresholds()
        return {
            "spec": self.spec.to_dict(),
            "complete": self.complete,
            "thresholds": [{"rho_in": r, "rho_out": t} for r, t in sorted(th.items())],
            "trend": self.trend(),
        }


def _phase_trial(args):
    D, d, n_in, n_out, seed, tol = args
    ds = sample_haystack(HaystackParams(D, d, n_in, n_out, seed=seed))
    P, trace = s_reaper_solve(ds.data, IrlsConfig(d))
    return recovery_error(P, ds.subspace) < tol


def _cell_jobs(spec, rho_in, rho_out):
    n_in, n_out = spec.counts(rho_in, rho_out)
    # Keyed by the point counts so a cell's trials survive re-gridding.
    return [
        (spec.D, spec.d, n_in, n_out, derive_seed(spec.seed, _PHASE, n_in, n_out, t), spec.success_threshold)
        for t in range(spec.trials)
    ]


def run_phase_grid(spec, workers=1, on_cell=None):
    """Run every (rho_in, rho_out) cell of ``spec``.

    ``on_cell(cell)`` is called as each cell finishes (cells run row by row,
    outlier ratio ascending). A ``KeyboardInterrupt`` stops the run and returns
    the finished cells with ``complete=False``.
    """
    result = PhaseGridResult(spec)
    pool = ProcessPoolExecutor(workers) if workers and workers > 1 else None
    try:
        for rho_in in spec.rho_in_values:
            for rho_out in spec.rho_out_values:
                jobs = _cell_jobs(spec, rho_in, rho_out)
                if jobs[0][2] == 0:
                    wins = 0
                else:
                    outcomes = pool.map(_phase_trial, jobs) if pool else map(_phase_trial, jobs)
                    wins = int(sum(outcomes))
                cell = PhaseCell(rho_in, rho_out, wins, spec.trials)
                result.cells.append(cell)
                if on_cell is not None:
                    on_cell(cell)
    except KeyboardInterrupt:
        result.complete = False
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return result


def extract_thresholds(cells):
    """Per inlier ratio, the smallest outlier ratio with success probability below 0.5.

    Rows where every cell succeeds at least half the time map to ``None``.
    """
    rows = {}
    for c in cells:
        rows.setdefault(c.rho_in, []).append(c)
    out = {}
    for rho_in, row in rows.items():
        out[rho_in] = None
        for c in sorted(row, key=lambda c: c.rho_out):
            if c.probability < 0.5:
                out[rho_in] = c.rho_out
                break
    return out


def fit_trend(thresholds, rho_out_floor=None):
    """Least-squares line ``rho_out = a rho_in + b`` through the thresholds.

    Rows without a threshold, or whose threshold is the first grid value
    ``rho_out_floor`` (the boundary lies somewhere below the grid), are left
    out. The inverted form ``rho_in = rho_out / a - b / a`` is also returned.
    """
    pts = [
        (r, t)
        for r, t in sorted(thresholds.items())
        if t is not None and (rho_out_floor is None or t > rho_out_floor)
    ]
    res = {"points": len(pts), "slope": None, "intercept": None, "inverted_slope": None, "inverted_intercept": None}
    if len(pts) < 2 or len({r for r, _ in pts}) < 2:
        return res
    x, y = np.array(pts).T
    a, b = np.polyfit(x, y, 1)
    res.update(slope=float(a), intercept=float(b))
    if a != 0:
        res.update(inverted_slope=float(1 / a), inverted_intercept=float(-b / a))
    return res


def needle_trial(seed, D=100, n_in=13, n_out=200, threshold=1e-5):
    """One needle-in-a-haystack run with S-REAPER; returns a result dict."""
    ds = sample_haystack(HaystackParams(D, 1, n_in, n_out, seed=seed))
    P, trace = s_reaper_solve(ds.data, IrlsConfig(1))
    err = recovery_error(P, ds.subspace)
    angle = subspace_angle(dominant_subspace(P, 1), ds.subspace)
    return {
        "seed": seed,
        "error": err,
        "success": err < threshold,
        "angle_deg": math.degrees(angle),
        "iterations": trace.iterations,
        "converged": trace.converged,
    }


def syringe_trial(seed, D=100, n_in=10, n_out=200, noise_scale=0.25):
    """One noisy-needle run.

    ``angle_deg`` compares the S-REAPER direction with the first principal
    component of the inliers alone; ``angle_truth_deg`` compares it with the
    generating direction.
    """
    X, truth = sample_syringe(D, n_in, n_out, noise_scale, seed)
    P, trace = s_reaper_solve(X, IrlsConfig(1))
    model = dominant_subspace(P, 1)
    oracle = pca_fit(X[:, :n_in], 1)
    return {
        "seed": seed,
        "angle_deg": math.degrees(subspace_angle(model, oracle)),
        "angle_truth_deg": math.degrees(subspace_angle(model, truth)),
        "iterations": trace.iterations,
        "converged": trace.converged,
    }


def _needle_job(args):
    return needle_trial(*args)


def _syringe_job(args):
    return syringe_trial(*args)


def run_trials(kind, trials, seed=0, workers=1, **kw):
    """Run ``trials`` seeded needle or syringe trials; returns a list of dicts."""
    if kind == "needle":
        tag, job = _NEEDLE, _needle_job
        keys = ("D", "n_in", "n_out", "threshold")
    elif kind == "syringe":
        tag, job = _SYRINGE, _syringe_job
        keys = ("D", "n_in", "n_out", "noise_scale")
    else:
        raise InvalidInputError(f"unknown trial kind {kind!r}")
    if set(kw) - set(keys):
        raise InvalidInputError(f"unknown {kind} options: {sorted(set(kw) - set(keys))}")
    defaults = {"needle": needle_trial, "syringe": syringe_trial}[kind].__defaults__
    extra = tuple(kw.get(k, v) for k, v in zip(keys, defaults))
    jobs = [(derive_seed(seed, tag, t),) + extra for t in range(trials)]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(job, jobs))
    return [job(j) for j in jobs]
