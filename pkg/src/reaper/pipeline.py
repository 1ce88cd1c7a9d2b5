"""End-to-end robust fit: optional centering and spherization, REAPER, rounding."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import Spectrum, Subspace, as_data_matrix, euclidean_median, spherize_dataset
from .solver import IrlsConfig, irls_solve

__all__ = ["PipelineConfig", "FitResult", "fit", "ROUNDING_MODES"]

ROUNDING_MODES = ("dominant", "bisect_trace")

# Eigenvalues of P below this count as zero when measuring its rank.
RANK_TOL = 1e-6


@dataclass(frozen=True)
class PipelineConfig:
    """Options of :func:`fit`.

    ``irls`` carries the solver tolerances; its ``d`` is overridden by ``d``.
    """

    d: float
    center: bool = False
    spherize: bool = True
    rounding: str = "dominant"
    irls: IrlsConfig = None
    bisect_steps: int = 30

    def __post_init__(self):
        if isinstance(self.d, bool) or not (isinstance(self.d, numbers.Real) and self.d > 0):
            raise InvalidInputError(f"d must be a positive number, got {self.d!r}")
        if self.rounding not in ROUNDING_MODES:
            raise InvalidInputError(f"rounding must be one of {ROUNDING_MODES}, got {self.rounding!r}")
        base = self.irls if self.irls is not None else IrlsConfig(d=self.d)
        if not isinstance(base, IrlsConfig):
            raise InvalidInputError("irls must be an IrlsConfig")
        object.__setattr__(
            self,
            "irls",
            IrlsConfig(d=self.d, delta=base.delta, epsilon=base.epsilon, max_iter=base.max_iter, method=base.method),
        )
        if int(self.bisect_steps) != self.bisect_steps or self.bisect_steps < 1:
            raise InvalidInputError("bisect_steps must be a positive integer")

    @classmethod
    def from_dict(cls, cfg):
        """Build from a JSON-style mapping (see ``docs/formats.md``)."""
        if not isinstance(cfg, dict) or "d" not in cfg:
            raise InvalidInputError("config must be an object with at least a 'd' entry")
        known = {"d", "center", "spherize", "rounding", "delta", "epsilon", "max_iter", "method", "bisect_steps"}
        unknown = set(cfg) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        try:
            irls = IrlsConfig(
                d=cfg["d"],
                delta=cfg.get("delta", 1e-10),
                epsilon=cfg.get("epsilon", 1e-15),
                max_iter=cfg.get("max_iter", 10_000),
                method=cfg.get("method", "svd"),
            )
        except TypeError as exc:
            raise InvalidInputError(str(exc)) from None
        return cls(
            d=cfg["d"],
            center=bool(cfg.get("center", False)),
            spherize=bool(cfg.get("spherize", True)),
            rounding=cfg.get("rounding", "dominant"),
            irls=irls,
            bisect_steps=cfg.get("bisect_steps", 30),
        )

    def check(self, D):
        if not math.ceil(self.d) < D:
            raise InvalidInputError(f"need 0 < ceil(d) < D={D}, got d={self.d}")


@dataclass(eq=False)
class FitResult:
    center: np.ndarray | None
    relaxation: object
    subspace: Subspace
    residuals: np.ndarray
    trace: object
    rounding_trace: float = field(default=math.nan)

    @property
    def converged(self):
        return self.trace.converged

    def to_dict(self):
        tr = self.trace
        return {
            "center": None if self.center is None else self.center.tolist(),
            "eigenvalues": self.relaxation.spectrum().eigenvalues.tolist(),
            "basis": self.subspace.basis.tolist(),
            "residuals": self.residuals.tolist(),
            "rounding_trace": None if math.isnan(self.rounding_trace) else self.rounding_trace,
            "irls": {
                "iterations": tr.iterations,
                "converged": tr.converged,
                "stop_reason": tr.stop_reason,
                "final_objective": tr.final_objective,
                "final_regularized_objective": tr.objective_values[-1] if tr.objective_values else None,
                "fallback_count": tr.fallback_count,
            },
        }


def _rank(P):
    return int(np.sum(np.linalg.eigvalsh(P) > RANK_TOL))


def _bisect_trace(Y, cfg, k, P_full):
    """Shrink the trace parameter on (0, d] until the solution has rank k.

    Returns the matrix whose dominant k eigenvectors are used, and the trace
    parameter that produced it.
    """
    if _rank(P_full.matrix) <= k:
        return P_full.matrix, cfg.d
    lo, hi = 0.0, cfg.d
    best, best_t = None, math.nan
    for _ in range(cfg.bisect_steps):
        t = 0.5 * (lo + hi)
        P, _ = irls_solve(Y, IrlsConfig(t, cfg.irls.delta, cfg.irls.epsilon, cfg.irls.max_iter, cfg.irls.method))
        r = _rank(P.matrix)
        if r > k:
            hi = t
        else:
            lo = t
            # Keep the largest trace whose solution still has at most k directions.
            best, best_t = P.matrix, t
            if r == k:
                break
    if best is None:
        return P_full.matrix, cfg.d
    return best, best_t


def fit(X, config):
    """Robust linear model for the columns of ``X``.

    Steps: optional Euclidean-median centering, optional spherization, the
    REAPER solve with trace ``d``, and rounding to a ``ceil(d)``-dimensional
    subspace, either by the dominant eigenvectors of the solution or by
    bisecting the trace parameter until the solution has that rank.

    Residuals are ``||x - Pi x||`` in the (centered, unspherized) data.
    """
    X = as_data_matrix(X)
    D = X.shape[0]
    config.check(D)
    center = None
    Xc = X
    if config.center:
        center = euclidean_median(X)
        Xc = X - center[:, None]
    Y = spherize_dataset(Xc) if config.spherize else Xc
    P, trace = irls_solve(Y, config.irls)
    k = math.ceil(config.d)
    if config.rounding == "dominant":
        M, t = P.matrix, config.d
    else:
        M, t = _bisect_trace(Y, config, k, P)
    S = Subspace(Spectrum.of(M).eigenvectors[:, :k])
    residuals = np.linalg.norm(Xc - S.projector @ Xc, axis=0)
    return FitResult(center, P, S, residuals, trace, rounding_trace=float(t))
