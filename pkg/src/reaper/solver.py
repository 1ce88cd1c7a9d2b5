"""IRLS solver for the REAPER and S-REAPER programs.

    minimize  sum_x ||x - P x||   subject to  0 <= P <= I,  tr P = d

Each IRLS step solves a weighted least-squares problem over the same
constraint set in closed form: eigendecompose the weighted covariance and
shrink its spectrum into [0, 1] by water-filling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvariantError
from .geometry import (
    PSD_RTOL,
    ProjectorRelaxation,
    Spectrum,
    _left_singular,
    as_data_matrix,
    spherize_dataset,
)

__all__ = [
    "WaterLevel",
    "waterfill",
    "weighted_covariance",
    "solve_weighted_ls",
    "residual_norms",
    "reaper_objective",
    "regularized_objective",
    "IrlsConfig",
    "IrlsTrace",
    "irls_solve",
    "s_reaper_solve",
    "cap_to_strong_feasible",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WaterLevel:
    """Output of :func:`waterfill`.

    ``theta`` is None in the low-rank case. ``active`` is the number of
    leading eigenvalues strictly above the water level. ``fallback`` records
    that the closed-form scan failed its acceptance test and bisection was used.
    """

    nu: np.ndarray
    theta: float | None
    active: int
    fallback: bool = False


def _check_spectrum(lam, d):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise InvalidInputError("eigenvalues must be a nonempty 1-D array")
    if not np.all(np.isfinite(lam)):
        raise InvalidInputError("eigenvalues must be finite")
    if np.any(np.diff(lam) > 0):
        raise InvalidInputError("eigenvalues must be sorted in nonincreasing order")
    if lam[-1] < 0:
        raise InvalidInputError("eigenvalues must be nonnegative")
    if not 0 < d < lam.size:
        raise InvalidInputError(f"d must lie in (0, D={lam.size}), got {d}")
    return lam


def waterfill(lam, d, rank_tol=None):
    """Shrink a nonnegative spectrum into [0, 1] with total mass ``d``.

    Parameters
    ----------
    lam : array-like, (D,)
        Eigenvalues in nonincreasing order.
    d : float
        Trace budget, ``0 < d < D``.
    rank_tol : float, optional
        Eigenvalues at or below this count as zero in the rank test.
        Defaults to ``max(1e-12 * lam[0], 1e-300)``.

    Returns
    -------
    WaterLevel
        If at most ``d`` eigenvalues are numerically nonzero, ``nu`` is
        ``(1, ..., 1, d - floor(d), 0, ..., 0)``. Otherwise
        ``nu_i = (lam_i - theta)_+ / lam_i`` where ``theta`` solves
        ``sum_i (lam_i - theta)_+ / lam_i = d`` (with 0/0 := 0).
    """
    lam = _check_spectrum(lam, d)
    D = lam.size
    if rank_tol is None:
        rank_tol = max(1e-12 * lam[0], 1e-300)
    rank = int(np.count_nonzero(lam > rank_tol))
    fl = math.floor(d)

    if rank <= d:
        nu = np.zeros(D)
        nu[:fl] = 1.0
        if fl < D:
            nu[fl] = d - fl
        return WaterLevel(nu, None, int(np.count_nonzero(nu)))

    pos = lam[lam > 0]
    with np.errstate(divide="ignore", over="ignore"):
        inv_cum = np.cumsum(1.0 / pos)
    npos = pos.size
    nxt = np.append(pos[1:], 0.0)

    # Closed-form scan over i = floor(d)+1, ..., npos.
    idx = np.arange(fl + 1, npos + 1)
    with np.errstate(invalid="ignore"):
        thetas = (idx - d) / inv_cum[idx - 1]
    ok = (pos[idx - 1] > thetas) & (thetas >= nxt[idx - 1])
    fallback = not ok.any()
    if not fallback:
        i = int(idx[np.argmax(ok)])
        theta = float(thetas[i - fl - 1])
    else:
        i, theta = _bisect_water_level(pos, d, inv_cum)
        log.debug("water-filling scan failed its acceptance test; used bisection (theta=%g)", theta)

    nu = np.zeros(D)
    nu[:i] = 1.0 - theta / pos[:i]
    return WaterLevel(nu, theta, i, fallback)


def _bisect_water_level(pos, d, inv_cum):
    def excess(theta):
        return np.sum(np.maximum(pos - theta, 0.0) / pos) - d

    lo, hi = 0.0, float(pos[0])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * pos[0]:
            break
    i = max(int(np.count_nonzero(pos > 0.5 * (lo + hi))), math.floor(d) + 1)
    i = min(i, pos.size)
    # Recover theta in closed form for the bracketed active set, then keep it in
    # the interval the active set demands.
    theta = (i - d) / inv_cum[i - 1]
    below = pos[i] if i < pos.size else 0.0
    theta = min(max(theta, below), np.nextafter(pos[i - 1], 0.0))
    return i, float(theta)


def _check_weights(w, N):
    w = np.asarray(w, dtype=float)
    if w.shape != (N,):
        raise InvalidInputError(f"expected {N} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidInputError("weights must be finite and nonnegative")
    return w


def weighted_covariance(X, w):
    """``C = sum_x w_x x x^T`` accumulated directly."""
    X = as_data_matrix(X)
    w = _check_weights(w, X.shape[1])
    C = (X * w) @ X.T
    return 0.5 * (C + C.T)


def _weighted_spectrum(X, w, method):
    if method == "svd":
        return _left_singular(X * np.sqrt(w))
    if method == "eigh":
        W = X * np.sqrt(w)
        C = W @ W.T
    elif method == "direct":
        C = (X * w) @ X.T
    else:
        raise InvalidInputError(f"unknown decomposition method {method!r}")
    lam, U = np.linalg.eigh(0.5 * (C + C.T))
    lam, U = lam[::-1], U[:, ::-1]
    scale = max(float(lam[0]), 1e-300)
    if lam[-1] < -PSD_RTOL * scale:
        raise InvariantError(f"weighted covariance is not PSD: {lam[-1]:.3e}")
    return np.maximum(lam, 0.0), U


def _wls(X, w, d, method="svd"):
    lam, U = _weighted_spectrum(X, w, method)
    level = waterfill(lam, d)
    k = int(np.count_nonzero(level.nu))
    Uk = U[:, :k]
    P = (Uk * level.nu[:k]) @ Uk.T
    return 0.5 * (P + P.T), level


def solve_weighted_ls(X, w, d, method="svd"):
    """Minimize ``sum_x w_x ||x - P x||^2`` over ``0 <= P <= I, tr P = d``.

    ``method`` selects how the weighted covariance is decomposed: ``"svd"``
    (SVD of the matrix with columns ``sqrt(w_x) x``, the default), ``"eigh"``
    (eigendecomposition of its Gram matrix), or ``"direct"`` (accumulate
    ``sum w_x x x^T`` and eigendecompose).
    """
    X = as_data_matrix(X)
    w = _check_weights(w, X.shape[1])
    if not 0 < d < X.shape[0]:
        raise InvalidInputError(f"d must lie in (0, D={X.shape[0]}), got {d}")
    P, _ = _wls(X, w, d, method)
    return ProjectorRelaxation(P, d)


def _as_matrix(P):
    return P.matrix if isinstance(P, ProjectorRelaxation) else np.asarray(P, dtype=float)


def residual_norms(X, P):
    """``||x - P x||`` for every column x."""
    X = as_data_matrix(X)
    P = _as_matrix(P)
    if P.shape != (X.shape[0], X.shape[0]):
        raise InvalidInputError(f"P has shape {P.shape}, expected {(X.shape[0],) * 2}")
    return np.linalg.norm(X - P @ X, axis=0)


def reaper_objective(X, P):
    """``sum_x ||x - P x||``."""
    return float(residual_norms(X, P).sum())


def _huber(r, delta):
    return np.where(r >= delta, r, 0.5 * (r * r / delta + delta))


def regularized_objective(X, P, delta):
    """Huber-smoothed objective: residuals below ``delta`` contribute ``(r^2/delta + delta)/2``."""
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    return float(_huber(residual_norms(X, P), delta).sum())


@dataclass(frozen=True)
class IrlsConfig:
    d: float
    delta: float = 1e-10
    epsilon: float = 1e-15
    max_iter: int = 10_000
    method: str = "svd"

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidInputError(f"d must be positive, got {self.d}")
        if not self.delta > 0:
            raise InvalidInputError(f"delta must be positive, got {self.delta}")
        if not self.epsilon >= 0:
            raise InvalidInputError(f"epsilon must be nonnegative, got {self.epsilon}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidInputError(f"max_iter must be a positive integer, got {self.max_iter}")


@dataclass(eq=False)
class IrlsTrace:
    """Per-run diagnostics.

    ``objective_values[k]`` is the regularized objective at the k-th accepted
    iterate; ``weighted_ls_values[k]`` is the weighted least-squares optimum
    that produced it. ``iterates`` is filled only on request.
    """

    iterations: int = 0
    objective_values: list = field(default_factory=list)
    weighted_ls_values: list = field(default_factory=list)
    final_objective: float = math.nan
    converged: bool = False
    stop_reason: str = ""
    fallback_count: int = 0
    iterates: list | None = None


def irls_solve(X, cfg, record_iterates=False):
    """Solve REAPER on the columns of ``X`` by iteratively reweighted least squares.

    Weights start at one and are updated as ``1 / max(delta, ||x - P x||)``.
    The loop stops once the regularized objective fails to drop by more than
    ``epsilon``. An increase beyond ``epsilon`` can only come from roundoff,
    so in that case the previous iterate is returned.

    Returns
    -------
    (ProjectorRelaxation, IrlsTrace)
        ``trace.converged`` is False only when ``max_iter`` ran out.
    """
    X = as_data_matrix(X)
    D, N = X.shape
    if not isinstance(cfg, IrlsConfig):
        cfg = IrlsConfig(d=cfg)
    if not cfg.d < D:
        raise InvalidInputError(f"d must lie in (0, D={D}), got {cfg.d}")

    trace = IrlsTrace(iterates=[] if record_iterates else None)
    beta = np.ones(N)
    alpha_prev = math.inf
    P_prev = None

    for k in range(1, cfg.max_iter + 1):
        P, level = _wls(X, beta, cfg.d, cfg.method)
        trace.fallback_count += level.fallback
        r = np.linalg.norm(X - P @ X, axis=0)
        alpha = float(_huber(r, cfg.delta).sum())
        if alpha > alpha_prev + cfg.epsilon:
            trace.converged, trace.stop_reason = True, "increase"
            P = P_prev
            break
        trace.iterations = k
        trace.objective_values.append(alpha)
        trace.weighted_ls_values.append(float(beta @ (r * r)))
        if record_iterates:
            trace.iterates.append(P)
        if alpha >= alpha_prev - cfg.epsilon:
            trace.converged, trace.stop_reason = True, "stalled"
            break
        beta = 1.0 / np.maximum(cfg.delta, r)
        alpha_prev, P_prev = alpha, P
    else:
        trace.stop_reason = "max_iter"
        log.warning("IRLS hit max_iter=%d without meeting the stopping rule", cfg.max_iter)

    trace.final_objective = reaper_objective(X, P)
    return ProjectorRelaxation(P, cfg.d), trace


def s_reaper_solve(X, cfg, record_iterates=False):
    """:func:`irls_solve` on spherized data."""
    return irls_solve(spherize_dataset(X), cfg, record_iterates=record_iterates)


def cap_to_strong_feasible(P, d=None):
    """Map a PSD trace-d matrix to one with eigenvalues in [0, 1].

    The eigenbasis is kept. With eigenvalues sorted descending, let i* be the
    smallest index whose leading partial sum is at most i*. Eigenvalues before
    i* become 1, the i*-th absorbs the remaining mass, and the rest are kept.
    Every ``(1 - lambda_i)^2`` can only shrink, so no residual ``||x - Px||`` grows.
    """
    A = np.asarray(_as_matrix(P), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"P must be square, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max()))
    if np.linalg.norm(A - A.T) > 1e-10 * scale:
        raise InvariantError("P is not symmetric")
    spec = Spectrum.of(A, psd=True)
    lam, U = spec.eigenvalues, spec.eigenvectors
    trace = float(lam.sum())
    if d is None:
        d = trace
    elif abs(trace - d) > 1e-8 * max(1.0, abs(d)):
        raise InvariantError(f"trace(P) = {trace:.12g} does not match d = {d}")

    partial = np.cumsum(lam)
    steps = np.arange(1, lam.size + 1)
    i_star = int(np.argmax(partial <= steps + 1e-12 * steps)) + 1
    capped = lam.copy()
    capped[: i_star - 1] = 1.0
    capped[i_star - 1] = 1.0 - i_star + partial[i_star - 1]
    capped = np.clip(capped, 0.0, 1.0)
    out = (U * capped) @ U.T
    return ProjectorRelaxation(0.5 * (out + out.T), d)
