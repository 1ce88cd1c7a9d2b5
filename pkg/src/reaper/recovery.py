"""Summary statistics and exact-recovery conditions.

Deterministic conditions apply to an In & Out dataset (inliers exactly in a
subspace L, outliers off it). The Haystack predicates evaluate the
probabilistic guarantees for Gaussian data as closed-form inequalities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .geometry import Subspace

__all__ = [
    "InOutDataset",
    "PermeanceResult",
    "RecoveryReport",
    "permeance",
    "spherical_permeance",
    "structure_stat",
    "spherical_structure_stat",
    "key_condition_rhs",
    "check_deterministic",
    "haystack_guarantee",
    "GUARANTEES",
]


def _point_block(A, D, name):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((D, 0))
    if A.ndim != 2 or A.shape[0] != D:
        raise InvalidInputError(f"{name} must have shape ({D}, n), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True, eq=False)
class InOutDataset:
    """Labeled dataset: ``inliers`` and ``outliers`` are ``(D, n)`` column blocks.

    Construction checks shapes only; use ``haystack.validate_in_out`` for the
    geometric invariants.
    """

    inliers: np.ndarray
    outliers: np.ndarray
    subspace: Subspace
    resampled_outliers: int = 0

    def __post_init__(self):
        D = self.subspace.dim_ambient
        object.__setattr__(self, "inliers", _point_block(self.inliers, D, "inliers"))
        object.__setattr__(self, "outliers", _point_block(self.outliers, D, "outliers"))

    @property
    def D(self):
        return self.subspace.dim_ambient

    @property
    def d(self):
        return self.subspace.dim

    @property
    def n_in(self):
        return self.inliers.shape[1]

    @property
    def n_out(self):
        return self.outliers.shape[1]

    @property
    def data(self):
        """All points, inliers first."""
        return np.hstack([self.inliers, self.outliers])

    @property
    def labels(self):
        """1 for inliers, 0 for outliers, aligned with :attr:`data`."""
        return np.r_[np.ones(self.n_in, dtype=int), np.zeros(self.n_out, dtype=int)]


class PermeanceResult(NamedTuple):
    """``value`` is the smallest objective found at unit ``direction`` in L.

    When ``exact`` the value is the infimum. Otherwise it is an upper bound
    and ``lower_bound`` is a certified (looser) lower bound.
    """

    value: float
    direction: np.ndarray
    exact: bool
    lower_bound: float


# Candidate directions times inliers evaluated before giving up on enumeration.
ENUMERATION_BUDGET = 50_000_000


def _normals(Y, d):
    """Unit vectors (rows) orthogonal to each (d-1)-subset of columns of Y."""
    n = Y.shape[1]
    if d == 2:
        N = np.stack([-Y[1], Y[0]], axis=1)
    elif d == 3:
        i, j = np.triu_indices(n, k=1)
        N = np.cross(Y[:, i].T, Y[:, j].T)
    else:
        rows = []
        for subset in itertools.combinations(range(n), d - 1):
            _, s, Vt = np.linalg.svd(Y[:, subset].T)
            if s[-1] > 1e-12 * s[0]:
                rows.append(Vt[-1])
        N = np.array(rows).reshape(-1, d)
    nrm = np.linalg.norm(N, axis=1)
    keep = nrm > 1e-12 * max(1.0, float(nrm.max(initial=0.0)))
    return N[keep] / nrm[keep, None]


def _multistart(Y, rng, starts=64, iters=500):
    """Projected subgradient descent on the sphere from many starts at once."""
    d = Y.shape[0]
    U = np.concatenate([np.eye(d), -np.eye(d), rng.standard_normal((d, max(0, starts - 2 * d)))], axis=1)
    U /= np.linalg.norm(U, axis=0)
    scale = np.linalg.norm(Y, axis=0).sum()
    best_v = np.abs(Y.T @ U).sum(axis=0)
    best_U = U.copy()
    for t in range(1, iters + 1):
        G = Y @ np.sign(Y.T @ U)
        G -= np.sum(G * U, axis=0) * U
        U = U - G / (scale * math.sqrt(t))
        U /= np.linalg.norm(U, axis=0)
        v = np.abs(Y.T @ U).sum(axis=0)
        better = v < best_v
        best_v[better], best_U[:, better] = v[better], U[:, better]
    k = int(np.argmin(best_v))
    return best_U[:, k], float(best_v[k])


def _permeance_coords(Y, seed):
    """Minimize ``sum_j |<u, y_j>|`` over unit u in R^d.

    The objective is a norm, so its minimum on the sphere is hit at a vertex of
    its unit ball, i.e. at a direction orthogonal to d-1 linearly independent
    columns. Enumerating those candidates is exact.
    """
    d, n = Y.shape
    if n == 0:
        return np.eye(d)[0], 0.0, True, 0.0
    if d == 1:
        v = float(np.abs(Y).sum())
        return np.ones(1), v, True, v
    U, s, _ = np.linalg.svd(Y, full_matrices=True)
    s = np.pad(s, (0, d - s.size))
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        u = U[:, -1]
        return u, float(np.abs(Y.T @ u).sum()), True, 0.0

    cols = Y[:, np.linalg.norm(Y, axis=0) > 0]
    n_cand = math.comb(cols.shape[1], d - 1)
    if n_cand * n <= ENUMERATION_BUDGET:
        N = _normals(cols, d)
        vals = np.empty(N.shape[0])
        chunk = max(1, ENUMERATION_BUDGET // (20 * max(n, 1)))
        for a in range(0, N.shape[0], chunk):
            vals[a : a + chunk] = np.abs(N[a : a + chunk] @ Y).sum(axis=1)
        k = int(np.argmin(vals))
        return N[k], float(vals[k]), True, float(vals[k])

    u, v = _multistart(Y, np.random.default_rng(seed))
    # l1 >= l2 gives a certified floor from the smallest singular value.
    return u, float(v), False, float(s[-1])


def _permeance(points, L, seed=0):
    Y = L.basis.T @ points
    u, v, exact, lower = _permeance_coords(Y, seed)
    return PermeanceResult(v, L.basis @ u, exact, lower)


def permeance(ds, seed=0):
    """``inf_{u in L, ||u||=1} sum_{inliers} |<u, x>|``.

    Exact by vertex enumeration when ``C(N_in, d-1) * N_in`` fits the budget;
    otherwise a multi-start descent gives an upper bound (``exact=False``).
    """
    return _permeance(ds.inliers, ds.subspace, seed)


def spherical_permeance(ds, seed=0):
    """Permeance of the spherized inliers; zero inliers are dropped."""
    X = ds.inliers
    norms = np.linalg.norm(X, axis=0)
    return _permeance(X[:, norms > 0] / norms[norms > 0], ds.subspace, seed)


def _project(outliers, M):
    A = np.asarray(outliers, dtype=float)
    if M is None:
        return A
    if M.dim_ambient != A.shape[0]:
        raise InvalidInputError("subspace and outliers have different ambient dimensions")
    return M.projector @ A


def _spectral_norm(A):
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def _spherize_cols(A):
    norms = np.linalg.norm(A, axis=0)
    out = np.zeros_like(A)
    nz = norms > 0
    out[:, nz] = A[:, nz] / norms[nz]
    return out


def structure_stat(outliers, M=None):
    """Spectral norm of the outliers projected onto M (all of R^D when M is None)."""
    return _spectral_norm(_project(outliers, M))


def spherical_structure_stat(outliers, M=None):
    """Spectral norm of the spherized projections of the outliers onto M."""
    return _spectral_norm(_spherize_cols(_project(outliers, M)))


def key_condition_rhs(ds):
    """``max(||~A_perp A_perp^T||, ||~A_perp A_L^T||)`` with ``A_M = Pi_M X_out``."""
    if ds.n_out == 0:
        return 0.0
    PL = ds.subspace.projector
    A_L = PL @ ds.outliers
    A_perp = ds.outliers - A_L
    S = _spherize_cols(A_perp)
    return max(_spectral_norm(S @ A_perp.T), _spectral_norm(S @ A_L.T))


@dataclass(frozen=True)
class RecoveryReport:
    permeance: float
    spherical_permeance: float
    structure_full: float
    structure_complement_spherical: float
    spherical_structure_full: float
    key_condition_rhs: float
    permeance_exact: bool
    permeance_lower_bound: float
    spherical_permeance_lower_bound: float
    reaper_condition_holds: bool
    sreaper_condition_holds: bool
    key_condition_holds: bool

    def to_dict(self):
        return asdict(self)


def check_deterministic(ds, seed=0):
    """Evaluate the deterministic exact-recovery conditions for ``ds``.

    A true verdict is backed by a certified permeance value: the enumerated
    infimum when available, otherwise the certified lower bound.
    """
    p = permeance(ds, seed)
    sp = spherical_permeance(ds, seed)
    comp = ds.subspace.complement()
    s_full = structure_stat(ds.outliers)
    s_perp = spherical_structure_stat(ds.outliers, comp)
    ss_full = spherical_structure_stat(ds.outliers)
    key = key_condition_rhs(ds)
    factor = math.sqrt(2 * ds.d)
    return RecoveryReport(
        permeance=p.value,
        spherical_permeance=sp.value,
        structure_full=s_full,
        structure_complement_spherical=s_perp,
        spherical_structure_full=ss_full,
        key_condition_rhs=key,
        permeance_exact=bool(p.exact and sp.exact),
        permeance_lower_bound=p.lower_bound,
        spherical_permeance_lower_bound=sp.lower_bound,
        reaper_condition_holds=bool(p.lower_bound > factor * s_perp * s_full),
        sreaper_condition_holds=bool(sp.lower_bound > factor * s_perp * ss_full),
        key_condition_holds=bool(p.lower_bound > factor * key),
    )


# Constants of the simplified Haystack bounds.
C1, C2, C3 = 4 * math.pi, 2 * math.pi, 12 * math.sqrt(math.pi / 2)
C3_SPH = 12 * math.sqrt(3 * math.pi / 5)

GUARANTEES = ("reaper", "sreaper", "sreaper_d1", "simplified_reaper", "simplified_sreaper")


def haystack_guarantee(params, c, which):
    """Evaluate one Haystack recovery guarantee.

    Parameters
    ----------
    params : HaystackParams
    c : float
        Confidence parameter, ``c > 0``. The simplified forms use
        ``beta = c**2 / 2``.
    which : str
        One of :data:`GUARANTEES`.

    Returns
    -------
    (holds, failure_probability_bound)
    """
    if which not in GUARANTEES:
        raise InvalidInputError(f"unknown guarantee {which!r}; choose from {GUARANTEES}")
    if not c > 0:
        raise InvalidInputError("c must be positive")
    D, d = params.D, params.d
    rho_in, rho_out = params.N_in / d, params.N_out / D
    ratio = params.sigma_out / params.sigma_in
    beta = c * c / 2

    def need(cond, clause):
        if not cond:
            raise InvalidInputError(f"{which}: parameters violate {clause} (D={D}, d={d})")

    if which == "reaper":
        need(1 <= d <= D - 1, "1 <= d <= D-1")
        lhs = math.sqrt(2 / math.pi) * rho_in - (2 + c) * math.sqrt(rho_in)
        rhs = (
            ratio
            * math.sqrt(2 * D / (D - d - 0.5))
            * (math.sqrt(rho_out) + 1 + c * math.sqrt(d / D)) ** 2
        )
        bound = 3.5 * math.exp(-c * c * d / 2)
    elif which == "sreaper":
        need(2 <= d <= D - 1, "2 <= d <= D-1")
        lhs = math.sqrt(2 / math.pi) * rho_in - (2 + c * math.sqrt(2)) * math.sqrt(rho_in)
        rhs = (
            math.sqrt(D / (D - 0.5))
            * math.sqrt(2 * D / (D - d - 0.5))
            * (math.sqrt(rho_out) + 1 + c * math.sqrt(d / D)) ** 2
        )
        bound = 4 * math.exp(-c * c * d / 2)
    elif which == "sreaper_d1":
        need(d == 1 and D >= 2, "d = 1 and D >= 2")
        lhs = rho_in
        rhs = (
            math.sqrt(D / (D - 0.5))
            * math.sqrt(2 * D / (D - 1.5))
            * (math.sqrt(rho_out) + 1 + c * math.sqrt(1 / D)) ** 2
        )
        bound = 3 * math.exp(-c * c / 2)
    elif which == "simplified_reaper":
        need(1 <= d <= (D - 1) / 2, "1 <= d <= (D-1)/2")
        lhs = rho_in
        rhs = C1 + C2 * beta + C3 * ratio * (rho_out + 1 + 4 * beta)
        bound = 4 * math.exp(-beta * d)
    else:
        need(1 <= d <= (D - 1) / 2, "1 <= d <= (D-1)/2")
        lhs = rho_in
        rhs = C1 + 2 * C2 * beta + C3_SPH * (rho_out + 1 + 4 * beta)
        bound = 4 * math.exp(-beta * d)

    holds = params.N_in > 0 and lhs >= rhs
    return bool(holds), float(bound)
