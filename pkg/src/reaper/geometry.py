"""Data types and classical geometric primitives.

Datasets are stored as ``(D, N)`` float arrays: one observation per column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidInputError, InvariantError

__all__ = [
    "as_data_matrix",
    "spherize",
    "spherize_dataset",
    "euclidean_median",
    "Spectrum",
    "Subspace",
    "ProjectorRelaxation",
    "pca_fit",
    "spherical_pca_fit",
    "dominant_subspace",
    "principal_angles",
    "subspace_angle",
]

# Eigenvalues closer than this (relative to the largest magnitude) count as tied.
TIE_RTOL = 1e-10
# Nominally PSD spectra may dip this far below zero (relative) before we complain.
PSD_RTOL = 1e-9


def as_data_matrix(X, name="X"):
    """Validate and convert to a float ``(D, N)`` array with N >= 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D (D, N) array, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"{name} must have D >= 1 and N >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


# Norms this close to one are treated as exactly one.
_UNIT_SLACK = 8 * np.finfo(float).eps


def spherize(x):
    """Return ``x / ||x||``, or the zero vector when ``x`` is zero."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("cannot spherize a vector with non-finite entries")
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return np.zeros_like(x)
    if abs(nrm - 1.0) <= _UNIT_SLACK:
        return x.copy()
    return x / nrm


def spherize_dataset(X):
    """Spherize every column of ``X``; zero columns stay zero."""
    X = as_data_matrix(X)
    norms = np.linalg.norm(X, axis=0)
    # Columns already unit up to roundoff are kept as-is so spherizing is idempotent.
    norms[np.abs(norms - 1.0) <= _UNIT_SLACK] = 1.0
    out = np.zeros_like(X)
    nz = norms > 0
    out[:, nz] = X[:, nz] / norms[nz]
    return out


def _median_objective(pts, c):
    return np.linalg.norm(pts - c, axis=1).sum()


def euclidean_median(X, tol=1e-10, max_iter=10_000):
    """Geometric median of the columns of ``X`` by safeguarded Weiszfeld iteration.

    Parameters
    ----------
    X : array-like, (D, N)
        Observations as columns.
    tol : float
        Stop once the gradient of ``sum ||x - c||`` has norm at most ``tol``.
        When the iterate coincides with a data point, that point is accepted
        if the subgradient optimality test passes at the same tolerance.
    max_iter : int
        Iteration budget.

    Returns
    -------
    c : ndarray, (D,)

    Raises
    ------
    ConvergenceError
        If the budget is exhausted; ``err.best`` holds the lowest-objective iterate.
    """
    X = as_data_matrix(X)
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    pts = X.T
    if pts.shape[0] == 1:
        return pts[0].copy()

    spread = max(1.0, float(np.abs(pts).max()))
    snap = 1e-12 * spread
    c = pts.mean(axis=0)
    best, best_val = c.copy(), _median_objective(pts, c)

    for _ in range(max_iter):
        diff = pts - c
        dist = np.linalg.norm(diff, axis=1)
        near = dist <= snap
        if near.any():
            j = int(np.argmin(dist))
            mult = int(near.sum())
            far = ~near
            pull = (diff[far] / dist[far, None]).sum(axis=0)
            pull_norm = np.linalg.norm(pull)
            if pull_norm <= mult + tol:
                return pts[j].copy()
            # x_j is not optimal: step off it along the steepest descent direction.
            step = (pull_norm - mult) / (1.0 / dist[far]).sum()
            f0 = _median_objective(pts, pts[j])
            direction = pull / pull_norm
            while step > 10 * snap:
                trial = pts[j] + step * direction
                if _median_objective(pts, trial) < f0:
                    break
                step *= 0.5
            c = pts[j] + step * direction
            continue

        grad = -(diff / dist[:, None]).sum(axis=0)
        val = dist.sum()
        if val < best_val:
            best, best_val = c.copy(), val
        if np.linalg.norm(grad) <= tol:
            return c
        w = 1.0 / dist
        c = (w @ pts) / w.sum()

    raise ConvergenceError(
        f"Weiszfeld iteration did not reach tol={tol} in {max_iter} iterations", best=best
    )


def _canonical_basis(vectors, n):
    """Deterministic orthonormal basis for ``range(vectors)``.

    Gram-Schmidt applied to the projections of e_1, e_2, ... so the result
    does not depend on which basis the eigensolver happened to return.
    """
    D = vectors.shape[0]
    proj = vectors @ vectors.T
    basis = []
    for j in range(D):
        w = proj[:, j].copy()
        for _ in range(2):
            for b in basis:
                w -= (b @ w) * b
        nrm = np.linalg.norm(w)
        if nrm > 1e-6:
            basis.append(w / nrm)
            if len(basis) == n:
                break
    return np.column_stack(basis)


def _sign_normalize(v, atol=1e-12):
    idx = np.flatnonzero(np.abs(v) > atol)
    if idx.size and v[idx[0]] < 0:
        return -v
    return v


def _canonical_order(values, vectors):
    """Apply the tie rule to a nonincreasing spectrum.

    Every eigenvector is sign-normalized so its first nonzero entry is positive.
    Within a block of tied eigenvalues the block is re-based canonically and
    ordered lexicographically largest first.
    """
    values = np.asarray(values, dtype=float)
    vectors = np.array(vectors, dtype=float)
    D = values.size
    scale = max(1.0, float(np.abs(values).max())) if D else 1.0
    out = vectors.copy()
    i = 0
    while i < D:
        j = i + 1
        while j < D and values[i] - values[j] <= TIE_RTOL * scale:
            j += 1
        if j - i == 1:
            out[:, i] = _sign_normalize(vectors[:, i])
        else:
            block = _canonical_basis(vectors[:, i:j], j - i)
            cols = [_sign_normalize(block[:, k]) for k in range(block.shape[1])]
            cols.sort(key=lambda v: tuple(np.round(v, 12)), reverse=True)
            out[:, i:j] = np.column_stack(cols)
        i = j
    return out


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def of(cls, A, psd=False):
        """Eigendecompose the symmetrized ``(A + A^T) / 2``.

        With ``psd=True`` small negative eigenvalues (relative size up to
        ``PSD_RTOL``) are clamped to zero and larger ones raise.
        """
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("matrix contains non-finite entries")
        lam, U = np.linalg.eigh(0.5 * (A + A.T))
        lam, U = lam[::-1].copy(), U[:, ::-1]
        if psd:
            scale = max(1.0, float(np.abs(lam).max()))
            if lam[-1] < -PSD_RTOL * scale:
                raise InvariantError(f"matrix is not PSD: smallest eigenvalue {lam[-1]:.3e}")
            lam = np.maximum(lam, 0.0)
        return cls(lam, _canonical_order(lam, U))

    def reconstruct(self):
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


@dataclass(frozen=True, eq=False)
class Subspace:
    """A proper d-dimensional subspace of R^D held as an orthonormal ``(D, d)`` basis."""

    basis: np.ndarray
    _projector: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.ndim != 2:
            raise InvalidInputError("basis must be a (D, d) array")
        D, d = B.shape
        if not 0 < d < D:
            raise InvalidInputError(f"subspace dimension must satisfy 0 < d < D, got d={d}, D={D}")
        if not np.all(np.isfinite(B)):
            raise InvalidInputError("basis contains non-finite entries")
        if np.abs(B.T @ B - np.eye(d)).max() > 1e-10:
            raise InvariantError("basis vectors are not orthonormal to within 1e-10")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "_projector", B @ B.T)

    @classmethod
    def span(cls, vectors):
        """Subspace spanned by the columns of ``vectors`` (orthonormalized by QR)."""
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        Q, R = np.linalg.qr(V)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag.min() <= 1e-12 * max(1.0, diag.max()):
            raise InvalidInputError("spanning vectors are linearly dependent")
        return cls(Q)

    @classmethod
    def random(cls, D, d, rng):
        """Uniformly distributed d-subspace: orthonormalized Gaussian matrix."""
        return cls.span(rng.standard_normal((D, d)))

    @property
    def dim_ambient(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        return self._projector

    def complement(self):
        """Orthogonal complement, with a canonical basis."""
        D = self.dim_ambient
        lam, U = np.linalg.eigh(np.eye(D) - self.projector)
        return Subspace(_canonical_basis(U[:, lam > 0.5], D - self.dim))

    def contains(self, x, rtol=1e-10):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.projector @ x) <= rtol * np.linalg.norm(x)


@dataclass(frozen=True, eq=False)
class ProjectorRelaxation:
    """Symmetric P with eigenvalues in [0, 1] and trace ``target_trace``."""

    matrix: np.ndarray
    target_trace: float

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise InvalidInputError(f"P must be square, got shape {P.shape}")
        D = P.shape[0]
        d = float(self.target_trace)
        # d = D is allowed: it is the single point P = I, reached by capping.
        if not 0 < d <= D:
            raise InvalidInputError(f"target trace must lie in (0, D], got {d} with D={D}")
        if np.linalg.norm(P - P.T) > 1e-10:
            raise InvariantError("P is not symmetric to within 1e-10")
        lam = np.linalg.eigvalsh(P)
        if lam[0] < -1e-9 or lam[-1] > 1 + 1e-9:
            raise InvariantError(f"eigenvalues of P leave [0, 1]: [{lam[0]:.3e}, {lam[-1]:.3e}]")
        if abs(np.trace(P) - d) > 1e-8:
            raise InvariantError(f"trace(P) = {np.trace(P):.12g} but target is {d}")
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "target_trace", d)

    @property
    def dim_ambient(self):
        return self.matrix.shape[0]

    def spectrum(self):
        return Spectrum.of(self.matrix)


def _left_singular(W):
    """Squared singular values (length D, padded with zeros) and a full ``(D, D)`` U."""
    D, N = W.shape
    if N > D:
        # Thin QR first: W^T = QR, so W = R^T Q^T shares left singular vectors with R^T.
        R = np.linalg.qr(W.T, mode="r")
        U, s, _ = np.linalg.svd(R.T)
    else:
        U, s, _ = np.linalg.svd(W, full_matrices=True)
    lam = np.zeros(D)
    lam[: s.size] = s**2
    return lam, U


def _check_dim(d, D):
    if int(d) != d or not 0 < d < D:
        raise InvalidInputError(f"d must be an integer with 0 < d < D={D}, got {d}")
    return int(d)


def pca_fit(X, d):
    """Span of the top-d left singular vectors of X (ties broken canonically)."""
    X = as_data_matrix(X)
    d = _check_dim(d, X.shape[0])
    lam, U = _left_singular(X)
    U = _canonical_order(lam, U)
    return Subspace(U[:, :d])


def spherical_pca_fit(X, d):
    """PCA of the spherized data."""
    return pca_fit(spherize_dataset(X), d)


def dominant_subspace(P, d):
    """Span of the d eigenvectors of P with the largest eigenvalues."""
    if isinstance(P, ProjectorRelaxation):
        P = P.matrix
    P = np.asarray(P, dtype=float)
    d = _check_dim(d, P.shape[0])
    spec = Spectrum.of(P)
    return Subspace(spec.eigenvectors[:, :d])


def _basis_of(S):
    return S.basis if isinstance(S, Subspace) else Subspace.span(S).basis


def principal_angles(A, B):
    """All principal angles (radians, ascending) between two subspaces."""
    QA, QB = _basis_of(A), _basis_of(B)
    if QA.shape[0] != QB.shape[0]:
        raise InvalidInputError("subspaces live in different ambient dimensions")
    if QA.shape[1] > QB.shape[1]:
        QA, QB = QB, QA
    cos = np.linalg.svd(QA.T @ QB, compute_uv=False)
    # Sines from the residual keep small angles accurate.
    sin = np.linalg.svd(QA - QB @ (QB.T @ QA), compute_uv=False)
    return np.sort(np.arctan2(np.sort(sin), np.sort(cos)[::-1]))


def subspace_angle(A, B):
    """Largest principal angle between two subspaces, in [0, pi/2]."""
    return float(principal_angles(A, B)[-1])
