"""Seeded generators for Haystack, needle and syringe datasets.

Randomness
----------
Every generator draws from ``numpy.random.PCG64`` seeded by a
``numpy.random.SeedSequence(seed, spawn_key=key)``. Each logical stream
(subspace, inlier coefficients, outliers, ...) gets its own key, and
experiment harnesses append (cell, trial) indices to the key, so results do
not depend on scheduling. Gaussians come from ``Generator.standard_normal``
(numpy's ziggurat sampler); golden values in the tests assume numpy >= 2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import Subspace
from .recovery import InOutDataset

__all__ = [
    "HaystackParams",
    "make_rng",
    "derive_seed",
    "sample_haystack",
    "sample_syringe",
    "validate_in_out",
    "IN_L_RTOL",
]

# An outlier closer to L than this (relative to its norm) is treated as lying in L.
IN_L_RTOL = 1e-10

_SUBSPACE, _INLIERS, _OUTLIERS, _NOISE = 0, 1, 2, 3


def make_rng(seed, *key):
    """Independent generator for stream ``key`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed, *key):
    """64-bit seed for a child experiment (e.g. one trial of a grid cell)."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class HaystackParams:
    D: int
    d: int
    N_in: int
    N_out: int
    sigma_in: float = 1.0
    sigma_out: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("D", "d", "N_in", "N_out", "seed"):
            value = getattr(self, name)
            if int(value) != value:
                raise InvalidInputError(f"{name} must be an integer, got {value!r}")
        if not 1 <= self.d < self.D:
            raise InvalidInputError(f"need 1 <= d < D, got d={self.d}, D={self.D}")
        if self.N_in < 0 or self.N_out < 0:
            raise InvalidInputError("point counts must be nonnegative")
        if not (self.sigma_in > 0 and self.sigma_out > 0):
            raise InvalidInputError("sigma_in and sigma_out must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    @property
    def rho_in(self):
        return self.N_in / self.d

    @property
    def rho_out(self):
        return self.N_out / self.D

    def to_dict(self):
        return asdict(self)


def _off_subspace(x, L):
    return np.linalg.norm(x - L.projector @ x) > IN_L_RTOL * np.linalg.norm(x)


def sample_haystack(params, L=None):
    """Draw a Haystack dataset.

    Inliers are ``sigma_in / sqrt(d) * B g`` with ``B`` an orthonormal basis of
    L and ``g`` standard normal in R^d, so they lie in L by construction.
    Outliers are ``sigma_out / sqrt(D) * z`` with ``z`` standard normal in R^D;
    the (probability-zero) event of an outlier in L triggers a redraw, counted
    in ``resampled_outliers``. ``L=None`` draws a uniformly random subspace.
    """
    D, d = params.D, params.d
    if L is None:
        L = Subspace.random(D, d, make_rng(params.seed, _SUBSPACE))
    elif L.dim_ambient != D or L.dim != d:
        raise InvalidInputError(f"L must be a {d}-dimensional subspace of R^{D}")

    coeffs = make_rng(params.seed, _INLIERS).standard_normal((d, params.N_in))
    inliers = (params.sigma_in / math.sqrt(d)) * (L.basis @ coeffs)

    rng = make_rng(params.seed, _OUTLIERS)
    outliers = (params.sigma_out / math.sqrt(D)) * rng.standard_normal((D, params.N_out))
    resampled = 0
    for j in range(params.N_out):
        while not _off_subspace(outliers[:, j], L):
            outliers[:, j] = (params.sigma_out / math.sqrt(D)) * rng.standard_normal(D)
            resampled += 1
    return InOutDataset(inliers, outliers, L, resampled_outliers=resampled)


def sample_syringe(D=100, N_in=10, N_out=200, noise_scale=0.25, seed=0):
    """Noisy needle: inliers ``g_i v + z_i`` plus Gaussian outliers.

    ``v`` is a random unit vector, ``g_i`` standard normal, the noise ``z_i``
    is normal with covariance ``noise_scale**2 / D * I`` (the default 0.25
    gives ``(16 D)^{-1} I``), and outliers have covariance ``D^{-1} I``.

    Returns
    -------
    X : ndarray, (D, N_in + N_out)
        Inliers occupy the first ``N_in`` columns.
    truth : Subspace
        ``span(v)``.
    """
    if int(D) != D or D < 2:
        raise InvalidInputError("D must be an integer >= 2")
    if N_in < 0 or N_out < 0 or int(N_in) != N_in or int(N_out) != N_out:
        raise InvalidInputError("point counts must be nonnegative integers")
    if not noise_scale >= 0:
        raise InvalidInputError("noise_scale must be nonnegative")
    truth = Subspace.random(D, 1, make_rng(seed, _SUBSPACE))
    v = truth.basis[:, 0]
    g = make_rng(seed, _INLIERS).standard_normal(N_in)
    noise = make_rng(seed, _NOISE).standard_normal((D, N_in)) * (noise_scale / math.sqrt(D))
    inliers = np.outer(v, g) + noise
    outliers = make_rng(seed, _OUTLIERS).standard_normal((D, N_out)) / math.sqrt(D)
    return np.hstack([inliers, outliers]), truth


def validate_in_out(ds):
    """True iff every inlier lies in L and every outlier lies off it (relative tol 1e-10)."""
    P = ds.subspace.projector
    if ds.n_in:
        X = ds.inliers
        if np.any(np.linalg.norm(X - P @ X, axis=0) > IN_L_RTOL * np.linalg.norm(X, axis=0)):
            return False
    if ds.n_out:
        X = ds.outliers
        if np.any(np.linalg.norm(X - P @ X, axis=0) <= IN_L_RTOL * np.linalg.norm(X, axis=0)):
            return False
    return True
