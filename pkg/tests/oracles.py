"""Independent reference solvers used to cross-check the package.

Nothing here imports from ``reaper``: these are deliberately naive,
slow-but-obvious implementations.
"""

import numpy as np


def water_level_bisect(lam, d, iters=200):
    """theta with sum(max(0, 1 - theta/lam_i)) = d, by bisection on [0, lam_1]."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        return _water_level_bisect(lam, d, iters)


def _water_level_bisect(lam, d, iters):
    pos = lam[lam > 0]
    lo, hi = 0.0, float(pos.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(0.0, 1.0 - mid / pos).sum() > d:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    nu = np.zeros_like(lam)
    nu[lam > 0] = np.maximum(0.0, 1.0 - theta / pos)
    return theta, nu


def project_capped_simplex(y, d):
    """Euclidean projection of y onto {v in [0,1]^n : sum v = d}.

    g(tau) = sum clip(y - tau, 0, 1) is piecewise linear and nonincreasing with
    kinks at y_i and y_i - 1, so the root is found by interpolating between
    the two kinks that bracket d.
    """
    y = np.asarray(y, dtype=float)
    knots = np.sort(np.concatenate([y, y - 1.0]))
    g = np.clip(y[None, :] - knots[:, None], 0.0, 1.0).sum(axis=1)
    # g is nonincreasing along the sorted knots; find g[k] >= d >= g[k+1].
    k = int(np.searchsorted(-g, -d, side="right")) - 1
    k = min(max(k, 0), knots.size - 2)
    g0, g1 = g[k], g[k + 1]
    tau = knots[k] if g0 == g1 else knots[k] + (g0 - d) * (knots[k + 1] - knots[k]) / (g0 - g1)
    return np.clip(y - tau, 0.0, 1.0)


def project_feasible(A, d):
    """Frobenius projection of a square matrix onto {0 <= P <= I, tr P = d}."""
    S = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(S)
    return (V * project_capped_simplex(w, d)) @ V.T


def weighted_ls_objective(X, w, P):
    R = X - P @ X
    return float(np.sum(w * np.sum(R * R, axis=0)))


def weighted_ls_oracle(X, w, d, tol=1e-10, max_iter=200_000):
    """Accelerated projected gradient on sum w_i ||x_i - P x_i||^2.

    Stops once the projected-gradient step moves P by less than ``tol`` in
    Frobenius norm. Returns (P, objective, stationarity).
    """
    D = X.shape[0]
    C = (X * w) @ X.T
    I = np.eye(D)
    L = 2.0 * max(np.linalg.eigvalsh(C)[-1], 1e-300)

    def grad(P):
        G = -(I - P) @ C
        return G + G.T

    P = project_feasible(np.eye(D) * (d / D), d)
    Y, t = P.copy(), 1.0
    step = np.inf
    for _ in range(max_iter):
        P_new = project_feasible(Y - grad(Y) / L, d)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        Y = P_new + ((t - 1) / t_new) * (P_new - P)
        P, t = P_new, t_new
        step = np.linalg.norm(P - project_feasible(P - grad(P) / L, d))
        if step <= tol:
            break
    return P, weighted_ls_objective(X, w, P), step


def reaper_objective(X, P):
    return float(np.linalg.norm(X - P @ X, axis=0).sum())


def reaper_subgradient_oracle(X, d, iters=20_000, seed=0):
    """Projected subgradient descent on sum ||x - P x|| with diminishing steps.

    Returns the best iterate seen and its objective.
    """
    rng = np.random.default_rng(seed)
    D = X.shape[0]
    I = np.eye(D)
    P = project_feasible(I * (d / D) + 1e-3 * rng.standard_normal((D, D)), d)
    best_P, best_f = P, reaper_objective(X, P)
    for k in range(1, iters + 1):
        R = X - P @ X
        r = np.linalg.norm(R, axis=0)
        nz = r > 1e-14
        G = -(R[:, nz] / r[nz]) @ X[:, nz].T
        G = 0.5 * (G + G.T)
        g = np.linalg.norm(G)
        if g == 0:
            break
        P = project_feasible(P - (0.5 * np.sqrt(D) / np.sqrt(k)) * G / g, d)
        f = reaper_objective(X, P)
        if f < best_f:
            best_P, best_f = P, f
    return best_P, best_f


def permeance_grid_d2(Y, n_angles=200_000):
    """min over unit u in R^2 of sum |<u, y_j>| on a fine angular grid (columns of Y)."""
    phi = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    U = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return float(np.abs(U @ Y).sum(axis=1).min())


def random_feasible(D, d, rng):
    """Random point of {0 <= P <= I, tr P = d}."""
    Q, _ = np.linalg.qr(rng.standard_normal((D, D)))
    nu = project_capped_simplex(rng.uniform(-1, 2, D), d)
    return (Q * nu) @ Q.T


def random_feasible_batch(D, d, rng, n):
    """n random feasible matrices, shape (n, D, D)."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, D, D)))
    y = rng.uniform(-1, 2, (n, D))
    lo, hi = y.min(axis=1) - 1.0, y.max(axis=1)
    for _ in range(100):
        tau = 0.5 * (lo + hi)
        big = np.clip(y - tau[:, None], 0.0, 1.0).sum(axis=1) > d
        lo, hi = np.where(big, tau, lo), np.where(big, hi, tau)
    nu = np.clip(y - (0.5 * (lo + hi))[:, None], 0.0, 1.0)
    return np.einsum("nij,nj,nkj->nik", Q, nu, Q)
