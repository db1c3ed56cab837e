"""Kernel SVM trained by sequential minimal optimization.

Solves the binary soft-margin dual

    max  sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
    s.t. 0 <= alpha_i <= C,  sum_i alpha_i y_i = 0

by repeated analytic two-variable updates. The working pair is the maximal
KKT violator from the "up" index set matched with the point maximizing the
prediction-error gap, which is the classic first-order heuristic. Multiclass
lives in classifiers.py as one-vs-one voting over these binary machines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNELS = ("linear", "poly", "rbf")

_STEP_EPS = 1e-14  # minimum alpha movement that still counts as progress
_BOUND_EPS = 1e-12  # slack when testing membership at the box bounds


def kernel_matrix(
    a: np.ndarray,
    b: np.ndarray,
    kernel: str,
    gamma: float | None = None,
    degree: int = 3,
) -> np.ndarray:
    """Gram matrix K[i, j] = k(a_i, b_j) for the three supported kernels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if kernel == "linear":
        return a @ b.T
    if kernel == "poly":
        return (a @ b.T + 1.0) ** degree
    if kernel == "rbf":
        if gamma is None:
            raise ValueError("rbf kernel requires gamma")
        sq = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class PairSolution:
    alpha: np.ndarray
    bias: float
    converged: bool
    n_steps: int
    objective_history: np.ndarray | None = None


def _dual_objective(alpha: np.ndarray, y: np.ndarray, u: np.ndarray) -> float:
    # u_i = sum_j alpha_j y_j K_ij, so alpha.(y*u) = alpha^T Q alpha
    return float(alpha.sum() - 0.5 * np.dot(alpha, y * u))


def svm_solve_pair(
    X: np.ndarray,
    y: np.ndarray,
    c: float,
    kernel: str = "rbf",
    gamma: float | None = None,
    degree: int = 3,
    tol: float = 1e-3,
    max_steps: int = 100_000,
    track_objective: bool = False,
) -> PairSolution:
    """Solve one binary subproblem with labels y in {-1, +1}.

    Terminates when the maximal KKT violation m - M drops to ``tol``; if the
    step cap is hit first, the best iterate is returned flagged
    not-converged. The kernel matrix is fully cached (pair problems are
    small) and the margin vector u is updated incrementally per step.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = X.shape[0]
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both labels must be present in a pair problem")
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("pair labels must be -1/+1")
    if c <= 0:
        raise ValueError(f"C must be positive, got {c}")

    K = kernel_matrix(X, X, kernel, gamma=gamma, degree=degree)
    alpha = np.zeros(n)
    u = np.zeros(n)  # u_i = sum_j alpha_j y_j K_ij
    history: list[float] = [0.0] if track_objective else []
    pos = y > 0.0
    y_list = y.tolist()  # plain floats keep the hot loop off numpy scalars
    K_diag = np.diag(K).tolist()

    def take_step(i: int, j: int) -> bool:
        if i == j:
            return False
        a_i, a_j = float(alpha[i]), float(alpha[j])
        y_i, y_j = y_list[i], y_list[j]
        s = y_i * y_j
        if s > 0:
            lo, hi = max(0.0, a_i + a_j - c), min(c, a_i + a_j)
        else:
            lo, hi = max(0.0, a_j - a_i), min(c, c + a_j - a_i)
        if hi - lo < _BOUND_EPS:
            return False
        e_i = float(u[i]) - y_i
        e_j = float(u[j]) - y_j
        k_ii, k_jj, k_ij = K_diag[i], K_diag[j], float(K[i, j])
        eta = k_ii + k_jj - 2.0 * k_ij
        if eta > _BOUND_EPS:
            a_j_new = min(max(a_j + y_j * (e_i - e_j) / eta, lo), hi)
        else:
            # Flat direction: evaluate the dual at both clip bounds and move
            # to the better one (Platt's degenerate-eta rule).
            f_i = y_i * e_i - a_i * k_ii - s * a_j * k_ij
            f_j = y_j * e_j - s * a_i * k_ij - a_j * k_jj
            lo_i = a_i + s * (a_j - lo)
            hi_i = a_i + s * (a_j - hi)
            obj_lo = (
                lo_i * f_i + lo * f_j + 0.5 * lo_i**2 * k_ii
                + 0.5 * lo**2 * k_jj + s * lo * lo_i * k_ij
            )
            obj_hi = (
                hi_i * f_i + hi * f_j + 0.5 * hi_i**2 * k_ii
                + 0.5 * hi**2 * k_jj + s * hi * hi_i * k_ij
            )
            if obj_lo < obj_hi - _BOUND_EPS:
                a_j_new = lo
            elif obj_lo > obj_hi + _BOUND_EPS:
                a_j_new = hi
            else:
                return False
        if abs(a_j_new - a_j) < _STEP_EPS:
            return False
        a_i_new = a_i + s * (a_j - a_j_new)
        # K is symmetric; rows are contiguous where columns are not.
        if a_i_new != a_i:
            np.add(u, ((a_i_new - a_i) * y_i) * K[i], out=u)
        np.add(u, ((a_j_new - a_j) * y_j) * K[j], out=u)
        alpha[i], alpha[j] = a_i_new, a_j_new
        return True

    converged = False
    steps = 0
    while steps < max_steps:
        vals = y - u  # = -E_i; for free SVs this equals the bias at optimum
        small = alpha > _BOUND_EPS
        big = alpha < c - _BOUND_EPS
        up_vals = np.where(np.where(pos, big, small), vals, -np.inf)
        low_vals = np.where(np.where(pos, small, big), vals, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        v_i, v_j = float(up_vals[i]), float(low_vals[j])
        if not (np.isfinite(v_i) and np.isfinite(v_j)):
            converged = True  # one index set is empty; nothing can move
            break
        if v_i - v_j <= tol:
            converged = True
            break
        progressed = take_step(i, j)
        if not progressed:
            # Rare stall: try less-violating partners in ascending order.
            low_idx = np.flatnonzero(np.isfinite(low_vals))
            order = low_idx[np.argsort(low_vals[low_idx], kind="stable")]
            for j2 in order[1:]:
                if take_step(i, int(j2)):
                    progressed = True
                    break
        if not progressed:
            break  # no feasible pair can improve; gap stays above tol
        steps += 1
        if track_objective:
            history.append(_dual_objective(alpha, y, u))

    bias = _compute_bias(alpha, y, u, c)
    return PairSolution(
        alpha=alpha,
        bias=bias,
        converged=converged,
        n_steps=steps,
        objective_history=np.asarray(history) if track_objective else None,
    )


def _compute_bias(alpha: np.ndarray, y: np.ndarray, u: np.ndarray, c: float) -> float:
    vals = y - u
    inner = (alpha > 1e-8 * c) & (alpha < (1.0 - 1e-8) * c)
    if inner.any():
        return float(vals[inner].mean())
    up = ((alpha < c - _BOUND_EPS) & (y > 0)) | ((alpha > _BOUND_EPS) & (y < 0))
    low = ((alpha < c - _BOUND_EPS) & (y < 0)) | ((alpha > _BOUND_EPS) & (y > 0))
    if up.any() and low.any():
        return float((vals[up].max() + vals[low].min()) / 2.0)
    return float(vals.mean())


def kkt_violations(
    alpha: np.ndarray,
    y: np.ndarray,
    decision: np.ndarray,
    c: float,
) -> np.ndarray:
    """Per-point KKT violation magnitudes given decision values f(x_i).

    alpha = 0 requires y f >= 1, interior alpha requires y f = 1, and
    alpha = C requires y f <= 1; the return is how far each point breaches
    its own condition.
    """
    margin = y * decision
    viol = np.zeros_like(margin)
    at_zero = alpha <= _BOUND_EPS
    at_c = alpha >= c - _BOUND_EPS
    interior = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    viol[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    viol[interior] = np.abs(margin[interior] - 1.0)
    return viol


def scale_gamma(X: np.ndarray) -> float:
    """1 / (dim * mean per-feature variance); the usual "scale" heuristic."""
    X = np.asarray(X, dtype=np.float64)
    var = float(X.var(axis=0).mean())
    if var <= 0.0:
        return 1.0 / X.shape[1]
    return 1.0 / (X.shape[1] * var)
