"""Gaussian-process Bayesian optimization of classifier hyperparameters.

The objective is the mean of per-fold cross-validation accuracies for a
candidate configuration; a Matern-5/2 GP with per-dimension length scales
emulates the hyperparameter/performance relationship and expected
improvement proposes the next configuration. Mixed spaces (continuous,
log-continuous, integer, categorical) are mapped into the unit cube with
one-hot blocks for categoricals and round-half-up for integers.
"""

from __future__ import annotations

import json
import math
import warnings as _warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize as _opt
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import ndtr
from scipy.stats import qmc

# --- search space -------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousDim:
    name: str
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo must be < hi")
        if self.log and self.lo <= 0:
            raise ValueError(f"{self.name}: log dims require lo > 0")

    @property
    def size(self) -> int:
        return 1


@dataclass(frozen=True)
class IntegerDim:
    name: str
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo must be < hi")

    @property
    def size(self) -> int:
        return 1


@dataclass(frozen=True)
class CategoricalDim:
    name: str
    options: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) < 2 or len(set(self.options)) != len(self.options):
            raise ValueError(f"{self.name}: need >= 2 distinct options")

    @property
    def size(self) -> int:
        return len(self.options)


Dim = ContinuousDim | IntegerDim | CategoricalDim


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")

    @property
    def encoded_size(self) -> int:
        return sum(d.size for d in self.dims)


def encode(space: SearchSpace, theta: Mapping[str, object]) -> np.ndarray:
    """Map a hyperparameter dict to a point in the unit cube."""
    parts = []
    for dim in space.dims:
        if dim.name not in theta:
            raise ValueError(f"theta missing dimension {dim.name!r}")
        v = theta[dim.name]
        if isinstance(dim, ContinuousDim):
            v = float(v)  # type: ignore[arg-type]
            if not dim.lo <= v <= dim.hi:
                raise ValueError(f"{dim.name}={v} outside [{dim.lo}, {dim.hi}]")
            if dim.log:
                parts.append([(math.log(v) - math.log(dim.lo)) / (math.log(dim.hi) - math.log(dim.lo))])
            else:
                parts.append([(v - dim.lo) / (dim.hi - dim.lo)])
        elif isinstance(dim, IntegerDim):
            iv = int(v)  # type: ignore[arg-type]
            if not dim.lo <= iv <= dim.hi:
                raise ValueError(f"{dim.name}={iv} outside [{dim.lo}, {dim.hi}]")
            parts.append([(iv - dim.lo) / (dim.hi - dim.lo)])
        else:
            if v not in dim.options:
                raise ValueError(f"{dim.name}={v!r} not in {dim.options}")
            onehot = [0.0] * len(dim.options)
            onehot[dim.options.index(v)] = 1.0
            parts.append(onehot)
    return np.concatenate(parts)


def decode(space: SearchSpace, x: np.ndarray) -> dict[str, object]:
    """Inverse of encode; integers round half-up, categoricals take argmax."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != space.encoded_size:
        raise ValueError(f"encoded point has size {x.shape[0]}, expected {space.encoded_size}")
    theta: dict[str, object] = {}
    pos = 0
    for dim in space.dims:
        block = x[pos : pos + dim.size]
        pos += dim.size
        if isinstance(dim, ContinuousDim):
            t = float(np.clip(block[0], 0.0, 1.0))
            if dim.log:
                theta[dim.name] = math.exp(
                    math.log(dim.lo) + t * (math.log(dim.hi) - math.log(dim.lo))
                )
            else:
                theta[dim.name] = dim.lo + t * (dim.hi - dim.lo)
        elif isinstance(dim, IntegerDim):
            t = float(np.clip(block[0], 0.0, 1.0))
            theta[dim.name] = int(
                min(dim.hi, max(dim.lo, math.floor(dim.lo + t * (dim.hi - dim.lo) + 0.5)))
            )
        else:
            theta[dim.name] = dim.options[int(np.argmax(block))]
    return theta


# --- Gaussian process surrogate ------------------------------------------------


@dataclass(frozen=True)
class GPosterior:
    X: np.ndarray = field(repr=False)
    y_mean: float
    y_centered: np.ndarray = field(repr=False)
    amplitude: float
    length_scales: np.ndarray = field(repr=False)
    jitter: float
    chol: np.ndarray = field(repr=False)  # lower-triangular factor of K
    alpha_vec: np.ndarray = field(repr=False)  # K^{-1} (y - mean)


def matern52(
    A: np.ndarray, B: np.ndarray, amplitude: float, length_scales: np.ndarray
) -> np.ndarray:
    """Matern-5/2 kernel with per-dimension length scales."""
    sa = A / length_scales
    sb = B / length_scales
    sq = (
        np.sum(sa * sa, axis=1)[:, None]
        + np.sum(sb * sb, axis=1)[None, :]
        - 2.0 * (sa @ sb.T)
    )
    np.maximum(sq, 0.0, out=sq)
    r = np.sqrt(sq)
    sqrt5_r = math.sqrt(5.0) * r
    return amplitude**2 * (1.0 + sqrt5_r + (5.0 / 3.0) * sq) * np.exp(-sqrt5_r)


def _log_marginal_likelihood(
    X: np.ndarray, yc: np.ndarray, amplitude: float, ls: np.ndarray, jitter: float
) -> float:
    K = matern52(X, X, amplitude, ls)
    K[np.diag_indices_from(K)] += jitter
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve((L, True), yc)
    return float(
        -0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(yc) * math.log(2 * math.pi)
    )


def gp_posterior(
    X: np.ndarray,
    y: np.ndarray,
    amplitude: float,
    length_scales: np.ndarray | Sequence[float],
    jitter: float = 1e-6,
) -> GPosterior:
    """Build the posterior for fixed kernel hyperparameters.

    The diagonal jitter escalates by decades up to 1e-4 if the covariance
    factorization fails; beyond that the fit is an error.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    ls = np.asarray(length_scales, dtype=np.float64).reshape(-1)
    y_mean = float(y.mean())
    yc = y - y_mean
    K = matern52(X, X, amplitude, ls)
    jit = jitter
    while True:
        Kj = K.copy()
        Kj[np.diag_indices_from(Kj)] += jit
        try:
            L = cholesky(Kj, lower=True)
            break
        except np.linalg.LinAlgError:
            jit *= 10.0
            if jit > 1e-4:
                raise np.linalg.LinAlgError(
                    "GP covariance not positive definite even at jitter 1e-4"
                )
    alpha = cho_solve((L, True), yc)
    return GPosterior(
        X=X,
        y_mean=y_mean,
        y_centered=yc,
        amplitude=amplitude,
        length_scales=ls,
        jitter=jit,
        chol=L,
        alpha_vec=alpha,
    )


def gp_fit(X: np.ndarray, y: np.ndarray, seed: int = 0, jitter: float = 1e-6) -> GPosterior:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Eight seeded multi-start L-BFGS-B searches over log(amplitude) and
    log(length scales); the best start wins.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("gp_fit needs at least 2 points")
    if not np.all(np.isfinite(y)):
        raise ValueError("objective values must be finite")
    m = X.shape[1]
    yc = y - y.mean()
    y_scale = max(float(y.std()), 1e-4)

    def neg_lml(log_params: np.ndarray) -> float:
        amp = math.exp(log_params[0])
        ls = np.exp(log_params[1:])
        val = _log_marginal_likelihood(X, yc, amp, ls, jitter)
        return 1e25 if not np.isfinite(val) else -val

    # Amplitude is tied to the observed spread: letting it grow unbounded
    # drives the kernel towards a near-singular long-lengthscale limit where
    # the fixed jitter visibly degrades interpolation at the training points.
    bounds = [(math.log(1e-6), math.log(10.0 * y_scale))] + [
        (math.log(1e-2), math.log(1e2))
    ] * m
    rng = np.random.default_rng(seed)
    starts = [np.concatenate(([math.log(y_scale)], np.full(m, math.log(0.5))))]
    for _ in range(7):
        amp0 = y_scale * math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        ls0 = np.exp(rng.uniform(math.log(0.05), math.log(3.0), size=m))
        starts.append(np.concatenate(([math.log(max(amp0, 1e-5))], np.log(ls0))))
    best = None
    for x0 in starts:
        res = _opt.minimize(neg_lml, x0, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    amplitude = math.exp(best.x[0])
    length_scales = np.exp(best.x[1:])
    return gp_posterior(X, y, amplitude, length_scales, jitter=jitter)


def gp_predict(gp: GPosterior, x: np.ndarray) -> tuple[float, float]:
    """Posterior mean and standard deviation at one point."""
    mean, std = gp_predict_batch(gp, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return float(mean[0]), float(std[0])


def gp_predict_batch(gp: GPosterior, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    k_star = matern52(X, gp.X, gp.amplitude, gp.length_scales)
    mean = gp.y_mean + k_star @ gp.alpha_vec
    v = solve_triangular(gp.chol, k_star.T, lower=True)
    var = gp.amplitude**2 - np.sum(v * v, axis=0)
    return mean, np.sqrt(np.maximum(var, 0.0))


# --- acquisition ----------------------------------------------------------------


def expected_improvement(mean, std, best_so_far, xi: float = 0.0):
    """EI for maximization; accepts scalars or arrays, never negative."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    improve = mean - best_so_far - xi
    out = np.maximum(improve, 0.0)
    positive = std > 0.0
    if np.any(positive):
        with np.errstate(over="ignore"):  # inf z is fine, it clips to +-38
            z = np.where(positive, improve / np.where(positive, std, 1.0), 0.0)
        z = np.clip(z, -38.0, 38.0)  # pdf/cdf saturate beyond this
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        ei = improve * ndtr(z) + std * pdf
        out = np.where(positive, np.maximum(ei, 0.0), out)
    if out.ndim == 0:
        return float(out)
    return out


# --- optimization loop -----------------------------------------------------------


@dataclass(frozen=True)
class Trial:
    iteration: int
    theta: dict[str, object]
    x: np.ndarray = field(repr=False)
    value: float = 0.0
    fold_values: tuple[float, ...] = ()
    failed: bool = False


def bayes_optimize(
    objective: Callable[[Mapping[str, object]], object],
    space: SearchSpace,
    n_iterations: int = 30,
    n_initial: int = 5,
    seed: int = 42,
    xi: float = 0.01,
    n_candidates: int = 1000,
    n_local: int = 200,
    local_sigma: float = 0.05,
) -> tuple[Trial, list[Trial]]:
    """Sequential GP optimization; returns (best trial, full history).

    The first ``n_initial`` configurations come from a seeded scrambled
    Sobol design; each later configuration maximizes expected improvement
    over seeded uniform candidates plus Gaussian perturbations of the
    incumbent. The objective may return a scalar or the per-fold accuracy
    sequence (its mean becomes the trial value); objective exceptions are
    recorded as failed trials with value 0 and the loop continues.
    """
    if n_initial < 2:
        raise ValueError(f"n_initial must be >= 2, got {n_initial}")
    if n_iterations < n_initial:
        raise ValueError(f"n_iterations ({n_iterations}) must be >= n_initial ({n_initial})")
    m = space.encoded_size
    history: list[Trial] = []

    def run_trial(iteration: int, x_raw: np.ndarray) -> Trial:
        theta = decode(space, x_raw)
        x = encode(space, theta)  # snapped point actually evaluated
        try:
            result = objective(theta)
        except Exception:
            return Trial(iteration=iteration, theta=theta, x=x, value=0.0, failed=True)
        if np.isscalar(result):
            folds = (float(result),)  # type: ignore[arg-type]
        else:
            folds = tuple(float(v) for v in result)  # type: ignore[union-attr]
        return Trial(
            iteration=iteration,
            theta=theta,
            x=x,
            value=float(np.mean(folds)),
            fold_values=folds,
        )

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")  # Sobol balance warning for n != 2^k
        sobol = qmc.Sobol(d=m, scramble=True, seed=seed)
        initial = sobol.random(n_initial)
    for it in range(n_initial):
        history.append(run_trial(it, initial[it]))

    for it in range(n_initial, n_iterations):
        X_hist = np.stack([t.x for t in history])
        y_hist = np.array([t.value for t in history])
        gp = gp_fit(X_hist, y_hist, seed=seed + 1000 * it)
        best_idx = int(np.argmax(y_hist))
        incumbent = history[best_idx].x
        rng = np.random.default_rng([seed, it])
        candidates = rng.random((n_candidates, m))
        local = np.clip(
            incumbent + rng.normal(0.0, local_sigma, size=(n_local, m)), 0.0, 1.0
        )
        cand = np.vstack([candidates, local])
        mean, std = gp_predict_batch(gp, cand)
        ei = expected_improvement(mean, std, float(y_hist[best_idx]), xi=xi)
        history.append(run_trial(it, cand[int(np.argmax(ei))]))

    values = np.array([t.value for t in history])
    best = history[int(np.argmax(values))]  # argmax takes the earliest tie
    return best, history


def save_trials(history: Sequence[Trial], path: str | Path) -> None:
    """Trial history as JSONL: {iteration, theta, encoded_x, value, fold_values, failed}."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for t in history:
            fh.write(
                json.dumps(
                    {
                        "iteration": t.iteration,
                        "theta": t.theta,
                        "encoded_x": [float(v) for v in t.x],
                        "value": t.value,
                        "fold_values": list(t.fold_values),
                        "failed": t.failed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


# --- default spaces and spec construction ---------------------------------------


def default_search_space(family: str) -> SearchSpace:
    """Tuning domains per classifier family (must contain the known optima)."""
    if family == "knn":
        return SearchSpace(
            dims=(
                IntegerDim("k", 1, 50),
                CategoricalDim("metric", ("cosine", "euclidean", "manhattan")),
            )
        )
    if family == "svm":
        return SearchSpace(
            dims=(
                ContinuousDim("c", 1e-3, 1e4, log=True),
                CategoricalDim("kernel", ("linear", "poly2", "poly3", "poly4", "rbf")),
            )
        )
    if family == "logreg":
        return SearchSpace(dims=(ContinuousDim("c", 1e-2, 1e5, log=True),))
    raise ValueError(f"unknown classifier family {family!r}")


def theta_to_hyperparameters(family: str, theta: Mapping[str, object]) -> dict[str, object]:
    """Translate a searched point into ClassifierSpec hyperparameters."""
    if family == "svm":
        kernel = str(theta["kernel"])
        hp: dict[str, object] = {"c": float(theta["c"])}  # type: ignore[arg-type]
        if kernel.startswith("poly"):
            hp["kernel"] = "poly"
            hp["degree"] = int(kernel[len("poly") :])
        else:
            hp["kernel"] = kernel
        return hp
    if family == "knn":
        return {"k": int(theta["k"]), "metric": str(theta["metric"])}  # type: ignore[arg-type]
    if family == "logreg":
        return {"c": float(theta["c"])}  # type: ignore[arg-type]
    raise ValueError(f"unknown classifier family {family!r}")
