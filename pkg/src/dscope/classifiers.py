"""The three classifier families behind one fit/predict contract.

All families consume a dense embedding matrix and string labels:

* ``knn``   - brute-force nearest neighbours under cosine / euclidean /
  manhattan distance with deterministic tie-breaking.
* ``logreg`` - multinomial softmax regression trained by full-batch
  gradient descent with Armijo backtracking.
* ``svm``   - one-vs-one kernel SVMs solved by SMO (see svm.py), majority
  voting with decision-value tie-breaks.

Models are immutable after ``fit`` and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import svm as _svm
from .svm import kernel_matrix, scale_gamma, svm_solve_pair

FAMILIES = ("knn", "logreg", "svm")
KNN_METRICS = ("cosine", "euclidean", "manhattan")
SVM_KERNELS = ("linear", "poly", "rbf")

_SV_EPS = 0.0  # retain every multiplier the solver left strictly positive


@dataclass(frozen=True)
class ClassifierSpec:
    """Family tag plus validated family-specific hyperparameters."""

    family: str
    hyperparameters: Mapping[str, object]

    def __post_init__(self):
        hp = dict(self.hyperparameters)
        object.__setattr__(self, "hyperparameters", hp)
        if self.family == "knn":
            _expect_keys(hp, {"k", "metric"})
            if not isinstance(hp["k"], (int, np.integer)) or hp["k"] < 1:
                raise ValueError(f"knn k must be an int >= 1, got {hp['k']!r}")
            if hp["metric"] not in KNN_METRICS:
                raise ValueError(f"knn metric must be one of {KNN_METRICS}, got {hp['metric']!r}")
        elif self.family == "logreg":
            _expect_keys(hp, {"c"})
            if not hp["c"] > 0:
                raise ValueError(f"logreg c must be > 0, got {hp['c']!r}")
        elif self.family == "svm":
            keys = {"c", "kernel"} | ({"degree"} if hp.get("kernel") == "poly" else set())
            _expect_keys(hp, keys)
            if not hp["c"] > 0:
                raise ValueError(f"svm c must be > 0, got {hp['c']!r}")
            if hp["kernel"] not in SVM_KERNELS:
                raise ValueError(f"svm kernel must be one of {SVM_KERNELS}, got {hp['kernel']!r}")
            if hp["kernel"] == "poly" and not (
                isinstance(hp["degree"], (int, np.integer)) and hp["degree"] >= 1
            ):
                raise ValueError(f"poly degree must be an int >= 1, got {hp.get('degree')!r}")
        else:
            raise ValueError(f"unknown classifier family {self.family!r}")


def _expect_keys(hp: dict, expected: set[str]) -> None:
    got = set(hp)
    if got != expected:
        raise ValueError(f"hyperparameter keys {sorted(got)} != expected {sorted(expected)}")


@dataclass(frozen=True)
class KnnParams:
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)  # class indices


@dataclass(frozen=True)
class LogregParams:
    W: np.ndarray = field(repr=False)  # (n_classes, dim)
    b: np.ndarray = field(repr=False)  # (n_classes,)
    converged: bool = True
    n_iter: int = 0


@dataclass(frozen=True)
class SvmPair:
    pos: int  # class index voted for when the decision value is >= 0
    neg: int
    sv_idx: np.ndarray = field(repr=False)  # rows into SvmParams.vectors
    dual_coef: np.ndarray = field(repr=False)  # alpha_i * y_i, signed
    bias: float = 0.0
    converged: bool = True


@dataclass(frozen=True)
class SvmParams:
    gamma: float
    vectors: np.ndarray = field(repr=False)  # union of support vectors
    pairs: tuple[SvmPair, ...] = ()


@dataclass(frozen=True)
class TrainedModel:
    spec: ClassifierSpec
    classes: tuple[str, ...]
    dim: int
    params: KnnParams | LogregParams | SvmParams
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class PredictionResult:
    label: str
    scores: np.ndarray = field(repr=False)
    confidence: float


# --- fitting -----------------------------------------------------------------


def fit(
    spec: ClassifierSpec,
    X: np.ndarray,
    y: Sequence[str],
    classes: Sequence[str] | None = None,
) -> TrainedModel:
    """Train a model; ``classes`` defaults to the sorted labels present in y."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be a 2-D matrix, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or Inf")
    y = list(y)
    if len(y) != X.shape[0]:
        raise ValueError(f"len(y)={len(y)} != rows of X={X.shape[0]}")
    if classes is None:
        classes = sorted(set(y))
    else:
        classes = list(classes)
        unknown = set(y) - set(classes)
        if unknown:
            raise ValueError(f"labels outside the class list: {sorted(unknown)}")
    class_to_idx = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([class_to_idx[label] for label in y], dtype=np.int64)
    counts = np.bincount(y_idx, minlength=len(classes))
    singletons = [classes[i] for i in np.flatnonzero(counts == 1)]
    if singletons:
        raise ValueError(f"classes with a single sample cannot be trained: {singletons}")

    warnings: list[str] = []
    if spec.family == "knn":
        params: KnnParams | LogregParams | SvmParams = KnnParams(X=X, y=y_idx)
    elif spec.family == "logreg":
        params = _fit_logreg(X, y_idx, len(classes), float(spec.hyperparameters["c"]), warnings)
    else:
        params = _fit_svm(X, y_idx, len(classes), spec, warnings)
    return TrainedModel(
        spec=spec,
        classes=tuple(classes),
        dim=X.shape[1],
        params=params,
        warnings=tuple(warnings),
    )


def _fit_logreg(
    X: np.ndarray, y_idx: np.ndarray, n_classes: int, c: float, warnings: list[str]
) -> LogregParams:
    W, b, converged, n_iter = train_logreg(X, y_idx, n_classes, c)
    if not converged:
        warnings.append(f"logreg hit the iteration cap ({n_iter} iterations)")
    return LogregParams(W=W, b=b, converged=converged, n_iter=n_iter)


def _fit_svm(
    X: np.ndarray, y_idx: np.ndarray, n_classes: int, spec: ClassifierSpec, warnings: list[str]
) -> SvmParams:
    hp = spec.hyperparameters
    c = float(hp["c"])
    kernel = str(hp["kernel"])
    degree = int(hp.get("degree", 3))
    gamma = scale_gamma(X)
    present = np.flatnonzero(np.bincount(y_idx, minlength=n_classes) > 0)
    if present.size < 2:
        raise ValueError("svm needs at least 2 classes with samples")
    pair_results = []
    sv_global: list[int] = []
    for a in range(present.size):
        for b_ in range(a + 1, present.size):
            i, j = int(present[a]), int(present[b_])
            rows = np.flatnonzero((y_idx == i) | (y_idx == j))
            X_pair = X[rows]
            y_pair = np.where(y_idx[rows] == i, 1.0, -1.0)
            if np.all(X_pair == X_pair[0]):
                warnings.append(f"zero margin: classes {i} and {j} share identical rows")
            sol = svm_solve_pair(
                X_pair, y_pair, c, kernel=kernel, gamma=gamma, degree=degree
            )
            if not sol.converged:
                warnings.append(f"svm pair ({i},{j}) not converged after {sol.n_steps} steps")
            sv_local = np.flatnonzero(sol.alpha > _SV_EPS)
            pair_results.append(
                (i, j, rows[sv_local], sol.alpha[sv_local] * y_pair[sv_local], sol.bias, sol.converged)
            )
            sv_global.extend(rows[sv_local].tolist())
    union = np.unique(np.asarray(sv_global, dtype=np.int64))
    position = {int(r): p for p, r in enumerate(union)}
    pairs = tuple(
        SvmPair(
            pos=i,
            neg=j,
            sv_idx=np.array([position[int(r)] for r in sv_rows], dtype=np.int64),
            dual_coef=dual,
            bias=float(bias),
            converged=converged,
        )
        for i, j, sv_rows, dual, bias, converged in pair_results
    )
    vectors = X[union] if union.size else np.empty((0, X.shape[1]))
    return SvmParams(gamma=gamma, vectors=vectors, pairs=pairs)


# --- logistic regression internals -------------------------------------------


def logreg_loss_grad(
    W: np.ndarray,
    b: np.ndarray,
    X: np.ndarray,
    y_idx: np.ndarray,
    c: float,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Mean softmax cross-entropy plus ridge penalty ||W||^2 / (2c).

    ``c`` is the inverse regularization strength; the bias is not
    penalized. Returns the loss and exact gradients (dW, db).
    """
    n = X.shape[0]
    logits = X @ W.T + b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = logits - np.log(denom)
    nll = -log_probs[np.arange(n), y_idx].mean()
    loss = nll + float(np.sum(W * W)) / (2.0 * c)
    probs = exp / denom
    probs[np.arange(n), y_idx] -= 1.0
    probs /= n
    dW = probs.T @ X + W / c
    db = probs.sum(axis=0)
    return float(loss), (dW, db)


def train_logreg(
    X: np.ndarray,
    y_idx: np.ndarray,
    n_classes: int,
    c: float,
    max_iter: int = 1000,
    tol: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray, bool, int]:
    """Full-batch gradient descent with Armijo backtracking from W = b = 0.

    Accepts a step only when it satisfies the sufficient-decrease condition
    (slope factor 1e-4, shrink 0.5), so the loss strictly decreases; stops
    at gradient norm ``tol`` or the iteration cap.
    """
    W = np.zeros((n_classes, X.shape[1]))
    b = np.zeros(n_classes)
    loss, (dW, db) = logreg_loss_grad(W, b, X, y_idx, c)
    step = 1.0
    n_updates = 0
    converged = False
    while n_updates < max_iter:
        gnorm_sq = float(np.sum(dW * dW) + np.sum(db * db))
        if np.sqrt(gnorm_sq) <= tol:
            converged = True
            break
        t = step
        accepted = False
        while t > 1e-20:
            W_new = W - t * dW
            b_new = b - t * db
            loss_new, grad_new = logreg_loss_grad(W_new, b_new, X, y_idx, c)
            if loss_new <= loss - 1e-4 * t * gnorm_sq:
                accepted = True
                break
            t *= 0.5
        if not accepted:  # descent exhausted at float precision
            break
        W, b, loss, (dW, db) = W_new, b_new, loss_new, grad_new
        n_updates += 1
        step = t * 2.0
    if not converged:  # the cap (or a stall) may still land at the tolerance
        converged = np.sqrt(float(np.sum(dW * dW) + np.sum(db * db))) <= tol
    return W, b, converged, n_updates


# --- prediction ---------------------------------------------------------------


def predict(model: TrainedModel, x: np.ndarray) -> PredictionResult:
    """Classify one vector. Pure function of (model, x)."""
    return predict_batch(model, np.asarray(x).reshape(1, -1))[0]


def predict_batch(model: TrainedModel, X: np.ndarray) -> list[PredictionResult]:
    """Classify a matrix of row vectors; elementwise identical to predict."""
    label_idx, scores, confidence = predict_arrays(model, X)
    return [
        PredictionResult(label=model.classes[label_idx[i]], scores=scores[i], confidence=float(confidence[i]))
        for i in range(len(label_idx))
    ]


def predict_arrays(
    model: TrainedModel, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized core: (label indices, per-class scores, confidence)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got ndim={X.ndim}")
    if X.shape[0] and X.shape[1] != model.dim:
        raise ValueError(f"dim mismatch: model dim {model.dim}, input dim {X.shape[1]}")
    if X.shape[0] == 0:
        k = len(model.classes)
        return (
            np.empty(0, dtype=np.int64),
            np.empty((0, k)),
            np.empty(0),
        )
    if isinstance(model.params, KnnParams):
        return _predict_knn(model, X)
    if isinstance(model.params, LogregParams):
        return _predict_logreg(model, X)
    return _predict_svm(model, X)


def _pairwise_distances(Q: np.ndarray, T: np.ndarray, metric: str) -> np.ndarray:
    if metric == "cosine":
        qn = np.linalg.norm(Q, axis=1)
        tn = np.linalg.norm(T, axis=1)
        if np.any(qn == 0.0) or np.any(tn == 0.0):
            raise ValueError("cosine distance undefined for zero vectors")
        return 1.0 - (Q @ T.T) / np.outer(qn, tn)
    if metric == "euclidean":
        sq = (
            np.sum(Q * Q, axis=1)[:, None]
            + np.sum(T * T, axis=1)[None, :]
            - 2.0 * (Q @ T.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)
    if metric == "manhattan":
        out = np.empty((Q.shape[0], T.shape[0]))
        for r in range(Q.shape[0]):  # avoids an nq*nt*dim broadcast blow-up
            out[r] = np.abs(T - Q[r]).sum(axis=1)
        return out
    raise ValueError(f"unknown metric {metric!r}")


def _predict_knn(model: TrainedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    params = model.params
    assert isinstance(params, KnnParams)
    k = min(int(model.spec.hyperparameters["k"]), params.X.shape[0])
    metric = str(model.spec.hyperparameters["metric"])
    n_classes = len(model.classes)
    dist = _pairwise_distances(X, params.X, metric)
    # Stable sort on distance keeps earlier training rows first on exact ties.
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    neigh_cls = params.y[order]
    neigh_dist = np.take_along_axis(dist, order, axis=1)
    nq = X.shape[0]
    votes = np.zeros((nq, n_classes))
    dsum = np.zeros((nq, n_classes))
    rows = np.repeat(np.arange(nq), k)
    np.add.at(votes, (rows, neigh_cls.ravel()), 1.0)
    np.add.at(dsum, (rows, neigh_cls.ravel()), neigh_dist.ravel())
    vmax = votes.max(axis=1, keepdims=True)
    # Tied classes fall back to smallest summed neighbour distance, then
    # class order (argmin picks the first minimum).
    key = np.where(votes == vmax, dsum, np.inf)
    label_idx = np.argmin(key, axis=1)
    return label_idx, votes, vmax[:, 0] / k


def _predict_logreg(model: TrainedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    params = model.params
    assert isinstance(params, LogregParams)
    logits = X @ params.W.T + params.b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    label_idx = np.argmax(probs, axis=1)
    return label_idx, probs, probs.max(axis=1)


def _predict_svm(model: TrainedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    params = model.params
    assert isinstance(params, SvmParams)
    kernel = str(model.spec.hyperparameters["kernel"])
    degree = int(model.spec.hyperparameters.get("degree", 3))
    n_classes = len(model.classes)
    nq = X.shape[0]
    votes = np.zeros((nq, n_classes))
    decsum = np.zeros((nq, n_classes))
    V = params.vectors
    # One gram against the support-vector union serves every pair.
    G = X @ V.T if V.size else np.zeros((nq, 0))
    if kernel == "rbf":
        qn = np.sum(X * X, axis=1)
        vn = np.sum(V * V, axis=1) if V.size else np.zeros(0)
    for pair in params.pairs:
        idx = pair.sv_idx
        if idx.size == 0:
            f = np.full(nq, pair.bias)
        elif kernel == "linear":
            f = G[:, idx] @ pair.dual_coef + pair.bias
        elif kernel == "poly":
            f = (G[:, idx] + 1.0) ** degree @ pair.dual_coef + pair.bias
        else:
            sq = qn[:, None] + vn[idx][None, :] - 2.0 * G[:, idx]
            np.maximum(sq, 0.0, out=sq)
            f = np.exp(-params.gamma * sq) @ pair.dual_coef + pair.bias
        pos_wins = f >= 0.0
        votes[pos_wins, pair.pos] += 1.0
        votes[~pos_wins, pair.neg] += 1.0
        decsum[:, pair.pos] += f
        decsum[:, pair.neg] -= f
    n_pairs = max(len(params.pairs), 1)
    vmax = votes.max(axis=1, keepdims=True)
    # Tied vote counts are broken by the summed signed decision values,
    # residual ties by class order (first argmax).
    key = np.where(votes == vmax, decsum, -np.inf)
    label_idx = np.argmax(key, axis=1)
    return label_idx, votes, vmax[:, 0] / n_pairs


def pair_decision_values(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Raw one-vs-one decision values, one column per trained pair."""
    params = model.params
    if not isinstance(params, SvmParams):
        raise ValueError("pair_decision_values requires an svm model")
    X = np.asarray(X, dtype=np.float64)
    kernel = str(model.spec.hyperparameters["kernel"])
    degree = int(model.spec.hyperparameters.get("degree", 3))
    cols = []
    for pair in params.pairs:
        sv = params.vectors[pair.sv_idx]
        if sv.size:
            K = kernel_matrix(X, sv, kernel, gamma=params.gamma, degree=degree)
            cols.append(K @ pair.dual_coef + pair.bias)
        else:
            cols.append(np.full(X.shape[0], pair.bias))
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))
