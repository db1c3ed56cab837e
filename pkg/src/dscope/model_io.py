"""Versioned binary container for trained models.

Layout: 16-byte magic ``DSCOPE-MDL-V001\\0``, u64 little-endian length of a
UTF-8 JSON header, the header, then the raw array blocks the header
describes, in order. Arrays are stored as little-endian bytes so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .classifiers import (
    ClassifierSpec,
    KnnParams,
    LogregParams,
    SvmPair,
    SvmParams,
    TrainedModel,
)
from .errors import DataError

MAGIC = b"DSCOPE-MDL-V001\x00"

_DTYPES = {"f8": "<f8", "i8": "<i8"}


def _blocks_for(model: TrainedModel) -> tuple[dict, list[np.ndarray]]:
    p = model.params
    if isinstance(p, KnnParams):
        meta = {"family_params": "knn"}
        blocks = [p.X.astype("<f8"), p.y.astype("<i8")]
        shapes = [("X", "f8", p.X.shape), ("y", "i8", p.y.shape)]
    elif isinstance(p, LogregParams):
        meta = {"family_params": "logreg", "converged": p.converged, "n_iter": p.n_iter}
        blocks = [p.W.astype("<f8"), p.b.astype("<f8")]
        shapes = [("W", "f8", p.W.shape), ("b", "f8", p.b.shape)]
    elif isinstance(p, SvmParams):
        meta = {
            "family_params": "svm",
            "gamma": p.gamma,
            "pairs": [
                {"pos": q.pos, "neg": q.neg, "bias": q.bias, "converged": q.converged}
                for q in p.pairs
            ],
        }
        blocks = [p.vectors.astype("<f8")]
        shapes = [("vectors", "f8", p.vectors.shape)]
        for k, q in enumerate(p.pairs):
            blocks += [q.sv_idx.astype("<i8"), q.dual_coef.astype("<f8")]
            shapes += [
                (f"pair{k}.sv_idx", "i8", q.sv_idx.shape),
                (f"pair{k}.dual_coef", "f8", q.dual_coef.shape),
            ]
    else:  # pragma: no cover
        raise TypeError(f"unknown params type {type(p)}")
    meta["blocks"] = [{"name": n, "dtype": d, "shape": list(s)} for n, d, s in shapes]
    return meta, blocks


def save_model(model: TrainedModel, path: str | Path) -> None:
    header = {
        "family": model.spec.family,
        "hyperparameters": dict(model.spec.hyperparameters),
        "classes": list(model.classes),
        "dim": model.dim,
        "warnings": list(model.warnings),
    }
    params_meta, blocks = _blocks_for(model)
    header.update(params_meta)
    payload = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            for block in blocks:
                fh.write(np.ascontiguousarray(block).tobytes())
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    with path.open("rb") as fh:
        magic = fh.read(16)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic; not a model file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt model header: {exc}") from exc
        arrays = {}
        for spec in header["blocks"]:
            dtype = np.dtype(_DTYPES[spec["dtype"]])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataError(f"{path}: truncated block {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"]).copy()

    cspec = ClassifierSpec(family=header["family"], hyperparameters=header["hyperparameters"])
    kind = header["family_params"]
    if kind == "knn":
        params: KnnParams | LogregParams | SvmParams = KnnParams(X=arrays["X"], y=arrays["y"])
    elif kind == "logreg":
        params = LogregParams(
            W=arrays["W"], b=arrays["b"], converged=header["converged"], n_iter=header["n_iter"]
        )
    elif kind == "svm":
        pairs = tuple(
            SvmPair(
                pos=q["pos"],
                neg=q["neg"],
                sv_idx=arrays[f"pair{k}.sv_idx"],
                dual_coef=arrays[f"pair{k}.dual_coef"],
                bias=q["bias"],
                converged=q["converged"],
            )
            for k, q in enumerate(header["pairs"])
        )
        params = SvmParams(gamma=header["gamma"], vectors=arrays["vectors"], pairs=pairs)
    else:
        raise DataError(f"{path}: unknown params kind {kind!r}")
    return TrainedModel(
        spec=cspec,
        classes=tuple(header["classes"]),
        dim=header["dim"],
        params=params,
        warnings=tuple(header["warnings"]),
    )
