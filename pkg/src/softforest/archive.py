"""Model persistence: a versioned, self-describing text archive.

Line 1 is a JSON header (format version, model kind, prior/chain
configuration, covariate transforms, outcome scaler); each following line
is one saved iteration with its serialized trees.  Trees are written as
nested records whose splits name the original column plus a dummy index,
so archives stay readable and language-portable.  Paths ending in ``.gz``
are gzip-compressed.  Floats round-trip exactly through JSON, so a
load-then-predict reproduces in-memory predictions bit for bit.
"""

from __future__ import annotations

import gzip
import inspect
import json

import numpy as np

from .errors import ContractError
from .models import (
    BayesianCausalForest,
    PartialLinearForest,
    SoftForestProbit,
    SoftForestRegressor,
    VaryingCoefficientForest,
)
from .preprocess import (
    CovariateTransforms,
    DummyTransform,
    OutcomeScaler,
    QuantileTransform,
)
from .trees import LEAF

__all__ = ["save_archive", "load_archive", "FORMAT_VERSION"]

FORMAT_VERSION = 1

_HYPER_KEYS = ("num_tree", "gamma", "beta", "k", "tau_scale", "soft")
_OPT_KEYS = (
    "num_burn",
    "num_save",
    "num_thin",
    "update_s",
    "update_sigma",
    "update_sigma_mu",
    "update_tau",
    "cache_trees",
)


def _column_meta(transforms: CovariateTransforms) -> list[tuple[str, int]]:
    """(original column name, dummy index) for every design column."""
    meta = []
    for t in transforms.transforms:
        for k in range(t.num_cols):
            meta.append((t.name, k))
    return meta


def _tree_to_nested(record: dict, meta: list[tuple[str, int]]) -> dict:
    var, val = record["var"], record["val"]
    pos = 0

    def build():
        nonlocal pos
        v, x = var[pos], val[pos]
        pos += 1
        if v == LEAF:
            return {"mu": float(x)}
        name, dummy = meta[v]
        node = {"col": name, "dummy": dummy, "cut": float(x)}
        node["left"] = build()
        node["right"] = build()
        return node

    return {"tau": float(record["tau"]), "root": build()}


def _tree_from_nested(nested: dict, index: dict[tuple[str, int], int]) -> dict:
    var: list[int] = []
    val: list[float] = []

    def walk(node: dict) -> None:
        if "mu" in node:
            var.append(LEAF)
            val.append(float(node["mu"]))
            return
        var.append(index[(node["col"], node["dummy"])])
        val.append(float(node["cut"]))
        walk(node["left"])
        walk(node["right"])

    walk(nested["root"])
    return {"tau": float(nested["tau"]), "var": var, "val": val}


def _transforms_to_json(transforms: CovariateTransforms) -> list[dict]:
    out = []
    for t in transforms.transforms:
        if isinstance(t, QuantileTransform):
            out.append(
                {
                    "type": "quantile",
                    "name": t.name,
                    "knots": [float(x) for x in t.knots],
                    "cdf": [float(x) for x in t.cdf],
                }
            )
        else:
            out.append({"type": "dummy", "name": t.name, "levels": list(t.levels)})
    return out


def _transforms_from_json(items: list[dict]) -> CovariateTransforms:
    transforms = []
    for item in items:
        if item["type"] == "quantile":
            transforms.append(
                QuantileTransform(
                    item["name"],
                    np.array(item["knots"], dtype=np.float64),
                    np.array(item["cdf"], dtype=np.float64),
                )
            )
        elif item["type"] == "dummy":
            transforms.append(DummyTransform(item["name"], list(item["levels"])))
        else:
            raise ContractError(f"unknown transform type '{item['type']}'")
    return CovariateTransforms(transforms)


def _model_kind(model) -> str:
    if isinstance(model, (BayesianCausalForest, VaryingCoefficientForest)):
        return "vc"
    if isinstance(model, PartialLinearForest):
        return "gbart"
    if isinstance(model, SoftForestProbit):
        return "probit"
    if isinstance(model, SoftForestRegressor):
        return "regression"
    raise ValueError(f"cannot archive a {type(model).__name__}")


_KIND_CLASS = {
    "regression": SoftForestRegressor,
    "probit": SoftForestProbit,
    "vc": VaryingCoefficientForest,
    "gbart": PartialLinearForest,
}

_TREE_KEYS = {
    "regression": ("trees",),
    "probit": ("trees",),
    "vc": ("alpha_trees", "beta_trees"),
    "gbart": ("trees",),
}


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_archive(path, model, extra: dict | None = None) -> None:
    """Write a fitted model to ``path``; see the module docstring."""
    kind = _model_kind(model)
    if not hasattr(model, "transforms_"):
        raise ValueError("model must be fitted before archiving")
    meta = _column_meta(model.transforms_)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "hypers": {key: getattr(model, key) for key in _HYPER_KEYS},
        "opts": {key: getattr(model, key) for key in _OPT_KEYS if hasattr(model, key)},
        "scaler": {
            "mode": model.scaler_.mode,
            "location": float(model.scaler_.location),
            "scale": float(model.scaler_.scale),
        },
        "transforms": _transforms_to_json(model.transforms_),
        "cached": bool(getattr(model, "tree_records_", None)),
    }
    if kind == "probit":
        header["classes"] = [c.item() if hasattr(c, "item") else c for c in model.classes_]
    if extra:
        header.update(extra)
    records = model.tree_records_ or []
    if not records:
        # no cached trees: persist what scalar draws exist per iteration
        sigma = getattr(model, "sigma_draws_", None)
        if sigma is not None:
            scale = model.scaler_.scale
            records = [{"sigma": float(s / scale)} for s in sigma]
    header["num_iterations"] = len(records)
    with _open(path, "w") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for rec in records:
            line = {}
            if "sigma" in rec:
                line["sigma"] = float(rec["sigma"])
            if "beta" in rec:
                line["beta"] = [float(v) for v in rec["beta"]]
            for key in _TREE_KEYS[kind]:
                if key in rec:
                    line[key] = [_tree_to_nested(t, meta) for t in rec[key]]
            fh.write(json.dumps(line, separators=(",", ":")) + "\n")


def load_archive(path):
    """Reconstruct a predict-ready estimator from an archive file."""
    with _open(path, "r") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ContractError(
                f"archive format version {header.get('format_version')} "
                f"is not supported (expected {FORMAT_VERSION})"
            )
        kind = header["kind"]
        if kind not in _KIND_CLASS:
            raise ContractError(f"unknown model kind '{kind}'")
        transforms = _transforms_from_json(header["transforms"])
        meta = _column_meta(transforms)
        index = {pair: j for j, pair in enumerate(meta)}
        records = []
        cached = header.get("cached", True)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            rec = {}
            if "sigma" in raw:
                rec["sigma"] = float(raw["sigma"])
            if "beta" in raw:
                rec["beta"] = [float(v) for v in raw["beta"]]
            for key in _TREE_KEYS[kind]:
                if key in raw:
                    rec[key] = [_tree_from_nested(t, index) for t in raw[key]]
            records.append(rec)
    cls = _KIND_CLASS[kind]
    params = {**header["hypers"], **header["opts"]}
    allowed = inspect.signature(cls.__init__).parameters
    model = cls(**{k: v for k, v in params.items() if k in allowed})
    model.transforms_ = transforms
    model.column_map_ = transforms.column_map
    model.variables_ = transforms.variable_names
    scaler = header["scaler"]
    model.scaler_ = OutcomeScaler(scaler["mode"], scaler["location"], scaler["scale"])
    model.tree_records_ = records if cached else None
    if kind == "probit":
        model.classes_ = np.array(header["classes"])
    model.archive_header_ = header
    return model
