"""JSON model persistence.

The document keeps per-expert importance both as r (human-readable) and
log_r (the in-memory parameterization); load reads the log-space values
so save -> load -> save is byte-identical, since exp(log(r)) need not
round-trip exactly in floating point. Same for p0 / logit_p0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Standardizer
from .errors import InvalidModelError, TreeStructureError
from .tree import (
    CLASSIFICATION,
    REGRESSION,
    BranchNode,
    LeafNode,
    TreeModel,
    check_tree,
)

FORMAT_VERSION = 1


@dataclass
class LoadedModel:
    tree: TreeModel
    standardizer: Standardizer | None
    metadata: dict


def _node_record(node, task):
    if isinstance(node, LeafNode):
        record = {"kind": "leaf", "sample_count": int(node.sample_count)}
        record["distribution"] = (
            None if node.distribution is None else [float(v) for v in node.distribution]
        )
        record["mean"] = None if node.mean is None else float(node.mean)
        return record
    return {
        "kind": "branch",
        "logit_p0": float(node.logit_p0),
        "p0": node.p0,
        "experts": [
            {
                "log_r": float(node.log_r[k]),
                "r": float(math.exp(node.log_r[k])),
                "beta": [float(v) for v in node.beta[k]],
            }
            for k in range(node.n_experts)
        ],
        "left": _node_record(node.left, task),
        "right": _node_record(node.right, task),
    }


def model_document(tree: TreeModel, standardizer=None, metadata=None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "task": tree.task,
        "n_classes": tree.n_classes,
        "feature_dim": int(tree.feature_dim),
        "annealing_lambda": float(tree.annealing_lambda),
        "standardization": None
        if standardizer is None
        else {
            "mean": [float(v) for v in standardizer.mean],
            "scale": [float(v) for v in standardizer.scale],
        },
        "metadata": metadata or {},
        "root": _node_record(tree.root, tree.task),
    }
    return doc


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def save_model(path, tree: TreeModel, standardizer=None, metadata=None) -> None:
    text = dumps_document(model_document(tree, standardizer, metadata))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _build_node(record, task):
    try:
        kind = record["kind"]
    except (TypeError, KeyError):
        raise InvalidModelError("node record is missing its kind") from None
    if kind == "leaf":
        dist = record.get("distribution")
        mean = record.get("mean")
        if task == REGRESSION and dist is not None:
            raise InvalidModelError("regression leaf carries a class distribution")
        if task == CLASSIFICATION and mean is not None:
            raise InvalidModelError("classification leaf carries a mean value")
        return LeafNode(
            distribution=dist, mean=mean, sample_count=record.get("sample_count", 0)
        )
    if kind == "branch":
        experts = record.get("experts") or []
        if not experts:
            raise InvalidModelError("branch node has no experts")
        try:
            beta = np.array([e["beta"] for e in experts], dtype=np.float64)
            log_r = np.array([e["log_r"] for e in experts], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModelError(f"malformed expert record: {exc}") from None
        try:
            node = BranchNode(beta, log_r, logit_p0=record["logit_p0"])
        except (TreeStructureError, KeyError) as exc:
            raise InvalidModelError(f"malformed branch record: {exc}") from None
        node.left = _build_node(record["left"], task)
        node.right = _build_node(record["right"], task)
        return node
    raise InvalidModelError(f"unknown node kind {kind!r}")


def load_model(path) -> LoadedModel:
    """Load and validate a model document; raises InvalidModelError naming
    the first violated invariant."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidModelError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidModelError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise InvalidModelError(f"unsupported format_version {version!r}")
    task = doc.get("task")
    if task not in (CLASSIFICATION, REGRESSION):
        raise InvalidModelError(f"unknown task {task!r}")
    root = _build_node(doc.get("root"), task)
    try:
        tree = TreeModel(
            root=root,
            task=task,
            feature_dim=int(doc["feature_dim"]),
            n_classes=doc.get("n_classes"),
            annealing_lambda=float(doc.get("annealing_lambda", 1.0)),
        )
        check_tree(tree)
    except (TreeStructureError, KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(str(exc)) from None
    standardizer = None
    std = doc.get("standardization")
    if std is not None:
        try:
            standardizer = Standardizer(
                mean=np.asarray(std["mean"], dtype=np.float64),
                scale=np.asarray(std["scale"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModelError(f"malformed standardization record: {exc}") from None
        if standardizer.mean.shape != standardizer.scale.shape or standardizer.mean.shape != (
            tree.feature_dim,
        ):
            raise InvalidModelError("standardization statistics do not match feature_dim")
    return LoadedModel(tree=tree, standardizer=standardizer, metadata=doc.get("metadata") or {})
