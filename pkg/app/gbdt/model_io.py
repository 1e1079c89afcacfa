import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Union

import numpy as np

from app.constants import MODEL_FILE_VERSION
from app.errors import DataError
from app.gbdt.booster import GBDTConfig, GBDTModel, Variant
from app.gbdt.tree import RegressionTree, TreeNode
from app.utils import atomic_write_text

FORMAT_NAME = "triage-gbdt"
NODE_COLUMNS = (
    "round",
    "class",
    "node",
    "parent",
    "feature",
    "threshold",
    "default_left",
    "left",
    "right",
    "weight",
)


def model_to_dict(model: GBDTModel) -> dict:
    rows = []
    for t, round_trees in enumerate(model.trees):
        for k, tree in enumerate(round_trees):
            for n in tree.nodes:
                rows.append(
                    [
                        t,
                        k,
                        n.node_id,
                        n.parent,
                        n.feature,
                        None if math.isnan(n.threshold) else n.threshold,
                        n.default_left,
                        n.left,
                        n.right,
                        n.weight,
                    ]
                )
    return {
        "format": FORMAT_NAME,
        "version": MODEL_FILE_VERSION,
        "variant": model.variant.value,
        "config": asdict(model.config),
        "n_features": model.n_features,
        "base_score": [float(v) for v in model.base_score],
        "best_iteration": model.best_iteration,
        "n_rounds": model.n_rounds,
        "eval_history": [float(v) for v in model.eval_history],
        "columns": list(NODE_COLUMNS),
        "nodes": rows,
    }


def model_from_dict(payload: dict) -> GBDTModel:
    if payload.get("format") != FORMAT_NAME:
        raise DataError("not a triage GBDT model file")
    if payload.get("version") != MODEL_FILE_VERSION:
        raise DataError(f"unsupported model file version {payload.get('version')}")
    if payload.get("columns") != list(NODE_COLUMNS):
        raise DataError("model file tree table has unexpected columns")

    variant = Variant(payload["variant"])
    per_round = len(payload["base_score"])
    grouped: dict[tuple[int, int], list[TreeNode]] = {}
    for t, k, node_id, parent, feature, threshold, default_left, left, right, weight in payload["nodes"]:
        grouped.setdefault((t, k), []).append(
            TreeNode(
                node_id=node_id,
                parent=parent,
                feature=feature,
                threshold=math.nan if threshold is None else float(threshold),
                default_left=bool(default_left),
                left=left,
                right=right,
                weight=float(weight),
            )
        )

    trees = []
    for t in range(payload["n_rounds"]):
        round_trees = []
        for k in range(per_round):
            nodes = sorted(grouped.get((t, k), []), key=lambda n: n.node_id)
            if not nodes:
                raise DataError(f"model file is missing tree ({t}, {k})")
            round_trees.append(RegressionTree(nodes))
        trees.append(round_trees)

    return GBDTModel(
        variant=variant,
        config=GBDTConfig(**payload["config"]),
        n_features=payload["n_features"],
        base_score=np.asarray(payload["base_score"], dtype=np.float64),
        trees=trees,
        best_iteration=payload["best_iteration"],
        eval_history=list(payload["eval_history"]),
    )


def save_model(model: GBDTModel, path: Union[str, Path]) -> None:
    atomic_write_text(Path(path), json.dumps(model_to_dict(model), ensure_ascii=False))


def load_model(path: Union[str, Path]) -> GBDTModel:
    with open(path, "r", encoding="utf-8") as f:
        return model_from_dict(json.load(f))
