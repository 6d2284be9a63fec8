"""JSON model files (``mixnet-1`` and ``pseudodiscrete-1``).

Floats are written with Python's shortest round-trip repr, so a loaded model
scores bit-identically to the in-memory one.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .baselines import CPT, PseudoDiscreteNet
from .dataset import DiscretizationMap, Scaling, Schema
from .mixtable import MixtureTable
from .network import MixNet, MixNetStructure, Node

MIXNET_FORMAT = "mixnet-1"
PSEUDO_FORMAT = "pseudodiscrete-1"


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _plain(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def model_to_json(model, scaling: Scaling | None = None, metadata: dict | None = None) -> dict:
    common = {
        "schema": model.schema.to_json(),
        "symbols": model.symbols or {},
        "scaling": scaling.to_json() if scaling is not None else None,
        "structure": model.structure.to_json(),
        "config": _plain(model.config),
        "metadata": _plain(metadata or {}),
    }
    if isinstance(model, MixNet):
        nodes = {
            v: {"parents": list(n.parents), "joint": n.joint.to_json(), "parent_marginal": n.parent_marginal.to_json()}
            for v, n in model.nodes.items()
        }
        return {"format": MIXNET_FORMAT, **common, "nodes": nodes}
    if isinstance(model, PseudoDiscreteNet):
        return {
            "format": PSEUDO_FORMAT,
            **common,
            "F": model.F,
            "cuts": model.dmap.to_json(),
            "cpts": {v: c.to_json() for v, c in model.cpts.items()},
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(d: dict):
    """Returns ``(model, scaling_or_None, metadata)``."""
    fmt = d.get("format")
    schema = Schema.from_json(d["schema"])
    structure = MixNetStructure.from_json(d["structure"])
    scaling = Scaling.from_json(d["scaling"]) if d.get("scaling") else None
    symbols = {k: list(v) for k, v in d.get("symbols", {}).items()}
    if fmt == MIXNET_FORMAT:
        nodes = {
            v: Node(v, tuple(n["parents"]), MixtureTable.from_json(n["joint"]), MixtureTable.from_json(n["parent_marginal"]))
            for v, n in d["nodes"].items()
        }
        model = MixNet(schema, structure, nodes, d.get("config"), symbols)
    elif fmt == PSEUDO_FORMAT:
        cpts = {v: CPT.from_json(c) for v, c in d["cpts"].items()}
        model = PseudoDiscreteNet(schema, structure, d["F"], DiscretizationMap.from_json(d["cuts"]), cpts, symbols)
        model.config = d.get("config", {})
    else:
        raise ValueError(f"unknown model format {fmt!r}")
    return model, scaling, d.get("metadata", {})


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def save_model(model, path, scaling: Scaling | None = None, metadata: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(model_to_json(model, scaling, metadata), indent=1))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
