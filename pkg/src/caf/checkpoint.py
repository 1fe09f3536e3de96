"""Self-describing model checkpoint: one JSON file holding the network
declaration, model configuration, normalization statistics, and all
parameter values. Canonical serialization (sorted keys) makes identical
runs write byte-identical files, and float repr round-trips bit-exactly.
"""

from __future__ import annotations

import json

from .data import NormStats
from .errors import SchemaError
from .graph import build_network
from .model import Forecaster, ModelConfig
from .params import ParamStore

FORMAT = "caf-checkpoint-v1"


def save_checkpoint(path, model: Forecaster, params: ParamStore) -> None:
    obj = {
        "format": FORMAT,
        "network": model.net.to_config(),
        "model_config": model.config.to_dict(),
        "norm_stats": model.stats.to_dict() if model.stats is not None else None,
        "params": params.to_json_obj(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path) -> tuple[Forecaster, ParamStore]:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != FORMAT:
        raise SchemaError(f"{path}: not a {FORMAT} file")
    net = build_network(obj["network"])
    config = ModelConfig.from_dict(obj["model_config"])
    stats = NormStats.from_dict(obj["norm_stats"]) if obj["norm_stats"] is not None else None
    model = Forecaster(config, net, stats=stats)
    seed, values = ParamStore.values_from_json_obj(obj["params"])
    params = model.init_params(seed)
    params.load_values(values)
    return model, params
