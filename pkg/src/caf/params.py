"""Named trainable parameters and their on-disk container.

Initialization is derived per parameter name from the store seed, so the
values a parameter receives do not depend on registration order. Weights are
uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] (fan_in = the contracted input
width; 1 for scalar lifts and lookup tables); biases start at zero.

Checkpoints are canonical JSON (sorted keys, fixed separators). Python's
float repr round-trips, so save/load is bit-exact and identical runs write
byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError
from .rng import Rng, derive_seed


class ParamStore:
    """Ordered map of parameter name -> trainable Tensor, plus the init seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, shape, fan_in: int | None = None, zero: bool = False) -> Tensor:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        if zero:
            values = np.zeros(shape)
        else:
            if fan_in is None:
                fan_in = shape[0] if len(shape) >= 2 else 1
            bound = 1.0 / np.sqrt(fan_in)
            rng = Rng(derive_seed(self.seed, "init/" + name))
            values = rng.uniform_range(-bound, bound, shape)
        t = Tensor(values, requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def n_values(self) -> int:
        return sum(t.size for t in self.params.values())

    def clone_values(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self.params):
            missing = set(self.params) - set(values)
            extra = set(values) - set(self.params)
            raise ConfigError(f"parameter name mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        for name, arr in values.items():
            t = self.params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.shape:
                raise ConfigError(f"parameter {name!r} shape {arr.shape} != expected {t.shape}")
            t.values = arr.copy()

    # -- serialization --------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "params": {
                name: {"shape": list(t.shape), "values": t.values.ravel().tolist()}
                for name, t in self.params.items()
            },
        }

    @staticmethod
    def values_from_json_obj(obj: dict) -> tuple[int, dict[str, np.ndarray]]:
        seed = int(obj["seed"])
        values = {
            name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in obj["params"].items()
        }
        return seed, values

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, sort_keys=True, separators=(",", ":"))

    def load(self, path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        seed, values = self.values_from_json_obj(obj)
        self.seed = seed
        self.load_values(values)
