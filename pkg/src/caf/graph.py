"""Declared spatiotemporal causal structure and its compiled attention masks.

A forecasting problem declares clusters of variables and directed
cluster-to-cluster cause edges. One edge set serves every hour (the spatial
structure is time-homogeneous), so the whole declaration compiles into two
fixed mask matrices:

* a p x p spatial mask: variable i may attend to variable j iff j's cluster
  causes i's cluster or is i's own cluster;
* an n x n temporal mask: lower-triangular, step i may attend to steps <= i.

Config files are JSON with exactly the keys ``clusters`` (array of
``{"name": ..., "variables": [...]}``), ``edges`` (array of
``[from_name, to_name]`` pairs) and ``target_variable``. Unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PERMIT = True
FORBID = False


@dataclass(frozen=True)
class ClusterSpec:
    """One node of the cause graph: a named, ordered group of variables."""

    id: int  # 1-based, contiguous
    name: str
    variables: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class MultilayerNetwork:
    """Clusters plus directed cause edges (from_id, to_id), one set for all hours."""

    clusters: tuple[ClusterSpec, ...]
    edges: frozenset[tuple[int, int]]
    target_variable: str

    @property
    def p(self) -> int:
        return sum(c.size for c in self.clusters)

    @property
    def variables(self) -> list[str]:
        return [v for c in self.clusters for v in c.variables]

    def partition(self) -> list[range]:
        """Index ranges of each cluster inside the concatenated variable vector."""
        out, start = [], 0
        for c in self.clusters:
            out.append(range(start, start + c.size))
            start += c.size
        return out

    def parents(self, cluster_id: int) -> set[int]:
        """Clusters declared as causes of `cluster_id`."""
        return {a for (a, b) in self.edges if b == cluster_id}

    def cluster_of_variable(self, name: str) -> ClusterSpec:
        for c in self.clusters:
            if name in c.variables:
                return c
        raise ConfigError(f"unknown variable {name!r}")

    def to_config(self) -> dict:
        return {
            "clusters": [
                {"name": c.name, "variables": list(c.variables)} for c in self.clusters
            ],
            "edges": sorted(
                [self.clusters[a - 1].name, self.clusters[b - 1].name]
                for (a, b) in self.edges
            ),
            "target_variable": self.target_variable,
        }


@dataclass(frozen=True)
class MaskMatrix:
    """Dense permit/forbid matrix. True cells permit attention."""

    permit: np.ndarray  # bool, shape (rows, cols)

    def __post_init__(self):
        object.__setattr__(self, "permit", np.asarray(self.permit, dtype=bool))

    @property
    def rows(self) -> int:
        return self.permit.shape[0]

    @property
    def cols(self) -> int:
        return self.permit.shape[1]

    def permit_count(self) -> int:
        return int(self.permit.sum())


@dataclass
class ValidationReport:
    acyclic: bool
    unreachable_clusters: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings


_CONFIG_KEYS = {"clusters", "edges", "target_variable"}


def build_network(config: dict) -> MultilayerNetwork:
    """Compile a parsed declaration into a MultilayerNetwork.

    Raises ConfigError on duplicate names, unknown edge endpoints,
    self-edges, or unknown top-level keys.
    """
    if not isinstance(config, dict):
        raise ConfigError("network config must be a JSON object")
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in _CONFIG_KEYS:
        if key not in config:
            raise ConfigError(f"network config missing key {key!r}")

    clusters: list[ClusterSpec] = []
    seen_names: set[str] = set()
    seen_vars: set[str] = set()
    for i, c in enumerate(config["clusters"], start=1):
        extra = set(c) - {"name", "variables"}
        if extra:
            raise ConfigError(f"unknown cluster keys: {sorted(extra)}")
        name = c.get("name")
        variables = c.get("variables")
        if not name or not isinstance(name, str):
            raise ConfigError(f"cluster {i} needs a non-empty name")
        if name in seen_names:
            raise ConfigError(f"duplicate cluster name {name!r}")
        seen_names.add(name)
        if not variables:
            raise ConfigError(f"cluster {name!r} declares no variables")
        for v in variables:
            if v in seen_vars:
                raise ConfigError(f"duplicate variable name {v!r}")
            seen_vars.add(v)
        clusters.append(ClusterSpec(id=i, name=name, variables=tuple(variables)))
    if not clusters:
        raise ConfigError("at least one cluster is required")

    by_name = {c.name: c.id for c in clusters}
    edges: set[tuple[int, int]] = set()
    for e in config["edges"]:
        if len(e) != 2:
            raise ConfigError(f"edge {e!r} must be a [from, to] pair")
        src, dst = e
        if src not in by_name:
            raise ConfigError(f"edge references unknown cluster {src!r}")
        if dst not in by_name:
            raise ConfigError(f"edge references unknown cluster {dst!r}")
        if src == dst:
            raise ConfigError(f"self-edge on cluster {src!r} (self-influence is implicit)")
        edges.add((by_name[src], by_name[dst]))

    target = config["target_variable"]
    if target not in seen_vars:
        raise ConfigError(f"target_variable {target!r} is not a declared variable")

    return MultilayerNetwork(
        clusters=tuple(clusters), edges=frozenset(edges), target_variable=target
    )


def load_network(path) -> MultilayerNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"network config is not valid JSON: {exc}") from exc
    return build_network(config)


def spatial_mask(net: MultilayerNetwork) -> MaskMatrix:
    """p x p mask: row block I_s may attend to column block I_s' iff s' causes s or s'=s."""
    p = net.p
    permit = np.zeros((p, p), dtype=bool)
    blocks = net.partition()
    for s, rows in enumerate(blocks, start=1):
        allowed = net.parents(s) | {s}
        for sp in allowed:
            cols = blocks[sp - 1]
            permit[rows.start : rows.stop, cols.start : cols.stop] = True
    return MaskMatrix(permit)


def temporal_mask(n: int) -> MaskMatrix:
    """n x n lower-triangular permit pattern: step i sees steps j <= i."""
    if n < 1:
        raise ConfigError(f"temporal mask size must be >= 1, got {n}")
    return MaskMatrix(np.tril(np.ones((n, n), dtype=bool)))


def validate_assumptions(net: MultilayerNetwork) -> ValidationReport:
    """Report (never fail) on cycles and on clusters disconnected from the target.

    Cycles are allowed — masks, not a topological order, realize the
    structure — but usually indicate a declaration mistake, so they warn.
    """
    n = len(net.clusters)
    adj: dict[int, set[int]] = {c.id: set() for c in net.clusters}
    radj: dict[int, set[int]] = {c.id: set() for c in net.clusters}
    for a, b in net.edges:
        adj[a].add(b)
        radj[b].add(a)

    # cycle check: iterative DFS with colors
    color = {c.id: 0 for c in net.clusters}  # 0 white, 1 gray, 2 black
    acyclic = True
    for start in adj:
        if color[start] != 0:
            continue
        stack = [(start, iter(sorted(adj[start])))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(sorted(adj[nxt]))))
                    advanced = True
                    break
                if color[nxt] == 1:
                    acyclic = False
            if not advanced:
                color[node] = 2
                stack.pop()

    target_cluster = net.cluster_of_variable(net.target_variable).id

    def reach(frontier: set[int], nbrs: dict[int, set[int]]) -> set[int]:
        seen = set(frontier)
        todo = list(frontier)
        while todo:
            for nxt in nbrs[todo.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    connected = reach({target_cluster}, adj) | reach({target_cluster}, radj)
    unreachable = [c.name for c in net.clusters if c.id not in connected]

    warnings = []
    if not acyclic:
        warnings.append("cause edges contain a cycle")
    for name in unreachable:
        warnings.append(
            f"cluster {name!r} neither reaches nor is reached from the target cluster"
        )
    return ValidationReport(acyclic=acyclic, unreachable_clusters=unreachable, warnings=warnings)
