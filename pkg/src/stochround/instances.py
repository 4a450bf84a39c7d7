"""Instance data model, JSON serialization, generators and metric validation.

Two instance families live here:

* :class:`SuflInstance` -- two-stage stochastic uncapacitated facility location
  with an explicit list of weighted scenarios.
* :class:`ScenarioTreeCip` -- a k-stage covering integer program whose data is
  revealed along a root-to-leaf path of a scenario tree.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROB_TOL = 1e-9
METRIC_TOL = 1e-9


class InstanceError(ValueError):
    """Raised when an instance document is malformed or violates an invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _num(value, field_name: str) -> float:
    # JSON numbers or decimal strings
    if isinstance(value, bool):
        raise InstanceError(field_name, f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise InstanceError(field_name, f"not a decimal string: {value!r}") from None
    raise InstanceError(field_name, f"expected a number, got {type(value).__name__}")


@dataclass(frozen=True, eq=False)
class SuflInstance:
    """Two-stage stochastic UFL instance.

    ``distances[i, j]`` is the facility-client distance, ``f2[a, i]`` the
    stage-II opening cost of facility ``i`` in scenario ``a`` and
    ``scenarios[a]`` the sorted tuple of client indices active in scenario ``a``.
    """

    f1: np.ndarray
    f2: np.ndarray
    distances: np.ndarray
    scenarios: tuple[tuple[int, ...], ...]
    probs: np.ndarray
    demands: np.ndarray | None = None
    facility_ids: tuple[str, ...] | None = None
    client_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("f1", "f2", "distances", "probs"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d = np.ones(self.distances.shape[1]) if self.demands is None else np.array(self.demands, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "scenarios", tuple(tuple(sorted(int(j) for j in s)) for s in self.scenarios))
        if self.facility_ids is None:
            object.__setattr__(self, "facility_ids", tuple(f"f{i}" for i in range(self.n_facilities)))
        if self.client_ids is None:
            object.__setattr__(self, "client_ids", tuple(f"c{j}" for j in range(self.n_clients)))
        self._validate()

    @property
    def n_facilities(self) -> int:
        return self.distances.shape[0]

    @property
    def n_clients(self) -> int:
        return self.distances.shape[1]

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    def _validate(self):
        nf, nd, m = self.n_facilities, self.n_clients, self.n_scenarios
        if nf < 1:
            raise InstanceError("facilities", "at least one facility required")
        if m < 1:
            raise InstanceError("scenarios", "at least one scenario required")
        if self.f1.shape != (nf,):
            raise InstanceError("facilities.f1", "one stage-I cost per facility")
        if self.f2.shape != (m, nf):
            raise InstanceError("facilities.f2_by_scenario", "one stage-II cost per facility and scenario")
        if self.probs.shape != (m,):
            raise InstanceError("scenarios.prob", "one probability per scenario")
        if self.demands.shape != (nd,):
            raise InstanceError("clients.demand", "one demand per client")
        for name, arr in (("facilities.f1", self.f1), ("facilities.f2_by_scenario", self.f2),
                          ("distances", self.distances), ("scenarios.prob", self.probs)):
            if not np.all(np.isfinite(arr)):
                raise InstanceError(name, "non-finite value")
            if np.any(arr < 0):
                raise InstanceError(name, "negative value")
        if np.any(self.demands <= 0) or not np.all(np.isfinite(self.demands)):
            raise InstanceError("clients.demand", "demands must be positive and finite")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise InstanceError("probabilities", f"scenario probabilities sum to {self.probs.sum():.12g}, not 1")
        for a, s in enumerate(self.scenarios):
            if not s:
                raise InstanceError(f"scenarios[{a}].clients", "scenario client set is empty")
            if len(set(s)) != len(s) or s[0] < 0 or s[-1] >= nd:
                raise InstanceError(f"scenarios[{a}].clients", "client indices must be distinct and in range")

    def active(self) -> np.ndarray:
        """Boolean (m, |D|) matrix of scenario membership."""
        mask = np.zeros((self.n_scenarios, self.n_clients), dtype=bool)
        for a, s in enumerate(self.scenarios):
            mask[a, list(s)] = True
        return mask

    def drop_null_scenarios(self) -> SuflInstance:
        """Copy without zero-probability scenarios (identity when there are none)."""
        keep = [a for a in range(self.n_scenarios) if self.probs[a] > 0]
        if len(keep) == self.n_scenarios:
            return self
        return SuflInstance(self.f1, self.f2[keep], self.distances, tuple(self.scenarios[a] for a in keep),
                            self.probs[keep], self.demands, self.facility_ids, self.client_ids)

    def to_dict(self) -> dict:
        doc = {
            "kind": "sufl",
            "facilities": [
                {"id": self.facility_ids[i], "f1": float(self.f1[i]), "f2_by_scenario": [float(v) for v in self.f2[:, i]]}
                for i in range(self.n_facilities)
            ],
            "clients": [{"id": self.client_ids[j]} for j in range(self.n_clients)],
            "distances": [[float(v) for v in row] for row in self.distances],
            "scenarios": [{"prob": float(p), "clients": list(s)} for p, s in zip(self.probs, self.scenarios)],
        }
        if np.any(self.demands != 1.0):
            for j, c in enumerate(doc["clients"]):
                c["demand"] = float(self.demands[j])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> SuflInstance:
        try:
            facs = doc["facilities"]
            clients = doc["clients"]
            dist = doc["distances"]
            scen = doc["scenarios"]
        except KeyError as exc:
            raise InstanceError(str(exc.args[0]), "missing field") from None
        f1 = [_num(f["f1"], f"facilities[{i}].f1") for i, f in enumerate(facs)]
        f2 = [[_num(v, f"facilities[{i}].f2_by_scenario") for v in f["f2_by_scenario"]] for i, f in enumerate(facs)]
        if any(len(row) != len(scen) for row in f2):
            raise InstanceError("facilities.f2_by_scenario", "length must equal the number of scenarios")
        c = [[_num(v, "distances") for v in row] for row in dist]
        if len(c) != len(facs) or any(len(row) != len(clients) for row in c):
            raise InstanceError("distances", "expected a |F| x |D| matrix")
        demands = [_num(cl.get("demand", 1), f"clients[{j}].demand") for j, cl in enumerate(clients)]
        return cls(
            f1=np.array(f1),
            f2=np.array(f2, dtype=float).reshape(len(facs), len(scen)).T,
            distances=np.array(c, dtype=float).reshape(len(facs), len(clients)),
            scenarios=tuple(tuple(int(j) for j in s["clients"]) for s in scen),
            probs=np.array([_num(s["prob"], f"scenarios[{a}].prob") for a, s in enumerate(scen)]),
            demands=np.array(demands),
            facility_ids=tuple(str(f.get("id", f"f{i}")) for i, f in enumerate(facs)),
            client_ids=tuple(str(cl.get("id", f"c{j}")) for j, cl in enumerate(clients)),
        )

    def same_as(self, other: SuflInstance) -> bool:
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class TreeNode:
    parent: int
    prob: float
    costs: np.ndarray
    columns: np.ndarray  # (rows, n_vars)


@dataclass(frozen=True, eq=False)
class ScenarioTreeCip:
    """k-stage covering program on a scenario tree.

    Node 0 is the root.  Each node buys its own block of variables; every leaf
    carries a right-hand side and requires ``sum over its root path of
    columns @ x >= b``.
    """

    stages: int
    rows: int
    nodes: tuple[TreeNode, ...]
    b_by_leaf: np.ndarray
    cip_kind: str = "general"

    def __post_init__(self):
        b = np.array(self.b_by_leaf, dtype=float).reshape(-1, self.rows)
        b.setflags(write=False)
        object.__setattr__(self, "b_by_leaf", b)
        self._validate()

    @property
    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.nodes]
        for v, node in enumerate(self.nodes):
            if node.parent >= 0:
                kids[node.parent].append(v)
        return kids

    @property
    def leaves(self) -> list[int]:
        return [v for v, ch in enumerate(self.children) if not ch]

    def depth(self, v: int) -> int:
        d = 1
        while self.nodes[v].parent >= 0:
            v = self.nodes[v].parent
            d += 1
        return d

    def path(self, v: int) -> list[int]:
        """Root-to-``v`` node list."""
        out = [v]
        while self.nodes[v].parent >= 0:
            v = self.nodes[v].parent
            out.append(v)
        return out[::-1]

    def path_prob(self, v: int) -> float:
        return math.prod(self.nodes[u].prob for u in self.path(v))

    def var_offsets(self) -> list[int]:
        off = [0]
        for node in self.nodes:
            off.append(off[-1] + node.costs.size)
        return off

    @property
    def n_vars(self) -> int:
        return sum(node.costs.size for node in self.nodes)

    @property
    def big_b(self) -> float | None:
        """Smallest right-hand side among rows with b_i >= 1 (None if no such row)."""
        big = self.b_by_leaf[self.b_by_leaf >= 1]
        return float(big.min()) if big.size else None

    def _validate(self):
        if self.stages < 1:
            raise InstanceError("stages", "must be >= 1")
        if not self.nodes or self.nodes[0].parent != -1:
            raise InstanceError("nodes", "node 0 must be the root (parent -1)")
        for v, node in enumerate(self.nodes):
            if v > 0 and not 0 <= node.parent < v:
                raise InstanceError(f"nodes[{v}].parent", "parents must precede children")
            if node.columns.shape != (self.rows, node.costs.size):
                raise InstanceError(f"nodes[{v}].vars", "column length must equal rows")
            if np.any(node.costs < 0) or not np.all(np.isfinite(node.costs)):
                raise InstanceError(f"nodes[{v}].vars.cost", "costs must be finite and nonnegative")
            if np.any(node.columns < 0) or np.any(node.columns > 1):
                raise InstanceError(f"nodes[{v}].vars.column", "matrix entries must lie in [0, 1]")
        for v, ch in enumerate(self.children):
            if ch:
                total = sum(self.nodes[c].prob for c in ch)
                if abs(total - 1.0) > PROB_TOL:
                    raise InstanceError("probabilities", f"children of node {v} have probabilities summing to {total:.12g}")
        leaves = self.leaves
        if any(self.depth(v) != self.stages for v in leaves):
            raise InstanceError("stages", "every leaf must sit at depth `stages`")
        if self.b_by_leaf.shape != (len(leaves), self.rows):
            raise InstanceError("b_by_leaf", "one rhs vector of length `rows` per leaf")
        if np.any(self.b_by_leaf < 0):
            raise InstanceError("b_by_leaf", "rhs must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "kind": "cip-tree",
            "cip_kind": self.cip_kind,
            "stages": self.stages,
            "rows": self.rows,
            "b_by_leaf": [[float(v) for v in b] for b in self.b_by_leaf],
            "nodes": [
                {
                    "parent": node.parent,
                    "prob": float(node.prob),
                    "vars": [{"cost": float(node.costs[j]), "column": [float(v) for v in node.columns[:, j]]}
                             for j in range(node.costs.size)],
                }
                for node in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ScenarioTreeCip:
        try:
            rows = int(doc["rows"])
            nodes = []
            for v, nd in enumerate(doc["nodes"]):
                vars_ = nd["vars"]
                costs = np.array([_num(x["cost"], f"nodes[{v}].vars.cost") for x in vars_], dtype=float)
                cols = np.array([[_num(e, f"nodes[{v}].vars.column") for e in x["column"]] for x in vars_], dtype=float)
                if any(len(x["column"]) != rows for x in vars_):
                    raise InstanceError(f"nodes[{v}].vars.column", "column length must equal rows")
                nodes.append(TreeNode(int(nd["parent"]), _num(nd["prob"], f"nodes[{v}].prob"), costs,
                                      cols.T.reshape(rows, len(vars_))))
            b = [[_num(x, "b_by_leaf") for x in row] for row in doc["b_by_leaf"]]
            return cls(int(doc["stages"]), rows, tuple(nodes), np.array(b, dtype=float),
                       str(doc.get("cip_kind", "general")))
        except KeyError as exc:
            raise InstanceError(str(exc.args[0]), "missing field") from None

    def same_as(self, other: ScenarioTreeCip) -> bool:
        return self.to_dict() == other.to_dict()


# ---------------------------------------------------------------- file I/O

def serialize(instance: SuflInstance | ScenarioTreeCip) -> str:
    return json.dumps(instance.to_dict(), indent=1, sort_keys=False) + "\n"


def instance_from_dict(doc: dict) -> SuflInstance | ScenarioTreeCip:
    if not isinstance(doc, dict):
        raise InstanceError("kind", "top level must be an object")
    kind = doc.get("kind")
    if kind == "sufl":
        inst = SuflInstance.from_dict(doc)
        bad = validate_metric(inst)
        if bad:
            raise InstanceError("distances", f"triangle inequality violated ({len(bad)} triples, first {bad[0]})")
        return inst
    if kind == "cip-tree":
        return ScenarioTreeCip.from_dict(doc)
    raise InstanceError("kind", f"unknown instance kind {kind!r}")


def load_instance(path) -> SuflInstance | ScenarioTreeCip:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError("document", f"parse error: {exc}") from None
    return instance_from_dict(doc)


def save_instance(instance: SuflInstance | ScenarioTreeCip, path) -> None:
    Path(path).write_text(serialize(instance))


# ---------------------------------------------------------------- metric

def metric_violations(dist: np.ndarray, tol: float = METRIC_TOL) -> list[tuple[int, int, int]]:
    """Triples (a, b, c) of a square distance matrix with d(a,c) > d(a,b) + d(b,c) + tol."""
    d = np.asarray(dist, dtype=float)
    n = d.shape[0]
    via = d[:, :, None] + d[None, :, :]  # via[a, b, c] = d(a,b) + d(b,c)
    bad = np.argwhere(d[:, None, :] > via + tol)
    sym = np.allclose(d, d.T)  # symmetric input: report each breach once, with a < c
    return [(int(a), int(b), int(c)) for a, b, c in bad
            if len({a, b, c}) == 3 and (a < c or not sym)] if n >= 3 else []


def full_metric(instance: SuflInstance) -> np.ndarray:
    """Distance matrix over facilities followed by clients.

    Only facility-client distances are given, so same-side distances are the
    shortest two-hop paths through the other side.
    """
    c = instance.distances
    nf, nd = c.shape
    ff = (c[:, None, :] + c[None, :, :]).min(axis=2)
    dd = (c.T[:, None, :] + c.T[None, :, :]).min(axis=2)
    np.fill_diagonal(ff, 0.0)
    np.fill_diagonal(dd, 0.0)
    out = np.zeros((nf + nd, nf + nd))
    out[:nf, :nf] = ff
    out[nf:, nf:] = dd
    out[:nf, nf:] = c
    out[nf:, :nf] = c.T
    return out


def validate_metric(instance: SuflInstance) -> list[tuple[int, int, int]]:
    """Triangle-inequality violations over F followed by D (node indices; clients offset by |F|)."""
    return metric_violations(full_metric(instance))


# ---------------------------------------------------------------- generators

@dataclass
class GeneratorConfig:
    seed: int = 0
    n_facilities: int = 4
    n_clients: int = 6
    n_scenarios: int = 3
    stages: int = 2
    rows: int = 10
    n_vars: int = 6
    kind: str = "sufl"  # sufl | vertex-cover | set-cover | general
    arity: int = 2
    facility_cost: tuple[float, float] = (1.0, 5.0)
    var_cost: tuple[float, float] = (1.0, 3.0)
    inflation: tuple[float, float] = (1.0, 4.0)
    metric: str = "euclidean"  # euclidean | graph | set-system
    set_size: int = 2
    near_range: tuple[float, float] = (1.0, 1.0)
    edge_prob: float = 0.4
    set_density: float = 0.2
    activation: float = 1.0
    b_target: float = 2.0
    demand_range: tuple[float, float] | None = None

    def __post_init__(self):
        sizes = ("n_facilities", "n_clients", "n_scenarios", "stages", "rows", "n_vars", "arity")
        for name in sizes:
            if int(getattr(self, name)) < 1:
                raise InstanceError(f"config.{name}", "sizes must be >= 1")
        for name in ("facility_cost", "var_cost", "inflation"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise InstanceError(f"config.{name}", "range must be nonempty and nonnegative")
        if self.inflation[0] < 1:
            raise InstanceError("config.inflation", "stage-II inflation must be >= 1")
        if self.kind not in ("sufl", "vertex-cover", "set-cover", "general"):
            raise InstanceError("config.kind", f"unknown kind {self.kind!r}")
        if not 0 <= self.activation <= 1 or not 0 < self.edge_prob <= 1 or not 0 < self.set_density <= 1:
            raise InstanceError("config", "probabilities must lie in [0, 1]")
        if self.metric not in ("euclidean", "graph", "set-system"):
            raise InstanceError("config.metric", f"unknown metric {self.metric!r}")
        if not 1.0 <= self.near_range[0] <= self.near_range[1] <= 2.0:
            raise InstanceError("config.near_range", "must lie within [1, 2]")
        if self.b_target < 1:
            raise InstanceError("config.b_target", "must be >= 1")


def _rng(config: GeneratorConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed & (2**64 - 1)))


def generate_sufl(config: GeneratorConfig) -> SuflInstance:
    """Random metric SUFL instance; a pure function of ``config``."""
    rng = _rng(config)
    nf, nd, m = config.n_facilities, config.n_clients, config.n_scenarios
    if config.metric == "euclidean":
        fp = rng.random((nf, 2))
        cp = rng.random((nd, 2))
        dist = np.sqrt(((fp[:, None, :] - cp[None, :, :]) ** 2).sum(axis=2))
    elif config.metric == "set-system":
        # distance in near_range (within [1, 2]) to a few random facilities, 3 to the
        # rest; any path through another client has length >= 3, so the metric holds
        dist = np.full((nf, nd), 3.0)
        k = min(config.set_size, nf)
        for j in range(nd):
            dist[rng.choice(nf, k, replace=False), j] = rng.uniform(*config.near_range, k)
    else:
        # random weights, then shortest-path closure over F u D
        n = nf + nd
        w = rng.uniform(0.1, 1.0, (n, n))
        w = np.minimum(w, w.T)
        np.fill_diagonal(w, 0.0)
        for k in range(n):
            w = np.minimum(w, w[:, [k]] + w[[k], :])
        dist = w[:nf, nf:]
    dist = np.round(dist, 12)
    f1 = rng.uniform(*config.facility_cost, nf)
    f2 = f1[None, :] * rng.uniform(*config.inflation, (m, nf))
    scenarios = []
    for _ in range(m):
        while True:
            mask = rng.random(nd) < 0.5
            if mask.any():
                break
        scenarios.append(tuple(int(j) for j in np.flatnonzero(mask)))
    w = rng.random(m) + 0.1
    probs = w / w.sum()
    demands = None if config.demand_range is None else rng.uniform(*config.demand_range, nd)
    return SuflInstance(f1, f2, dist, tuple(scenarios), probs, demands)


def _tree_shape(stages: int, arity: int) -> list[int]:
    parents = [-1]
    frontier = [0]
    for _ in range(stages - 1):
        nxt = []
        for p in frontier:
            for _ in range(arity):
                parents.append(p)
                nxt.append(len(parents) - 1)
        frontier = nxt
    return parents


def generate_cip_tree(config: GeneratorConfig) -> ScenarioTreeCip:
    """Random scenario-tree CIP of kind vertex-cover, set-cover or general.

    * vertex-cover: rows are the edges of one random base graph; every node has
      one variable per vertex with the incidence column; each leaf activates a
      random subset of edges (``activation``) with b = 1.
    * set-cover: ``rows`` elements and ``n_vars`` random sets (each element in
      at least one set); b = 1 on active elements.
    * general: uniform entries in [0, 1] scaled so the largest is 1; b = ``b_target``
      on active rows.
    """
    rng = _rng(config)
    kind = config.kind if config.kind != "sufl" else "general"
    parents = _tree_shape(config.stages, config.arity)
    nn = len(parents)
    probs = [1.0] * nn
    kids: dict[int, list[int]] = {}
    for v, p in enumerate(parents):
        if p >= 0:
            kids.setdefault(p, []).append(v)
    for p, ch in kids.items():
        w = rng.random(len(ch)) + 0.2
        w = w / w.sum()
        for c, x in zip(ch, w):
            probs[c] = float(x)

    if kind == "vertex-cover":
        nv = config.n_vars
        edges = [e for e in itertools.combinations(range(nv), 2) if rng.random() < config.edge_prob]
        if not edges:
            edges = [(0, 1)] if nv > 1 else []
        if not edges:
            raise InstanceError("config.n_vars", "vertex cover needs at least two vertices")
        cols = np.zeros((len(edges), nv))
        for r, (u, v) in enumerate(edges):
            cols[r, u] = cols[r, v] = 1.0
        rows = len(edges)
        node_cols = [cols] * nn
        b_val = 1.0
    elif kind == "set-cover":
        rows, nv = config.rows, config.n_vars
        cols = (rng.random((rows, nv)) < config.set_density).astype(float)
        for i in range(rows):
            if not cols[i].any():
                cols[i, rng.integers(nv)] = 1.0
        node_cols = [cols] * nn
        b_val = 1.0
    else:
        rows, nv = config.rows, config.n_vars
        node_cols = []
        for _ in range(nn):
            a = rng.random((rows, nv))
            node_cols.append(a)
        top = max(a.max() for a in node_cols)
        node_cols = [np.round(a / top, 12) for a in node_cols]
        b_val = float(config.b_target)

    nodes = []
    base_cost = rng.uniform(*config.var_cost, nv)
    for v in range(nn):
        depth = 1
        u = v
        while parents[u] >= 0:
            u = parents[u]
            depth += 1
        infl = rng.uniform(*config.inflation, nv) if depth > 1 else np.ones(nv)
        nodes.append(TreeNode(parents[v], probs[v], base_cost * infl, node_cols[v]))
    leaves = [v for v in range(nn) if v not in kids]
    b = np.zeros((len(leaves), rows))
    for li in range(len(leaves)):
        act = rng.random(rows) < config.activation
        b[li, act] = b_val
    if kind == "general" and not (b >= 1).any():
        b[0, 0] = b_val
    return ScenarioTreeCip(config.stages, rows, tuple(nodes), b, kind)


def counterexample_instance(eps: float = 0.01) -> SuflInstance:
    """Two clients / two facilities instance used to contrast dual budgets with Val_A.

    Facilities (f1, f2) cost 2 and ``eps`` in stage I and 4 in stage II; all
    distances are 1 except client 1 to facility 2, which is 3; each client is its
    own scenario with probability 1/2.
    """
    return SuflInstance(
        f1=np.array([2.0, eps]),
        f2=np.array([[4.0, 4.0], [4.0, 4.0]]),
        distances=np.array([[1.0, 1.0], [3.0, 1.0]]),
        scenarios=((0,), (1,)),
        probs=np.array([0.5, 0.5]),
        facility_ids=("f1", "f2"),
        client_ids=("c1", "c2"),
    )


__all__ = [
    "InstanceError", "SuflInstance", "TreeNode", "ScenarioTreeCip", "GeneratorConfig",
    "serialize", "instance_from_dict", "load_instance", "save_instance",
    "metric_violations", "full_metric", "validate_metric",
    "generate_sufl", "generate_cip_tree", "counterexample_instance",
]
