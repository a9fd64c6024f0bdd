"""Discrete Bayesian networks: structure, CPTs, parameter learning, exact inference and sampling.

CPT rows are stored in row-major parent-state order with the last parent
varying fastest, i.e. ``table.reshape(*parent_arities, child_arity)`` gives a
factor whose axes are ``(*parents, child)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .accident_data import Dataset
from .schema import SchemaError, VariableSchema

Evidence = Mapping[str, "str | int"]


class CycleError(ValueError):
    pass


class ZeroProbabilityEvidence(ValueError):
    """The conditioning evidence has probability zero under the network."""


class Dag:
    """Immutable directed acyclic graph over named nodes."""

    __slots__ = ("nodes", "edges", "_parents", "_children", "_order")

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        self.nodes = tuple(nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node names")
        edge_list = [(str(u), str(v)) for u, v in edges]
        if len(set(edge_list)) != len(edge_list):
            raise ValueError("duplicate edges")
        self.edges = frozenset(edge_list)
        pos = {n: i for i, n in enumerate(self.nodes)}
        parents = {n: [] for n in self.nodes}
        children = {n: [] for n in self.nodes}
        for u, v in self.edges:
            if u not in pos or v not in pos:
                raise ValueError(f"edge {u}->{v} references an unknown node")
            if u == v:
                raise CycleError(f"self-loop on {u}")
            parents[v].append(u)
            children[u].append(v)
        self._parents = {n: tuple(sorted(p, key=pos.get)) for n, p in parents.items()}
        self._children = {n: tuple(sorted(c, key=pos.get)) for n, c in children.items()}
        self._order = self._toposort(pos)

    def _toposort(self, pos) -> tuple[str, ...]:
        indegree = {n: len(self._parents[n]) for n in self.nodes}
        ready = [n for n in self.nodes if indegree[n] == 0]
        order = []
        while ready:
            ready.sort(key=pos.get)
            node = ready.pop(0)
            order.append(node)
            for child in self._children[node]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    ready.append(child)
        if len(order) != len(self.nodes):
            raise CycleError("graph contains a directed cycle")
        return tuple(order)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges))

    def __repr__(self):
        return f"Dag({list(self.nodes)}, {sorted(self.edges)})"

    def parents(self, node: str) -> tuple[str, ...]:
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        return self._children[node]

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def ancestors(self, nodes: Iterable[str]) -> set[str]:
        """Ancestors of ``nodes`` including the nodes themselves."""
        seen = set()
        stack = list(nodes)
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self._parents[n])
        return seen

    def descendants(self, node: str) -> set[str]:
        """Descendants of ``node`` including ``node``."""
        seen = set()
        stack = [node]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self._children[n])
        return seen

    def has_path(self, src: str, dst: str) -> bool:
        return dst in self.descendants(src)

    def with_edges(self, add=(), remove=()) -> "Dag":
        remove = set(remove)
        return Dag(self.nodes, [e for e in self.edges if e not in remove] + list(add))

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, payload) -> "Dag":
        return cls(payload["nodes"], [tuple(e) for e in payload["edges"]])

    def to_dot(self) -> str:
        lines = ["digraph G {"]
        lines += [f'  "{n}";' for n in self.nodes]
        lines += [f'  "{u}" -> "{v}";' for u, v in sorted(self.edges)]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Cpt:
    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 2:
            raise ValueError(f"CPT for {self.child!r} must be 2-D")
        if (table < 0).any() or (table > 1).any():
            raise ValueError(f"CPT for {self.child!r} has entries outside [0, 1]")
        if np.abs(table.sum(axis=1) - 1.0).max(initial=0.0) > 1e-9:
            raise ValueError(f"CPT rows for {self.child!r} do not sum to 1")
        table.setflags(write=False)
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", table)


class CausalBayesNet:
    """A DAG over a schema plus one CPT per node."""

    def __init__(self, schema: VariableSchema, dag: Dag, cpts: Mapping[str, Cpt | np.ndarray]):
        if set(schema.names) != set(dag.nodes):
            raise SchemaError("dag nodes must match the schema variables")
        self.schema = schema
        self.dag = dag
        self.cpts = {}
        for name in schema.names:
            if name not in cpts:
                raise SchemaError(f"missing CPT for {name!r}")
            cpt = cpts[name]
            if not isinstance(cpt, Cpt):
                cpt = Cpt(name, dag.parents(name), cpt)
            if cpt.parents != dag.parents(name):
                raise ValueError(f"CPT parents for {name!r} do not match the dag")
            rows = math.prod(schema.arity(p) for p in cpt.parents)
            if cpt.table.shape != (rows, schema.arity(name)):
                raise ValueError(f"CPT for {name!r} has shape {cpt.table.shape}, expected {(rows, schema.arity(name))}")
            self.cpts[name] = cpt

    def __repr__(self):
        return f"CausalBayesNet({list(self.schema.names)}, edges={sorted(self.dag.edges)})"

    def parents(self, name: str) -> tuple[str, ...]:
        return self.dag.parents(name)

    def factor_table(self, name: str) -> np.ndarray:
        """CPT reshaped to axes ``(*parents, child)``."""
        cpt = self.cpts[name]
        shape = tuple(self.schema.arity(p) for p in cpt.parents) + (self.schema.arity(name),)
        return cpt.table.reshape(shape)

    def _row_index(self, name: str, assignment: Mapping[str, int]) -> int:
        idx = 0
        for p in self.cpts[name].parents:
            idx = idx * self.schema.arity(p) + assignment[p]
        return idx

    def log_joint(self, assignment: Evidence) -> float:
        """Log probability of a full assignment (sum of log CPT lookups)."""
        a = self.schema.encode(assignment)
        total = 0.0
        for name in self.schema.names:
            p = self.cpts[name].table[self._row_index(name, a), a[name]]
            if p <= 0.0:
                return -math.inf
            total += math.log(p)
        return total

    def sample(self, n: int, seed: int = 0) -> Dataset:
        """Ancestral sampling; bit-identical output for a fixed seed."""
        if n < 0:
            raise ValueError("n must be non-negative")
        rng = np.random.default_rng(seed)
        out = np.zeros((n, len(self.schema)), dtype=np.int64)
        for name in self.dag.topological_order():
            cpt = self.cpts[name]
            rows = np.zeros(n, dtype=np.int64)
            for p in cpt.parents:
                rows = rows * self.schema.arity(p) + out[:, self.schema.index(p)]
            cum = np.cumsum(cpt.table, axis=1)
            u = rng.random(n)
            states = (u[:, None] >= cum[rows]).sum(axis=1)
            out[:, self.schema.index(name)] = np.minimum(states, self.schema.arity(name) - 1)
        return Dataset(self.schema, out)

    def to_json(self) -> dict:
        return {
            "schema": self.schema.to_json(),
            "edges": [list(e) for e in sorted(self.dag.edges)],
            "cpts": {
                name: {"parents": list(cpt.parents), "rows": cpt.table.tolist()} for name, cpt in self.cpts.items()
            },
        }

    @classmethod
    def from_json(cls, payload: dict) -> "CausalBayesNet":
        schema = VariableSchema.from_json(payload["schema"])
        dag = Dag(schema.names, [tuple(e) for e in payload["edges"]])
        cpts = {name: Cpt(name, tuple(c["parents"]), np.asarray(c["rows"])) for name, c in payload["cpts"].items()}
        return cls(schema, dag, cpts)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CausalBayesNet":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_parameters(dag: Dag, data: Dataset, pseudocount: float = 1.0) -> CausalBayesNet:
    """Dirichlet-smoothed maximum-likelihood CPTs.

    ``P(x_k | pa_j) = (N_jk + a) / (N_j + a * r)``. With ``pseudocount=0``
    parent configurations never observed in the data get a uniform row.
    """
    if pseudocount < 0:
        raise ValueError("pseudocount must be non-negative")
    if pseudocount == 0 and len(data) == 0:
        raise ValueError("cannot fit parameters from an empty dataset without smoothing")
    schema = VariableSchema(tuple((n, data.schema.states(n)) for n in dag.nodes))
    cpts = {}
    for name in dag.nodes:
        parents = dag.parents(name)
        r = schema.arity(name)
        q = math.prod(schema.arity(p) for p in parents)
        rows = np.zeros(len(data), dtype=np.int64)
        for p in parents:
            rows = rows * schema.arity(p) + data.column(p)
        counts = np.bincount(rows * r + data.column(name), minlength=q * r).reshape(q, r).astype(float)
        counts += pseudocount
        totals = counts.sum(axis=1, keepdims=True)
        empty = totals[:, 0] == 0
        counts[empty] = 1.0
        totals[empty] = r
        cpts[name] = Cpt(name, parents, counts / totals)
    return CausalBayesNet(schema, dag, cpts)


class _Factor:
    __slots__ = ("vars", "table")

    def __init__(self, vars_, table):
        self.vars = tuple(vars_)
        self.table = table

    def aligned(self, union: Sequence[str]) -> np.ndarray:
        perm = sorted(range(len(self.vars)), key=lambda i: union.index(self.vars[i]))
        t = np.transpose(self.table, perm)
        shape = []
        ordered = [self.vars[i] for i in perm]
        it = iter(t.shape)
        for v in union:
            shape.append(next(it) if v in ordered else 1)
        return t.reshape(shape)


def _product(factors: list[_Factor]) -> _Factor:
    union = []
    for f in factors:
        for v in f.vars:
            if v not in union:
                union.append(v)
    table = np.ones([1] * len(union))
    for f in factors:
        table = table * f.aligned(union)
    return _Factor(union, table)


def _min_fill_order(factors: list[_Factor], eliminate: set[str]) -> list[str]:
    neighbours = {v: set() for v in eliminate}
    for f in factors:
        for v in f.vars:
            if v in neighbours:
                neighbours[v].update(u for u in f.vars if u != v)
    graph = {v: set(n) for v, n in neighbours.items()}
    for v in list(graph):
        for u in graph[v]:
            graph.setdefault(u, set()).add(v)
    order = []
    remaining = set(eliminate)
    while remaining:

        def fill(v):
            nb = list(graph[v])
            return sum(1 for i in range(len(nb)) for j in range(i + 1, len(nb)) if nb[j] not in graph[nb[i]])

        v = min(sorted(remaining), key=fill)
        nb = list(graph[v])
        for a in nb:
            graph[a].update(b for b in nb if b != a)
            graph[a].discard(v)
        del graph[v]
        remaining.remove(v)
        order.append(v)
    return order


def _eliminate(net: CausalBayesNet, keep: Sequence[str], evidence: Mapping[str, int], order=None):
    """Variable elimination returning ``(log_scale, factor over keep)``."""
    relevant = net.dag.ancestors(set(keep) | set(evidence))
    factors = []
    for name in net.schema.names:
        if name not in relevant:
            continue
        vars_ = net.cpts[name].parents + (name,)
        table = net.factor_table(name)
        index = tuple(evidence[v] if v in evidence else slice(None) for v in vars_)
        table = table[index]
        factors.append(_Factor([v for v in vars_ if v not in evidence], table))
    to_eliminate = relevant - set(keep) - set(evidence)
    if order is None:
        order = _min_fill_order(factors, to_eliminate)
    else:
        order = [v for v in order if v in to_eliminate]
        if set(order) != to_eliminate:
            raise ValueError("elimination order must cover every hidden variable")
    log_scale = 0.0
    for var in order:
        involved = [f for f in factors if var in f.vars]
        rest = [f for f in factors if var not in f.vars]
        prod = _product(involved)
        axis = prod.vars.index(var)
        summed = _Factor(prod.vars[:axis] + prod.vars[axis + 1 :], prod.table.sum(axis=axis))
        peak = summed.table.max(initial=0.0)
        if peak <= 0.0:
            return -math.inf, None
        summed.table = summed.table / peak
        log_scale += math.log(peak)
        factors = rest + [summed]
    final = _product(factors) if factors else _Factor([], np.ones(()))
    final.table = final.aligned(list(keep)) if keep else final.table
    return log_scale, final


def infer_posterior(net: CausalBayesNet, query: str, evidence: Evidence | None = None, order=None) -> np.ndarray:
    """Exact ``P(query | evidence)`` by variable elimination (min-fill order)."""
    evidence = net.schema.encode(evidence or {})
    net.schema.index(query)
    if query in evidence:
        raise ValueError(f"query variable {query!r} is also in the evidence")
    log_scale, factor = _eliminate(net, [query], evidence, order)
    if factor is None:
        raise ZeroProbabilityEvidence(f"evidence {net.schema.decode(evidence)} has probability zero")
    table = factor.table.reshape(-1)
    total = table.sum()
    if total <= 0.0:
        raise ZeroProbabilityEvidence(f"evidence {net.schema.decode(evidence)} has probability zero")
    return table / total


def log_evidence_probability(net: CausalBayesNet, evidence: Evidence | None = None) -> float:
    evidence = net.schema.encode(evidence or {})
    if not evidence:
        return 0.0
    if len(evidence) == len(net.schema):
        return net.log_joint(evidence)
    log_scale, factor = _eliminate(net, [], evidence)
    if factor is None:
        return -math.inf
    total = float(factor.table.sum())
    return log_scale + math.log(total) if total > 0 else -math.inf


def evidence_probability(net: CausalBayesNet, evidence: Evidence | None = None) -> float:
    """Exact marginal probability of a (partial) assignment."""
    return min(1.0, math.exp(log_evidence_probability(net, evidence)))


def infer_joint(net: CausalBayesNet, query: Sequence[str], evidence: Evidence | None = None) -> np.ndarray:
    """Exact joint ``P(query | evidence)`` with axes in ``query`` order."""
    evidence = net.schema.encode(evidence or {})
    query = list(query)
    for q in query:
        net.schema.index(q)
        if q in evidence:
            raise ValueError(f"query variable {q!r} is also in the evidence")
    if len(set(query)) != len(query):
        raise ValueError("query variables must be distinct")
    _, factor = _eliminate(net, query, evidence)
    if factor is None or factor.table.sum() <= 0.0:
        raise ZeroProbabilityEvidence(f"evidence {net.schema.decode(evidence)} has probability zero")
    shape = tuple(net.schema.arity(q) for q in query)
    table = factor.table.reshape(shape)
    return table / table.sum()
