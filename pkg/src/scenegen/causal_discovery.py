"""Structure learning under expert constraints, CI tests, and graph comparison (SHD, SID)."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2

from .accident_data import Dataset
from .bayesnet import CycleError, Dag

CI_METHODS = ("g_square", "chi_square", "mutual_information")


class ConstraintError(ValueError):
    """Knowledge constraints that no DAG can satisfy."""


@dataclass(frozen=True)
class KnowledgeConstraints:
    required_edges: frozenset = frozenset()
    forbidden_edges: frozenset = frozenset()
    tiers: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "required_edges", frozenset(tuple(e) for e in self.required_edges))
        object.__setattr__(self, "forbidden_edges", frozenset(tuple(e) for e in self.forbidden_edges))
        if self.tiers is not None:
            object.__setattr__(self, "tiers", tuple(tuple(t) for t in self.tiers))
        clash = self.required_edges & self.forbidden_edges
        if clash:
            raise ConstraintError(f"edges both required and forbidden: {sorted(clash)}")
        nodes = {v for e in self.required_edges for v in e}
        try:
            Dag(sorted(nodes), self.required_edges)
        except CycleError as exc:
            raise ConstraintError(f"required edges form a cycle: {exc}") from None
        for u, v in self.required_edges:
            if not self._tier_ok(u, v):
                raise ConstraintError(f"required edge {u}->{v} points to an earlier tier")

    def _tier_of(self, node):
        if self.tiers is None:
            return None
        for i, tier in enumerate(self.tiers):
            if node in tier:
                return i
        return None

    def _tier_ok(self, u, v) -> bool:
        tu, tv = self._tier_of(u), self._tier_of(v)
        return tu is None or tv is None or tu <= tv

    def allows(self, u: str, v: str) -> bool:
        return u != v and (u, v) not in self.forbidden_edges and self._tier_ok(u, v)

    def variables(self) -> set[str]:
        names = {v for e in self.required_edges | self.forbidden_edges for v in e}
        return names | {v for t in self.tiers or () for v in t}

    def check_variables(self, names) -> None:
        unknown = self.variables() - set(names)
        if unknown:
            raise ConstraintError(f"constraints name unknown variables: {sorted(unknown)}")

    def to_json(self) -> dict:
        out = {
            "required": [list(e) for e in sorted(self.required_edges)],
            "forbidden": [list(e) for e in sorted(self.forbidden_edges)],
        }
        if self.tiers is not None:
            out["tiers"] = [list(t) for t in self.tiers]
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "KnowledgeConstraints":
        extra = set(payload) - {"required", "forbidden", "tiers"}
        if extra:
            raise ConstraintError(f"unknown constraint keys: {sorted(extra)}")
        tiers = payload.get("tiers")
        return cls(
            frozenset(tuple(e) for e in payload.get("required", [])),
            frozenset(tuple(e) for e in payload.get("forbidden", [])),
            tuple(tuple(t) for t in tiers) if tiers is not None else None,
        )

    @classmethod
    def load(cls, path) -> "KnowledgeConstraints":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")


@dataclass(frozen=True)
class DiscoveryParams:
    ess: float = 10.0
    max_parents: int = 4
    max_iterations: int = 1000
    ci_alpha: float = 0.05
    ci_method: str = "g_square"
    ci_max_conditioning: int = 1
    restarts: int = 5

    def __post_init__(self):
        if not self.ess > 0:
            raise ValueError("ess must be positive")
        if self.max_parents < 1:
            raise ValueError("max_parents must be at least 1")
        if not 0 < self.ci_alpha < 1:
            raise ValueError("ci_alpha must lie in (0, 1)")
        if self.ci_method not in CI_METHODS:
            raise ValueError(f"unknown CI method {self.ci_method!r}")


# ---------------------------------------------------------------- scores


def bdeu_family(data: Dataset, child: str, parents: Sequence[str], ess: float) -> float:
    """BDeu log marginal likelihood of one family."""
    r = data.schema.arity(child)
    q = math.prod(data.schema.arity(p) for p in parents)
    rows = np.zeros(len(data), dtype=np.int64)
    for p in parents:
        rows = rows * data.schema.arity(p) + data.column(p)
    counts = np.bincount(rows * r + data.column(child), minlength=q * r).reshape(q, r)
    a_jk = ess / (q * r)
    a_j = ess / q
    n_j = counts.sum(axis=1)
    return float(
        (gammaln(a_j) - gammaln(a_j + n_j)).sum() + (gammaln(a_jk + counts) - gammaln(a_jk)).sum()
    )


def bdeu_score(dag: Dag, data: Dataset, ess: float = 10.0) -> float:
    if not ess > 0:
        raise ValueError("ess must be positive")
    return sum(bdeu_family(data, n, dag.parents(n), ess) for n in dag.nodes)


# ---------------------------------------------------------------- CI tests


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    independent: bool
    df: int = 0


def _strata(data: Dataset, x: str, y: str, z: Sequence[str]):
    rx, ry = data.schema.arity(x), data.schema.arity(y)
    keys = np.zeros(len(data), dtype=np.int64)
    qz = 1
    for v in z:
        keys = keys * data.schema.arity(v) + data.column(v)
        qz *= data.schema.arity(v)
    counts = np.bincount((keys * rx + data.column(x)) * ry + data.column(y), minlength=qz * rx * ry)
    return counts.reshape(qz, rx, ry).astype(float)


def _stat(tables: np.ndarray, method: str) -> tuple[float, int]:
    stat = 0.0
    df = 0
    for t in tables:
        n = t.sum()
        if n == 0:
            continue
        rows, cols = t.sum(axis=1), t.sum(axis=0)
        df += max(0, (np.count_nonzero(rows) - 1) * (np.count_nonzero(cols) - 1))
        expected = np.outer(rows, cols) / n
        mask = expected > 0
        if method == "chi_square":
            stat += float((((t - expected) ** 2)[mask] / expected[mask]).sum())
        else:
            pos = t > 0
            stat += float(2.0 * (t[pos] * np.log(t[pos] / expected[pos])).sum())
    return stat, df


def ci_test(data: Dataset, x: str, y: str, z: Iterable[str] = (), method: str = "g_square", alpha: float = 0.05,
            n_permutations: int = 200, seed: int = 0) -> CiResult:
    """Test ``x`` independent of ``y`` given ``z`` on categorical data.

    Empty strata are skipped and degrees of freedom counted only over observed
    rows and columns. Mutual information uses a within-stratum permutation test.
    """
    z = tuple(z)
    if x == y or x in z or y in z:
        raise ValueError("x, y and z must be disjoint")
    if method not in CI_METHODS:
        raise ValueError(f"unknown CI method {method!r}")
    tables = _strata(data, x, y, z)
    if method in ("g_square", "chi_square"):
        stat, df = _stat(tables, method)
        p = 1.0 if df == 0 else float(chi2.sf(stat, df))
        return CiResult(stat, p, p >= alpha, df)

    n = len(data)
    g, df = _stat(tables, "g_square")
    mi = g / (2.0 * n) if n else 0.0
    rng = np.random.default_rng(seed)
    xs = data.column(x).copy()
    ys = data.column(y)
    keys = np.zeros(n, dtype=np.int64)
    for v in z:
        keys = keys * data.schema.arity(v) + data.column(v)
    order = np.argsort(keys, kind="stable")
    bounds = np.flatnonzero(np.diff(keys[order])) + 1
    groups = np.split(order, bounds)
    rx, ry = data.schema.arity(x), data.schema.arity(y)
    qz = int(keys.max()) + 1 if n else 1
    exceed = 0
    for _ in range(n_permutations):
        perm = xs.copy()
        for grp in groups:
            perm[grp] = xs[rng.permutation(grp)]
        t = np.bincount((keys * rx + perm) * ry + ys, minlength=qz * rx * ry).reshape(qz, rx, ry).astype(float)
        g_perm, _ = _stat(t, "g_square")
        if g_perm / (2.0 * n) >= mi - 1e-12:
            exceed += 1
    p = (exceed + 1) / (n_permutations + 1)
    return CiResult(mi, p, p >= alpha, df)


# ---------------------------------------------------------------- search


def _reaches(parents: dict, src: str, dst: str) -> bool:
    """True if ``dst`` is an ancestor-path target of ``src`` (src ->* dst) given a parent map."""
    children = {}
    for c, ps in parents.items():
        for p in ps:
            children.setdefault(p, []).append(c)
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        for w in children.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def ci_prune(data: Dataset, nodes: Sequence[str], params: DiscoveryParams, protected=frozenset()) -> set:
    """Unordered pairs judged independent by a CI test given some small conditioning set."""
    adjacent = {v: set(nodes) - {v} for v in nodes}
    removed = set()
    for order in range(params.ci_max_conditioning + 1):
        for x, y in itertools.combinations(nodes, 2):
            if y not in adjacent[x] or frozenset((x, y)) in protected:
                continue
            candidates = sorted((adjacent[x] | adjacent[y]) - {x, y})
            for z in itertools.combinations(candidates, order):
                if ci_test(data, x, y, z, params.ci_method, params.ci_alpha).independent:
                    adjacent[x].discard(y)
                    adjacent[y].discard(x)
                    removed.add(frozenset((x, y)))
                    break
    return removed


def _check_satisfiable(nodes, constraints: KnowledgeConstraints, params: DiscoveryParams):
    names = set(nodes)
    for u, v in constraints.required_edges:
        if u not in names or v not in names:
            raise ConstraintError(f"required edge {u}->{v} names an unknown variable")
    counts = {}
    for _, v in constraints.required_edges:
        counts[v] = counts.get(v, 0) + 1
    for v, c in counts.items():
        if c > params.max_parents:
            raise ConstraintError(f"{v!r} has {c} required parents, above max_parents={params.max_parents}")


def greedy_search(data: Dataset, constraints: KnowledgeConstraints | None = None,
                  params: DiscoveryParams | None = None, seed: int = 0) -> Dag:
    """BDeu hill climbing over add, delete and reverse moves with a CI pruning pre-pass.

    The first climb starts from the required-edge graph; further restarts
    start from seeded random perturbations of it. The best-scoring result is
    returned. Moves are ranked by score gain, ties broken by (kind, edge).
    """
    constraints = constraints or KnowledgeConstraints()
    params = params or DiscoveryParams()
    nodes = data.schema.names
    _check_satisfiable(nodes, constraints, params)
    required = constraints.required_edges
    protected = {frozenset(e) for e in required}
    pruned = ci_prune(data, nodes, params, protected) if len(data) else set()

    def allowed(u, v) -> bool:
        return constraints.allows(u, v) and frozenset((u, v)) not in pruned

    cache: dict = {}

    def family(child, parents) -> float:
        key = (child, parents)
        if key not in cache:
            cache[key] = bdeu_family(data, child, parents, params.ess)
        return cache[key]

    def climb(start: dict) -> tuple[dict, float]:
        parents = {v: tuple(sorted(ps)) for v, ps in start.items()}
        score = sum(family(v, parents[v]) for v in nodes)
        for _ in range(params.max_iterations):
            best = None
            for u in nodes:
                for v in nodes:
                    if u == v:
                        continue
                    if u in parents[v]:
                        if (u, v) in required:
                            continue
                        new_v = tuple(p for p in parents[v] if p != u)
                        gain = family(v, new_v) - family(v, parents[v])
                        cand = (gain, "delete", (u, v))
                        if best is None or _better(cand, best):
                            best = cand
                        # reversal u->v becomes v->u
                        if allowed(v, u) and len(parents[u]) < params.max_parents:
                            trial = dict(parents)
                            trial[v] = new_v
                            if not _reaches(trial, u, v):
                                new_u = tuple(sorted(parents[u] + (v,)))
                                gain_r = gain + family(u, new_u) - family(u, parents[u])
                                cand = (gain_r, "reverse", (u, v))
                                if _better(cand, best):
                                    best = cand
                    elif v not in parents[u] and allowed(u, v) and len(parents[v]) < params.max_parents:
                        if not _reaches(parents, v, u):
                            new_v = tuple(sorted(parents[v] + (u,)))
                            gain = family(v, new_v) - family(v, parents[v])
                            cand = (gain, "add", (u, v))
                            if best is None or _better(cand, best):
                                best = cand
            if best is None or best[0] <= 1e-9:
                break
            gain, kind, (u, v) = best
            if kind == "add":
                parents[v] = tuple(sorted(parents[v] + (u,)))
            elif kind == "delete":
                parents[v] = tuple(p for p in parents[v] if p != u)
            else:
                parents[v] = tuple(p for p in parents[v] if p != u)
                parents[u] = tuple(sorted(parents[u] + (v,)))
            score += gain
        return parents, score

    base = {v: () for v in nodes}
    for u, v in sorted(required):
        base[v] = tuple(sorted(base[v] + (u,)))
    rng = np.random.default_rng(seed)
    best_parents, best_score = climb(base)
    candidates = [(u, v) for u in nodes for v in nodes if u != v and allowed(u, v)]
    for _ in range(max(0, params.restarts - 1)):
        start = dict(base)
        for k in rng.permutation(len(candidates)):
            u, v = candidates[k]
            if rng.random() < 0.15 and u not in start[v] and v not in start[u] and len(start[v]) < params.max_parents:
                if not _reaches(start, v, u):
                    start[v] = tuple(sorted(start[v] + (u,)))
        parents, score = climb(start)
        if score > best_score + 1e-9:
            best_parents, best_score = parents, score
    edges = [(p, v) for v in nodes for p in best_parents[v]]
    return Dag(nodes, edges)


_KIND_ORDER = {"add": 0, "delete": 1, "reverse": 2}


def _better(a, b) -> bool:
    if a[0] > b[0] + 1e-12:
        return True
    if a[0] < b[0] - 1e-12:
        return False
    return (_KIND_ORDER[a[1]], a[2]) < (_KIND_ORDER[b[1]], b[2])


# ---------------------------------------------------------------- equivalence classes


@dataclass(frozen=True)
class Cpdag:
    nodes: tuple[str, ...]
    directed: frozenset = frozenset()
    undirected: frozenset = frozenset()  # of frozenset pairs

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "directed", frozenset(tuple(e) for e in self.directed))
        object.__setattr__(self, "undirected", frozenset(frozenset(e) for e in self.undirected))
        for u, v in self.directed:
            if frozenset((u, v)) in self.undirected or (v, u) in self.directed:
                raise ValueError(f"edge {u}-{v} appears more than once")

    def adjacent(self, u, v) -> bool:
        return (u, v) in self.directed or (v, u) in self.directed or frozenset((u, v)) in self.undirected

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "directed": [list(e) for e in sorted(self.directed)],
            "undirected": sorted(sorted(e) for e in self.undirected),
        }


def to_cpdag(dag: Dag) -> Cpdag:
    """Markov equivalence class pattern: v-structure edges, then Meek rules 1-3."""
    nodes = dag.nodes
    adj = {v: set() for v in nodes}
    for u, v in dag.edges:
        adj[u].add(v)
        adj[v].add(u)
    directed = set()
    for c in nodes:
        ps = dag.parents(c)
        for a, b in itertools.combinations(ps, 2):
            if b not in adj[a]:
                directed.add((a, c))
                directed.add((b, c))
    undirected = {frozenset(e) for e in dag.edges if tuple(e) not in directed}

    def is_dir(u, v):
        return (u, v) in directed

    changed = True
    while changed:
        changed = False
        for e in sorted(undirected, key=sorted):
            a, b = sorted(e)
            for x, y in ((a, b), (b, a)):
                # R1: z -> x - y, z not adjacent to y  =>  x -> y
                r1 = any(is_dir(z, x) and y not in adj[z] for z in adj[x] if z != y)
                # R2: x -> z -> y  =>  x -> y
                r2 = any(is_dir(x, z) and is_dir(z, y) for z in adj[x] & adj[y])
                # R3: x - z1 -> y, x - z2 -> y, z1, z2 non-adjacent  =>  x -> y
                mids = [z for z in adj[x] & adj[y] if frozenset((x, z)) in undirected and is_dir(z, y)]
                r3 = any(z2 not in adj[z1] for z1, z2 in itertools.combinations(mids, 2))
                if r1 or r2 or r3:
                    undirected.discard(e)
                    directed.add((x, y))
                    changed = True
                    break
    return Cpdag(nodes, frozenset(directed), frozenset(undirected))


def shd(a: Cpdag, b: Cpdag) -> int:
    """Pairs whose edge status (absent, undirected, or one orientation) differs."""
    if set(a.nodes) != set(b.nodes):
        raise ValueError("graphs have different node sets")

    def status(g: Cpdag, u, v):
        if (u, v) in g.directed:
            return 1
        if (v, u) in g.directed:
            return 2
        if frozenset((u, v)) in g.undirected:
            return 3
        return 0

    return sum(status(a, u, v) != status(b, u, v) for u, v in itertools.combinations(sorted(a.nodes), 2))


# ---------------------------------------------------------------- interventional distance


def d_separated(dag: Dag, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str] = (),
                removed_edges: Iterable[tuple[str, str]] = ()) -> bool:
    """d-separation via the moralised ancestral graph, optionally on a graph with edges removed."""
    xs, ys, zs = set(xs), set(ys), set(zs)
    removed = set(removed_edges)
    edges = [e for e in dag.edges if e not in removed]
    parents = {v: set() for v in dag.nodes}
    for u, v in edges:
        parents[v].add(u)
    relevant = set()
    stack = list(xs | ys | zs)
    while stack:
        v = stack.pop()
        if v in relevant:
            continue
        relevant.add(v)
        stack.extend(parents[v])
    nbr = {v: set() for v in relevant}
    for v in relevant:
        ps = list(parents[v])
        for p in ps:
            nbr[v].add(p)
            nbr[p].add(v)
        for p, q in itertools.combinations(ps, 2):
            nbr[p].add(q)
            nbr[q].add(p)
    seen = set(xs)
    stack = list(xs)
    while stack:
        v = stack.pop()
        if v in ys:
            return False
        for w in nbr[v]:
            if w not in seen and w not in zs:
                seen.add(w)
                stack.append(w)
    return True


def valid_parent_adjustment(true_dag: Dag, i: str, j: str, adjustment: Iterable[str]) -> bool:
    """Whether ``adjustment`` identifies the effect of ``i`` on ``j`` in ``true_dag``."""
    z = set(adjustment)
    desc_i = true_dag.descendants(i)
    if j in z:
        # the adjusted model implies no effect; correct only if there is none
        return j not in desc_i
    on_path = {w for w in desc_i if w != i and true_dag.has_path(w, j)}
    forbidden = set()
    for w in on_path:
        forbidden |= true_dag.descendants(w)
    if z & forbidden or i in z:
        return False
    first_edges = [(i, c) for c in true_dag.children(i) if c in on_path]
    return d_separated(true_dag, {i}, {j}, z, removed_edges=first_edges)


def sid(true_dag: Dag, est_dag: Dag) -> int:
    if set(true_dag.nodes) != set(est_dag.nodes):
        raise ValueError("graphs have different node sets")
    count = 0
    for i in true_dag.nodes:
        pa = est_dag.parents(i)
        for j in true_dag.nodes:
            if i != j and not valid_parent_adjustment(true_dag, i, j, pa):
                count += 1
    return count
