"""Directed acyclic graphs, neighbourhood moves, CPDAGs and structural Hamming distance.

Vertices are dense integer indices ``0..p-1``. All graph values are immutable.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

ENUMERATION_CAP = 5

ADD, REMOVE, REVERSE = "add", "remove", "reverse"


class GraphError(ValueError):
    """Invalid graph input (bad vertex index, cycle, illegal move...)."""


def _check_edges(p, edges):
    if p < 1:
        raise GraphError(f"vertex count must be positive, got {p}")
    out = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < p and 0 <= v < p):
            raise GraphError(f"edge ({u}, {v}) references a vertex outside [0, {p})")
        if u == v:
            raise GraphError(f"self-loop on vertex {u}")
        out.add((u, v))
    return out


def _has_cycle(p, edges):
    children = [[] for _ in range(p)]
    for u, v in edges:
        children[u].append(v)
    # iterative DFS with white/grey/black colouring
    color = [0] * p
    for root in range(p):
        if color[root]:
            continue
        stack = [(root, iter(children[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color[nxt] == 1:
                return True
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(children[nxt])))
    return False


def is_acyclic(p: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Return True iff the directed graph on ``p`` vertices has no directed cycle.

    Self-loops count as cycles. Raises :class:`GraphError` for out-of-range indices.
    """
    edges = list(edges)
    for u, v in edges:
        if not (0 <= u < p and 0 <= v < p):
            raise GraphError(f"edge ({u}, {v}) references a vertex outside [0, {p})")
        if u == v:
            return False
    return not _has_cycle(p, edges)


@dataclass(frozen=True)
class Dag:
    """A labelled DAG on vertices ``0..p-1`` with edges stored as (parent, child)."""

    p: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = _check_edges(self.p, self.edges)
        if _has_cycle(self.p, edges):
            raise GraphError(f"edge set contains a directed cycle: {sorted(edges)}")
        object.__setattr__(self, "edges", frozenset(edges))
        parents = [[] for _ in range(self.p)]
        for u, v in edges:
            parents[v].append(u)
        object.__setattr__(self, "_parents", tuple(frozenset(ps) for ps in parents))

    @classmethod
    def empty(cls, p: int) -> "Dag":
        return cls(p, frozenset())

    @classmethod
    def from_adjacency(cls, A) -> "Dag":
        """Build from a 0/1 matrix with ``A[u, v] != 0`` meaning u -> v."""
        A = np.asarray(A)
        us, vs = np.nonzero(A)
        return cls(A.shape[0], frozenset(zip(us.tolist(), vs.tolist())))

    def parents(self, j: int) -> frozenset:
        return self._parents[j]

    def children(self, j: int) -> frozenset:
        return frozenset(v for u, v in self.edges if u == j)

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edges

    def adjacent(self, u: int, v: int) -> bool:
        return (u, v) in self.edges or (v, u) in self.edges

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.p, self.p), dtype=int)
        for u, v in self.edges:
            A[u, v] = 1
        return A

    def sorted_edges(self) -> list:
        return sorted(self.edges)

    def __repr__(self):
        return f"Dag(p={self.p}, edges={self.sorted_edges()})"


def topological_order(dag: Dag) -> tuple:
    """Kahn's algorithm; among available vertices the smallest index goes first."""
    import heapq

    indeg = [len(dag.parents(j)) for j in range(dag.p)]
    children = [[] for _ in range(dag.p)]
    for u, v in dag.edges:
        children[u].append(v)
    heap = [j for j in range(dag.p) if indeg[j] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    return tuple(order)


def descendants(dag: Dag) -> list:
    """``out[u]`` is the set of vertices reachable from u by a directed path of length >= 1."""
    out = [set() for _ in range(dag.p)]
    children = [[] for _ in range(dag.p)]
    for u, v in dag.edges:
        children[u].append(v)
    for u in reversed(topological_order(dag)):
        for c in children[u]:
            out[u].add(c)
            out[u] |= out[c]
    return out


# -- moves -------------------------------------------------------------------


@dataclass(frozen=True)
class Move:
    kind: str
    edge: tuple

    def __post_init__(self):
        if self.kind not in (ADD, REMOVE, REVERSE):
            raise GraphError(f"unknown move kind {self.kind!r}")
        object.__setattr__(self, "edge", (int(self.edge[0]), int(self.edge[1])))

    @property
    def target(self) -> int:
        """The vertex the changed edge currently points into (or will, for additions)."""
        return self.edge[1]

    def inverse(self) -> "Move":
        u, v = self.edge
        if self.kind == ADD:
            return Move(REMOVE, (u, v))
        if self.kind == REMOVE:
            return Move(ADD, (u, v))
        return Move(REVERSE, (v, u))

    def __repr__(self):
        return f"{self.kind}{self.edge}"


def legal_moves(dag: Dag) -> list:
    """All single-edge additions, removals and reversals that keep ``dag`` acyclic.

    Moves are listed in a fixed order: by edge ``(u, v)``, then add/remove/reverse.
    """
    desc = descendants(dag)
    children = [[] for _ in range(dag.p)]
    for u, v in dag.edges:
        children[u].append(v)
    moves = []
    for u, v in itertools.permutations(range(dag.p), 2):
        if (u, v) in dag.edges:
            moves.append(Move(REMOVE, (u, v)))
            # reversal creates a cycle iff another u ~> v path exists
            if not any(c != v and v in desc[c] for c in children[u]):
                moves.append(Move(REVERSE, (u, v)))
        elif (v, u) not in dag.edges and u not in desc[v]:
            moves.append(Move(ADD, (u, v)))
    return moves


def apply_move(dag: Dag, move: Move) -> Dag:
    u, v = move.edge
    edges = set(dag.edges)
    if move.kind == ADD:
        if (u, v) in edges or (v, u) in edges:
            raise GraphError(f"cannot add {u}->{v}: vertices already adjacent")
        edges.add((u, v))
    else:
        if (u, v) not in edges:
            raise GraphError(f"cannot {move.kind} {u}->{v}: edge absent")
        edges.remove((u, v))
        if move.kind == REVERSE:
            edges.add((v, u))
    try:
        return Dag(dag.p, frozenset(edges))
    except GraphError as exc:
        raise GraphError(f"move {move!r} is illegal: {exc}") from None


def neighbors(dag: Dag) -> list:
    return [apply_move(dag, m) for m in legal_moves(dag)]


# -- enumeration -------------------------------------------------------------


def enumerate_dags(p: int, cap: int = ENUMERATION_CAP) -> Iterator[Dag]:
    """Yield every labelled DAG on ``p`` vertices exactly once.

    Each DAG is generated from its unique decomposition into source layers:
    layer 1 holds the sources, and every vertex of layer i > 1 has all its
    parents in earlier layers with at least one in layer i-1.
    """
    if p < 1:
        raise GraphError("p must be positive")
    if p > cap:
        raise GraphError(
            f"refusing to enumerate DAGs on {p} vertices: the enumeration cap is {cap} "
            "(the number of DAGs grows super-exponentially); raise the cap explicitly"
        )
    if p > ENUMERATION_CAP:
        warnings.warn(f"enumerating all DAGs on {p} vertices; this may be very slow", stacklevel=2)

    def parent_choices(placed, prev):
        placed = sorted(placed)
        prev = set(prev)
        for r in range(len(placed) + 1):
            for combo in itertools.combinations(placed, r):
                if prev.intersection(combo):
                    yield combo

    def rec(remaining, placed, prev, edges):
        if not remaining:
            yield Dag(p, frozenset(edges))
            return
        rem = sorted(remaining)
        for r in range(1, len(rem) + 1):
            for layer in itertools.combinations(rem, r):
                if not prev:
                    yield from rec(remaining - set(layer), placed | set(layer), layer, edges)
                    continue
                options = [list(parent_choices(placed, prev)) for _ in layer]
                for choice in itertools.product(*options):
                    new_edges = list(edges)
                    for v, pa in zip(layer, choice):
                        new_edges.extend((u, v) for u in pa)
                    yield from rec(remaining - set(layer), placed | set(layer), layer, new_edges)

    yield from rec(frozenset(range(p)), frozenset(), (), [])


# -- equivalence classes -----------------------------------------------------


@dataclass(frozen=True)
class Cpdag:
    """Partially directed graph: ``directed`` ordered pairs and ``undirected`` frozenset pairs."""

    p: int
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        directed = _check_edges(self.p, self.directed)
        undirected = set()
        for e in self.undirected:
            u, v = tuple(e)
            _check_edges(self.p, [(u, v)])
            undirected.add(frozenset((u, v)))
        skel = [frozenset(e) for e in directed]
        if len(set(skel)) != len(skel):
            raise GraphError("an adjacency is directed both ways")
        if set(skel) & undirected:
            raise GraphError("an adjacency is both directed and undirected")
        object.__setattr__(self, "directed", frozenset(directed))
        object.__setattr__(self, "undirected", frozenset(undirected))

    @classmethod
    def from_dag(cls, dag: Dag) -> "Cpdag":
        """The DAG itself as a fully directed graph (no equivalence-class reduction)."""
        return cls(dag.p, dag.edges, frozenset())

    def pair_state(self, u: int, v: int):
        """State of the unordered pair {u, v}: None, '-', or the directed (a, b) edge."""
        if (u, v) in self.directed:
            return (u, v)
        if (v, u) in self.directed:
            return (v, u)
        if frozenset((u, v)) in self.undirected:
            return "-"
        return None

    def skeleton(self) -> frozenset:
        return frozenset(frozenset(e) for e in self.directed) | self.undirected

    def __repr__(self):
        und = sorted(tuple(sorted(e)) for e in self.undirected)
        return f"Cpdag(p={self.p}, directed={sorted(self.directed)}, undirected={und})"


def v_structures(dag: Dag) -> frozenset:
    """Triples (a, c, b) with a -> c <- b, a < b, and a, b non-adjacent."""
    out = set()
    for c in range(dag.p):
        for a, b in itertools.combinations(sorted(dag.parents(c)), 2):
            if not dag.adjacent(a, b):
                out.add((a, c, b))
    return frozenset(out)


def _meek_closure(p, directed, undirected):
    """Orient undirected edges in place with Meek rules 1-4 until nothing changes."""

    def adj(a, b):
        return (a, b) in directed or (b, a) in directed or frozenset((a, b)) in undirected

    def und(a, b):
        return frozenset((a, b)) in undirected

    def orient(a, b):
        undirected.discard(frozenset((a, b)))
        directed.add((a, b))

    changed = True
    while changed:
        changed = False
        for e in sorted(undirected, key=sorted):
            x, y = sorted(e)
            for a, b in ((x, y), (y, x)):
                if not und(a, b):
                    break
                others = [c for c in range(p) if c not in (a, b)]
                # R1: c -> a - b, c and b non-adjacent
                r1 = any((c, a) in directed and not adj(c, b) for c in others)
                # R2: a -> c -> b
                r2 = any((a, c) in directed and (c, b) in directed for c in others)
                # R3: a - c -> b, a - d -> b, c and d non-adjacent
                mids = [c for c in others if und(a, c) and (c, b) in directed]
                r3 = any(not adj(c, d) for c, d in itertools.combinations(mids, 2))
                # R4: a - d -> c -> b, a adjacent to c, d and b non-adjacent
                r4 = any(
                    und(a, d) and (d, c) in directed and (c, b) in directed
                    and adj(a, c) and not adj(d, b)
                    for c in others for d in others if c != d
                )
                if r1 or r2 or r3 or r4:
                    orient(a, b)
                    changed = True
                    break


def to_cpdag(dag: Dag) -> Cpdag:
    """CPDAG of the Markov equivalence class of ``dag``.

    Starts from the skeleton with v-structures oriented, then closes under
    Meek's orientation rules.
    """
    directed = set()
    for a, c, b in v_structures(dag):
        directed.add((a, c))
        directed.add((b, c))
    undirected = {frozenset(e) for e in dag.edges if e not in directed}
    _meek_closure(dag.p, directed, undirected)
    return Cpdag(dag.p, frozenset(directed), frozenset(undirected))


def markov_equivalent(a: Dag, b: Dag) -> bool:
    """Same skeleton and same v-structures."""
    skel_a = {frozenset(e) for e in a.edges}
    skel_b = {frozenset(e) for e in b.edges}
    return a.p == b.p and skel_a == skel_b and v_structures(a) == v_structures(b)


def shd(a, b) -> int:
    """Structural Hamming distance between two graphs on the same vertex set.

    Accepts :class:`Cpdag` or :class:`Dag` (the latter compared as fully
    directed). Per vertex pair: opposite directed edges cost 2, any other
    disagreement (missing edge, extra edge, directed vs undirected) costs 1.
    """
    if isinstance(a, Dag):
        a = Cpdag.from_dag(a)
    if isinstance(b, Dag):
        b = Cpdag.from_dag(b)
    if a.p != b.p:
        raise GraphError(f"vertex counts differ: {a.p} vs {b.p}")
    dist = 0
    for e in a.skeleton() | b.skeleton():
        u, v = sorted(e)
        sa, sb = a.pair_state(u, v), b.pair_state(u, v)
        if sa == sb:
            continue
        if isinstance(sa, tuple) and isinstance(sb, tuple):
            dist += 2
        else:
            dist += 1
    return dist


# -- text formats ------------------------------------------------------------


def parse_edge_list(text: str, p: int | None = None):
    """Parse ``parent child [weight]`` lines; ``#`` starts a comment.

    A comment line ``# p: N`` declares the vertex count. Returns
    ``(p, edges, weights)`` where ``weights`` maps edges to floats when given.
    """
    declared = None
    edges, weights = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("p:"):
                try:
                    declared = int(body[2:].strip())
                except ValueError:
                    raise GraphError(f"line {lineno}: bad vertex-count header {raw!r}") from None
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"line {lineno}: expected 'parent child [weight]', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            if len(parts) == 3:
                weights[(u, v)] = float(parts[2])
        except ValueError:
            raise GraphError(f"line {lineno}: non-numeric field in {raw!r}") from None
        edges.append((u, v))
    if p is None:
        p = declared
    elif declared is not None and declared != p:
        raise GraphError(f"graph declares {declared} vertices but {p} were expected")
    if p is None:
        p = max((max(e) for e in edges), default=-1) + 1
        p = max(p, 1)
    return p, edges, weights


def read_dag(path, p: int | None = None) -> Dag:
    with open(path) as fh:
        p, edges, _ = parse_edge_list(fh.read(), p)
    return Dag(p, frozenset(edges))


def format_edge_list(dag: Dag, weights=None) -> str:
    lines = [f"# p: {dag.p}"]
    for u, v in dag.sorted_edges():
        if weights is not None:
            lines.append(f"{u} {v} {float(weights[v, u])!r}")
        else:
            lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


def to_dot(graph, names=None) -> str:
    """Graphviz DOT; undirected CPDAG edges are drawn without arrowheads."""
    if isinstance(graph, Dag):
        graph = Cpdag.from_dag(graph)
    names = names or [str(j) for j in range(graph.p)]
    lines = ["digraph G {"]
    for j in range(graph.p):
        lines.append(f'  {j} [label="{names[j]}"];')
    for u, v in sorted(graph.directed):
        lines.append(f"  {u} -> {v};")
    for e in sorted(tuple(sorted(e)) for e in graph.undirected):
        lines.append(f"  {e[0]} -> {e[1]} [dir=none];")
    lines.append("}")
    return "\n".join(lines) + "\n"
