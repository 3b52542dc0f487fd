"""Finite graphs the coloring process runs on.

Random regular graphs come from the configuration model (pairing half-edges,
then repairing self-loops and parallel edges with degree-preserving edge
swaps).  Balls in the regular tree are available for branch-independence
experiments; their degree-1 boundary distorts type statistics, so callers
exclude boundary vertices from distribution estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GenerationError

MAX_REPAIR_SWEEPS = 1000


@dataclass
class Graph:
    """Undirected graph in CSR form plus a flat edge list (u < v per edge)."""

    n: int
    r: int  # degree of regular vertices / maximum degree for fixtures
    indptr: np.ndarray
    indices: np.ndarray
    edges_u: np.ndarray
    edges_v: np.ndarray
    kind: str  # random_regular | tree_ball | fixture
    boundary: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @property
    def m(self) -> int:
        return len(self.edges_u)

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def _build_csr(n: int, eu: np.ndarray, ev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    heads = np.concatenate([eu, ev])
    tails = np.concatenate([ev, eu])
    order = np.lexsort((tails, heads))
    indices = tails[order].astype(np.int64)
    counts = np.bincount(heads, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


def _make_graph(n: int, r: int, eu: np.ndarray, ev: np.ndarray, kind: str,
                boundary: np.ndarray | None = None) -> Graph:
    swap = eu > ev
    eu2 = np.where(swap, ev, eu).astype(np.int64)
    ev2 = np.where(swap, eu, ev).astype(np.int64)
    order = np.lexsort((ev2, eu2))
    eu2, ev2 = eu2[order], ev2[order]
    indptr, indices = _build_csr(n, eu2, ev2)
    return Graph(
        n=n, r=r, indptr=indptr, indices=indices, edges_u=eu2, edges_v=ev2,
        kind=kind,
        boundary=np.empty(0, dtype=np.int64) if boundary is None else boundary,
    )


def gen_regular_graph(n: int, r: int, seed: int) -> Graph:
    """Simple r-regular graph on n vertices from the configuration model.

    The pairing is repaired rather than resampled wholesale: offending pairs
    (self-loops, duplicates) are rewired against randomly chosen good edges
    until the graph is simple.  This keeps the degree sequence exact, stays
    deterministic given the seed, and avoids the exponentially small
    acceptance rate of full restarts at higher degrees.
    """
    if r < 1:
        raise ConfigurationError(f"degree must be >= 1, got {r}")
    if n <= r:
        raise ConfigurationError(f"need n > r, got n={n}, r={r}")
    if (n * r) % 2 != 0:
        raise ConfigurationError(f"n*r must be even, got n={n}, r={r}")

    rng = np.random.default_rng(seed)
    points = np.repeat(np.arange(n, dtype=np.int64), r)
    rng.shuffle(points)
    eu = points[0::2].copy()
    ev = points[1::2].copy()

    m = len(eu)
    edge_set: set[tuple[int, int]] = set()
    bad: list[int] = []
    for i in range(m):
        a, b = int(eu[i]), int(ev[i])
        key = (a, b) if a < b else (b, a)
        if a == b or key in edge_set:
            bad.append(i)
        else:
            edge_set.add(key)

    def key_of(i: int) -> tuple[int, int]:
        a, b = int(eu[i]), int(ev[i])
        return (a, b) if a < b else (b, a)

    sweeps = 0
    while bad:
        sweeps += 1
        if sweeps > MAX_REPAIR_SWEEPS:
            raise GenerationError(
                f"could not repair pairing after {MAX_REPAIR_SWEEPS} sweeps"
            )
        still_bad: list[int] = []
        for i in bad:
            fixed = False
            for _ in range(20):
                j = int(rng.integers(m))
                if j == i or j in bad or j in still_bad:
                    continue
                # swap partners: (a,b),(x,y) -> (a,x),(b,y)
                a, b = int(eu[i]), int(ev[i])
                x, y = int(eu[j]), int(ev[j])
                na = (a, x) if a < x else (x, a)
                nb = (b, y) if b < y else (y, b)
                if a == x or b == y or na in edge_set or nb in edge_set or na == nb:
                    continue
                edge_set.discard(key_of(j))
                eu[i], ev[i] = a, x
                eu[j], ev[j] = b, y
                edge_set.add(na)
                edge_set.add(nb)
                fixed = True
                break
            if not fixed:
                still_bad.append(i)
        bad = still_bad

    graph = _make_graph(n, r, eu, ev, "random_regular")
    degs = graph.degrees()
    if not np.all(degs == r):
        raise GenerationError("internal: repaired pairing is not regular")
    return graph


def gen_tree_ball(r: int, radius: int) -> Graph:
    """Ball of the given radius in the r-regular tree: internal vertices have
    degree r, leaves at the boundary have degree 1.  Canonically labeled, so
    no randomness is involved."""
    if r < 2:
        raise ConfigurationError(f"tree ball needs r >= 2, got {r}")
    if radius < 1:
        raise ConfigurationError(f"tree ball needs radius >= 1, got {radius}")
    eu: list[int] = []
    ev: list[int] = []
    level = [0]
    next_vertex = 1
    for depth in range(radius):
        nxt: list[int] = []
        for v in level:
            children = r if depth == 0 else r - 1
            for _ in range(children):
                eu.append(v)
                ev.append(next_vertex)
                nxt.append(next_vertex)
                next_vertex += 1
        level = nxt
    boundary = np.array(level, dtype=np.int64)
    return _make_graph(
        next_vertex, r,
        np.array(eu, dtype=np.int64), np.array(ev, dtype=np.int64),
        "tree_ball", boundary=boundary,
    )


def parse_fixture(text: str) -> tuple[Graph, list[tuple[int, int]]]:
    """Parse the hand-built fixture format: first line "n r", one line per
    edge "u v", then optional "color v c" lines presetting palette colors."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigurationError("fixture: empty input")
    head = lines[0].split()
    if len(head) != 2:
        raise ConfigurationError(f"fixture: bad header {lines[0]!r}")
    n, r = int(head[0]), int(head[1])
    if n <= 0 or r <= 0:
        raise ConfigurationError("fixture: n and r must be positive")
    eu: list[int] = []
    ev: list[int] = []
    presets: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "color":
            if len(parts) != 3:
                raise ConfigurationError(f"fixture: bad color line {ln!r}")
            v, c = int(parts[1]), int(parts[2])
            if not (0 <= v < n):
                raise ConfigurationError(f"fixture: color vertex {v} out of range")
            presets.append((v, c))
            continue
        if len(parts) != 2:
            raise ConfigurationError(f"fixture: bad edge line {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ConfigurationError(f"fixture: edge {u} {v} out of range")
        if u == v:
            raise ConfigurationError(f"fixture: self-loop at {u}")
        key = (u, v) if u < v else (v, u)
        if key in seen:
            raise ConfigurationError(f"fixture: duplicate edge {u} {v}")
        seen.add(key)
        eu.append(u)
        ev.append(v)
    graph = _make_graph(
        n, r, np.array(eu, dtype=np.int64), np.array(ev, dtype=np.int64), "fixture"
    )
    degs = graph.degrees()
    if len(degs) and degs.max() > r:
        raise ConfigurationError(
            f"fixture: vertex {int(degs.argmax())} has degree {int(degs.max())} > r={r}"
        )
    return graph, presets


def write_fixture(graph: Graph, presets: list[tuple[int, int]] | None = None) -> str:
    lines = [f"{graph.n} {graph.r}"]
    for u, v in zip(graph.edges_u, graph.edges_v):
        lines.append(f"{int(u)} {int(v)}")
    for v, c in presets or []:
        lines.append(f"color {v} {c}")
    return "\n".join(lines) + "\n"
