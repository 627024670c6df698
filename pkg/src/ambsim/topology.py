"""Worker graphs, doubly stochastic mixing matrices, and spectral helpers.

Everything here is a pure function over immutable inputs; it is safe to
call from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Graph",
    "ConsensusMatrix",
    "make_graph",
    "complete_graph",
    "ring_graph",
    "testbed_graph",
    "load_edge_list",
    "weight_matrix",
    "build_consensus_matrix",
    "second_eigenvalue",
    "min_consensus_rounds",
]

SCHEMES = ("lazy-metropolis", "metropolis", "uniform")

# 10-node testbed network used by the bundled experiments (16 edges).
_TESTBED_EDGES = (
    (9, 1), (9, 0), (9, 8), (9, 5), (8, 5), (4, 5), (3, 5), (0, 5),
    (0, 1), (2, 1), (3, 1), (6, 1), (7, 1), (7, 6), (7, 3), (2, 3),
)


@dataclass(frozen=True)
class Graph:
    """Undirected connected worker graph with nodes ``0 .. n-1``.

    Construction rejects self loops, out-of-range endpoints, and
    disconnected graphs (averaging consensus cannot mix across
    components). Use :func:`make_graph` to build one from any iterable
    of edge pairs.
    """

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        for edge in self.edges:
            i, j = edge
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {edge} out of range for n={self.n}")
            if i == j:
                raise ValueError(f"self loop {edge} is not allowed")
            if i > j:
                raise ValueError(f"edge {edge} must be stored low-high; use make_graph")
        if not self._is_connected():
            raise ValueError(
                "graph is not connected; consensus cannot average across components"
            )

    def _is_connected(self) -> bool:
        seen = {0}
        frontier = [0]
        adj = self.neighbor_lists()
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return len(seen) == self.n

    def neighbor_lists(self) -> list:
        """Adjacency lists, each sorted ascending."""
        adj = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        return [sorted(a) for a in adj]

    def degree(self, node: int) -> int:
        return sum(1 for i, j in self.edges if i == node or j == node)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a


def make_graph(n: int, edges) -> Graph:
    """Build a :class:`Graph`, normalizing edge order and dropping duplicates."""
    normalized = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self loop ({i}, {j}) is not allowed")
        normalized.add((min(i, j), max(i, j)))
    return Graph(n=int(n), edges=frozenset(normalized))


def complete_graph(n: int) -> Graph:
    return make_graph(n, ((i, j) for i in range(n) for j in range(i + 1, n)))


def ring_graph(n: int) -> Graph:
    if n < 2:
        return make_graph(n, ())
    if n == 2:
        return make_graph(2, [(0, 1)])
    return make_graph(n, ((i, (i + 1) % n) for i in range(n)))


def testbed_graph() -> Graph:
    """The 10-node testbed topology used throughout the bundled experiments."""
    return make_graph(10, _TESTBED_EDGES)


def load_edge_list(path) -> Graph:
    """Read a graph from a text file: first line ``n``, then one ``i j`` per line.

    Indices are 0-based. Out-of-range endpoints and self loops are
    rejected with the offending line in the message; repeated edges are
    collapsed.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty edge-list file")
    try:
        n = int(lines[0])
    except ValueError:
        raise ValueError(f"{path}: first line must be the node count, got {lines[0]!r}")
    edges = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"{path}:{lineno}: edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise ValueError(f"{path}:{lineno}: self loop ({i}, {j}) is not allowed")
        edges.append((i, j))
    return make_graph(n, edges)


@dataclass(frozen=True)
class ConsensusMatrix:
    """A validated mixing matrix together with its second eigenvalue."""

    matrix: np.ndarray
    lambda2: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def weight_matrix(graph: Graph, scheme: str = "lazy-metropolis") -> np.ndarray:
    """Raw weight matrix for ``graph`` under ``scheme`` (no validation).

    Schemes
    -------
    ``metropolis``
        M[i, j] = 1 / (1 + max(deg_i, deg_j)) on edges, diagonal fills
        each row to one. Symmetric and doubly stochastic but not
        necessarily positive semidefinite.
    ``lazy-metropolis``
        (I + M) / 2 with M as above; positive semidefinite by
        construction. This is the default used by the simulator.
    ``uniform``
        P[i, j] = 1 / (max_degree + 1) on edges; diagnostic scheme, not
        necessarily positive semidefinite.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown weighting scheme {scheme!r}; choose from {SCHEMES}")
    n = graph.n
    deg = np.array([graph.degree(i) for i in range(n)], dtype=float)
    p = np.zeros((n, n))
    if scheme in ("metropolis", "lazy-metropolis"):
        for i, j in graph.edges:
            w = 1.0 / (1.0 + max(deg[i], deg[j]))
            p[i, j] = w
            p[j, i] = w
    else:
        w = 1.0 / (deg.max() + 1.0) if n > 1 else 1.0
        for i, j in graph.edges:
            p[i, j] = w
            p[j, i] = w
    np.fill_diagonal(p, 1.0 - p.sum(axis=1))
    if scheme == "lazy-metropolis":
        p = (np.eye(n) + p) / 2.0
    return p


def build_consensus_matrix(graph: Graph, scheme: str = "lazy-metropolis") -> ConsensusMatrix:
    """Build the mixing matrix for ``graph`` and verify all its invariants.

    The returned matrix is symmetric, doubly stochastic (row and column
    sums within 1e-12 of one), positive semidefinite (smallest eigenvalue
    at least -1e-10), supported only on the diagonal and the graph's
    edges, and has second eigenvalue strictly below one.
    """
    p = weight_matrix(graph, scheme)
    n = graph.n
    ones = np.ones(n)
    if np.abs(p @ ones - ones).max() > 1e-12 or np.abs(ones @ p - ones).max() > 1e-12:
        raise ValueError(f"{scheme}: matrix is not doubly stochastic")
    if np.abs(p - p.T).max() > 1e-12:
        raise ValueError(f"{scheme}: matrix is not symmetric")
    if p.min() < 0.0:
        raise ValueError(f"{scheme}: negative entry {p.min()}")
    allowed = graph.adjacency() + np.eye(n)
    if np.any((p > 0) & (allowed == 0)):
        raise ValueError(f"{scheme}: support outside the graph's edges")
    min_eig = float(np.linalg.eigvalsh(p)[0])
    if min_eig < -1e-10:
        raise ValueError(
            f"{scheme}: matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}); "
            "use the lazy-metropolis scheme"
        )
    lam2 = second_eigenvalue(p)
    if n > 1 and lam2 >= 1.0:
        raise ValueError(f"{scheme}: second eigenvalue {lam2} >= 1, matrix does not mix")
    return ConsensusMatrix(matrix=p, lambda2=lam2)


def second_eigenvalue(p, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Second-largest eigenvalue of a symmetric doubly stochastic matrix.

    Power iteration on the complement of the all-ones direction, with a
    fixed seeded start vector so results are reproducible. Converges when
    the eigen-residual drops below ``tol`` (absolute). For a single node
    the value is 0 by convention. A returned value of 1.0 flags a matrix
    that does not mix (for example the identity).
    """
    a = p.matrix if isinstance(p, ConsensusMatrix) else np.asarray(p, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if n == 1:
        return 0.0
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(0x5EED)))
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        # Row-wise elementwise product keeps the reduction order fixed
        # independent of any BLAS threading.
        w = (a * v).sum(axis=1)
        w -= w.mean()
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return 0.0
        w /= norm
        aw = (a * w).sum(axis=1)
        rayleigh = float(w @ aw)
        residual = float(np.linalg.norm(aw - rayleigh * w))
        if residual <= tol:
            return rayleigh
        v = w
    raise RuntimeError(f"power iteration did not converge within {max_iter} iterations")


def min_consensus_rounds(n: int, func_lipschitz: float, eps: float, lambda2: float) -> int:
    """Rounds sufficient to drive per-node consensus error below ``eps``.

    Evaluates ``ceil(ln(2 sqrt(n) (1 + 2 L / eps)) / (1 - lambda2))`` with
    the natural logarithm. Nonincreasing in ``eps``, nondecreasing in the
    Lipschitz constant and in ``lambda2``.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if func_lipschitz <= 0:
        raise ValueError(f"Lipschitz constant must be positive, got {func_lipschitz}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0.0 <= lambda2 < 1.0:
        raise ValueError(f"bound is undefined for lambda2={lambda2}; need 0 <= lambda2 < 1")
    value = math.log(2.0 * math.sqrt(n) * (1.0 + 2.0 * func_lipschitz / eps)) / (1.0 - lambda2)
    return int(math.ceil(value))
