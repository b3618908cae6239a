"""Markov jump chain on d-regular graphs driven by random edge switchings.

Each step draws a vertex 4-tuple (i, j, m, n) uniformly from [0, N)^4 and,
when (i,j) and (m,n) are edges with none of the four cross pairs adjacent,
replaces the edges {i,j}, {m,n} by {i,m}, {j,n}.  Every accepted move is its
own inverse under the reversed tuple, so the chain is reversible and the
uniform distribution on simple d-regular graphs is stationary.

The inner loop runs through a compiled kernel when available (see
``rrglab._kernels``); both backends consume identical blocks of RNG tuples,
so trajectories are reproducible across backends for a given seed.

The generator of the chain acting on an observable f is

    Qf(A) = (1/(8*N*d)) * sum_{i,j,m,n} I(i,j,m,n; A) * (f(A') - f(A)),

with A' the switched graph; ``jump_generator_apply`` evaluates it either by
the dense sum over all N^4 tuples or by the sparse scan over ordered pairs
of directed edges, and ``invariance_report`` verifies stationarity and
detailed balance exactly on exhaustively enumerated state spaces.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .graphs import RegularGraph, enumerate_regular_graphs, tuple_switchable
from .streams import rng_stream

# Tuples are drawn from the RNG in blocks of this many steps; any block size
# yields the same trajectory because draws are consumed element by element.
DEFAULT_BLOCK_SIZE = 1 << 15


@dataclass
class JumpChainState:
    """One chain: current graph, step/acceptance counters, RNG stream."""

    graph: RegularGraph
    steps_taken: int = 0
    accepted_switches: int = 0
    rng: np.random.Generator = None

    def __post_init__(self):
        if self.rng is None:
            self.rng = rng_stream(0)
        if self.accepted_switches > self.steps_taken:
            raise ValueError("accepted_switches cannot exceed steps_taken")


def jump_step(state):
    """Advance the chain by one step; returns the new state.

    Draws one 4-tuple from the state's RNG stream (advancing it in place)
    and applies the switching when the acceptance indicator holds.
    """
    n = state.graph.n_vertices
    tuples = state.rng.integers(0, n, size=(1, 4), dtype=np.int64)
    adj = state.graph.adjacency_copy()
    accepted = _kernels.run_switch_steps(adj, tuples)
    graph = RegularGraph(adj, validate=False) if accepted else state.graph
    return replace(state, graph=graph,
                   steps_taken=state.steps_taken + 1,
                   accepted_switches=state.accepted_switches + accepted)


def run_chain(graph, n_steps, seed=None, rng=None, block_size=DEFAULT_BLOCK_SIZE):
    """Run ``n_steps`` switching steps; returns (final graph, accepted count).

    Deterministic given (graph, n_steps, seed): the tuple stream depends only
    on the RNG stream, not on the block size or kernel backend.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if rng is None:
        rng = rng_stream(0 if seed is None else seed)
    if n_steps == 0:
        return graph, 0
    n = graph.n_vertices
    adj = graph.adjacency_copy()
    accepted = 0
    remaining = n_steps
    while remaining:
        block = min(block_size, remaining)
        tuples = rng.integers(0, n, size=(block, 4), dtype=np.int64)
        accepted += _kernels.run_switch_steps(adj, tuples)
        remaining -= block
    return RegularGraph(adj, validate=False), accepted


def chain_visit_counts(graph, n_steps, seed=None, rng=None,
                       block_size=DEFAULT_BLOCK_SIZE):
    """Histogram of the states visited by the chain.

    Counts the state occupied after each of the ``n_steps`` steps (rejected
    steps count as revisits), keyed by ``RegularGraph.canonical_key``.  The
    counts sum to ``n_steps``; used for chi-square uniformity checks against
    enumerated state spaces.
    """
    if rng is None:
        rng = rng_stream(0 if seed is None else seed)
    n = graph.n_vertices
    triu = np.triu_indices(n, 1)
    adj = graph.adjacency_copy()
    counts = {}

    def bump(key, by):
        counts[key] = counts.get(key, 0) + by

    cur_key = adj[triu].tobytes()
    remaining = n_steps
    while remaining:
        block = min(block_size, remaining)
        tuples = rng.integers(0, n, size=(block, 4), dtype=np.int64)
        start = 0
        while start < block:
            nxt = _kernels.run_until_accept(adj, tuples, start)
            if nxt < 0:
                bump(cur_key, block - start)
                break
            dwell = nxt - 1 - start
            if dwell:
                bump(cur_key, dwell)
            cur_key = adj[triu].tobytes()
            bump(cur_key, 1)
            start = nxt
        remaining -= block
    return counts


def switchable_tuples(graph):
    """All tuples (i, j, m, n) accepted by the jump chain, as an (K, 4) array.

    The support is ordered pairs of directed edges whose four cross pairs
    are non-adjacent; coincident vertices never appear because each edge's
    far endpoint would make a cross pair adjacent.  Rows are sorted in the
    lexicographic tuple order of the dense N^4 scan.  The (N*d)^2 indicator
    scan runs in fixed-size row blocks to bound peak memory.
    """
    a = graph.adjacency.astype(bool)
    src, dst = np.nonzero(graph.adjacency)
    m, n = src[None, :], dst[None, :]
    blocks = []
    block = max(1, (1 << 22) // max(1, src.size))
    for start in range(0, src.size, block):
        i = src[start:start + block, None]
        j = dst[start:start + block, None]
        ok = ~(a[i, m] | a[i, n] | a[j, m] | a[j, n])
        p, q = np.nonzero(ok)
        blocks.append(np.stack([src[start + p], dst[start + p],
                                src[q], dst[q]], axis=1))
    return np.concatenate(blocks).astype(np.int64)


def acceptance_probability(graph):
    """Exact single-step acceptance probability: (1/N^4) * sum of indicators."""
    n = graph.n_vertices
    return len(switchable_tuples(graph)) / float(n) ** 4


def switched_graph(graph, i, j, m, n):
    """The result of the accepted switching (i,j),(m,n) -> (i,m),(j,n)."""
    adj = graph.adjacency_copy()
    adj[i, j] = adj[j, i] = adj[m, n] = adj[n, m] = 0
    adj[i, m] = adj[m, i] = adj[j, n] = adj[n, j] = 1
    return RegularGraph(adj, validate=False)


def jump_generator_apply(f, graph, method="sparse"):
    """Evaluate the jump-chain generator Qf at one graph.

    ``method="sparse"`` scans the (N*d)^2 ordered pairs of directed edges;
    ``method="dense"`` scans all N^4 tuples and checks the acceptance
    indicator per tuple.  Both accumulate the same nonzero terms in the same
    order, so they agree bit for bit.
    """
    n, d = graph.n_vertices, graph.degree
    if d == 0:
        return 0.0
    f_here = f(graph)
    total = 0.0
    if method == "sparse":
        for i, j, m, k in switchable_tuples(graph):
            total += f(switched_graph(graph, i, j, m, k)) - f_here
    elif method == "dense":
        for i in range(n):
            for j in range(n):
                for m in range(n):
                    for k in range(n):
                        if tuple_switchable(i, j, m, k, graph):
                            total += f(switched_graph(graph, i, j, m, k)) - f_here
    else:
        raise ValueError(f"unknown method {method!r}")
    return total / (8.0 * n * d)


@dataclass(frozen=True)
class InvarianceReport:
    """Exhaustive stationarity and reversibility check on a small state space."""

    n_vertices: int
    degree: int
    n_graphs: int
    n_transitions: int
    observable_sums: np.ndarray  # sum_A Qf(A), one entry per observable
    observable_scales: np.ndarray  # sum_A |Qf(A)|, the relative-error scale
    max_relative_sum: float
    reversible: bool
    passed: bool


def invariance_report(n_vertices, degree, n_observables=10, seed=0, rtol=1e-10):
    """Verify uniform-measure invariance and detailed balance exhaustively.

    Enumerates every labeled d-regular graph on ``n_vertices`` vertices,
    computes all jump-chain transitions, and checks (a) that the transition
    multiset is exactly symmetric (each move and its inverse occur equally
    often, so the uniform measure is reversible), and (b) that
    ``sum_A Qf(A) = 0`` to relative tolerance ``rtol`` for ``n_observables``
    random observables (i.i.d. standard normal values on the state space).
    """
    graphs = enumerate_regular_graphs(n_vertices, degree)
    if not graphs:
        raise ValueError(f"no {degree}-regular graphs on {n_vertices} vertices")
    n, d = n_vertices, degree
    n_graphs = len(graphs)

    # Pack each graph's upper triangle into an integer so a switching is a
    # 4-bit XOR; needs n*(n-1)/2 <= 63, plenty for exhaustive sizes.
    triu = np.triu_indices(n, 1)
    n_bits = len(triu[0])
    if n_bits > 63:
        raise ValueError(f"state space too large to pack (n={n})")
    bit_of = np.zeros((n, n), dtype=np.int64)
    bit_of[triu] = np.arange(n_bits)
    bit_of = bit_of + bit_of.T
    weights = np.int64(1) << np.arange(n_bits, dtype=np.int64)
    bits = np.stack([g.adjacency[triu] for g in graphs]).astype(np.int64)
    keys = bits @ weights

    order = np.argsort(keys)
    sorted_keys = keys[order]

    src_parts, dst_parts = [], []
    for g_idx, g in enumerate(graphs):
        tuples = switchable_tuples(g)
        if not len(tuples):
            continue
        i, j, m, k = tuples.T
        flips = ((np.int64(1) << bit_of[i, j]) ^ (np.int64(1) << bit_of[m, k])
                 ^ (np.int64(1) << bit_of[i, m]) ^ (np.int64(1) << bit_of[j, k]))
        src_parts.append(np.full(len(tuples), g_idx, dtype=np.int64))
        dst_parts.append(keys[g_idx] ^ flips)

    if src_parts:
        src = np.concatenate(src_parts)
        dst_keys = np.concatenate(dst_parts)
        pos = np.searchsorted(sorted_keys, dst_keys)
        if not (pos < n_graphs).all() or not (sorted_keys[pos] == dst_keys).all():
            raise AssertionError("switching left the enumerated state space")
        dst = order[pos]
    else:
        src = dst = np.empty(0, dtype=np.int64)

    # Detailed balance w.r.t. the uniform measure: the multiset of
    # (source, destination) pairs equals the multiset of reversed pairs.
    forward = np.sort(src * n_graphs + dst)
    backward = np.sort(dst * n_graphs + src)
    reversible = bool(np.array_equal(forward, backward))

    rng = rng_stream(seed)
    f_values = rng.normal(size=(n_observables, n_graphs))
    norm = 8.0 * n * max(d, 1)
    out_degree = np.bincount(src, minlength=n_graphs).astype(np.float64)
    sums = np.empty(n_observables)
    scales = np.empty(n_observables)
    for fi, f in enumerate(f_values):
        qf = (np.bincount(src, weights=f[dst], minlength=n_graphs)
              - out_degree * f) / norm
        sums[fi] = qf.sum()
        scales[fi] = np.abs(qf).sum()
    rel = np.abs(sums) / np.maximum(scales, 1e-300)
    max_rel = float(rel.max()) if n_observables else 0.0

    return InvarianceReport(
        n_vertices=n, degree=d, n_graphs=n_graphs, n_transitions=len(src),
        observable_sums=sums, observable_scales=scales,
        max_relative_sum=max_rel, reversible=reversible,
        passed=reversible and max_rel <= rtol)
