"""The constrained matrix space: symmetric N x N matrices annihilating e.

Centered, rescaled adjacency matrices live in

    M = { H : H = H^T, H e = 0 },    e = (1, ..., 1)/sqrt(N),

equipped with the inner product <X, Y> = (N/2) tr(XY).  This module houses
the projection onto that space, the centering map A -> (A - (d/N) J) /
sqrt(d-1), the switching directions xi_ijkl = Delta_ij + Delta_kl -
Delta_ik - Delta_jl (the tangent moves of the jump chain), the Gaussian
stationary ensemble of the constrained matrix flow, and finite-difference
directional derivatives of matrix observables.

Matrices are plain float64 numpy arrays; membership in the space is a
checked property (``assert_constrained``), not a wrapper type.
"""

from functools import lru_cache
from itertools import product

import numpy as np

from .streams import rng_stream

# Central-difference steps (scaled by 1 + max|H|): balance truncation vs.
# 64-bit rounding for low and high derivative orders.
FD_STEP_LOW = 1e-5
FD_STEP_HIGH = 1e-3


def uniform_unit(n):
    """The unit vector e = (1, ..., 1)/sqrt(n)."""
    return np.full(n, 1.0 / np.sqrt(n))


def project_constrained(mat):
    """Orthogonally project a square matrix onto the constrained space.

    Computes (1/2) P (M + M^T) P with P = I - e e^T; this is the map through
    which observables on the space are extended to all of R^{N x N}, so
    entrywise derivatives of observables are derivatives along the projected
    coordinate directions (see ``rrglab.flow``).
    """
    sym = 0.5 * (mat + mat.T)
    col_means = sym.mean(axis=0, keepdims=True)
    return sym - col_means - col_means.T + sym.mean()


def constraint_violation(h):
    """max |(H e)_i| / (N * max|H|), plus symmetry defect on the same scale."""
    n = h.shape[0]
    scale = n * max(abs(h).max(), 1e-300)
    row_sums = abs(h.sum(axis=1)).max()
    asym = abs(h - h.T).max()
    return max(row_sums, asym) / scale


def assert_constrained(h, tol=1e-10):
    """Raise unless H is symmetric with zero row sums, to relative ``tol``."""
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("matrix must be square")
    violation = constraint_violation(h)
    if violation > tol:
        raise ValueError(
            f"matrix violates the constrained-space invariants "
            f"(relative violation {violation:.3e} > {tol:.1e})")


def center_rescale(graph):
    """Centered, rescaled adjacency matrix H = (A - (d/N) J) / sqrt(d-1).

    The all-ones direction is an exact null vector of H, and the nontrivial
    spectrum is asymptotically supported on [-2, 2].
    """
    d = graph.degree
    if d < 2:
        raise ValueError(f"degree must be >= 2 to center and rescale, got {d}")
    n = graph.n_vertices
    return (graph.adjacency - d / n) / np.sqrt(d - 1.0)


def inner_product(x, y):
    """<X, Y> = (N/2) tr(XY) for square matrices of matching size."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return 0.5 * x.shape[0] * float((x * y.T).sum())


def switch_direction(n, i, j, k, l):
    """Dense switching direction xi = Delta_ij + Delta_kl - Delta_ik - Delta_jl.

    Delta_ab places 1 at (a,b) and (b,a) (so 2 at (a,a) when a = b);
    coincident indices are handled exactly by that rule, no special cases.
    The result is symmetric with zero row sums for any index choice.
    """
    xi = np.zeros((n, n))
    for a, b, sign in ((i, j, 1.0), (k, l, 1.0), (i, k, -1.0), (j, l, -1.0)):
        xi[a, b] += sign
        xi[b, a] += sign
    return xi


def h_switch_component(h, i, j, k, l):
    """tr(xi_ijkl H) = 2 (H_ij + H_kl - H_ik - H_jl); valid with coincidences."""
    return 2.0 * (h[i, j] + h[k, l] - h[i, k] - h[j, l])


@lru_cache(maxsize=None)
def _householder(n):
    """(u, tau) with R = I - tau u u^T orthogonal, symmetric, R e_N = e."""
    if n == 1:
        return np.zeros(1), 0.0
    u = -uniform_unit(n)
    u[-1] += 1.0
    u.flags.writeable = False
    return u, 2.0 / float(u @ u)


def embed_in_offspace(vectors):
    """Map columns from R^{N-1} into the orthogonal complement of e in R^N.

    Appends a zero coordinate and applies the Householder reflection taking
    e_N to e; the image of any x in R^{N-1} is orthogonal to e.  Accepts a
    vector or a (N-1) x k column stack.
    """
    vec = np.atleast_2d(np.asarray(vectors, dtype=np.float64).T).T
    m, k = vec.shape
    u, tau = _householder(m + 1)
    padded = np.vstack([vec, np.zeros((1, k))])
    out = padded - tau * np.outer(u, u @ padded)
    return out[:, 0] if np.ndim(vectors) == 1 else out


def restrict_to_offspace(mat):
    """Represent a constrained matrix on the orthogonal complement of e.

    Conjugates by the Householder reflection sending e to e_N and drops the
    last row and column; for symmetric H with H e = 0 the result is the
    (N-1) x (N-1) core whose spectrum is exactly the nontrivial spectrum of
    H, and ``embed_in_offspace`` maps its eigenvectors back.
    """
    n = mat.shape[0]
    u, tau = _householder(n)
    um = u @ mat
    core = mat - tau * np.outer(u, um) - tau * np.outer(mat @ u, u) \
        + tau * tau * float(um @ u) * np.outer(u, u)
    return core[:-1, :-1]


def sample_constrained_goe(n, seed=None, rng=None):
    """Sample the Gaussian stationary law of the constrained matrix flow.

    Draws a symmetric (N-1) x (N-1) Gaussian core with off-diagonal variance
    1/N and diagonal variance 2/N, pads it with a zero row/column, and
    conjugates by the Householder reflection sending e_N to e.  The result W
    is symmetric with W e = 0 and entry covariance

        E[W_ij W_kl] = (1/N) (d_ik - 1/N)(d_jl - 1/N)
                     + (1/N) (d_il - 1/N)(d_jk - 1/N).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if rng is None:
        rng = rng_stream(0 if seed is None else seed)
    m = n - 1
    raw = rng.normal(size=(m, m))
    core = (raw + raw.T) / np.sqrt(2.0 * n)
    block = np.zeros((n, n))
    block[:m, :m] = core
    u, tau = _householder(n)
    ub = u @ block
    w = block - tau * np.outer(u, ub) - tau * np.outer(ub, u) \
        + tau * tau * float(ub @ u) * np.outer(u, u)
    return 0.5 * (w + w.T)


def constrained_goe_covariance(n, i, j, k, l):
    """Exact second moment E[W_ij W_kl] of the constrained Gaussian ensemble."""
    def delta(a, b):
        return 1.0 if a == b else 0.0

    return (delta(i, k) - 1.0 / n) * (delta(j, l) - 1.0 / n) / n \
        + (delta(i, l) - 1.0 / n) * (delta(j, k) - 1.0 / n) / n


def default_fd_step(h, order):
    """Default central-difference step for the given derivative order."""
    base = FD_STEP_LOW if order <= 2 else FD_STEP_HIGH
    return base * (1.0 + float(abs(h).max()))


def directional_derivative(func, h, directions, step=None):
    """Mixed central-difference derivative of F along matrix directions.

    For directions X_1, ..., X_n (dense matrices, or (i,j,k,l) tuples that
    are expanded to switching directions), estimates the n-th mixed
    derivative d^n/dt_1...dt_n F(H + sum_a t_a X_a) at t = 0 by the
    2^n-corner stencil

        sum_{s in {-1,+1}^n} (prod_a s_a) F(H + step * sum_a s_a X_a)
            / (2 * step)^n.

    Repeated directions give pure higher-order derivatives; n = 0 returns
    F(H).  Non-finite F values propagate to the caller.
    """
    dirs = [switch_direction(h.shape[0], *x) if isinstance(x, tuple) else x
            for x in directions]
    n = len(dirs)
    if n == 0:
        return func(h)
    if step is None:
        step = default_fd_step(h, n)
    total = 0.0
    for signs in product((1.0, -1.0), repeat=n):
        point = h + step * sum(s * x for s, x in zip(signs, dirs))
        total += float(np.prod(signs)) * func(point)
    return total / (2.0 * step) ** n
