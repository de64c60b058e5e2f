"""Brute-force references for testing the solvers.

Nothing here calls solver code: the support-function, gain and equilibrium
routines of the package are checked against linear solves, dense grids over
ball boundaries and random feasible kernels built from first principles.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

GRID_CAP = 10**6


class ReducibleChain(ValueError):
    pass


@dataclass(frozen=True)
class ExactChainSolution:
    stationary: np.ndarray
    gain: float
    bias: np.ndarray


def exact_gain_bias(P, r):
    """Stationary distribution, gain and anchored bias of a fixed irreducible chain."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    S = P.shape[0]
    n, _ = connected_components(P > 0, directed=True, connection="strong")
    if n != 1:
        raise ReducibleChain("chain is reducible; stationary system is singular")
    A = P.T - np.eye(S)
    A[-1] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    mu = np.linalg.solve(A, b)
    g = float(mu @ r)
    x = np.linalg.solve(np.eye(S) - P + np.outer(np.ones(S), mu), r - g)
    return ExactChainSolution(mu, g, x - x[0])


def exact_gains(P, r):
    """Gains of a batch of chains ``P (K, S, S)`` with one reward vector ``r (S,)``."""
    P = np.asarray(P, dtype=float)
    K, S, _ = P.shape
    A = np.transpose(P, (0, 2, 1)) - np.eye(S)
    A[:, -1, :] = 1.0
    b = np.zeros((K, S, 1))
    b[:, -1, 0] = 1.0
    mu = np.linalg.solve(A, b)[:, :, 0]
    return mu @ r


def ergodicity_coefficient(P):
    """``1 - max_{i,j} TV(P_i, P_j)``, with TV the half L1 distance between rows."""
    P = np.asarray(P, dtype=float)
    d = np.abs(P[:, None, :] - P[None, :, :]).sum(axis=2)
    return 1.0 - 0.5 * float(d.max())


def span(v):
    v = np.asarray(v)
    return float(v.max() - v.min())


# ---------------------------------------------------------------- ball geometry


def _kl_rows(q, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(q > 0, q * np.log(q / p), 0.0)
    return t.sum(axis=-1)


def _div(q, p0, kind):
    if kind == "l1":
        return np.abs(q - p0).sum(axis=-1)
    return _kl_rows(q, p0)


def _radial_extent(p0, d, kind, theta, iters=200):
    """Largest ``t`` with ``p0 + t d`` in the simplex and inside the ball, per direction row."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lim = np.where(d < 0, p0 / -d, np.inf)
    t_s = lim.min(axis=1)
    if kind == "l1":
        return np.minimum(t_s, theta / np.abs(d).sum(axis=1))
    inside = _div(p0 + t_s[:, None] * d, p0, kind) <= theta
    lo = np.zeros_like(t_s)
    hi = t_s.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = _div(p0 + mid[:, None] * d, p0, kind) <= theta
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return np.where(inside, t_s, lo)


def _tangent_basis(free):
    """Orthonormal basis of ``{x : sum x = 0, x_j = 0 off free}``."""
    S = free.size
    idx = np.flatnonzero(free)
    k = idx.size
    if k <= 1:
        return np.zeros((0, S))
    M = np.zeros((k, S))
    M[np.arange(k), idx] = 1.0
    u, _, _ = np.linalg.svd(np.eye(k) - 1.0 / k)
    return u[:, :k - 1].T @ M


def ball_boundary(p0, kind, theta, n):
    """``n`` boundary points of a ball over 2 or 3 states (plus ``p0`` itself).

    Points lie at evenly spaced directions in the plane (or line) of the ball;
    KL balls are confined to the support of ``p0``.
    """
    p0 = np.asarray(p0, dtype=float)
    kind = str(kind).lower()
    if kind == "singleton" or theta == 0:
        return p0[None, :]
    free = p0 > 0 if kind == "kl" else np.ones(p0.size, dtype=bool)
    B = _tangent_basis(free)
    if B.shape[0] == 0:
        return p0[None, :]
    extra = np.zeros((0, p0.size))
    if B.shape[0] == 1:
        d = np.vstack([B[0], -B[0]])
    elif B.shape[0] == 2:
        phi = 2 * np.pi * np.arange(n) / n
        d = np.cos(phi)[:, None] * B[0] + np.sin(phi)[:, None] * B[1]
        if kind == "l1":
            # kinks of the L1 ball lie along e_i - e_j
            e = np.eye(p0.size)
            d = np.vstack([d] + [e[i] - e[j] for i in range(3) for j in range(3) if i != j])
        extra = _face_points(p0, kind, theta)
    else:
        raise ValueError("ball_boundary supports at most 3 states")
    t = _radial_extent(p0, d, kind, theta)
    pts = p0 + t[:, None] * d
    return np.vstack([p0, np.clip(pts, 0.0, None), extra])


def _face_points(p0, kind, theta, n=2001, iters=200):
    """Corners where a 3-state ball meets the faces ``q_j = 0`` of the simplex."""
    out = []
    for j in range(3):
        a, b = [k for k in range(3) if k != j]
        if kind == "kl" and (p0[a] == 0 or p0[b] == 0):
            continue

        def f(x):
            q = np.zeros((np.size(x), 3))
            q[:, a] = x
            q[:, b] = 1.0 - np.asarray(x)
            return _div(q, p0, kind)

        xs = np.linspace(0.0, 1.0, n)
        fx = f(xs)
        k = int(np.argmin(fx))
        if fx[k] > theta:
            continue
        ends = []
        for edge in (0.0, 1.0):
            if f(edge)[0] <= theta:
                ends.append(edge)
                continue
            lo, hi = xs[k], edge                # lo inside, hi outside
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                if f(mid)[0] <= theta:
                    lo = mid
                else:
                    hi = mid
            ends.append(lo)
        for x in ends:
            q = np.zeros(3)
            q[a], q[b] = x, 1.0 - x
            out.append(q)
    return np.array(out).reshape(-1, 3)


def interval_grid(p0, kind, theta, n):
    """For 2 states: ``n`` evenly spaced points across the whole ball."""
    ends = ball_boundary(p0, kind, theta, 2)
    if ends.shape[0] == 1:
        return ends
    a, b = ends[1], ends[2]
    w = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - w) * a + w * b


def grid_sigma(p0, kind, theta, V, n=10_000):
    """Minimum of ``q . V`` over a dense boundary grid of a 2- or 3-state ball."""
    V = np.asarray(V, dtype=float)
    if np.asarray(p0).size == 2:
        pts = interval_grid(p0, kind, theta, n)
    else:
        pts = ball_boundary(p0, kind, theta, n)
    return float((pts @ V).min())


def simplex_grid_sigma(p0, kind, theta, V, n=10_000):
    """Two-state check on the plain simplex grid ``{k / n}`` filtered to the ball."""
    p0 = np.asarray(p0, dtype=float)
    q0 = np.arange(n + 1) / n
    Q = np.stack([q0, 1 - q0], axis=1)
    keep = _div(Q, p0, kind) <= theta + 1e-15 if kind != "singleton" else np.all(Q == p0, axis=1)
    return float((Q[keep] @ np.asarray(V, dtype=float)).min())


def sample_ball(p0, kind, theta, rng, size=1):
    """Random feasible distributions in a ball, a third of them on its boundary."""
    p0 = np.asarray(p0, dtype=float)
    kind = str(kind).lower()
    if kind == "singleton" or theta == 0:
        return np.repeat(p0[None, :], size, axis=0)
    free = p0 > 0 if kind == "kl" else np.ones(p0.size, dtype=bool)
    B = _tangent_basis(free)
    if B.shape[0] == 0:
        return np.repeat(p0[None, :], size, axis=0)
    z = rng.normal(size=(size, B.shape[0]))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    d = z @ B
    t = _radial_extent(p0, d, kind, theta)
    frac = rng.random(size)
    frac[: size // 3] = 1.0
    return np.clip(p0 + (frac * t)[:, None] * d, 0.0, None)


# ---------------------------------------------------------- worst-case gain grid


def _candidate_rows(nominal, weights, kind, theta, density):
    """Candidate aggregated rows for one state.

    ``nominal`` (M, S) and ``weights`` (M,) list every active component ball at
    the state.  For 2 states the aggregate set is an interval, gridded
    directly.  For 3 states each grid direction selects every component's
    extreme point in that direction (dense boundary), so the aggregated rows
    trace the boundary of the mixture set.
    """
    S = nominal.shape[1]
    if S == 2:
        lo = np.zeros(2)
        hi = np.zeros(2)
        for p, w in zip(nominal, weights):
            ends = ball_boundary(p, kind, theta, 2)
            if ends.shape[0] == 1:
                lo += w * ends[0]
                hi += w * ends[0]
            else:
                a, b = (ends[1], ends[2]) if ends[1][0] <= ends[2][0] else (ends[2], ends[1])
                lo += w * a
                hi += w * b
        s = np.linspace(0.0, 1.0, density)[:, None]
        return (1 - s) * lo + s * hi
    phi = 2 * np.pi * np.arange(density) / density
    plane = np.array([[1, -1, 0], [1, 1, -2]], dtype=float)
    plane /= np.linalg.norm(plane, axis=1, keepdims=True)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=1) @ plane
    rows = np.zeros((density, S))
    for p, w in zip(nominal, weights):
        pts = ball_boundary(p, kind, theta, 20 * density)
        pick = np.argmin(u @ pts.T, axis=1)
        rows += w * pts[pick]
    return rows


def worst_case_gain_grid(rewards, nominal, weights, kind, theta, policy, grid_density=200,
                         cap=GRID_CAP, seed=0):
    """Minimum exact gain over a grid of kernels from the rectangular uncertainty set.

    Parameters
    ----------
    rewards : (S, A) array
    nominal : (S, A, K, S) array of component ball centres
    weights : (S, A, K) mixing weights (``K = 1`` for a plain MDP)
    policy : (S, A) action probabilities
    grid_density : candidate rows per state

    Products over states beyond ``cap`` kernels are subsampled uniformly.
    """
    rewards = np.asarray(rewards, dtype=float)
    nominal = np.asarray(nominal, dtype=float)
    weights = np.asarray(weights, dtype=float)
    pi = np.asarray(policy, dtype=float)
    S, A = rewards.shape
    if S > 3 or A > 4:
        raise ValueError("worst_case_gain_grid is limited to |S| <= 3 and 4 actions")
    r = np.einsum("sa,sa->s", pi, rewards)
    cands = []
    for s in range(S):
        w = pi[s][:, None] * weights[s]
        live = w > 0
        cands.append(_candidate_rows(nominal[s][live], w[live], kind, theta, grid_density))
    sizes = [c.shape[0] for c in cands]
    total = int(np.prod(sizes))
    if total <= cap:
        idx = np.indices(sizes).reshape(S, -1)
    else:
        rng = np.random.default_rng(seed)
        idx = np.stack([rng.integers(0, n, size=cap) for n in sizes])
    best = np.inf
    step = 200_000
    for start in range(0, idx.shape[1], step):
        blk = idx[:, start:start + step]
        P = np.stack([cands[s][blk[s]] for s in range(S)], axis=1)
        best = min(best, float(exact_gains(P, r).min()))
    return best
