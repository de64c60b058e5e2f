"""Equilibrium oracle for the per-state matrix games of Robust Nash-Iteration.

Three classes are solved:

* common payoff (all agents share one tensor): best joint action, pure;
* two-player zero sum (after centering each tensor): minimax saddle point
  from a dense tableau simplex;
* general two-player: support enumeration, keeping the equilibrium with the
  largest payoff sum, or the one on a preferred pair of supports when asked.

Only the first two carry the selection guarantees the convergence theory asks
for; the bimatrix path is tagged so callers can report it as heuristic.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NoEquilibriumFound, UnsupportedGameClass

GLOBAL_OPTIMAL = "global_optimal"
SADDLE_POINT = "saddle_point"
GENERAL_BIMATRIX = "general_bimatrix"

MODES = ("auto", "common", "zero_sum", "bimatrix")

CLASS_TOL = 1e-12
CERT_TOL = 1e-9
PERTURBATION = 1e-9


@dataclass(frozen=True)
class StageGame:
    """Payoff tensors of one state: ``payoffs[i]`` has shape ``actions``."""

    payoffs: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.payoffs, dtype=float)
        if q.ndim < 2 or q.shape[0] != q.ndim - 1:
            raise ValueError("payoffs must have shape (N, A_0, ..., A_{N-1})")
        if not np.all(np.isfinite(q)):
            raise ValueError("payoffs must be finite")
        object.__setattr__(self, "payoffs", q)

    @property
    def num_agents(self):
        return self.payoffs.shape[0]

    @property
    def actions(self):
        return self.payoffs.shape[1:]


@dataclass(frozen=True)
class StageEquilibrium:
    strategies: tuple
    tag: str
    values: np.ndarray
    perturbation: float = 0.0


def expected_payoffs(payoffs, strategies):
    """Expected payoff of every agent under a product of mixed strategies."""
    out = payoffs
    for x in strategies:
        out = np.tensordot(out, x, axes=([1], [0]))
    return out


def deviation_gap(payoffs, strategies):
    """Largest gain any agent gets from a unilateral pure deviation."""
    payoffs = np.asarray(payoffs, dtype=float)
    n = payoffs.shape[0]
    vals = expected_payoffs(payoffs, strategies)
    gap = -np.inf
    for i in range(n):
        t = payoffs[i]
        # contract every axis except i, last to first to keep indices valid
        for j in reversed(range(n)):
            if j != i:
                t = np.tensordot(t, strategies[j], axes=([j], [0]))
        gap = max(gap, float(t.max() - vals[i]))
    return gap


def classify(payoffs, tol=CLASS_TOL):
    n = payoffs.shape[0]
    if all(np.max(np.abs(payoffs[i] - payoffs[0])) <= tol for i in range(1, n)):
        return "common"
    if n == 2:
        c0 = payoffs[0] - payoffs[0].mean()
        c1 = payoffs[1] - payoffs[1].mean()
        if np.max(np.abs(c0 + c1)) <= tol:
            return "zero_sum"
        return "bimatrix"
    raise UnsupportedGameClass(f"no oracle for {n}-player general-sum stage games")


def solve_stage(game, mode="auto", prefer=None):
    """Equilibrium of one stage game.

    Parameters
    ----------
    game : StageGame or array_like
        Payoff tensors of shape ``(N, A_0, ..., A_{N-1})``.
    mode : {'auto', 'common', 'zero_sum', 'bimatrix'}
    prefer : StageEquilibrium, optional
        Bimatrix games only: if some equilibrium has the same supports as
        ``prefer``, it is returned instead of the welfare maximizer.

    Returns
    -------
    StageEquilibrium
    """
    if not isinstance(game, StageGame):
        game = StageGame(game)
    q = game.payoffs
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    kind = classify(q) if mode == "auto" else mode
    if kind != "common" and q.shape[0] != 2:
        raise UnsupportedGameClass(f"{kind} oracle needs exactly 2 agents")

    if kind == "common":
        return _common_payoff(q)
    if kind == "zero_sum":
        x, y, _ = solve_zero_sum(q[0])
        return StageEquilibrium((x, y), SADDLE_POINT, expected_payoffs(q, (x, y)))
    return _bimatrix(q[0], q[1], prefer)


def _common_payoff(q):
    flat = q[0].ravel()
    best = flat.max()
    k = int(np.argmax(flat >= best - CLASS_TOL))
    idx = np.unravel_index(k, q.shape[1:])
    strategies = tuple(np.eye(m)[a] for m, a in zip(q.shape[1:], idx))
    return StageEquilibrium(strategies, GLOBAL_OPTIMAL, q[(slice(None),) + idx].copy())


# ------------------------------------------------------------------ zero-sum games


def _simplex_max(T, m, n, eps=1e-12, max_pivots=10_000):
    """Maximize the objective of tableau ``T`` in place (Bland's rule).

    ``T`` has ``m`` constraint rows followed by the objective row
    ``[-c, 0, 0]``; columns are ``n`` decision variables, ``m`` slacks, rhs.
    The starting basis is the slack basis.
    """
    basis = list(range(n, n + m))
    for _ in range(max_pivots):
        obj = T[m, :-1]
        cand = np.flatnonzero(obj < -eps)
        if cand.size == 0:
            return basis
        e = int(cand[0])
        col = T[:m, e]
        pos = col > eps
        if not pos.any():
            raise RuntimeError("unbounded matrix-game LP")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + eps * max(1.0, abs(rmin)))
        r = int(min(ties, key=lambda i: basis[i]))
        T[r] /= T[r, e]
        for i in range(m + 1):
            if i != r and T[i, e] != 0.0:
                T[i] -= T[i, e] * T[r]
        basis[r] = e
    raise RuntimeError("simplex pivot limit reached")


def solve_zero_sum(M):
    """Minimax strategies of the matrix game where the row player maximizes ``M``.

    Returns ``(x, y, value)`` with ``max_i (M y)_i - min_j (x M)_j`` certified
    below ``1e-10 * max(1, |M|)``.
    """
    M = np.asarray(M, dtype=float)
    m, n = M.shape
    shift = 1.0 - M.min()
    P = M + shift  # all entries >= 1, so the game value is positive
    # column player: max 1'y  s.t.  P y <= 1, y >= 0
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = P
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = _simplex_max(T, m, n)
    y = np.zeros(n)
    for r, b in enumerate(basis):
        if b < n:
            y[b] = T[r, -1]
    u = T[m, n:n + m].copy()  # duals of the row constraints
    y = np.clip(y, 0.0, None)
    u = np.clip(u, 0.0, None)
    x = u / u.sum()
    y = y / y.sum()
    x, y = _polish(M, x, y)
    hi = float((M @ y).max())
    lo = float((x @ M).min())
    scale = max(1.0, float(np.abs(M).max()))
    if hi - lo > 1e-10 * scale:
        raise NoEquilibriumFound(f"zero-sum duality gap {hi - lo:.3g} exceeds certificate")
    return x, y, 0.5 * (hi + lo)


def _polish(M, x, y, eps=1e-9):
    """Resolve the indifference equations on the simplex supports, keep if better."""
    I = np.flatnonzero(x > eps)
    J = np.flatnonzero(y > eps)
    if I.size != J.size:
        return x, y
    sol = _indifference(M[np.ix_(I, J)], M[np.ix_(I, J)].T)
    if sol is None:
        return x, y
    xs, ys = sol
    if xs.min() < 0 or ys.min() < 0:
        return x, y
    x2 = np.zeros_like(x)
    y2 = np.zeros_like(y)
    x2[I] = xs
    y2[J] = ys
    old = (M @ y).max() - (x @ M).min()
    new = (M @ y2).max() - (x2 @ M).min()
    return (x2, y2) if new <= old else (x, y)


def _indifference(Asub, Bsub_T):
    """Square system: y makes the row player indifferent, x the column player."""
    k = Asub.shape[0]
    out = []
    for G in (Asub, Bsub_T):
        S = np.zeros((k + 1, k + 1))
        S[:k, :k] = G
        S[:k, k] = -1.0
        S[k, :k] = 1.0
        rhs = np.zeros(k + 1)
        rhs[k] = 1.0
        try:
            out.append(np.linalg.solve(S, rhs)[:k])
        except np.linalg.LinAlgError:
            return None
    ys, xs = out
    return xs, ys


# ------------------------------------------------------------ support enumeration


@lru_cache(maxsize=None)
def _combos(m, k):
    return np.array(list(itertools.combinations(range(m), k)), dtype=int)


def _batched_solve(S, rhs):
    try:
        return np.linalg.solve(S, rhs), np.ones(S.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        sol = np.zeros(rhs.shape)
        ok = np.zeros(S.shape[0], dtype=bool)
        for b in range(S.shape[0]):
            try:
                sol[b] = np.linalg.solve(S[b], rhs[b])
                ok[b] = True
            except np.linalg.LinAlgError:
                pass
        return sol, ok


def _indiff_batch(G):
    """Solve ``[[G, -1], [1', 0]] z = e_last`` for a batch ``G`` of shape (B, k, k)."""
    B, k, _ = G.shape
    S = np.zeros((B, k + 1, k + 1))
    S[:, :k, :k] = G
    S[:, :k, k] = -1.0
    S[:, k, :k] = 1.0
    rhs = np.zeros((B, k + 1, 1))
    rhs[:, k, 0] = 1.0
    sol, ok = _batched_solve(S, rhs)
    return sol[:, :k, 0], ok


def support_enumeration(A, B, tol=None):
    """All equilibria of the bimatrix game ``(A, B)`` found on equal-size supports.

    Equilibria are listed in enumeration order: support size ascending, then
    row support, then column support (both lexicographic).  Each entry is
    ``(x, y, value_row, value_col)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m, n = A.shape
    scale = max(1.0, float(np.abs(A).max()), float(np.abs(B).max()))
    tol = 1e-10 * scale if tol is None else tol
    found = []
    for k in range(1, min(m, n) + 1):
        I = _combos(m, k)
        J = _combos(n, k)
        nI, nJ = len(I), len(J)
        rows = I[:, None, :, None]
        cols = J[None, :, None, :]
        Asub = A[rows, cols].reshape(nI * nJ, k, k)
        Bsub = B[rows, cols].reshape(nI * nJ, k, k)
        ys, oky = _indiff_batch(Asub)
        xs, okx = _indiff_batch(np.transpose(Bsub, (0, 2, 1)))
        ok = oky & okx & (ys.min(axis=1) >= -tol) & (xs.min(axis=1) >= -tol)
        if not ok.any():
            continue
        xs = np.clip(xs, 0.0, None)
        ys = np.clip(ys, 0.0, None)
        sx, sy = xs.sum(axis=1), ys.sum(axis=1)
        ok &= (sx > 0) & (sy > 0)
        if not ok.any():
            continue
        xs /= np.where(sx > 0, sx, 1.0)[:, None]
        ys /= np.where(sy > 0, sy, 1.0)[:, None]
        X = np.zeros((nI * nJ, m))
        Y = np.zeros((nI * nJ, n))
        pi, pj = np.divmod(np.arange(nI * nJ), nJ)
        np.put_along_axis(X, I[pi], xs, axis=1)
        np.put_along_axis(Y, J[pj], ys, axis=1)
        Ay = Y @ A.T                   # (B, m) row payoffs against y
        xB = X @ B                     # (B, n) column payoffs against x
        v1 = np.einsum("bi,bi->b", X, Ay)
        v2 = np.einsum("bj,bj->b", xB, Y)
        ok &= (Ay.max(axis=1) <= v1 + tol) & (xB.max(axis=1) <= v2 + tol)
        for b in np.flatnonzero(ok):
            found.append((X[b], Y[b], float(v1[b]), float(v2[b])))
    return found


def _select(found, scale, prefer=None):
    if prefer is not None and prefer.tag == GENERAL_BIMATRIX:
        keep = [f for f in found
                if all(np.array_equal(a > 0, b > 0) for a, b in zip(f[:2], prefer.strategies))]
        found = keep or found
    welfare = np.array([f[2] + f[3] for f in found])
    best = welfare.max()
    return found[int(np.argmax(welfare >= best - CLASS_TOL * scale))]


def _bimatrix(A, B, prefer=None):
    scale = max(1.0, float(np.abs(A).max()), float(np.abs(B).max()))
    found = support_enumeration(A, B)
    eta = 0.0
    if not found:
        eta = PERTURBATION
        m, n = A.shape
        # distinct own-action offsets, favouring lower indices
        Ap = A + eta * scale * ((m - np.arange(m)) / m)[:, None]
        Bp = B + eta * scale * ((n - np.arange(n)) / n)[None, :]
        found = support_enumeration(Ap, Bp)
        if not found:
            raise NoEquilibriumFound("support enumeration found no equilibrium")
    x, y, _, _ = _select(found, scale, prefer)
    vals = np.array([x @ A @ y, x @ B @ y])
    return StageEquilibrium((x, y), GENERAL_BIMATRIX, vals, eta)
