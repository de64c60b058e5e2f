"""Support functions of (s,a)-rectangular uncertainty balls.

For a ball ``B`` around a nominal distribution ``p0`` the support function is

    sigma_B(V) = min_{q in B} q . V

Three ball kinds are handled: ``singleton`` (``B = {p0}``), ``kl``
(``KL(q || p0) <= theta``) and ``l1`` (``||q - p0||_1 <= theta``).
Everything here works on batches: ``nominal`` has shape ``(..., S)`` and
``V`` broadcasts against it, so one call evaluates a whole Bellman sweep.
"""

from dataclasses import dataclass

import numpy as np

KINDS = ("singleton", "kl", "l1")

# Newton/bisection stopping rule for the KL dual (relative bracket width).
_KL_REL_TOL = 1e-15
_KL_MAX_STEPS = 200


def _canonical_kind(kind, theta):
    kind = str(kind).lower()
    if kind not in KINDS:
        raise ValueError(f"unknown divergence kind {kind!r}; expected one of {KINDS}")
    if not np.isfinite(theta) or theta < 0:
        raise ValueError(f"radius must be finite and nonnegative, got {theta}")
    if theta == 0:
        return "singleton"
    return kind


@dataclass(frozen=True)
class UncertaintySet:
    """One rectangular ball: nominal row, divergence kind and radius."""

    kind: str
    nominal: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.nominal, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("nominal must be a 1-D distribution")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("nominal must be nonnegative and sum to 1")
        _canonical_kind(self.kind, self.radius)
        p.setflags(write=False)
        object.__setattr__(self, "nominal", p)
        object.__setattr__(self, "kind", str(self.kind).lower())

    @property
    def effective_kind(self):
        return _canonical_kind(self.kind, self.radius)


@dataclass(frozen=True)
class SupportResult:
    value: float
    minimizer: np.ndarray
    dual_parameter: float = 0.0


def sigma(uset, V):
    """Evaluate ``min_{q in uset} q . V`` and return a minimizing distribution."""
    V = _check_vector(V, uset.nominal.size)
    vals, mins, lams = sigma_batch(uset.nominal, V, uset.kind, uset.radius)
    return SupportResult(float(vals), mins, float(lams))


def sigma_max(uset, V):
    """Evaluate ``max_{q in uset} q . V`` (the optimistic support function)."""
    V = _check_vector(V, uset.nominal.size)
    vals, maxs, lams = sigma_max_batch(uset.nominal, V, uset.kind, uset.radius)
    return SupportResult(float(vals), maxs, float(lams))


def _check_vector(V, size):
    V = np.asarray(V, dtype=float)
    if V.shape != (size,):
        raise ValueError(f"value vector has shape {V.shape}, expected ({size},)")
    if not np.all(np.isfinite(V)):
        raise ValueError("value vector must be finite")
    return V


def sigma_batch(nominal, V, kind, theta):
    """Batched support function.

    Parameters
    ----------
    nominal : ndarray, shape (..., S)
        Nominal rows, one ball per leading index.
    V : ndarray, shape (S,) or broadcastable to ``nominal``
    kind : {'singleton', 'kl', 'l1'}
    theta : float
        Ball radius shared by the batch.

    Returns
    -------
    values : ndarray, shape (...)
    minimizers : ndarray, shape (..., S)
    lambdas : ndarray, shape (...)
        Optimal KL dual multipliers (zero for the other kinds).
    """
    kind = _canonical_kind(kind, theta)
    p0 = np.asarray(nominal, dtype=float)
    V = np.broadcast_to(np.asarray(V, dtype=float), p0.shape)
    if not np.all(np.isfinite(V)):
        raise ValueError("value vector must be finite")
    lead = p0.shape[:-1]
    S = p0.shape[-1]
    p2 = p0.reshape(-1, S)
    V2 = V.reshape(-1, S)
    if kind == "singleton":
        q = p2.copy()
        lam = np.zeros(p2.shape[0])
    elif kind == "kl":
        q, lam = _kl_minimizer(p2, V2, float(theta))
    else:
        q = _l1_minimizer(p2, V2, float(theta))
        lam = np.zeros(p2.shape[0])
    values = np.einsum("bs,bs->b", q, V2)
    return values.reshape(lead), q.reshape(p0.shape), lam.reshape(lead)


def sigma_max_batch(nominal, V, kind, theta):
    """Batched ``max_{q in B} q . V``, computed as ``-sigma(-V)``."""
    vals, q, lam = sigma_batch(nominal, -np.asarray(V, dtype=float), kind, theta)
    return -vals, q, lam


def _kl_minimizer(p0, V, theta):
    """Minimize q.V over the KL ball through its one-dimensional dual.

    The dual is ``max_{lam >= 0} -lam log E_p0[exp(-V/lam)] - lam theta``;
    its derivative in ``lam`` is ``KL(q_lam || p0) - theta`` with the tilted
    distribution ``q_lam ~ p0 exp(-V/lam)``.  That derivative is decreasing,
    so the root is bracketed by ``(0, span(V)/theta + 1]`` and found by
    Newton steps safeguarded with bisection.
    """
    B, S = p0.shape
    support = p0 > 0
    with np.errstate(divide="ignore"):
        logp = np.where(support, np.log(np.where(support, p0, 1.0)), -np.inf)
    vmin = np.where(support, V, np.inf).min(axis=1)
    vmax = np.where(support, V, -np.inf).max(axis=1)
    span = vmax - vmin
    x = np.where(support, V - vmin[:, None], 0.0)

    at_min = support & (x <= 0.0)
    mass_at_min = np.where(at_min, p0, 0.0).sum(axis=1)
    # Ball large enough to put all mass on the argmin states: lam* = 0.
    corner = (span <= 0.0) | (-np.log(mass_at_min) <= theta)

    q = np.empty_like(p0)
    lam = np.zeros(B)
    if np.any(corner):
        c = corner
        q[c] = np.where(at_min[c], p0[c], 0.0) / mass_at_min[c, None]
    todo = ~corner
    if np.any(todo):
        qt, lt = _kl_root(logp[todo], x[todo], span[todo], theta)
        q[todo] = qt
        lam[todo] = lt
    return q, lam


def _tilt(logp, x, lam):
    z = logp - x / lam[:, None]
    zmax = z.max(axis=1, keepdims=True)
    w = np.exp(z - zmax)
    tot = w.sum(axis=1, keepdims=True)
    q = w / tot
    logz = (zmax + np.log(tot))[:, 0]
    ex = np.einsum("bs,bs->b", q, x)
    # KL(q || p0) = -E_q[x]/lam - log Z
    kl = -ex / lam - logz
    var = np.einsum("bs,bs->b", q, (x - ex[:, None]) ** 2)
    return q, kl, var


def _kl_root(logp, x, span, theta):
    lo = np.zeros(span.shape)
    hi = span / theta + 1.0
    # start from the small-radius expansion KL(q_lam || p0) ~ Var_p0(x) / (2 lam^2)
    p = np.exp(logp)
    mean = np.einsum("bs,bs->b", p, x)
    var0 = np.einsum("bs,bs->b", p, (x - mean[:, None]) ** 2)
    lam = np.clip(np.sqrt(var0 / (2.0 * theta)), 1e-3 * hi, hi)
    q, kl, var = _tilt(logp, x, lam)
    f = kl - theta
    # f(hi) <= 0 by construction: KL(q_lam) <= span/lam, so hi stays a valid bracket end.
    active = np.ones(lam.shape, dtype=bool)
    for _ in range(_KL_MAX_STEPS):
        pos = f > 0
        lo = np.where(active & pos, lam, lo)
        hi = np.where(active & ~pos, lam, hi)
        done = (hi - lo <= _KL_REL_TOL * hi) | (np.abs(f) <= 1e-15 * max(theta, 1.0))
        active &= ~done
        if not np.any(active):
            break
        # d KL / d lam = -Var_q(x) / lam^3
        slope = -var / lam**3
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = lam - f / slope
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        mid = np.where(lo > 0, np.sqrt(lo * hi), 0.5 * hi)
        new = np.where(ok, step, mid)
        idx = np.flatnonzero(active)
        lam[idx] = new[idx]
        qa, kla, vara = _tilt(logp[idx], x[idx], lam[idx])
        q[idx] = qa
        f[idx] = kla - theta
        var[idx] = vara
    # Fall back to the feasible end of the bracket if the iterate overshoots
    # the radius by more than rounding.
    bad = f > 1e-12 * max(theta, 1.0)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        lam[idx] = hi[idx]
        q[idx] = _tilt(logp[idx], x[idx], lam[idx])[0]
    return q, lam


def _l1_minimizer(p0, V, theta):
    """Greedy mass shift: up to theta/2 moves from the highest-V states to argmin V."""
    B, S = p0.shape
    rows = np.arange(B)
    target = np.argmin(V, axis=1)
    delta = np.minimum(theta / 2.0, 1.0 - p0[rows, target])
    key = V.copy()
    key[rows, target] = -np.inf
    order = np.argsort(-key, axis=1, kind="stable")
    ps = np.take_along_axis(p0, order, axis=1)
    before = np.cumsum(ps, axis=1) - ps
    take = np.clip(delta[:, None] - before, 0.0, ps)
    q = np.empty_like(p0)
    np.put_along_axis(q, order, ps - take, axis=1)
    q[rows, target] += delta
    return q


def divergence(q, p0, kind):
    """Divergence of ``q`` from ``p0`` under the ball's metric (inf if q leaves the KL support)."""
    q = np.asarray(q, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    kind = str(kind).lower()
    if kind == "l1":
        return float(np.abs(q - p0).sum())
    if kind == "singleton":
        return float(np.abs(q - p0).max())
    if np.any((p0 == 0) & (q > 0)):
        return np.inf
    m = q > 0
    return float(np.sum(q[m] * np.log(q[m] / p0[m])))
