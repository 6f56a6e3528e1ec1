"""Auxiliary decompositions of a MAC and the rate regions they generate."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .entropic import (
    SmoothingSpec,
    channel_mutual_information,
    imax_state,
    loglog,
    max_mutual_information,
    mutual_information,
    smooth_imax,
)
from .lp import Builder
from .probability import (
    Channel,
    Decomposition,
    MacChannel,
    Pmf,
    ProbabilityError,
    _same,
    induced_joint,
    with_residual,
)

__all__ = [
    "Decomposition",
    "RatePoint",
    "find_decomposition",
    "inner_point",
    "outer_point",
    "iid_point",
    "universal_iid_point",
    "perturbation_steps",
    "reduce_cardinality",
    "aep_curve",
    "trace_region",
    "pareto_front",
]

RESIDUAL_TOL = 1e-7


class ResourceCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class RatePoint:
    r1: float
    r2: float
    kind: str  # inner | outer | iid | universal_iid
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("rates must be nonnegative")

    def to_dict(self):
        return {"kind": self.kind, "r1": self.r1, "r2": self.r2, **self.params}


# --- decomposition search ----------------------------------------------------


def _block_lp(L, target, groups, weights, mode):
    """Minimize the TV residual of ``L @ v`` against ``target`` over simplex blocks.

    ``target`` is [pairs, y]; ``groups`` lists the index sets of v that must each
    sum to one. TV is written as sum_y (target - induced)^+ since both rows sum
    to one.
    """
    npair, ny = target.shape
    nv = L.shape[1]
    nt = npair * ny
    T = nv + np.arange(nt)
    Z = nv + nt
    b = Builder(nv + nt + 1)
    # -L v - t <= -target, one row per (pair, y)
    cols = np.hstack([np.tile(np.arange(nv), (nt, 1)), T[:, None]])
    vals = np.hstack([-L, -np.ones((nt, 1))])
    b.le_block(cols, vals, -target.ravel())
    for g in groups:
        b.eq(g, 1.0, 1.0)
    c = np.zeros(nv + nt + 1)
    if mode == "max":
        for k in range(npair):
            b.le(np.r_[T[k * ny:(k + 1) * ny], Z], np.r_[np.ones(ny), -1.0], 0.0)
        c[Z] = 1.0
    else:
        c[T] = np.repeat(weights, ny)
    res = b.solve(c)
    if res.status != "optimal":
        return None
    return np.clip(res.x[:nv], 0.0, None)


def _residual(a1, a2, dec, target, weights, mode):
    ind = np.einsum("ab,cd,bde->ace", a1, a2, dec, optimize=True)
    per = 0.5 * np.abs(ind - target).sum(axis=-1)
    return float(per.max()) if mode == "max" else float((weights.reshape(per.shape) * per).sum())


def _rownorm(a):
    s = a.sum(axis=-1, keepdims=True)
    return np.where(s > 0, a / np.where(s > 0, s, 1.0), 1.0 / a.shape[-1])


def find_decomposition(m: MacChannel, dim_u1, dim_u2, mode="fixed", inputs=None,
                       restarts=8, iters=50, tol=RESIDUAL_TOL, seed=0) -> Decomposition:
    """Alternating LP search for (aux1, aux2, decoder) reproducing ``m``.

    Blocks are updated in the order aux1, aux2, decoder; each update is the
    exact minimizer of the residual with the other two frozen, so the residual
    never increases within a restart. Restarts draw every row from a flat
    Dirichlet. Returns the best decomposition found with its residual attached.
    """
    if dim_u1 < 1 or dim_u2 < 1:
        raise ValueError("auxiliary dimensions must be >= 1")
    n1, n2, ny = m.probs.shape
    if mode == "fixed":
        if inputs is None:
            raise ValueError("fixed mode needs the input pair")
        q1, q2 = inputs
        _same(q1.alphabet, m.x1_alphabet, "first input")
        _same(q2.alphabet, m.x2_alphabet, "second input")
        weights = np.outer(q1.probs, q2.probs).ravel()
        lp_mode = "average"
    elif mode == "universal":
        weights = np.full(n1 * n2, 1.0 / (n1 * n2))
        lp_mode = "max"
        inputs = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    target = m.probs.reshape(n1 * n2, ny)
    tgt3 = m.probs
    rng = np.random.default_rng(seed)
    d1, d2 = dim_u1, dim_u2
    best = None
    for _ in range(max(1, restarts)):
        a1 = rng.dirichlet(np.ones(d1), size=n1)
        a2 = rng.dirichlet(np.ones(d2), size=n2)
        dec = rng.dirichlet(np.ones(ny), size=(d1, d2))
        cur = _residual(a1, a2, dec, tgt3, weights, lp_mode)
        for _ in range(iters):
            if cur <= tol:
                break
            prev = cur
            # aux1: induced[a,c,y] = sum_b A1[a,b] G[b,c,y]
            G = np.einsum("cd,bde->bce", a2, dec)
            L = np.einsum("aA,bce->aceAb", np.eye(n1), G).reshape(n1 * n2 * ny, n1 * d1)
            v = _block_lp(L, target, [np.arange(a * d1, (a + 1) * d1) for a in range(n1)], weights, lp_mode)
            if v is not None:
                a1 = _rownorm(v.reshape(n1, d1))
            # aux2: induced[a,c,y] = sum_d A2[c,d] H[a,d,y]
            H = np.einsum("ab,bde->ade", a1, dec)
            L = np.einsum("cC,ade->aceCd", np.eye(n2), H).reshape(n1 * n2 * ny, n2 * d2)
            v = _block_lp(L, target, [np.arange(c * d2, (c + 1) * d2) for c in range(n2)], weights, lp_mode)
            if v is not None:
                a2 = _rownorm(v.reshape(n2, d2))
            # decoder: induced[a,c,y] = sum_{b,d} A1[a,b] A2[c,d] D[b,d,y]
            W = np.einsum("ab,cd->acbd", a1, a2).reshape(n1 * n2, d1 * d2)
            L = np.einsum("pk,yY->pykY", W, np.eye(ny)).reshape(n1 * n2 * ny, d1 * d2 * ny)
            v = _block_lp(L, target, [np.arange(k * ny, (k + 1) * ny) for k in range(d1 * d2)], weights, lp_mode)
            if v is not None:
                dec = _rownorm(v.reshape(d1, d2, ny))
            cur = _residual(a1, a2, dec, tgt3, weights, lp_mode)
            if prev - cur < 1e-12:
                break
        if best is None or cur < best[0]:
            best = (cur, a1, a2, dec)
        if best[0] <= tol:
            break
    _, a1, a2, dec = best
    u1 = tuple(range(d1))
    u2 = tuple(range(d2))
    d = Decomposition.build(
        Channel(m.x1_alphabet, u1, a1, normalize=True),
        Channel(m.x2_alphabet, u2, a2, normalize=True),
        dec, m.y_alphabet, normalize=True,
    )
    return with_residual(d, m, inputs)


# --- rate points ---------------------------------------------------------------


def _specs(eps1, eps2, mode, inputs):
    if mode == "fixed":
        q1, q2 = inputs
        return SmoothingSpec.state(eps1, q1), SmoothingSpec.state(eps2, q2)
    if mode == "universal":
        return SmoothingSpec.channel(eps1), SmoothingSpec.channel(eps2)
    raise ValueError(f"unknown mode {mode!r}")


def _smoothed(w, spec):
    r = smooth_imax(w, spec)
    if r.lp_status != "optimal":
        raise ProbabilityError(f"smoothing LP failed: {r.lp_status}")
    return r.value


def inner_point(d: Decomposition, eps1, eps2, delta, mode="fixed", inputs=None) -> RatePoint:
    """r_j = smoothed I_max at eps_j - delta plus log2 log2(1/delta), floored at 0."""
    if not 0.0 < delta < min(eps1, eps2):
        raise ValueError(f"delta must lie in (0, min(eps1, eps2)), got {delta}")
    s1, s2 = _specs(eps1 - delta, eps2 - delta, mode, inputs)
    extra = loglog(delta)
    r1 = max(0.0, _smoothed(d.aux1, s1) + extra)
    r2 = max(0.0, _smoothed(d.aux2, s2) + extra)
    return RatePoint(r1, r2, "inner", {"eps1": eps1, "eps2": eps2, "delta": delta, "mode": mode})


def outer_point(d: Decomposition, eps1, eps2, mode="fixed", inputs=None) -> RatePoint:
    s1, s2 = _specs(eps1, eps2, mode, inputs)
    return RatePoint(_smoothed(d.aux1, s1), _smoothed(d.aux2, s2), "outer",
                     {"eps1": eps1, "eps2": eps2, "mode": mode})


def _membership_warning(d, tol):
    if d.residual is not None and d.residual > tol:
        warnings.warn(f"decomposition residual {d.residual:.3g} exceeds {tol:g}; "
                      "the point may lie outside the region", RuntimeWarning, stacklevel=3)


def iid_point(d: Decomposition, inputs, tol=RESIDUAL_TOL) -> RatePoint:
    _membership_warning(d, tol)
    q1, q2 = inputs
    return RatePoint(
        channel_mutual_information(d.aux1, q1), channel_mutual_information(d.aux2, q2), "iid"
    )


def universal_iid_point(d: Decomposition, tol=RESIDUAL_TOL) -> RatePoint:
    _membership_warning(d, tol)
    return RatePoint(max_mutual_information(d.aux1)[0], max_mutual_information(d.aux2)[0], "universal_iid")


# --- cardinality reduction -----------------------------------------------------


def _prune(aux: Channel, q: Pmf):
    """Drop auxiliary symbols with zero probability under q; returns kept columns."""
    pu = q.probs @ aux.rows
    keep = np.flatnonzero(pu > 1e-15)
    return keep


def _fix_rows(rows, q):
    """Rows outside supp(q) are free; renormalize them (uniform when emptied)."""
    rows = rows.copy()
    for x in np.flatnonzero(~q.support):
        s = rows[x].sum()
        rows[x] = rows[x] / s if s > 0 else 1.0 / rows.shape[1]
    return rows


def _restrict(d: Decomposition, which, keep, new_rows):
    """Decomposition with aux ``which`` limited to columns ``keep``."""
    aux = d.aux1 if which == 1 else d.aux2
    labels = tuple(aux.output_alphabet[k] for k in keep)
    new_aux = Channel(aux.input_alphabet, labels, new_rows, normalize=True)
    tensor = d.decoder_tensor
    tensor = tensor[keep] if which == 1 else tensor[:, keep]
    a1, a2 = (new_aux, d.aux2) if which == 1 else (d.aux1, new_aux)
    return Decomposition.build(a1, a2, tensor, d.decoder.output_alphabet)


def _side(d: Decomposition, which, inputs):
    """Posterior-constraint matrix A[(x1,x2,y), u] = p(u, x1, x2, y) for aux ``which``."""
    q1, q2 = inputs
    dec = d.decoder_tensor
    if which == 1:
        G = np.einsum("cd,bde->bce", d.aux2.rows, dec)  # [u1, x2, y]
        P = np.einsum("a,c,ab,bce->aceb", q1.probs, q2.probs, d.aux1.rows, G)
        aux, q = d.aux1, q1
    else:
        H = np.einsum("ab,bde->ade", d.aux1.rows, dec)  # [x1, u2, y]
        P = np.einsum("a,c,cd,ade->aced", q1.probs, q2.probs, d.aux2.rows, H)
        aux, q = d.aux2, q2
    return P.reshape(-1, P.shape[-1]), aux, q


def _direction(A, envelope, rcond=1e-10):
    """Null-space direction preserving the marginal and the I_max envelope."""
    full = np.vstack([A, envelope[None, :]])
    scale = max(1.0, np.abs(full).max())
    ns = null_space(full / scale, rcond=rcond)
    exact = True
    if ns.shape[1] == 0:
        ns = null_space(A / scale, rcond=rcond)
        exact = False
    if ns.shape[1] == 0:
        return None, exact
    best, best_min = None, 0.0
    for k in range(ns.shape[1]):
        v = ns[:, k] / np.linalg.norm(ns[:, k])
        for s in (v, -v):
            if not exact and s @ envelope > 1e-15:
                continue  # never raise I_max when it cannot be held fixed
            if s.min() < best_min:
                best, best_min = s, s.min()
    return best, exact


def _marginal(d, inputs):
    return induced_joint(inputs[0], inputs[1], d).probs


def perturbation_steps(d: Decomposition, inputs, smoothing_eps=None):
    """Yield (decomposition, step record) for each symbol elimination.

    Symbols with zero probability are pruned first. Each step perturbs
    p(u|x) -> p(u|x)(1 + eps* L(u)) along a null-space direction L of the
    posterior constraints (and of the I_max envelope), which zeroes one symbol.
    """
    q1, q2 = inputs
    _same(q1.alphabet, d.aux1.input_alphabet, "first input")
    _same(q2.alphabet, d.aux2.input_alphabet, "second input")
    bound = len(q1) * len(q2) * len(d.decoder.output_alphabet)
    for which in (1, 2):
        aux = d.aux1 if which == 1 else d.aux2
        q = q1 if which == 1 else q2
        keep = _prune(aux, q)
        if len(keep) < aux.rows.shape[1]:
            before = _marginal(d, inputs)
            d = _restrict(d, which, keep, _fix_rows(aux.rows[:, keep], q))
            yield d, {"aux": which, "action": "prune", "size": len(keep),
                      "marginal_drift": float(np.abs(_marginal(d, inputs) - before).max()),
                      "imax_drift": (0.0, 0.0), "exact_direction": True}
        while True:
            A, aux, q = _side(d, which, inputs)
            k = A.shape[1]
            if k <= bound:
                break
            mask = q.support
            envelope = aux.rows[mask].max(axis=0)
            L, exact = _direction(A, envelope)
            if L is None:
                raise ProbabilityError(
                    f"empty null space for U{which}: |U|={k} > bound {bound}, rank {np.linalg.matrix_rank(A)}"
                )
            eps_star = -1.0 / L.min()
            factor = np.clip(1.0 + eps_star * L, 0.0, None)
            zero = int(np.argmin(factor))
            factor[zero] = 0.0
            before_marg = _marginal(d, inputs)
            before_imax = (imax_state(d.aux1, q1), imax_state(d.aux2, q2))
            before_s = _smooth_pair(d, inputs, smoothing_eps)
            rows = aux.rows * factor[None, :]
            keep = np.array([j for j in range(k) if j != zero])
            rows = rows[:, keep]
            live = q.support
            rows[live] = rows[live] / rows[live].sum(axis=1, keepdims=True)
            rows = _fix_rows(rows, q)
            d = _restrict(d, which, keep, rows)
            after_imax = (imax_state(d.aux1, q1), imax_state(d.aux2, q2))
            after_s = _smooth_pair(d, inputs, smoothing_eps)
            rec = {
                "aux": which,
                "action": "eliminate",
                "size": k - 1,
                "eps_star": float(eps_star),
                "marginal_drift": float(np.abs(_marginal(d, inputs) - before_marg).max()),
                "imax_drift": tuple(abs(a - b) for a, b in zip(after_imax, before_imax)),
                "exact_direction": exact,
            }
            if before_s is not None:
                rec["smoothed_drift"] = tuple(abs(a - b) for a, b in zip(after_s, before_s))
            yield d, rec


def _smooth_pair(d, inputs, eps):
    if eps is None:
        return None
    q1, q2 = inputs
    return (
        smooth_imax(d.aux1, SmoothingSpec.state(eps, q1)).value,
        smooth_imax(d.aux2, SmoothingSpec.state(eps, q2)).value,
    )


def reduce_cardinality(d: Decomposition, inputs, smoothing_eps=None, log=None) -> Decomposition:
    """Shrink |U_j| to at most |X1||X2||Y| without changing p(x1,x2,y) or I_max.

    Pass a list as ``log`` to collect the per-step records.
    """
    out = d
    for out, rec in perturbation_steps(d, inputs, smoothing_eps):
        if log is not None:
            log.append(rec)
    if d.residual is not None:
        out = Decomposition(out.aux1, out.aux2, out.decoder, d.residual, d.residual_mode)
    return out


# --- AEP ------------------------------------------------------------------------


@dataclass
class AepCurve:
    points: list  # (n, value_n)
    limit: float
    variant: str
    capped: bool = False
    notice: str = ""
    timings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "points": [[n, v] for n, v in self.points],
            "limit": self.limit,
            "variant": self.variant,
            "capped": self.capped,
            "notice": self.notice,
        }


AEP_CELL_CAP = 256 * 256


def aep_curve(w: Channel, input: Pmf | None, eps, n_max, variant="state", cell_cap=AEP_CELL_CAP) -> AepCurve:
    """(1/n) smoothed I_max of the n-fold product channel, n = 1..n_max.

    The state variant smooths under input^n and tends to I(X;U); the channel
    variant tends to the capacity. Stops early (partial curve, ``capped``) when
    |X|^n |U|^n would exceed ``cell_cap``.
    """
    if variant == "state":
        if input is None:
            raise ValueError("state variant needs an input distribution")
        limit = channel_mutual_information(w, input)
    elif variant == "channel":
        limit = max_mutual_information(w)[0]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    nx, ny = w.shape
    curve = AepCurve([], limit, variant)
    for n in range(1, n_max + 1):
        if (nx * ny) ** n > cell_cap:
            curve.capped = True
            curve.notice = f"stopped at n={n - 1}: |X|^n |U|^n would exceed {cell_cap}"
            break
        t0 = time.perf_counter()
        wn = w.power(n)
        spec = SmoothingSpec.state(eps, input.power(n)) if variant == "state" else SmoothingSpec.channel(eps)
        r = smooth_imax(wn, spec)
        if r.lp_status != "optimal":
            raise ProbabilityError(f"smoothing LP failed at n={n}: {r.lp_status}")
        curve.points.append((n, r.value / n))
        curve.timings.append(time.perf_counter() - t0)
    return curve


# --- region tracing ----------------------------------------------------------------


def pareto_front(points):
    """Componentwise-minimal points (duplicates collapsed)."""
    pts = sorted({(round(p.r1, 12), round(p.r2, 12)): p for p in points}.values(), key=lambda p: (p.r1, p.r2))
    front = []
    best_r2 = math.inf
    for p in pts:
        if p.r2 < best_r2 - 1e-12:
            front.append(p)
            best_r2 = p.r2
    return front


def trace_region(m: MacChannel, dims, mode="fixed", inputs=None, eps1=0.1, eps2=0.1, delta=0.01,
                 samples=8, restarts=4, iters=50, tol=RESIDUAL_TOL, seed=0, kinds=None):
    """Point clouds of the inner, outer and iid regions from searched decompositions.

    Runs ``samples`` independent searches (seeds spawned from ``seed``), keeps
    decompositions with residual <= tol and returns (Pareto points per kind,
    kept decompositions).
    """
    if kinds is None:
        kinds = ("inner", "outer", "iid") if mode == "fixed" else ("inner", "outer", "universal_iid")
    seeds = np.random.SeedSequence(seed).generate_state(samples)
    decomps = []
    for s in seeds:
        d = find_decomposition(m, dims[0], dims[1], mode, inputs, restarts, iters, tol, int(s))
        if d.residual <= tol:
            decomps.append(d)
    clouds = {k: [] for k in kinds}
    for d in decomps:
        if "inner" in clouds:
            clouds["inner"].append(inner_point(d, eps1, eps2, delta, mode, inputs))
        if "outer" in clouds:
            clouds["outer"].append(outer_point(d, eps1, eps2, mode, inputs))
        if "iid" in clouds:
            clouds["iid"].append(iid_point(d, inputs, tol))
        if "universal_iid" in clouds:
            clouds["universal_iid"].append(universal_iid_point(d, tol))
    return {k: pareto_front(v) for k, v in clouds.items()}, decomps
