"""Block-diagonal classical-quantum states and the CS-QC MAC quantities.

A CQ state sum_u p(u) |u><u| (x) phi_u is stored as a weight vector and a stack
of d x d density matrices. All spectral work goes through ``numpy.linalg.eigh``
on blocks of dimension at most 8.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .entropic import SmoothingSpec, imax_state, smooth_imax
from .probability import ATOL, Channel, Decomposition, MacChannel, Pmf, ProbabilityError, _same
from .region import RatePoint, ResourceCapExceeded

HERM_TOL = 1e-10
PINV_CUTOFF = 1e-12
MAX_DIM = 8
TYPE_CAP = 50_000  # type classes per convex-split evaluation (|U| >= 3)
BINARY_N_CAP = 10_000
SUPPORT_MIX = 1e-3


def _check_blocks(blocks, what):
    b = np.asarray(blocks, dtype=np.complex128)
    if b.ndim != 3 or b.shape[1] != b.shape[2]:
        raise ProbabilityError(f"{what}: blocks must be a stack of square matrices, got {b.shape}")
    if b.shape[1] > MAX_DIM:
        raise ProbabilityError(f"{what}: block dimension {b.shape[1]} exceeds {MAX_DIM}")
    for i, m in enumerate(b):
        if np.abs(m - m.conj().T).max() > HERM_TOL:
            raise ProbabilityError(f"{what}: block {i} is not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL:
            raise ProbabilityError(f"{what}: block {i} has trace {np.trace(m).real:.12g}")
        if np.linalg.eigvalsh(m).min() < -HERM_TOL:
            raise ProbabilityError(f"{what}: block {i} is not positive semidefinite")
    b = 0.5 * (b + b.conj().transpose(0, 2, 1))
    b.flags.writeable = False
    return b


def _blocks_to_json(b):
    return [[[[float(z.real), float(z.imag)] for z in row] for row in m] for m in b]


def _blocks_from_json(raw):
    a = np.asarray(raw, dtype=np.float64)
    if a.ndim == 3:  # real entries only
        return a.astype(np.complex128)
    return a[..., 0] + 1j * a[..., 1]


@dataclass(frozen=True, eq=False)
class CqState:
    weights: Pmf
    blocks: np.ndarray  # [u, d, d]

    def __post_init__(self):
        b = _check_blocks(self.blocks, "CqState")
        if b.shape[0] != len(self.weights):
            raise ProbabilityError(f"{b.shape[0]} blocks for {len(self.weights)} classical symbols")
        object.__setattr__(self, "blocks", b)

    @property
    def alphabet(self):
        return self.weights.alphabet

    @property
    def dim(self):
        return self.blocks.shape[1]

    @property
    def weighted(self):
        """p(u) phi_u for every u."""
        return self.weights.probs[:, None, None] * self.blocks

    @property
    def tau_e(self):
        return self.weighted.sum(axis=0)

    def is_diagonal(self, tol=HERM_TOL):
        off = self.blocks - np.einsum("uii->ui", self.blocks)[:, :, None] * np.eye(self.dim)
        return bool(np.abs(off).max() <= tol)

    def classical_joint(self):
        """p(u, e) of the diagonal entries; the classical embedding."""
        return self.weights.probs[:, None] * np.einsum("uii->ui", self.blocks).real

    @classmethod
    def diagonal(cls, joint_ue, alphabet=None):
        """Classical joint p(u, e) as a CQ state with diagonal blocks."""
        j = np.asarray(joint_ue, dtype=np.float64)
        pu = j.sum(axis=1)
        k, d = j.shape
        blocks = np.zeros((k, d, d), dtype=np.complex128)
        for u in range(k):
            row = j[u] / pu[u] if pu[u] > 0 else np.full(d, 1.0 / d)
            blocks[u] = np.diag(row)
        return cls(Pmf(tuple(range(k)) if alphabet is None else alphabet, pu, normalize=True), blocks)

    def to_dict(self):
        return {"alphabet": self.weights.to_dict()["alphabet"], "weights": self.weights.probs.tolist(),
                "blocks": _blocks_to_json(self.blocks)}

    @classmethod
    def from_dict(cls, d):
        return cls(Pmf(d["alphabet"], d["weights"]), _blocks_from_json(d["blocks"]))


@dataclass(frozen=True, eq=False)
class MeasuredInput:
    """Outcome law p_X and post-measurement states phi_x on E."""

    px: Pmf
    post_states: np.ndarray

    def __post_init__(self):
        b = _check_blocks(self.post_states, "MeasuredInput")
        if b.shape[0] != len(self.px):
            raise ProbabilityError(f"{b.shape[0]} states for {len(self.px)} outcomes")
        object.__setattr__(self, "post_states", b)

    @property
    def x_alphabet(self):
        return self.px.alphabet

    def to_dict(self):
        return {"alphabet": self.px.to_dict()["alphabet"], "probs": self.px.probs.tolist(),
                "states": _blocks_to_json(self.post_states)}

    @classmethod
    def from_dict(cls, d):
        return cls(Pmf(d["alphabet"], d["probs"]), _blocks_from_json(d["states"]))


def build_cq_state(inp: MeasuredInput, aux: Channel) -> CqState:
    """tau^{EU}: p(u) = sum_x p(x) aux(u|x), phi'_u = sum_x p(x|u) phi_x."""
    _same(inp.x_alphabet, aux.input_alphabet, "measured input vs aux")
    joint = inp.px.probs[:, None] * aux.rows  # [x, u]
    pu = joint.sum(axis=0)
    weighted = np.einsum("xu,xij->uij", joint, inp.post_states)
    tau = np.einsum("x,xij->ij", inp.px.probs, inp.post_states)
    blocks = np.where(pu[:, None, None] > 0, weighted / np.where(pu > 0, pu, 1.0)[:, None, None], tau)
    return CqState(Pmf(aux.output_alphabet, pu, normalize=True), blocks)


# --- spectral helpers ---------------------------------------------------------


def _trace_norms(stack):
    return np.abs(np.linalg.eigvalsh(stack)).sum(axis=-1)


def _vn_entropy(m):
    lam = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    lam = lam[lam > 0]
    return float(-(lam * np.log2(lam)).sum())


def _whitener(tau):
    lam, v = np.linalg.eigh(tau)
    inv = np.where(lam > PINV_CUTOFF, 1.0 / np.sqrt(np.where(lam > PINV_CUTOFF, lam, 1.0)), 0.0)
    return (v * inv) @ v.conj().T


def _lambdas(weighted, tau):
    W = _whitener(tau)
    return np.linalg.eigvalsh(W @ weighted @ W)[:, -1].clip(0.0, None)


def _same_shape(a: CqState, b: CqState):
    _same(a.alphabet, b.alphabet, "cq classical alphabets")
    if a.dim != b.dim:
        raise ProbabilityError(f"block dimensions differ: {a.dim} vs {b.dim}")


# --- operations ------------------------------------------------------------------


def cq_trace_distance(a: CqState, b: CqState) -> float:
    _same_shape(a, b)
    return 0.5 * float(_trace_norms(a.weighted - b.weighted).sum())


def cq_imax(t: CqState) -> float:
    """log2 sum_u lambda_max(tau_E^{-1/2} p(u) phi_u tau_E^{-1/2})."""
    return max(0.0, float(np.log2(_lambdas(t.weighted, t.tau_e).sum())))


def cq_dmax(t: CqState, r) -> float:
    """D_max(tau^{EU} || tau^E (x) r) for a classical reference r over U."""
    r = np.asarray(r, dtype=np.float64)
    lam = _lambdas(t.weighted, t.tau_e)
    live = lam > 0
    if (r[live] <= 0).any():
        return math.inf
    return float(np.log2((lam[live] / r[live]).max()))


def cq_mutual_information(t: CqState) -> float:
    """Holevo form S(tau_E) - sum_u p(u) S(phi_u)."""
    inner = sum(p * _vn_entropy(b) for p, b in zip(t.weights.probs, t.blocks) if p > 0)
    return float(max(0.0, _vn_entropy(t.tau_e) - inner))


def classical_channel(t: CqState):
    """For diagonal blocks: the channel E -> U and the input tau_E."""
    j = t.classical_joint().T  # [e, u]
    pe = j.sum(axis=1)
    rows = np.where(pe[:, None] > 0, j / np.where(pe > 0, pe, 1.0)[:, None], 1.0 / j.shape[1])
    e_alpha = tuple(range(t.dim))
    return Channel(e_alpha, t.alphabet, rows, normalize=True), Pmf(e_alpha, pe, normalize=True)


@dataclass(frozen=True, eq=False)
class CqSmoothResult:
    value: float
    reference: Pmf  # sigma over U with D_max(tau' || tau_E (x) sigma) = value
    smoothed: CqState
    ball_tv: float
    method: str  # closed_form | classical_lp | sdp
    status: str

    def to_dict(self):
        return {"value": self.value, "reference": self.reference.to_dict(), "ball_tv": self.ball_tv,
                "method": self.method, "status": self.status}


def _reference(t: CqState):
    lam = _lambdas(t.weighted, t.tau_e)
    return Pmf(t.alphabet, lam / lam.sum(), normalize=True)


def _embed(h):
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of Hermitian matrices."""
    re, im = np.real(h), np.imag(h)
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _sdp_smooth(t: CqState, eps):
    """Smallest sum_u r_u over reassignments of the eigen-pieces of every block.

    Each weighted block p(u) phi_u is split into its rank-one spectral pieces;
    a stochastic map K((u,k) -> u') moves pieces between classical labels. This
    keeps tau_E fixed, so every feasible point lies in the smoothing ball.
    """
    import cvxpy as cp

    d, k = t.dim, len(t.alphabet)
    pieces, owner = [], []
    for u, m in enumerate(t.weighted):
        lam, v = np.linalg.eigh(m)
        for j in range(d):
            if lam[j] > PINV_CUTOFF:
                pieces.append(lam[j] * np.outer(v[:, j], v[:, j].conj()))
                owner.append(u)
    W = _whitener(t.tau_e)
    P = len(pieces)
    emb_piece = np.array([_embed(p) for p in pieces])  # [P, 2d, 2d]
    emb_white = np.array([_embed(W @ p @ W) for p in pieces])
    emb_orig = _embed(t.weighted)

    K = cp.Variable((P, k), nonneg=True)
    r = cp.Variable(k, nonneg=True)
    cons = [cp.sum(K, axis=1) == 1]
    tv_terms = []
    eye = np.eye(2 * d)
    for u in range(k):
        B = sum(K[i, u] * emb_piece[i] for i in range(P))
        WB = sum(K[i, u] * emb_white[i] for i in range(P))
        Pp = cp.Variable((2 * d, 2 * d), PSD=True)
        Nn = cp.Variable((2 * d, 2 * d), PSD=True)
        cons += [r[u] * eye - WB >> 0, B - emb_orig[u] == Pp - Nn]
        tv_terms.append(cp.trace(Pp + Nn))
    cons.append(sum(tv_terms) / 4.0 <= eps)
    prob = cp.Problem(cp.Minimize(cp.sum(r)), cons)
    status = "failed"
    for solver in ("CLARABEL", "SCS"):
        try:
            # inaccurate solutions are fine: the caller re-certifies exactly
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver)
        except (cp.error.SolverError, ValueError):
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and K.value is not None:
            status = prob.status
            break
    if K.value is None or status == "failed":
        return None, "failed"
    Kv = np.clip(K.value, 0.0, None)
    Kv /= Kv.sum(axis=1, keepdims=True)
    return (np.array(pieces), np.array(owner), Kv), status


def _reassigned(t: CqState, pieces, K):
    weighted = np.einsum("pu,pij->uij", K, pieces)
    pu = np.einsum("uii->u", weighted).real.clip(0.0, None)
    blocks = np.where(pu[:, None, None] > PINV_CUTOFF,
                      weighted / np.where(pu > PINV_CUTOFF, pu, 1.0)[:, None, None], t.tau_e)
    blocks = blocks / np.einsum("uii->u", blocks).real[:, None, None]
    return CqState(Pmf(t.alphabet, pu, normalize=True), blocks)


def cq_smooth_imax(t: CqState, eps: float) -> CqSmoothResult:
    """Smoothed I_max(E;U) over CQ states with the same tau_E.

    eps = 0 uses the closed form and diagonal blocks use the exact classical LP.
    Otherwise a small SDP over reassignments of spectral pieces is solved and the
    result re-certified: the returned value is the exact D_max of a state inside
    the ball, hence an upper bound on the smoothed quantity.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    base = cq_imax(t)
    if eps == 0.0:
        return CqSmoothResult(base, _reference(t), t, 0.0, "closed_form", "optimal")
    if t.is_diagonal():
        w, pe = classical_channel(t)
        r = smooth_imax(w, SmoothingSpec.state(eps, pe))
        joint = (pe.probs[:, None] * r.smoothed_channel.rows).T
        sm = CqState.diagonal(joint, t.alphabet)
        return CqSmoothResult(r.value, Pmf(t.alphabet, r.reference.probs), sm, r.ball_tv,
                              "classical_lp", r.lp_status)
    sol, status = _sdp_smooth(t, eps)
    if sol is None:
        return CqSmoothResult(base, _reference(t), t, 0.0, "sdp", "numerical")
    pieces, owner, K = sol
    K0 = np.eye(len(t.alphabet))[owner]
    cand = _reassigned(t, pieces, K)
    tv = cq_trace_distance(cand, t)
    if tv > eps:
        # pull back toward the identity reassignment; TV is convex in K
        s = eps / tv * (1.0 - 1e-12)
        cand = _reassigned(t, pieces, s * K + (1.0 - s) * K0)
        tv = cq_trace_distance(cand, t)
    val = cq_imax(cand)
    if val >= base:
        return CqSmoothResult(base, _reference(t), t, 0.0, "sdp", status)
    return CqSmoothResult(val, _reference(cand), cand, tv, "sdp", status)


# --- convex split ------------------------------------------------------------------


def _compositions(n, k):
    """All count vectors of length k summing to n."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    if k == 2:
        c = np.arange(n + 1, dtype=np.int64)
        return np.stack([c, n - c], axis=1)
    out = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + k - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64)


def type_count(n, k):
    return math.comb(n + k - 1, k - 1)


def check_convex_split_cap(n, k):
    if k == 2 and n > BINARY_N_CAP:
        raise ResourceCapExceeded(f"n={n} exceeds {BINARY_N_CAP} for |U|=2")
    if k > 2 and type_count(n, k) > TYPE_CAP:
        raise ResourceCapExceeded(f"{type_count(n, k)} type classes for n={n}, |U|={k} exceed {TYPE_CAP}")


def _split_terms(t: CqState, sigma: Pmf):
    _same(sigma.alphabet, t.alphabet, "sigma vs state")
    p = t.weights.probs
    s = sigma.probs
    bad = (p > 0) & (s <= 0)
    if bad.any():
        raise ProbabilityError(f"sigma misses symbol {t.alphabet[int(np.argmax(bad))]!r} of supp(p_U)")
    live = s > 0
    M = t.weighted[live] / s[live][:, None, None]
    return M, s[live]


def convex_split_tv(t: CqState, sigma: Pmf, n: int) -> float:
    """Exact TV between the convex-split state and tau_E (x) sigma^n.

    Strings are grouped by type c: the E-block is sigma^n(c) times
    (1/n) sum_u c_u p(u) phi_u / sigma(u) - tau_E, so the distance is a
    multinomial-weighted sum of trace norms over the type classes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    M, s = _split_terms(t, sigma)
    k = len(s)
    check_convex_split_cap(n, k)
    C = _compositions(n, k)
    logw = gammaln(n + 1) - gammaln(C + 1).sum(axis=1) + C @ np.log(s)
    tau = t.tau_e
    total = 0.0
    for lo in range(0, len(C), 4096):
        c = C[lo:lo + 4096]
        blocks = np.einsum("tu,uij->tij", c / n, M) - tau
        total += float(np.exp(logw[lo:lo + 4096]) @ _trace_norms(blocks))
    return 0.5 * total


def convex_split_tv_bruteforce(t: CqState, sigma: Pmf, n: int) -> float:
    """Reference implementation over all |U|^n strings, straight from the definition."""
    p, s = t.weights.probs, sigma.probs
    k = len(p)
    tau = t.tau_e
    total = 0.0
    for string in itertools.product(range(k), repeat=n):
        sig = np.prod(s[list(string)])
        if sig == 0.0:
            continue
        mu = np.zeros_like(tau)
        for i, u in enumerate(string):
            rest = sig / s[u]
            mu += p[u] * t.blocks[u] * rest / n
        total += _trace_norms((mu - tau * sig)[None])[0]
    return 0.5 * total


@dataclass(frozen=True)
class ConvexSplitCheck:
    n: int
    tv: float | None
    passed: bool | None
    smoothed_value: float
    exponent: int
    sigma: tuple
    note: str = ""

    def to_dict(self):
        return {"n": self.n, "tv": self.tv, "pass": self.passed, "smoothed_value": self.smoothed_value,
                "log2_n": self.exponent, "sigma": list(self.sigma), "note": self.note}


def convex_split_check(t: CqState, eps, delta, n=None) -> ConvexSplitCheck:
    """Set log2 n = ceil(I_max^{eps-delta} + 2 log2(1/delta)) and test tv <= eps.

    Pass ``n`` to evaluate a different decoy count (the verdict is then only
    informative when n is at least the prescribed value).
    """
    if not 0.0 < delta < eps < 1.0:
        raise ValueError("need 0 < delta < eps < 1")
    sm = cq_smooth_imax(t, eps - delta)
    sigma = sm.reference.probs
    value = sm.value
    note = ""
    if ((t.weights.probs > 0) & (sigma <= 0)).any():
        sigma = (1.0 - SUPPORT_MIX) * sigma + SUPPORT_MIX * t.weights.probs
        value -= math.log2(1.0 - SUPPORT_MIX)
        note = f"reference mixed with p_U at weight {SUPPORT_MIX} to cover supp(p_U)"
    exponent = max(0, math.ceil(value + 2.0 * math.log2(1.0 / delta)))
    prescribed = 2 ** exponent
    n_eval = prescribed if n is None else int(n)
    sig = Pmf(t.alphabet, sigma, normalize=True)
    try:
        tv = convex_split_tv(t, sig, n_eval)
    except ResourceCapExceeded as exc:
        return ConvexSplitCheck(n_eval, None, None, sm.value, exponent, tuple(sigma.tolist()),
                                (note + "; " if note else "") + f"indeterminate: {exc}")
    passed = tv <= eps if n_eval >= prescribed else None
    return ConvexSplitCheck(n_eval, tv, passed, sm.value, exponent, tuple(sigma.tolist()), note)


# --- CS-QC MAC rates ------------------------------------------------------------------


def _output_state(q1: Pmf, q2: Pmf, mac: MacChannel, s1, s2) -> CqState:
    """sum p(x1)p(x2)p(y|x1,x2) |x1 x2 y><x1 x2 y| (x) phi_x1 (x) phi_x2."""
    n1, n2, ny = mac.probs.shape
    w = q1.probs[:, None, None] * q2.probs[None, :, None] * mac.probs
    blocks = np.array([np.kron(s1[a], s2[c]) for a in range(n1) for c in range(n2) for _ in range(ny)])
    labels = tuple(itertools.product(range(n1), range(n2), range(ny)))
    return CqState(Pmf(labels, w.ravel(), normalize=True), blocks)


def csqc_rates(inputs, aux, decoder: Channel, eps1, eps2, delta, mode="oneshot_inner"):
    """Rate pair for simulating the CS-QC MAC plus a classical skeleton audit.

    The skeleton runs the classical fixed-input protocol on (x_j -> u_j -> y)
    and compares the resulting CQ output state (keeping each sender's post-
    measurement state) with the ideal one.
    """
    from .mac import build_mac_protocol, exact_induced_mac

    in1, in2 = inputs
    a1, a2 = aux
    t1, t2 = build_cq_state(in1, a1), build_cq_state(in2, a2)
    if mode == "oneshot_inner":
        if not 0.0 < delta < min(eps1, eps2):
            raise ValueError("need 0 < delta < min(eps1, eps2)")
        extra = 2.0 * math.log2(1.0 / delta)
        r = (cq_smooth_imax(t1, eps1 - delta).value + extra, cq_smooth_imax(t2, eps2 - delta).value + extra)
        params = {"eps1": eps1, "eps2": eps2, "delta": delta}
        kind = "inner"
    elif mode == "oneshot_outer":
        r = (cq_smooth_imax(t1, eps1).value, cq_smooth_imax(t2, eps2).value)
        params = {"eps1": eps1, "eps2": eps2}
        kind = "outer"
    elif mode == "iid":
        r = (cq_mutual_information(t1), cq_mutual_information(t2))
        params = {}
        kind = "iid"
    else:
        raise ValueError(f"unknown mode {mode!r}")
    point = RatePoint(float(max(0.0, r[0])), float(max(0.0, r[1])), kind, params)

    d = Decomposition(a1, a2, decoder)
    target = d.induced_mac()
    proto = build_mac_protocol(d, eps1, eps2, delta, "fixed", (in1.px, in2.px))
    sim = exact_induced_mac(proto)
    ideal = _output_state(in1.px, in2.px, target, in1.post_states, in2.post_states)
    real = _output_state(in1.px, in2.px, sim, in1.post_states, in2.post_states)
    dist = cq_trace_distance(real, ideal)
    report = {
        "rates": [point.r1, point.r2],
        "kind": kind,
        "skeleton_rates": list(proto.rates),
        "trace_distance": dist,
        "bound": eps1 + eps2,
        "within_bound": dist <= eps1 + eps2 + 1e-12,
        "imax": [cq_imax(t1), cq_imax(t2)],
        "holevo": [cq_mutual_information(t1), cq_mutual_information(t2)],
    }
    return point, report


def classical_imax(t: CqState) -> float:
    """Classical counterpart of cq_imax for diagonal blocks."""
    w, pe = classical_channel(t)
    return imax_state(w, pe)
