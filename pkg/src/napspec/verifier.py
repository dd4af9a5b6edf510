"""Complete verification of NAP (and NAP-augmented) robustness queries.

Hidden ReLU phases are enumerated depth-first in global neuron order. Each
node is pruned with interval bound propagation; each total phase assignment
turns the network into an affine map over a polytope, and the worst-case
margin on it is found with the in-repo simplex.

NAP states are encoded with their closures: a neuron in state 1 is allowed
``z >= 0``. This over-approximates the region so "Verified" stays sound;
counterexamples are re-checked with strict semantics before being reported.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .nap import ONE, Nap, SignatureMismatch, conflicts, exhibits, meet
from .network import InputDomain, Network, margin
from .simplex import LPError, solve_lp

INACTIVE, ACTIVE, FREE = 0, 1, -1
_FEAS_TOL = 1e-10


class Verdict(str, enum.Enum):
    VERIFIED = "Verified"
    FALSIFIED = "Falsified"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class RobustnessQuery:
    target: int
    domain: InputDomain
    center: np.ndarray | None = None
    eps: float | None = None
    tau: float = 1e-6
    phase_budget: int = 100_000
    time_budget_ms: float | None = 10_000.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if (self.center is None) != (self.eps is None):
            raise ValueError("a ball needs both a center and eps")
        if self.center is not None:
            c = np.array(self.center, dtype=np.float64)
            c.setflags(write=False)
            object.__setattr__(self, "center", c)
            if self.eps < 0:
                raise ValueError("eps must be non-negative")
            if c.shape != self.domain.lower.shape or not self.domain.contains(c):
                raise ValueError("ball center must lie inside the domain")
        if self.phase_budget < 0:
            raise ValueError("phase budget must be non-negative")

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.domain.lower, self.domain.upper
        if self.center is not None:
            lo = np.maximum(lo, self.center - self.eps)
            hi = np.minimum(hi, self.center + self.eps)
        return lo, hi

    def to_json(self) -> dict:
        ball = None
        if self.center is not None:
            ball = {"center": self.center.tolist(), "eps": self.eps}
        return {
            "class": self.target,
            "domain": self.domain.to_json(),
            "ball": ball,
            "tau": self.tau,
            "phase_budget": self.phase_budget,
            "time_budget_ms": self.time_budget_ms,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RobustnessQuery":
        ball = doc.get("ball")
        return cls(
            target=int(doc["class"]),
            domain=InputDomain(doc["domain"]["lower"], doc["domain"]["upper"]),
            center=None if ball is None else ball["center"],
            eps=None if ball is None else float(ball["eps"]),
            tau=float(doc.get("tau", 1e-6)),
            phase_budget=int(doc.get("phase_budget", 100_000)),
            time_budget_ms=doc.get("time_budget_ms", 10_000.0),
        )


def load_query(path) -> RobustnessQuery:
    with open(path) as fh:
        return RobustnessQuery.from_json(json.load(fh))


@dataclass
class VerificationResult:
    verdict: Verdict
    counterexample: np.ndarray | None = None
    counterexample_margin: float | None = None
    stats: dict = field(default_factory=lambda: {"phases_explored": 0, "phases_pruned": 0, "lp_solves": 0})
    reason: str = ""

    def to_json(self) -> dict:
        cex = None
        if self.counterexample is not None:
            cex = {"x": self.counterexample.tolist(), "margin": self.counterexample_margin}
        return {"verdict": self.verdict.value, "counterexample": cex, "stats": dict(self.stats), "reason": self.reason}


@dataclass
class Bounds:
    """Interval bounds on pre-activations, one (lower, upper) pair per hidden layer."""

    pre_lower: list[np.ndarray]
    pre_upper: list[np.ndarray]
    post_lower: np.ndarray
    post_upper: np.ndarray
    phases: np.ndarray
    feasible: bool


def nap_phases(P: Nap) -> np.ndarray:
    ph = np.full(len(P), FREE, dtype=np.int8)
    ph[P.states == 0] = INACTIVE
    ph[P.states == 1] = ACTIVE
    return ph


def _propagate(net: Network, lo, hi, phases: np.ndarray, fix_stable: bool) -> Bounds:
    phases = phases.copy()
    lh, uh = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    pre_l, pre_u = [], []
    feasible = True
    off = 0
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
        zl = Wp @ lh + Wn @ uh + b
        zu = Wp @ uh + Wn @ lh + b
        ph = phases[off : off + W.shape[0]]
        if fix_stable:
            ph[(ph == FREE) & (zl >= 0)] = ACTIVE
            ph[(ph == FREE) & (zu <= 0)] = INACTIVE
        off_ = ph == INACTIVE
        on = ph == ACTIVE
        if np.any(zl[off_] > _FEAS_TOL) or np.any(zu[on] < -_FEAS_TOL):
            feasible = False
        zu = np.where(off_, np.minimum(zu, 0.0), zu)
        zl = np.where(on, np.maximum(zl, 0.0), zl)
        pre_l.append(zl)
        pre_u.append(zu)
        lh = np.where(off_, 0.0, np.maximum(zl, 0.0))
        uh = np.where(off_, 0.0, np.maximum(zu, 0.0))
        off += W.shape[0]
    return Bounds(pre_l, pre_u, lh, uh, phases, feasible)


def bound_propagation(net: Network, lower, upper, P: Nap | None = None) -> Bounds:
    """Sound interval bounds for every pre-activation over the box, honouring NAP-locked phases."""
    phases = np.full(net.num_hidden, FREE, dtype=np.int8) if P is None else nap_phases(P)
    return _propagate(net, lower, upper, phases, fix_stable=False)


def _objective_rows(net: Network, c: int) -> list[tuple[int | None, np.ndarray, float]]:
    """(rival, weight row, bias) of each linear margin F_c - F_k over the last hidden layer."""
    W, b = net.weights[-1], net.biases[-1]
    if net.output_dim == 1:
        return [(None, W[0], float(b[0]))]
    return [(k, W[c] - W[k], float(b[c] - b[k])) for k in range(net.output_dim) if k != c]


def _affine_under_phase(net: Network, phase: np.ndarray):
    """Affine maps of every hidden pre-activation and of the last hidden post-activation."""
    d = net.input_dim
    M, v = np.eye(d), np.zeros(d)
    Zs, zs = [], []
    off = 0
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        ZM, zv = W @ M, W @ v + b
        Zs.append(ZM)
        zs.append(zv)
        on = (phase[off : off + W.shape[0]] == ACTIVE).astype(np.float64)
        M, v = ZM * on[:, None], zv * on
        off += W.shape[0]
    return np.vstack(Zs), np.concatenate(zs), M, v


def _phase_constraints(Z, z, phase):
    # active: -z <= 0 ; inactive: z <= 0
    sign = np.where(phase == ACTIVE, -1.0, 1.0)
    return Z * sign[:, None], -z * sign


class _Stats:
    def __init__(self):
        self.explored = 0
        self.pruned = 0
        self.lp = 0

    def as_dict(self) -> dict:
        return {"phases_explored": self.explored, "phases_pruned": self.pruned, "lp_solves": self.lp}


def _solve(stats: _Stats, *args, **kw):
    stats.lp += 1
    return solve_lp(*args, **kw)


def min_margin_under_phase(net: Network, phase, lower, upper, c: int, k: int | None):
    """Minimise F_c - F_k (or F for a scalar net) with every ReLU phase locked.

    Returns None when the phase is infeasible on the box, else ``(value, argmin)``.
    """
    phase = np.asarray(phase, dtype=np.int8)
    if phase.shape != (net.num_hidden,) or np.any((phase != 0) & (phase != 1)):
        raise ValueError("phase assignment must be total (0/1 per hidden neuron)")
    Z, z, M, v = _affine_under_phase(net, phase)
    A, rhs = _phase_constraints(Z, z, phase)
    for rk, w, bias in _objective_rows(net, c):
        if rk == k:
            res = solve_lp(w @ M, A, rhs, lower, upper)
            if res.status == "infeasible":
                return None
            return res.fun + w @ v + bias, res.x
    raise ValueError(f"class {k} is not a rival of {c}")


def _interior_point(net, phase, strict, lower, upper, stats, objective=None, tau=None):
    """Maximise slack ``t`` in [0, 1] with z >= t on the ``strict`` (One-locked) neurons
    (and, given ``objective``, the margin at most ``tau - t``). Returns ``(t, x)`` or None.
    """
    d = net.input_dim
    Z, z, M, v = _affine_under_phase(net, phase)
    A, rhs = _phase_constraints(Z, z, phase)
    tcol = strict.astype(np.float64)[:, None]
    A = np.hstack([A, tcol])
    if objective is not None:
        w, bias = objective
        A = np.vstack([A, np.append(w @ M, 1.0)])
        rhs = np.append(rhs, tau - w @ v - bias)
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    res = _solve(stats, cost, A, rhs, np.append(lower, 0.0), np.append(upper, 1.0))
    if res.status == "infeasible":
        return None
    return res.x[-1], res.x[:d]


class _Found(Exception):
    def __init__(self, x, m):
        self.x, self.m = x, m


class _OutOfBudget(Exception):
    pass


def _search(net, lower, upper, phases, leaf, stats, *, prune, deadline, phase_budget, margin_check=None):
    """Depth-first enumeration of total extensions of ``phases`` in global order."""

    def visit(ph):
        if deadline is not None and time.monotonic() >= deadline:
            raise _OutOfBudget("time budget exhausted")
        if prune:
            bnd = _propagate(net, lower, upper, ph, fix_stable=True)
            if not bnd.feasible:
                stats.pruned += 1
                return
            if margin_check is not None and margin_check(bnd):
                stats.pruned += 1
                return
            ph = bnd.phases
        free = np.flatnonzero(ph == FREE)
        if free.size == 0:
            if stats.explored >= phase_budget:
                raise _OutOfBudget("phase budget exhausted")
            stats.explored += 1
            leaf(ph)
            return
        i = free[0]
        for val in (INACTIVE, ACTIVE):
            child = ph.copy()
            child[i] = val
            visit(child)

    visit(phases)


def _deadline(ms):
    return None if ms is None else time.monotonic() + float(ms) / 1000.0


def _strict_ok(net, x, P, lower, upper, c, tau) -> float | None:
    if not (np.all(x >= lower) and np.all(x <= upper)):
        return None
    if not exhibits(net, x, P):
        return None
    m = margin(net, x, c)
    return m if m <= tau else None


def verify(net: Network, P: Nap, query: RobustnessQuery, prune: bool = True) -> VerificationResult:
    """Decide whether every input in the query box that exhibits ``P`` keeps margin > tau."""
    if P.signature != net.signature:
        raise SignatureMismatch(f"NAP signature {P.signature} does not match network {net.signature}")
    c = query.target
    if c < 0 or (net.output_dim > 1 and c >= net.output_dim):
        raise ValueError(f"invalid target class {c}")
    if query.domain.dim != net.input_dim:
        raise ValueError("query domain dimension does not match the network input")
    lower, upper = query.box()
    stats = _Stats()
    rows = _objective_rows(net, c)
    tau = query.tau
    strict = P.states == ONE
    unresolved = []

    def margin_safe(bnd: Bounds) -> bool:
        lh, uh = bnd.post_lower, bnd.post_upper
        for _, w, bias in rows:
            lb = np.maximum(w, 0) @ lh + np.minimum(w, 0) @ uh + bias
            if lb <= tau:
                return False
        return True

    def leaf(ph):
        Z, z, M, v = _affine_under_phase(net, ph)
        A, rhs = _phase_constraints(Z, z, ph)
        for _, w, bias in rows:
            res = _solve(stats, w @ M, A, rhs, lower, upper)
            if res.status == "infeasible":
                return
            if res.fun + w @ v + bias > tau:
                continue
            m = _strict_ok(net, res.x, P, lower, upper, c, tau)
            if m is not None:
                raise _Found(res.x, m)
            # boundary point: look for one strictly inside the locked phases
            ip = _interior_point(net, ph, strict, lower, upper, stats, (w, bias), tau)
            if ip is not None and ip[0] > 0:
                m = _strict_ok(net, ip[1], P, lower, upper, c, tau)
                if m is not None:
                    raise _Found(ip[1], m)
            region = _interior_point(net, ph, strict, lower, upper, stats)
            if region is None or region[0] <= _FEAS_TOL:
                return  # no point of this phase exhibits P strictly
            unresolved.append(res.x)

    if lower.size and np.any(lower > upper):
        return VerificationResult(Verdict.VERIFIED, stats=stats.as_dict(), reason="empty box")
    try:
        _search(
            net, lower, upper, nap_phases(P), leaf, stats,
            prune=prune, deadline=_deadline(query.time_budget_ms),
            phase_budget=query.phase_budget, margin_check=margin_safe,
        )
    except _Found as f:
        return VerificationResult(Verdict.FALSIFIED, f.x, f.m, stats.as_dict(), "counterexample validated")
    except _OutOfBudget as e:
        return VerificationResult(Verdict.UNKNOWN, stats=stats.as_dict(), reason=str(e))
    except LPError as e:
        return VerificationResult(Verdict.UNKNOWN, stats=stats.as_dict(), reason=f"LP failure: {e}")
    if unresolved:
        return VerificationResult(
            Verdict.UNKNOWN, stats=stats.as_dict(),
            reason="violations only on the closure boundary of the NAP region",
        )
    return VerificationResult(Verdict.VERIFIED, stats=stats.as_dict())


def exhibits_closure(net: Network, x, P: Nap, tol: float = 1e-9) -> bool:
    """Membership in the closure of R_P: state 1 admits z >= 0, state 0 admits z <= 0."""
    z = net.forward(x).hidden_pre()
    ok_on = (P.states != 1) | (z >= -tol)
    ok_off = (P.states != 0) | (z <= tol)
    return bool(np.all(ok_on & ok_off))


@dataclass
class AmbiguityResult:
    status: str  # "Disjoint" | "Overlap" | "Unknown"
    witness: np.ndarray | None = None
    strict: bool = False
    stats: dict = field(default_factory=dict)

    @property
    def disjoint(self) -> bool:
        return self.status == "Disjoint"


def check_non_ambiguity(
    net: Network, P1: Nap, P2: Nap, domain: InputDomain, *,
    prune: bool = True, phase_budget: int = 100_000, time_budget_ms: float | None = None,
) -> AmbiguityResult:
    """Decide whether any input in ``domain`` exhibits both NAPs."""
    if P1.signature != net.signature or P2.signature != net.signature:
        raise SignatureMismatch("NAP and network signatures differ")
    stats = _Stats()
    if conflicts(P1, P2):
        return AmbiguityResult("Disjoint", stats=stats.as_dict())
    joint = meet(P1, P2)
    ones = joint.states == ONE
    lower, upper = domain.lower, domain.upper
    unresolved = []

    def leaf(ph):
        ip = _interior_point(net, ph, ones, lower, upper, stats)
        if ip is None or ip[0] <= _FEAS_TOL:
            return  # no point of this phase exhibits both NAPs strictly
        t, x = ip
        if exhibits_closure(net, x, P1) and exhibits_closure(net, x, P2):
            raise _Found(x, exhibits(net, x, P1) and exhibits(net, x, P2))
        unresolved.append(x)

    try:
        _search(
            net, lower, upper, nap_phases(joint), leaf, stats,
            prune=prune, deadline=_deadline(time_budget_ms), phase_budget=phase_budget,
        )
    except _Found as f:
        return AmbiguityResult("Overlap", f.x, bool(f.m), stats.as_dict())
    except (_OutOfBudget, LPError):
        return AmbiguityResult("Unknown", stats=stats.as_dict())
    if unresolved:
        return AmbiguityResult("Unknown", unresolved[0], False, stats.as_dict())
    return AmbiguityResult("Disjoint", stats=stats.as_dict())
