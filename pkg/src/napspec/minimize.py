"""Search for minimal NAP specifications against a verification oracle.

* :func:`coarsen` -- conservative: drop one neuron at a time, |N| + 1 calls.
* :func:`stoch_coarsen` -- statistical: drop random subsets, O(s log |N|) calls.
* :func:`refine_search` -- exhaustive bottom-up, up to 2^|N| calls.
* :func:`sample_refine` -- statistical bottom-up, collects likely essential neurons.

Every algorithm wraps the oracle in a :class:`CountingOracle` and issues its
calls sequentially, so call counts are exact and seeded runs reproducible.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .nap import STAR, Nap, coarsen_neuron, restrict
from .oracle import CountingOracle

INV_E = math.exp(-1.0)


class Termination(str, enum.Enum):
    MINIMAL = "Minimal"
    SIZE_TARGET = "SizeTarget"
    BUDGET = "Budget"
    REFINED_FAILS = "RefinedFails"
    UNVERIFIED = "Unverified"


@dataclass
class MinimizeReport:
    result: Nap | None
    calls: int
    terminated_by: Termination
    trace: list[dict] = field(default_factory=list)
    passes: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {
            "result": None if self.result is None else str(self.result),
            "signature": None if self.result is None else list(self.result.signature),
            "size": None if self.result is None else self.result.size,
            "calls": self.calls,
            "terminated_by": self.terminated_by.value,
            "passes": self.passes,
            "trace": self.trace,
        }
        doc.update(self.extra)
        return doc


class _Run:
    """Counting oracle plus trace bookkeeping for one algorithm run."""

    def __init__(self, oracle, keep_trace: bool, max_calls: int | None = None):
        self.oracle = CountingOracle(oracle)
        self.keep_trace = keep_trace
        self.max_calls = max_calls
        self.trace: list[dict] = []

    @property
    def calls(self) -> int:
        return self.oracle.calls

    def exhausted(self) -> bool:
        return self.max_calls is not None and self.calls >= self.max_calls

    def check(self, nap: Nap, theta: float | None = None) -> bool:
        v = self.oracle(nap)
        if self.keep_trace:
            self.trace.append(
                {"nap": str(nap), "size": nap.size, "verdict": v.outcome.value, "theta": theta}
            )
        return v.passed

    def report(self, result, how, passes=None, **extra) -> MinimizeReport:
        if passes is None and result is not None:
            passes = how in (Termination.MINIMAL, Termination.SIZE_TARGET, Termination.BUDGET)
        return MinimizeReport(result, self.calls, how, self.trace, passes, extra)


def coarsen(refined: Nap, oracle, order: Sequence[int] | None = None, keep_trace: bool = True) -> MinimizeReport:
    """Try to coarsen each neuron in turn, keeping the change only if V still passes."""
    n = len(refined)
    order = list(range(n)) if order is None else [int(i) for i in order]
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of all hidden neurons")
    run = _Run(oracle, keep_trace)
    if not run.check(refined):
        return run.report(None, Termination.REFINED_FAILS, passes=False)
    P = refined
    for i in order:
        Q = coarsen_neuron(P, i)
        if run.check(Q):
            P = Q
    return run.report(P, Termination.MINIMAL)


def sigmoid(lam: float) -> float:
    if lam >= 0:
        return 1.0 / (1.0 + math.exp(-lam))
    e = math.exp(lam)
    return e / (1.0 + e)


def logit(theta: float) -> float:
    theta = min(max(theta, 1e-12), 1 - 1e-12)
    return math.log(theta / (1.0 - theta))


def update_theta(lam: float, verdict: bool | int, eta: float) -> float:
    """One stochastic step pushing the pass rate of sampled NAPs towards 1/e."""
    return lam - eta * (float(verdict) - INV_E)


def sample_nap(candidates, theta: float, rng: np.random.Generator, ref: Nap, outside_ref: bool = False) -> Nap:
    """Refine each candidate to its ``ref`` state with probability ``theta``, else leave it *.

    Neurons outside ``candidates`` are * unless ``outside_ref`` keeps them at the ``ref`` state.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    cand = np.asarray(candidates, dtype=np.int64)
    states = ref.states.copy() if outside_ref else np.full(len(ref), STAR, dtype=np.int8)
    draw = rng.random(cand.size) < theta
    states[cand] = np.where(draw, ref.states[cand], STAR)
    return ref.with_states(states)


@dataclass
class StochConfig:
    s: int | None = None
    theta: float | None = None
    eta: float = 0.1
    lam0: float | None = None
    adaptive: bool | None = None  # default: adaptive iff s is unknown
    max_calls: int = 10_000
    seed: int = 0
    patience: int = 3

    def is_adaptive(self) -> bool:
        return self.s is None if self.adaptive is None else self.adaptive

    def initial(self) -> float:
        """Starting theta (fixed mode) or lambda (adaptive mode)."""
        if self.is_adaptive():
            if self.lam0 is not None:
                return self.lam0
            return 0.0 if self.theta is None else logit(self.theta)
        if self.theta is not None:
            return self.theta
        if self.s is None:
            raise ValueError("fixed-theta mode needs either theta or s")
        return math.exp(-1.0 / self.s)


def stoch_coarsen(refined: Nap, oracle, cfg: StochConfig | None = None, keep_trace: bool = True) -> MinimizeReport:
    """Coarsen random subsets of the surviving candidate neurons at once.

    With a size target ``s`` the loop stops once at most ``s`` candidates
    remain. Without one, theta adapts towards a 1/e pass rate and the loop
    stops after ``patience`` consecutive passing samples leave the candidate
    set unchanged; a single-neuron coarsening pass then certifies minimality.
    """
    cfg = cfg or StochConfig()
    rng = np.random.default_rng(cfg.seed)
    run = _Run(oracle, keep_trace, cfg.max_calls)
    if not run.check(refined):
        return run.report(None, Termination.REFINED_FAILS, passes=False)
    adaptive = cfg.is_adaptive()
    param = cfg.initial()
    cand = np.asarray(refined.refined(), dtype=np.int64)
    best = refined
    stable = 0
    while True:
        if cfg.s is not None and cand.size <= cfg.s:
            return run.report(best, Termination.SIZE_TARGET)
        if cfg.s is None and stable >= cfg.patience:
            break
        if run.exhausted():
            return run.report(best, Termination.BUDGET)
        theta = sigmoid(param) if adaptive else param
        Q = sample_nap(cand, theta, rng, refined)
        ok = run.check(Q, theta)
        if adaptive:
            param = update_theta(param, ok, cfg.eta)
        if ok:
            new = np.flatnonzero(Q.states != STAR)
            stable = stable + 1 if new.size == cand.size else 0
            cand, best = new, Q

    P = best
    for i in cand:
        if run.exhausted():
            return run.report(P, Termination.BUDGET)
        Q = coarsen_neuron(P, int(i))
        if run.check(Q):
            P = Q
    return run.report(P, Termination.MINIMAL)


def adaptive_sampling(oracle, ref: Nap, steps: int, eta: float = 0.1, lam0: float = 0.0, seed: int = 0):
    """Sample NAPs over the refined neurons of ``ref`` with adaptive theta and no shrinking.

    Returns arrays ``(thetas, passed)`` of length ``steps``.
    """
    rng = np.random.default_rng(seed)
    cand = np.asarray(ref.refined(), dtype=np.int64)
    lam = lam0
    thetas = np.empty(steps)
    passed = np.empty(steps, dtype=bool)
    for t in range(steps):
        thetas[t] = sigmoid(lam)
        ok = oracle(sample_nap(cand, thetas[t], rng, ref)).passed
        passed[t] = ok
        lam = update_theta(lam, ok, eta)
    return thetas, passed


MAX_REFINE_NEURONS = 20


def refine_search(oracle, signature: Sequence[int], ref: Nap, allow_large: bool = False, keep_trace: bool = True) -> MinimizeReport:
    """Exhaustive search from the coarsest NAP upwards; returns a passing NAP of minimum size."""
    if tuple(signature) != ref.signature:
        raise ValueError("reference NAP does not match the signature")
    if len(ref) > MAX_REFINE_NEURONS and not allow_large:
        raise ValueError(f"refusing exhaustive search over {len(ref)} > {MAX_REFINE_NEURONS} neurons")
    run = _Run(oracle, keep_trace)
    if not run.check(ref):
        return run.report(None, Termination.REFINED_FAILS, passes=False)
    R = ref.refined()
    for k in range(len(R)):
        for comb in itertools.combinations(R, k):
            Q = restrict(ref, comb)
            if run.check(Q):
                return run.report(Q, Termination.MINIMAL)
    # only the full reference NAP passes; it was checked above
    return run.report(ref, Termination.MINIMAL)


def default_sample_refine_theta(m: int) -> float:
    return (m / (m + 1)) ** m


def sample_refine(
    oracle, signature: Sequence[int], ref: Nap, *, s: int, k: int, theta: float | None = None,
    seed: int = 0, seed_set: Iterable[int] | None = None, max_calls: int | None = None,
    keep_trace: bool = True,
) -> MinimizeReport:
    """Collect, one per iteration, the neuron most often refined in passing samples.

    Stops when the collected neurons form a passing NAP or ``s`` have been
    collected. The result is not guaranteed to pass; ``report.passes`` says.
    """
    if tuple(signature) != ref.signature:
        raise ValueError("reference NAP does not match the signature")
    if k < 1 or s < 0:
        raise ValueError("need k >= 1 and s >= 0")
    if max_calls is not None and k * s > max_calls:
        raise ValueError(f"k*s = {k * s} exceeds the call budget {max_calls}")
    theta = default_sample_refine_theta(max(s, 1)) if theta is None else theta
    rng = np.random.default_rng(seed)
    run = _Run(oracle, keep_trace, max_calls)
    if not run.check(ref):
        return run.report(None, Termination.REFINED_FAILS, passes=False)
    R = ref.refined()
    visited = [] if seed_set is None else sorted({int(i) for i in seed_set} & set(R))
    picks: list[int] = []
    counts: list[list[int]] = []
    while True:
        P = restrict(ref, visited)
        if run.exhausted():
            return run.report(P, Termination.BUDGET, passes=False, picks=picks, counts=counts)
        if run.check(P):
            return run.report(P, Termination.MINIMAL, passes=True, picks=picks, counts=counts)
        unvisited = np.array([i for i in R if i not in visited], dtype=np.int64)
        if len(visited) >= s or unvisited.size == 0:
            return run.report(P, Termination.UNVERIFIED, passes=False, picks=picks, counts=counts)
        ctr = np.zeros(unvisited.size, dtype=np.int64)
        for _ in range(k):
            if run.exhausted():
                return run.report(P, Termination.BUDGET, passes=False, picks=picks, counts=counts)
            Q = sample_nap(unvisited, theta, rng, ref, outside_ref=True)
            if run.check(Q, theta):
                ctr += Q.states[unvisited] != STAR
        pick = int(unvisited[int(np.argmax(ctr))])  # ties -> lowest ordinal
        visited.append(pick)
        picks.append(pick)
        counts.append(ctr.tolist())

