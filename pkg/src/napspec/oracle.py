"""Verification oracles V: NAP -> {pass, fail, unknown}.

An oracle is any callable taking a :class:`~napspec.nap.Nap` and returning an
:class:`OracleVerdict`. The search algorithms only look at ``verdict.passed``;
Unknown counts as a failure there, so the neuron under test stays refined.
"""
from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .nap import STAR, Nap, SignatureMismatch
from .network import Network
from .verifier import RobustnessQuery, Verdict, VerificationResult, verify


class Outcome(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class OracleVerdict:
    outcome: Outcome
    counterexample: np.ndarray | None = None

    def __post_init__(self):
        if self.counterexample is not None and self.outcome is not Outcome.FAIL:
            raise ValueError("only a failing verdict may carry a counterexample")

    @property
    def passed(self) -> bool:
        return self.outcome is Outcome.PASS


PASS = OracleVerdict(Outcome.PASS)
FAIL = OracleVerdict(Outcome.FAIL)


class Oracle(Protocol):
    def __call__(self, nap: Nap) -> OracleVerdict: ...


class SyntheticOracle:
    """Monotone DNF oracle: passes iff some clause has all its neurons refined.

    The clauses play the role of the planted minimal specifications.
    """

    def __init__(self, signature: Sequence[int], clauses: Iterable[Iterable[int]]):
        self.signature = tuple(int(d) for d in signature)
        n = sum(self.signature)
        self.clauses = [tuple(sorted({int(i) for i in c})) for c in clauses]
        for c in self.clauses:
            if any(not 0 <= i < n for i in c):
                raise ValueError(f"clause {c} refers to a neuron outside 0..{n - 1}")
        self._idx = [np.array(c, dtype=np.int64) for c in self.clauses]

    def passes_refined(self, refined: np.ndarray) -> bool:
        return any(refined[c].all() for c in self._idx)

    def __call__(self, nap: Nap) -> OracleVerdict:
        if nap.signature != self.signature:
            raise SignatureMismatch(f"oracle signature {self.signature} vs NAP {nap.signature}")
        return PASS if self.passes_refined(nap.states != STAR) else FAIL

    def to_json(self) -> dict:
        return {"signature": list(self.signature), "clauses": [list(c) for c in self.clauses]}

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticOracle":
        return cls(doc["signature"], doc["clauses"])


def load_synthetic_oracle(path) -> SyntheticOracle:
    with open(path) as fh:
        return SyntheticOracle.from_json(json.load(fh))


def synthetic_verify(o: SyntheticOracle, nap: Nap) -> OracleVerdict:
    return o(nap)


class CountingOracle:
    """Wraps an oracle and counts every verdict request."""

    def __init__(self, inner: Callable[[Nap], OracleVerdict]):
        self.inner = inner
        self._calls = 0
        self._lock = threading.Lock()

    def __call__(self, nap: Nap) -> OracleVerdict:
        with self._lock:
            self._calls += 1
        return self.inner(nap)

    @property
    def calls(self) -> int:
        return self._calls

    def count_calls(self) -> int:
        return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0


class VerifierOracle:
    """Delegates each verdict to the built-in complete verifier."""

    def __init__(self, net: Network, query: RobustnessQuery, prune: bool = True):
        self.net = net
        self.query = query
        self.prune = prune
        self.last_result: VerificationResult | None = None

    def __call__(self, nap: Nap) -> OracleVerdict:
        res = verify(self.net, nap, self.query, prune=self.prune)
        self.last_result = res
        if res.verdict is Verdict.VERIFIED:
            return PASS
        if res.verdict is Verdict.FALSIFIED:
            return OracleVerdict(Outcome.FAIL, res.counterexample)
        return OracleVerdict(Outcome.UNKNOWN)


def oracle_from_verifier(net: Network, query: RobustnessQuery) -> VerifierOracle:
    return VerifierOracle(net, query)
