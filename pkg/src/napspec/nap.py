"""Neural activation patterns over the states {0, 1, *}.

States are stored as a read-only int8 vector in global neuron order
(layer-major, index-minor) using the codes ZERO=0, ONE=1, STAR=2.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .network import Network, NeuronId, forward, forward_batch, neuron_ordinal

ZERO, ONE, STAR = 0, 1, 2
_CHARS = "01*"


class State(enum.IntEnum):
    ZERO = ZERO
    ONE = ONE
    STAR = STAR

    @property
    def char(self) -> str:
        return _CHARS[self]

    def abstracts(self, other: "State") -> bool:
        """Partial order on single states: * abstracts everything, 0/1 only themselves."""
        return self is State.STAR or self is other


class SignatureMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Nap:
    signature: tuple[int, ...]
    states: np.ndarray

    def __init__(self, signature: Sequence[int], states):
        signature = tuple(int(d) for d in signature)
        if isinstance(states, str):
            try:
                states = [_CHARS.index(ch) for ch in states]
            except ValueError:
                raise ValueError(f"bad NAP string {states!r}; use only 0, 1, *") from None
        arr = np.array(states, dtype=np.int8)
        if arr.shape != (sum(signature),):
            raise ValueError(f"{arr.size} states for signature {signature} (need {sum(signature)})")
        if arr.size and (arr.min() < 0 or arr.max() > STAR):
            raise ValueError("state codes must be 0, 1 or 2")
        arr.setflags(write=False)
        object.__setattr__(self, "signature", signature)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Nap):
            return NotImplemented
        return self.signature == other.signature and np.array_equal(self.states, other.states)

    def __hash__(self) -> int:
        return hash((self.signature, self.states.tobytes()))

    def __str__(self) -> str:
        return "".join(_CHARS[s] for s in self.states)

    def __repr__(self) -> str:
        return f"Nap({self.signature}, {str(self)!r})"

    def __getitem__(self, i: int) -> State:
        return State(int(self.states[i]))

    @property
    def refined_mask(self) -> np.ndarray:
        return self.states != STAR

    def refined(self) -> list[int]:
        """Ordinals of the non-Star neurons."""
        return np.flatnonzero(self.states != STAR).tolist()

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.states != STAR))

    def counts(self) -> dict[str, int]:
        return {ch: int(np.count_nonzero(self.states == code)) for code, ch in enumerate(_CHARS)}

    def ordinal(self, n: NeuronId | int) -> int:
        if isinstance(n, (int, np.integer)):
            if not 0 <= n < len(self):
                raise ValueError(f"neuron ordinal {n} out of range")
            return int(n)
        return neuron_ordinal(self.signature, n)

    def with_states(self, states) -> "Nap":
        return Nap(self.signature, states)

    def to_json(self) -> dict:
        return {"signature": list(self.signature), "states": str(self)}

    @classmethod
    def from_json(cls, doc: dict) -> "Nap":
        return cls(doc["signature"], doc["states"])


def load_nap(path) -> Nap:
    with open(path) as fh:
        return Nap.from_json(json.load(fh))


def save_nap(nap: Nap, path) -> None:
    Path(path).write_text(json.dumps(nap.to_json()) + "\n")


def coarsest(signature: Sequence[int]) -> Nap:
    return Nap(signature, np.full(sum(signature), STAR, dtype=np.int8))


def size(P: Nap) -> int:
    return P.size


def _binary_states(post: np.ndarray) -> np.ndarray:
    return (post > 0).astype(np.int8)


def abstract_binary(net: Network, x) -> Nap:
    return Nap(net.signature, _binary_states(forward(net, x).hidden_post()))


def binary_patterns(net: Network, X) -> np.ndarray:
    """Binary abstraction of every row of ``X`` as an ``(n, |N|)`` int8 array."""
    post, _ = forward_batch(net, X)
    return _binary_states(post)


def check_delta(delta: float) -> float:
    if not 0.5 < delta <= 1.0:
        raise ValueError(f"confidence ratio must lie in (0.5, 1], got {delta}")
    return float(delta)


def abstract_statistical(net: Network, X, delta: float = 0.99) -> Nap:
    """Per-neuron vote: 0 or 1 if at least a ``delta`` fraction of inputs agree, else *."""
    delta = check_delta(delta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("cannot abstract an empty input set")
    active = binary_patterns(net, X)
    n = X.shape[0]
    # compare counts, not fractions, so that e.g. 99/100 >= 0.99 is exact
    n_on = active.sum(axis=0)
    need = delta * n
    states = np.full(net.num_hidden, STAR, dtype=np.int8)
    states[(n - n_on) >= need - 1e-9 * n] = ZERO
    states[n_on >= need - 1e-9 * n] = ONE
    return Nap(net.signature, states)


def class_nap(net: Network, data, c: int, delta: float = 0.99) -> Nap:
    rows = data.of_class(c)
    if rows.shape[0] == 0:
        raise ValueError(f"no rows of class {c} in the dataset")
    return abstract_statistical(net, rows, delta)


def _same_signature(a: Nap, b: Nap) -> None:
    if a.signature != b.signature:
        raise SignatureMismatch(f"signatures differ: {a.signature} vs {b.signature}")


def subsumes(coarse: Nap, fine: Nap) -> bool:
    """True iff ``coarse`` is statewise an abstraction of ``fine``."""
    _same_signature(coarse, fine)
    return bool(np.all((coarse.states == STAR) | (coarse.states == fine.states)))


def coarsen_neuron(P: Nap, n: NeuronId | int) -> Nap:
    i = P.ordinal(n)
    s = P.states.copy()
    s[i] = STAR
    return P.with_states(s)


def refine_neuron(P: Nap, n: NeuronId | int, ref: Nap) -> Nap:
    _same_signature(P, ref)
    i = P.ordinal(n)
    if ref.states[i] == STAR:
        return P
    s = P.states.copy()
    s[i] = ref.states[i]
    return P.with_states(s)


def restrict(ref: Nap, keep: Iterable[int]) -> Nap:
    """``ref`` with every neuron outside ``keep`` coarsened to *."""
    s = np.full(len(ref), STAR, dtype=np.int8)
    idx = np.fromiter(keep, dtype=np.int64)
    s[idx] = ref.states[idx]
    return ref.with_states(s)


def pattern_matches(P: Nap, patterns: np.ndarray) -> np.ndarray:
    """Row-wise ``subsumes(P, pattern)`` for binary patterns of shape (n, |N|)."""
    free = P.states == STAR
    return np.all(free | (patterns == P.states), axis=1)


def exhibits(net: Network, x, P: Nap) -> bool:
    if P.signature != net.signature:
        raise SignatureMismatch("NAP and network signatures differ")
    return subsumes(P, abstract_binary(net, x))


def exhibits_batch(net: Network, X, P: Nap) -> np.ndarray:
    if P.signature != net.signature:
        raise SignatureMismatch("NAP and network signatures differ")
    return pattern_matches(P, binary_patterns(net, X))


def conflicts(a: Nap, b: Nap) -> list[int]:
    """Neurons where one NAP says 0 and the other says 1."""
    _same_signature(a, b)
    both = (a.states != STAR) & (b.states != STAR)
    return np.flatnonzero(both & (a.states != b.states)).tolist()


def meet(a: Nap, b: Nap) -> Nap:
    """The coarsest NAP refining both; requires that they do not conflict."""
    if conflicts(a, b):
        raise ValueError("NAPs conflict; their regions are disjoint")
    return a.with_states(np.where(a.states == STAR, b.states, a.states))
