"""Verifier-free estimates of essential neurons.

``opt_adv_prune`` flags every refined neuron on which some adversarial example
disagrees with the reference NAP; ``gradient_search`` flags neurons from the
margin and its gradient at sample points. Both return a :class:`NeuronSet`
carrying one witness input per flagged neuron.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nap import ONE, STAR, ZERO, Nap, binary_patterns
from .network import (
    InputDomain,
    Network,
    NeuronId,
    forward,
    grad_margin_wrt_hidden_all,
    grad_margin_wrt_input,
    margin,
    neuron_ids,
)


@dataclass(frozen=True)
class AttackConfig:
    eps: float
    alpha: float | None = None  # default eps / 10
    iterations: int = 40
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.alpha is not None and self.alpha > self.eps and self.iterations != 1:
            raise ValueError("alpha must not exceed eps unless a single iteration is used")

    @property
    def step(self) -> float:
        return self.eps / 10.0 if self.alpha is None else self.alpha


@dataclass
class Flag:
    neuron: NeuronId
    ordinal: int
    witness: np.ndarray
    rule: str

    def to_json(self) -> dict:
        return {
            "layer": self.neuron.layer,
            "index": self.neuron.index,
            "witness": self.witness.tolist(),
            "rule": self.rule,
        }


@dataclass
class NeuronSet:
    flags: dict[int, Flag] = field(default_factory=dict)

    def add(self, flag: Flag) -> None:
        self.flags.setdefault(flag.ordinal, flag)

    def ordinals(self) -> list[int]:
        return sorted(self.flags)

    def __contains__(self, ordinal: int) -> bool:
        return ordinal in self.flags

    def __len__(self) -> int:
        return len(self.flags)

    def to_json(self) -> list[dict]:
        return [self.flags[o].to_json() for o in self.ordinals()]


def _project(x, center, eps, domain):
    lo, hi = center - eps, center + eps
    if domain is not None:
        lo, hi = np.maximum(lo, domain.lower), np.minimum(hi, domain.upper)
    return np.clip(x, lo, hi)


def pgd_attack(
    net: Network, x, c: int, domain: InputDomain | None, cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray | None:
    """L-inf sign-gradient descent on the margin from random starts in the ball.

    Returns the first point found with margin <= 0, or None.
    """
    x = np.asarray(x, dtype=np.float64)
    if margin(net, x, c) <= 0:
        raise ValueError("attack start point is already misclassified")
    if cfg.eps == 0:
        return None
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        xa = _project(x + rng.uniform(-cfg.eps, cfg.eps, size=x.shape), x, cfg.eps, domain)
        for _ in range(cfg.iterations + 1):
            if margin(net, xa, c) <= 0:
                return xa
            g = grad_margin_wrt_input(net, xa, c)
            xa = _project(xa - cfg.step * np.sign(g), x, cfg.eps, domain)
    return None


def _row_attacks(net, x, c, domain, cfg, row):
    # one independent single-restart attack per restart, each with its own stream
    out = []
    single = AttackConfig(cfg.eps, cfg.alpha, cfg.iterations, 1, cfg.seed)
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, row, r])
        adv = pgd_attack(net, x, c, domain, single, rng)
        if adv is not None:
            out.append(adv)
    return out


def adversarial_examples(net: Network, data, cfg: AttackConfig, domain=None, workers: int = 1) -> list[list[np.ndarray]]:
    """Adversarial examples per row (empty for rows that are misclassified or robust)."""

    def job(j):
        x, c = data.X[j], int(data.labels[j])
        if margin(net, x, c) <= 0:
            return []
        return _row_attacks(net, x, c, domain, cfg, j)

    idx = range(len(data))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(job, idx))
    return [job(j) for j in idx]


def flags_from_examples(net: Network, refined: Nap, examples) -> NeuronSet:
    """Refined neurons whose binary state at some example disagrees with ``refined``."""
    ids = neuron_ids(net.signature)
    found = NeuronSet()
    mask = refined.states != STAR
    for x in examples:
        pat = binary_patterns(net, x[None, :])[0]
        for o in np.flatnonzero(mask & (pat != refined.states)):
            found.add(Flag(ids[o], int(o), x, "adversarial-xor"))
    return found


def opt_adv_prune(net: Network, data, refined: Nap, cfg: AttackConfig, domain=None, workers: int = 1) -> NeuronSet:
    advs = adversarial_examples(net, data, cfg, domain, workers)
    return flags_from_examples(net, refined, [a for row in advs for a in row])


@dataclass(frozen=True)
class GradientSearchConfig:
    beta: float
    gamma: float

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")


def _sample_stats(net, X, c):
    posts, margins, grads = [], [], []
    for x in X:
        posts.append(forward(net, x).hidden_post())
        margins.append(margin(net, x, c))
        grads.append(grad_margin_wrt_hidden_all(net, x, c))
    return np.array(posts), np.array(margins), np.array(grads)


def default_gradient_config(net: Network, X, c: int) -> GradientSearchConfig:
    """beta = 0.1 * median |margin|, gamma = median |d margin / d z_hat| over the samples."""
    _, m, g = _sample_stats(net, np.atleast_2d(X), c)
    beta = 0.1 * float(np.median(np.abs(m)))
    gamma = float(np.median(np.abs(g)))
    return GradientSearchConfig(beta if beta > 0 else 1e-12, gamma if gamma > 0 else 1e-12)


def gradient_search(net: Network, X, refined: Nap, cfg: GradientSearchConfig, c: int) -> NeuronSet:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    post, m, g = _sample_stats(net, X, c)
    ids = neuron_ids(net.signature)
    found = NeuronSet()
    for o in range(net.num_hidden):
        state = refined.states[o]
        for j in range(X.shape[0]):
            if post[j, o] > 0:
                if abs(m[j]) < cfg.beta and abs(g[j, o]) > cfg.gamma and state == ZERO:
                    found.add(Flag(ids[o], o, X[j], "zero-state-steep-margin"))
                    break
            elif m[j] < 0 and state == ONE:
                found.add(Flag(ids[o], o, X[j], "one-state-inactive-misclassified"))
                break
    return found
