"""Empirical metrics: data coverage, adversarial rejection, empirical ambiguity."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimate import AttackConfig, pgd_attack
from .nap import Nap, exhibits, exhibits_batch
from .network import Network, margin


def covered_mask(net: Network, P: Nap, data, c: int) -> np.ndarray:
    """Boolean mask over the class-``c`` rows that exhibit ``P`` (strict semantics)."""
    rows = data.of_class(c)
    if rows.shape[0] == 0:
        raise ValueError(f"no rows of class {c}")
    return exhibits_batch(net, rows, P)


def coverage(net: Network, P: Nap, data, c: int) -> float:
    return float(covered_mask(net, P, data, c).mean())


@dataclass
class RejectionStats:
    attempted: int
    succeeded: int
    rejected: int

    def to_json(self) -> dict:
        return {"attempted": self.attempted, "succeeded": self.succeeded, "rejected": self.rejected}


def adversarial_rejection(
    net: Network, P: Nap, data, cfg: AttackConfig, trials: int = 1, domain=None, workers: int = 1,
) -> RejectionStats:
    """Attack each correctly classified row covered by ``P``; count adversarials outside R_P.

    ``attempted`` counts eligible rows; each gets ``trials`` independent attacks.
    """
    eligible = [
        j for j in range(len(data))
        if margin(net, data.X[j], int(data.labels[j])) > 0 and exhibits(net, data.X[j], P)
    ]

    def job(j):
        x, c = data.X[j], int(data.labels[j])
        succ = rej = 0
        for t in range(trials):
            adv = pgd_attack(net, x, c, domain, cfg, np.random.default_rng([cfg.seed, j, t]))
            if adv is not None:
                succ += 1
                rej += not exhibits(net, adv, P)
        return succ, rej

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, eligible))
    else:
        results = [job(j) for j in eligible]
    return RejectionStats(
        len(eligible), sum(r[0] for r in results), sum(r[1] for r in results)
    )


def non_ambiguity_empirical(net: Network, naps: list[Nap], data) -> int:
    """Number of rows exhibiting at least two of the given NAPs."""
    if len(naps) < 2:
        raise ValueError("need at least two NAPs")
    hits = np.zeros(len(data), dtype=np.int64)
    for P in naps:
        hits += exhibits_batch(net, data.X, P)
    return int(np.count_nonzero(hits >= 2))
