"""Orthotope estimate of the volume of a NAP region.

An anchor ("pseudo-center") is picked among the data rows that exhibit the
NAP, then the box is grown along each axis in both directions by binary
search on region membership. Regions can be non-convex along a ray, so each
ray is first probed at 8 interior points and the search is confined below the
first failing probe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nap import Nap, exhibits, exhibits_batch
from .network import InputDomain, Network

EXACT_LIMIT = 2000
N_PROBES = 8


@dataclass(frozen=True, eq=False)
class Orthotope:
    center: np.ndarray
    lower: np.ndarray  # extent below the center, per dimension
    upper: np.ndarray

    @property
    def log_volume(self) -> float:
        return log_volume(self)

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.lower + self.upper <= 0))

    def to_json(self) -> dict:
        lv = self.log_volume
        return {
            "center": self.center.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "log_volume": lv if math.isfinite(lv) else None,
            "degenerate": self.degenerate,
        }


def pseudo_center(net: Network, P: Nap, X, seed: int = 0) -> np.ndarray:
    """Exhibiting row minimising the L-inf radius needed to cover the other exhibiting rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    pts = X[exhibits_batch(net, X, P)]
    if pts.shape[0] == 0:
        raise ValueError("no data row exhibits the NAP")
    if pts.shape[0] > EXACT_LIMIT:
        rng = np.random.default_rng(seed)
        pts = pts[np.sort(rng.choice(pts.shape[0], EXACT_LIMIT, replace=False))]
    radius = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        radius[i] = np.abs(pts - pts[i]).max()
    return pts[int(np.argmin(radius))].copy()


def _ray_extent(member, slack: float, tol: float) -> float:
    # positions on a tol grid capped at the wall: p(k) = min(k * tol, slack)
    if slack <= 0:
        return 0.0
    K = math.ceil(slack / tol)
    pos = lambda k: min(k * tol, slack)  # noqa: E731
    lo, hi = 0, None
    for j in range(1, N_PROBES + 2):
        k = round(j * K / (N_PROBES + 1))
        if k <= lo:
            continue
        if member(pos(k)):
            lo = k
        else:
            hi = k
            break
    if hi is None:
        return slack
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if member(pos(mid)):
            lo = mid
        else:
            hi = mid
    return pos(lo)


def expand_orthotope(net: Network, P: Nap, center, domain: InputDomain, tol: float = 1e-4) -> Orthotope:
    if tol <= 0:
        raise ValueError("tol must be positive")
    center = np.asarray(center, dtype=np.float64)
    if not exhibits(net, center, P):
        raise ValueError("the anchor point does not exhibit the NAP")
    d = center.shape[0]
    lower, upper = np.zeros(d), np.zeros(d)
    for i in range(d):
        for sign, out, slack in ((1.0, upper, domain.upper[i] - center[i]), (-1.0, lower, center[i] - domain.lower[i])):

            def member(e, i=i, sign=sign):
                x = center.copy()
                x[i] = np.clip(center[i] + sign * e, domain.lower[i], domain.upper[i])
                return exhibits(net, x, P)

            out[i] = _ray_extent(member, float(slack), tol)
    return Orthotope(center.copy(), lower, upper)


def log_volume(o: Orthotope) -> float:
    """Sum of log side lengths; -inf flags a degenerate box."""
    sides = o.lower + o.upper
    if np.any(sides <= 0):
        return -math.inf
    return float(np.sum(np.log(sides)))


def volume_ratio_order(a: float, b: float) -> int:
    """Order of magnitude of exp(a - b), rounded half up."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("degenerate log-volume")
    return math.floor((a - b) / math.log(10.0) + 0.5)
