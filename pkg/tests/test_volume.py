import math

import numpy as np
import pytest

from napspec.nap import Nap, coarsen_neuron, coarsest, exhibits, exhibits_batch
from napspec.network import InputDomain, Network
from napspec.volume import (
    EXACT_LIMIT,
    Orthotope,
    _ray_extent,
    expand_orthotope,
    log_volume,
    pseudo_center,
    volume_ratio_order,
)

UNIT = InputDomain.unit(2)


def identity_net(d=1):
    return Network([np.eye(d), np.ones((1, d))], [np.zeros(d), np.zeros(1)])


def brute_center(points):
    d = np.abs(points[:, None, :] - points[None, :, :]).max(axis=2)
    return points[int(np.argmin(d.max(axis=1)))]


def test_pseudo_center_small():
    net = identity_net()
    assert pseudo_center(net, coarsest((1,)), [[0.0], [1.0], [2.0]]).tolist() == [1.0]
    assert pseudo_center(net, coarsest((1,)), [[0.7]]).tolist() == [0.7]


def test_pseudo_center_no_row():
    with pytest.raises(ValueError):
        pseudo_center(identity_net(), Nap((1,), "0"), [[0.5], [0.2]])


def test_pseudo_center_matches_pairwise_oracle(net, data):
    X = data.X[:50]
    for s in ("****", "1*10", "**01"):
        P = Nap((2, 2), s)
        pts = X[exhibits_batch(net, X, P)]
        assert np.array_equal(pseudo_center(net, P, X), brute_center(pts))


def test_pseudo_center_permutation_invariant(net, data):
    P = Nap((2, 2), "**01")
    perm = np.random.default_rng(0).permutation(len(data))
    a = pseudo_center(net, P, data.X)
    b = pseudo_center(net, P, data.X[perm])
    pts = data.X[exhibits_batch(net, data.X, P)]
    rad = lambda c: np.abs(pts - c).max()  # noqa: E731
    assert rad(a) == rad(b)


def test_pseudo_center_subsample_is_seeded():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(EXACT_LIMIT + 300, 2))
    net = Network([np.eye(2), np.ones((1, 2))], [np.zeros(2), np.zeros(1)])
    a = pseudo_center(net, coarsest((2,)), X, seed=5)
    assert np.array_equal(a, pseudo_center(net, coarsest((2,)), X, seed=5))


def test_coarsest_reaches_walls(net):
    o = expand_orthotope(net, coarsest((2, 2)), [0.3, 0.6], UNIT)
    assert np.allclose(o.lower, [0.3, 0.6]) and np.allclose(o.upper, [0.7, 0.4])
    assert o.log_volume == pytest.approx(0.0)


def test_one_neuron_half_line():
    # R_P = {x >= 0.3} for P = <1> with z = x - 0.3
    net = Network([[[1.0]], [[1.0]]], [[-0.3], [0.0]])
    tol = 1e-4
    o = expand_orthotope(net, Nap((1,), "1"), [0.5], InputDomain.unit(1), tol)
    assert o.lower[0] == pytest.approx(0.2, abs=tol) and o.lower[0] <= 0.2
    assert o.upper[0] == pytest.approx(0.5)


def test_expand_errors(net):
    with pytest.raises(ValueError):
        expand_orthotope(net, Nap((2, 2), "1*10"), [0.1, 0.9], UNIT)
    with pytest.raises(ValueError):
        expand_orthotope(net, coarsest((2, 2)), [0.5, 0.5], UNIT, tol=0.0)


def _postcondition(net, P, o, domain, tol):
    for i in range(len(o.center)):
        for sign, e in ((1, o.upper[i]), (-1, o.lower[i])):
            x = o.center.copy()
            x[i] += sign * e
            assert exhibits(net, x, P)
            y = o.center.copy()
            y[i] += sign * (e + tol)
            assert y[i] > domain.upper[i] or y[i] < domain.lower[i] or not exhibits(net, y, P)


def test_extents_revalidate(net, data):
    tol = 1e-3
    for s in ("1*10", "**01", "1***", "*0**"):
        P = Nap((2, 2), s)
        o = expand_orthotope(net, P, pseudo_center(net, P, data.X), UNIT, tol)
        _postcondition(net, P, o, UNIT, tol)


def test_halving_tol(net, data):
    P = Nap((2, 2), "**01")
    c = pseudo_center(net, P, data.X)
    prev, prev_tol = None, None
    for tol in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        o = expand_orthotope(net, P, c, UNIT, tol)
        if prev is not None:
            assert np.all(o.lower >= prev.lower - prev_tol) and np.all(o.upper >= prev.upper - prev_tol)
        prev, prev_tol = o, tol


def test_ray_extent_non_monotone_probe():
    # membership holds on [0, 0.1] and [0.5, 1]; the probes stop the search in the first piece
    e = _ray_extent(lambda t: t <= 0.1 or t >= 0.5, 1.0, 1e-3)
    assert 0.099 <= e <= 0.1


def test_log_volume():
    o = Orthotope(np.zeros(3), np.full(3, 0.5), np.full(3, 0.5))
    assert log_volume(o) == 0.0
    o2 = Orthotope(np.zeros(3), np.array([1.0, 0.5, 0.5]), np.array([1.0, 0.5, 0.5]))
    assert log_volume(o2) == pytest.approx(math.log(2))
    flat = Orthotope(np.zeros(2), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert log_volume(flat) == -math.inf and flat.degenerate
    assert flat.to_json()["log_volume"] is None


def test_volume_ratio_order():
    assert volume_ratio_order(1.0, 1.0) == 0
    assert volume_ratio_order(math.log(1e5), 0.0) == 5
    with pytest.raises(ValueError):
        volume_ratio_order(-math.inf, 0.0)


def test_same_anchor_monotone(net, data):
    tol = 1e-4
    P = Nap((2, 2), "1*10")
    c = pseudo_center(net, P, data.X)
    small = expand_orthotope(net, P, c, UNIT, tol)
    for i in P.refined():
        Q = coarsen_neuron(P, i)
        big = expand_orthotope(net, Q, c, UNIT, tol)
        assert np.all(big.lower >= small.lower - tol) and np.all(big.upper >= small.upper - tol)
        assert volume_ratio_order(big.log_volume, small.log_volume) >= 0
