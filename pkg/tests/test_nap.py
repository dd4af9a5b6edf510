import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from napspec import fixture_path
from napspec.nap import (
    ONE,
    STAR,
    ZERO,
    Nap,
    SignatureMismatch,
    State,
    abstract_binary,
    abstract_statistical,
    binary_patterns,
    class_nap,
    coarsen_neuron,
    coarsest,
    conflicts,
    exhibits,
    exhibits_batch,
    load_nap,
    meet,
    refine_neuron,
    save_nap,
    size,
    subsumes,
)
from napspec.network import Dataset, Network, NeuronId

from . import oracles
from .conftest import random_net

SIG = (16, 16)
naps = st.lists(st.integers(0, 2), min_size=32, max_size=32).map(lambda s: Nap(SIG, s))


def small_net():
    # one hidden layer of two neurons: z = (x, -x)
    return Network([[[1.0], [-1.0]], [[1.0, 1.0]]], [[0.0, 0.0], [0.0]])


def test_state_order():
    assert State.STAR.abstracts(State.ZERO) and State.STAR.abstracts(State.ONE)
    assert not State.ZERO.abstracts(State.ONE) and not State.ONE.abstracts(State.ZERO)
    assert all(s.abstracts(s) for s in State)


def test_parse_and_print():
    P = Nap((2, 2), "1*0*")
    assert str(P) == "1*0*"
    assert P.states.tolist() == [ONE, STAR, ZERO, STAR]
    with pytest.raises(ValueError):
        Nap((2, 2), "1*0")
    with pytest.raises(ValueError):
        Nap((2, 2), "1*0x")


def test_nap_file_roundtrip(tmp_path):
    P = Nap((3, 1), "10*1")
    save_nap(P, tmp_path / "p.json")
    assert load_nap(tmp_path / "p.json") == P
    assert (tmp_path / "p.json").read_text() == '{"signature": [3, 1], "states": "10*1"}\n'


def test_coarsest():
    P = coarsest((2, 2))
    assert str(P) == "****" and size(P) == 0


@given(naps)
def test_coarsest_subsumes_everything(P):
    assert subsumes(coarsest(SIG), P)


def test_displayed_chain():
    chain = ["****", "10**", "101*", "1010"]
    for i in range(len(chain)):
        for j in range(i, len(chain)):
            assert subsumes(Nap((4,), chain[i]), Nap((4,), chain[j]))


def test_incomparable_pair():
    a, b = Nap((4,), "10**"), Nap((4,), "11**")
    assert not subsumes(a, b) and not subsumes(b, a)


def test_signature_mismatch():
    with pytest.raises(SignatureMismatch):
        subsumes(Nap((2, 2), "****"), Nap((4,), "****"))


def test_size():
    assert size(Nap((4,), "10**")) == 2
    assert size(Nap((2, 2), "1010")) == 4


def test_coarsen_refine():
    P = Nap((2,), "10")
    Q = coarsen_neuron(P, 0)
    assert str(Q) == "*0" and Q.size == 1
    assert refine_neuron(Q, 0, P) == P
    assert refine_neuron(Q, NeuronId(1, 0), P) == P
    ref = Nap((2,), "*0")
    assert refine_neuron(Q, 0, ref) is Q
    with pytest.raises(ValueError):
        coarsen_neuron(P, 5)


def test_abstract_binary_hand():
    assert str(abstract_binary(small_net(), [2.0])) == "10"


def test_abstract_binary_zero_net():
    net = Network([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)])
    assert str(abstract_binary(net, [0.4, 0.1])) == "000"


def test_binary_patterns_match_grid_oracle(net, grid):
    X, pre, _ = grid
    pats = binary_patterns(net, X)
    assert np.array_equal(pats, (pre > 0).astype(np.int8))


def _votes(active_count, n):
    # 1-D net with neuron z = x: x=1 active, x=0 inactive
    X = np.array([[1.0]] * active_count + [[0.0]] * (n - active_count))
    net = Network([[[1.0]], [[1.0]]], [[0.0], [0.0]])
    return str(abstract_statistical(net, X, 0.99))


def test_statistical_votes():
    assert _votes(99, 100) == "1"
    assert _votes(50, 100) == "*"
    assert _votes(1, 100) == "0"
    assert _votes(98, 100) == "*"


def test_statistical_single_row_equals_binary():
    rng = np.random.default_rng(0)
    for _ in range(50):
        net = random_net(rng, [3, 4, 3, 2])
        x = rng.normal(size=3)
        assert abstract_statistical(net, x[None, :], 1.0) == abstract_binary(net, x)
        assert abstract_statistical(net, x[None, :], 0.6) == abstract_binary(net, x)


def test_delta_range():
    net = small_net()
    for bad in (0.5, 0.3, 1.01):
        with pytest.raises(ValueError):
            abstract_statistical(net, [[1.0]], bad)
    with pytest.raises(ValueError):
        abstract_statistical(net, np.zeros((0, 1)), 0.9)


def test_class_nap_disagreeing_rows():
    data = Dataset([[1.0], [-1.0], [3.0]], [0, 0, 1])
    assert str(class_nap(small_net(), data, 0, 1.0)) == "**"
    assert str(class_nap(small_net(), data, 1, 1.0)) == "10"


def test_class_nap_missing_class(data, net):
    with pytest.raises(ValueError, match="class 7"):
        class_nap(net, data, 7)


def test_fixture_class_naps_match_counting_script(net, data):
    layers = oracles.read_layers(fixture_path("fixture_2x2.json"))
    for c, expected in ((0, "1*10"), (1, "**01")):
        rows = data.X[data.labels == c]
        pres = [sum(oracles.loop_forward(layers, x)[0], []) for x in rows]
        assert oracles.count_class_nap(pres, 0.99) == expected
        assert str(class_nap(net, data, c, 0.99)) == expected


def test_committed_nap_file(net, data):
    assert load_nap(fixture_path("fixture_2x2_nap_class0.json")) == class_nap(net, data, 0, 0.99)


def test_exhibits():
    net = small_net()
    assert exhibits(net, [5.0], coarsest((2,)))
    assert exhibits(net, [2.0], abstract_binary(net, [2.0]))
    assert not exhibits(net, [0.0], Nap((2,), "1*"))  # z = 0 is not active
    assert exhibits(net, [0.0], Nap((2,), "00"))


def test_exhibits_batch_matches_grid(net, grid):
    X, pre, _ = grid
    for s in ("1*10", "**01", "0***", "*1*1"):
        assert np.array_equal(exhibits_batch(net, X, Nap((2, 2), s)), oracles.grid_exhibits(pre, s))


def test_conflicts_and_meet():
    a, b = Nap((4,), "1*0*"), Nap((4,), "*10*")
    assert conflicts(a, b) == []
    assert str(meet(a, b)) == "110*"
    assert conflicts(Nap((4,), "1***"), Nap((4,), "0***")) == [0]
    with pytest.raises(ValueError):
        meet(Nap((4,), "1***"), Nap((4,), "0***"))


@settings(max_examples=300)
@given(naps)
def test_reflexive(P):
    assert subsumes(P, P)


@settings(max_examples=300)
@given(naps, naps)
def test_antisymmetric(a, b):
    if subsumes(a, b) and subsumes(b, a):
        assert a == b


def _coarsen_random(P, rng, p=0.3):
    s = P.states.copy()
    s[rng.random(len(s)) < p] = STAR
    return P.with_states(s)


@settings(max_examples=300)
@given(naps, st.integers(0, 2**32 - 1))
def test_transitive_and_size_monotone(P, seed):
    rng = np.random.default_rng(seed)
    Q = _coarsen_random(P, rng)
    R = _coarsen_random(Q, rng)
    assert subsumes(Q, P) and subsumes(R, Q) and subsumes(R, P)
    assert R.size <= Q.size <= P.size


@settings(max_examples=200)
@given(naps, st.integers(0, 31))
def test_coarsen_then_refine_identity(P, i):
    assert refine_neuron(coarsen_neuron(P, i), i, P) == P


def test_region_antitonicity():
    rng = np.random.default_rng(5)
    net = random_net(rng, [3, 6, 6, 2])
    X = rng.normal(size=(1000, 3))
    pats = binary_patterns(net, X)
    for j in range(1000):
        P = Nap(net.signature, pats[j] if j % 2 else pats[rng.integers(1000)])
        P = _coarsen_random(P, rng, 0.5)
        Q = _coarsen_random(P, rng, 0.5)
        if exhibits(net, X[j], P):
            assert exhibits(net, X[j], Q)
