import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_inputs, all_weights, ref_clamp, ref_evaluate, ref_hebbian
from tpm_reconcile.tpm import (
    StructureError,
    TpmOutput,
    TpmParams,
    TreeParityMachine,
    clamp,
    evaluate,
    hebbian_update,
    weight_distance,
)


def machine(w, L):
    w = np.array(w)
    return TreeParityMachine(TpmParams(w.shape[0], w.shape[1], L), w)


def test_params_validation():
    assert TpmParams(2, 3, 4).weight_count == 6
    for bad in [(0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 101)]:
        with pytest.raises(StructureError):
            TpmParams(*bad)


def test_weights_out_of_range_rejected():
    with pytest.raises(StructureError):
        machine([[3, 0]], 2)
    with pytest.raises(StructureError):
        TreeParityMachine(TpmParams(2, 2, 1), np.zeros((2, 3)))


def test_all_zero_weights_give_minus_one():
    tpm = TreeParityMachine(TpmParams(3, 4, 2))
    out = evaluate(tpm, np.ones((3, 4), dtype=np.int8))
    assert out.sigma.tolist() == [-1, -1, -1]
    assert out.tau == -1


def test_single_unit_example():
    out = evaluate(machine([[2, -1]], 2), np.array([[1, 1]], dtype=np.int8))
    assert out.sigma.tolist() == [1]
    assert out.tau == 1


def test_evaluate_rejects_wrong_shape():
    with pytest.raises(StructureError):
        evaluate(TreeParityMachine(TpmParams(2, 2, 1)), np.ones((2, 3), dtype=np.int8))


@pytest.mark.parametrize("z,L,expected", [(5, 3, 3), (-7, 3, -3), (2, 3, 2), (3, 3, 3), (-3, 3, -3)])
def test_clamp(z, L, expected):
    assert clamp(z, L) == expected


def test_k1_update_moves_every_weight():
    tpm = machine([[0, 1, -2]], 2)
    x = np.array([[1, -1, -1]], dtype=np.int8)
    out = evaluate(tpm, x)  # z = 0 - 1 + 2 = 1 -> sigma = tau = 1
    new = hebbian_update(tpm, x, out)
    assert new.weights.tolist() == [[1, 0, -2]]  # -2 - 1 clamps to -2
    assert tpm.weights.tolist() == [[0, 1, -2]]  # original untouched


def test_theta_gates_rows():
    tpm = machine([[1, 1], [0, 0]], 2)
    x = np.array([[1, -1], [1, 1]], dtype=np.int8)
    out = TpmOutput(np.array([1, -1], dtype=np.int8), -1)
    new = hebbian_update(tpm, x, out)
    assert new.weights[0].tolist() == [1, 1]
    assert new.weights[1].tolist() == [-1, -1]


def test_exhaustive_2x2_l1():
    # every weight matrix and every input for K=2, N=2, L=1
    cases = 0
    for w in all_weights(2, 2, 1):
        tpm = machine(w, 1)
        for x in all_inputs(2, 2):
            sigma, tau = ref_evaluate(w, x)
            out = tpm.evaluate(np.array(x, dtype=np.int8))
            assert out.sigma.tolist() == sigma and out.tau == tau
            new = hebbian_update(tpm, np.array(x, dtype=np.int8), out)
            assert new.weights.tolist() == ref_hebbian(w, x, sigma, tau, 1)
            cases += 1
    assert cases == 3**4 * 2**4


def test_weight_distance():
    rng = np.random.default_rng(5)
    p = TpmParams(2, 3, 2)
    a = TreeParityMachine.random(p, rng)
    b = TreeParityMachine.random(p, rng)
    assert weight_distance(a, a.copy()) == (6, 6)
    full = TreeParityMachine(p, np.full((2, 3), 2))
    empty = TreeParityMachine(p, np.full((2, 3), -2))
    assert weight_distance(full, empty) == (0, 6)
    naive = sum(
        1 for k, n in itertools.product(range(2), range(3)) if a.weights[k][n] == b.weights[k][n]
    )
    assert weight_distance(a, b) == (naive, 6)
    with pytest.raises(StructureError):
        weight_distance(a, TreeParityMachine(TpmParams(3, 2, 2)))


shapes = st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5))


@st.composite
def machine_and_inputs(draw, steps=st.integers(1, 40)):
    K, N, L = draw(shapes)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    tpm = TreeParityMachine.random(TpmParams(K, N, L), rng)
    xs = [(rng.integers(0, 2, size=(K, N)) * 2 - 1).astype(np.int8) for _ in range(draw(steps))]
    return tpm, xs


@settings(max_examples=150, deadline=None)
@given(machine_and_inputs())
def test_weights_stay_bounded(case):
    tpm, xs = case
    L = tpm.params.L
    for x in xs:
        tpm.update(x, tpm.evaluate(x))
        assert tpm.weights.min() >= -L and tpm.weights.max() <= L


@settings(max_examples=150, deadline=None)
@given(machine_and_inputs())
def test_tau_is_product_and_evaluate_is_pure(case):
    tpm, xs = case
    before = tpm.weights.copy()
    for x in xs:
        out1, out2 = tpm.evaluate(x), tpm.evaluate(x)
        assert out1.tau in (-1, 1)
        assert out1.tau == int(np.prod(out1.sigma.astype(int)))
        assert out1.tau == out2.tau and np.array_equal(out1.sigma, out2.sigma)
    assert np.array_equal(before, tpm.weights)


@settings(max_examples=100, deadline=None)
@given(machine_and_inputs())
def test_synchronized_machines_stay_synchronized(case):
    a, xs = case
    b = a.copy()
    for x in xs:
        oa, ob = a.evaluate(x), b.evaluate(x)
        assert oa.tau == ob.tau
        a.update(x, oa)
        b.update(x, ob)
        assert a == b


@settings(max_examples=200, deadline=None)
@given(st.integers(-300, 300), st.integers(1, 100))
def test_clamp_matches_reference(z, L):
    assert clamp(z, L) == ref_clamp(z, L)


def test_large_n_local_field_does_not_overflow():
    N = 1000
    tpm = TreeParityMachine(TpmParams(1, N, 100), np.full((1, N), 100))
    out = tpm.evaluate(np.ones((1, N), dtype=np.int8))
    assert out.tau == 1
    out = tpm.evaluate(-np.ones((1, N), dtype=np.int8))
    assert out.tau == -1


def test_random_matches_reference_on_sampled_cases():
    rnd = random.Random(11)
    for _ in range(300):
        K, N, L = rnd.randint(1, 5), rnd.randint(1, 7), rnd.randint(1, 6)
        w = [[rnd.randint(-L, L) for _ in range(N)] for _ in range(K)]
        x = [[rnd.choice((-1, 1)) for _ in range(N)] for _ in range(K)]
        sigma, tau = ref_evaluate(w, x)
        out = machine(w, L).evaluate(np.array(x, dtype=np.int8))
        assert out.sigma.tolist() == sigma and out.tau == tau
        new = hebbian_update(machine(w, L), np.array(x, dtype=np.int8), out)
        assert new.weights.tolist() == ref_hebbian(w, x, sigma, tau, L)
