import warnings

import numpy as np
import pytest
from scipy.linalg import block_diag
from scipy.stats import unitary_group

from lforge.algebra_decomp import (
    _seed_checked, algebra_member_basis, finest_block_diagonalization, off_block_residual,
    oracle_generated_algebra, smallest_observable_algebra,
)
from lforge.errors import ProbabilisticFailure, StructureInconsistent
from lforge.numerics import SeededSampler, mutual_span_residual, span_residual

from conftest import I2, X, Y, Z, kron


def _random_algebra_elements(rng, factors, d0, count=3):
    n = d0 + sum(k * d for k, d in factors)
    W = unitary_group.rvs(n, random_state=rng)
    ops = []
    for _ in range(count):
        blocks = [np.zeros((d0, d0))]
        for k, d in factors:
            A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            blocks.append(np.kron(np.eye(k), A + A.conj().T))
        ops.append(W @ block_diag(*blocks) @ W.conj().T)
    return ops


def test_block_examples():
    assert finest_block_diagonalization([I2], 1).block_dims == [0, 1, 1]
    bd = finest_block_diagonalization([Z], 1)
    assert bd.block_dims == [0, 1, 1]
    assert np.allclose(np.abs(bd.Q), np.abs(bd.Q).round())          # a permutation up to phases
    assert finest_block_diagonalization([np.eye(4), kron(Z, Z)], 1).block_dims == [0, 1, 1, 1, 1]


def test_algebra_examples():
    a, _ = smallest_observable_algebra([Z], 1)
    assert a.d0 == 0 and sorted(a.factors) == [(1, 1), (1, 1)]
    a, _ = smallest_observable_algebra([X, Z], 1)
    assert a.factors == [(1, 2)]
    a, _ = smallest_observable_algebra([np.eye(4), kron(Z, Z)], 1)
    assert sorted(a.factors) == [(2, 1), (2, 1)]


def test_bell_products_commute():
    # sigma_i (x) sigma_i pairwise commute, so the generated algebra is abelian
    ops = [np.eye(4)] + [kron(P, P) for P in (X, Y, Z)]
    a, _ = smallest_observable_algebra(ops, 3)
    assert sorted(a.factors) == [(1, 1)] * 4
    assert len(oracle_generated_algebra(ops)) == 4
    # odd strings anticommute and give 1_4 (x) M_2
    ops = [np.eye(8)] + [kron(P, P, P) for P in (X, Y, Z)]
    a, _ = smallest_observable_algebra(ops, 3)
    assert a.factors == [(4, 2)]


def test_oracle_examples():
    assert len(oracle_generated_algebra([Z])) == 2
    assert len(oracle_generated_algebra([X, Z])) == 4
    assert len(oracle_generated_algebra([np.eye(4), kron(X, X), kron(Z, Z)])) == 4


def test_member_basis():
    a, _ = smallest_observable_algebra([X, Z], 2)
    basis = algebra_member_basis(a)
    assert len(basis) == 4
    a, _ = smallest_observable_algebra([np.eye(8)] + [kron(P, P, P) for P in (X, Y, Z)], 2)
    basis = algebra_member_basis(a)
    assert len(basis) == 4
    assert all(np.isclose(np.trace(b @ b.conj().T).real, 4.0) for b in basis)


@pytest.mark.parametrize("factors,d0", [
    ([(1, 2), (2, 1)], 0),
    ([(2, 2)], 1),
    ([(1, 3), (1, 1)], 1),
    ([(3, 1), (1, 2), (1, 1)], 0),
    ([(2, 2), (1, 2)], 0),
    ([(1, 1), (1, 1), (1, 1), (1, 1)], 2),
])
def test_random_algebras_match_oracle(factors, d0):
    rng = np.random.default_rng(len(factors) * 10 + d0)
    ops = _random_algebra_elements(rng, factors, d0)
    a, trace = smallest_observable_algebra(ops, 11)
    assert a.d0 == d0
    assert sorted(a.factors) == sorted(factors)
    assert np.allclose(a.U.conj().T @ a.U, np.eye(a.n), atol=1e-10)
    basis = algebra_member_basis(a)
    oracle = oracle_generated_algebra(ops)
    assert len(basis) == len(oracle) == a.dimension
    assert mutual_span_residual(basis, oracle) < 1e-8
    assert span_residual(ops, basis) < 1e-9
    # closed under products
    prods = [p @ q for p in basis for q in basis]
    assert span_residual([P for P in prods if np.linalg.norm(P) > 1e-12], basis) < 1e-8
    for Pm in [P for comp in trace.P for P in comp.values()]:
        assert np.allclose(Pm.conj().T @ Pm, np.eye(Pm.shape[1]), atol=1e-8)
    assert all(c > 0 for comp in trace.normalizers for c in comp.values())


@pytest.mark.parametrize("factors,d0", [([(1, 2), (2, 1)], 1), ([(2, 3)], 0), ([(1, 1), (3, 1)], 0)])
def test_block_decomposition_validity(factors, d0):
    rng = np.random.default_rng(7)
    ops = _random_algebra_elements(rng, factors, d0)
    bd = finest_block_diagonalization(ops, 5)
    assert bd.d0 == d0
    assert sorted(bd.block_dims[1:]) == sorted(d for k, d in factors for _ in range(k))
    assert np.allclose(bd.Q.conj().T @ bd.Q, np.eye(bd.Q.shape[0]), atol=1e-10)
    assert off_block_residual(ops, bd) < 1e-9
    assert sum(bd.block_dims) == bd.Q.shape[0]


def test_seed_stability():
    rng = np.random.default_rng(3)
    ops = _random_algebra_elements(rng, [(2, 2), (1, 1)], 1)
    sigs = {smallest_observable_algebra(ops, s)[0].signature() for s in range(1, 6)}
    assert len(sigs) == 1


def test_scaled_inputs_keep_structure():
    rng = np.random.default_rng(4)
    ops = _random_algebra_elements(rng, [(1, 2), (1, 1)], 0)
    base = smallest_observable_algebra(ops, 1)[0].signature()
    for c in (1e-6, 1e6):
        assert smallest_observable_algebra([c * O for O in ops], 1)[0].signature() == base


def test_non_hermitian_input_rejected():
    with pytest.raises(ValueError):
        smallest_observable_algebra([np.array([[0, 1], [0, 0]])], 1)
    with pytest.raises(ValueError):
        finest_block_diagonalization([np.array([[0, 1], [0, 0]])], 1)


def test_majority_vote_on_disagreement():
    answers = iter([("a", 1), ("b", 2), ("a", 3)])
    with pytest.warns(ProbabilisticFailure):
        out = _seed_checked(lambda s: next(answers), SeededSampler(0), 2)
    assert out == ("a", 1)
    answers = iter([("a", 1), ("b", 2), ("c", 3)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ProbabilisticFailure)
        with pytest.raises(StructureInconsistent):
            _seed_checked(lambda s: next(answers), SeededSampler(0), 2)


def test_agreeing_probes_do_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error", ProbabilisticFailure)
        smallest_observable_algebra([X, Z], 9)
