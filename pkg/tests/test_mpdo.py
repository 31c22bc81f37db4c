import json

import numpy as np
import pytest

from lforge.errors import DimensionError
from lforge.mpdo import (
    BoundarySpace, MpdoSpec, build_model, contract_closed, contract_pairs, contract_window,
    dumps_spec, full_chain_span_dim, loads_spec, model_domain_wall, model_ising_thermal,
    model_pauli_strings, model_tfim_trotter, spec_from_dict, spec_to_dict, target_dims,
)

from conftest import (
    I2, X, Z, domain_wall_parity_parts, domain_wall_state, ising_thermal, kron, pauli_span, proj_residual, span_rank,
    tfim_coupling_outer, tfim_field_outer,
)


def _normalized(A):
    return A / np.trace(A)


def test_trivial_product_window():
    T = (np.eye(3) / 3).reshape(3, 3, 1, 1)
    spec = MpdoSpec(T)
    for k in (1, 2, 3):
        w = contract_window(spec, BoundarySpace.canonical(1), k)
        assert w.span_dim == 1
        assert np.allclose(w.ops[0], np.eye(3**k) / 3**k)


@pytest.mark.parametrize("J", [(3,), (1, 2), (1, 2, 3), (1,), (2, 3)])
@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_pauli_span_matches_closed_form(J, L):
    spec, b = model_pauli_strings(J)
    assert spec.s == len(J) + 1
    ops = contract_pairs(spec, b, L)
    ref = pauli_span(J, L)
    assert span_rank(ops) == len(J) + 1
    assert proj_residual(ops, ref) < 1e-9 and proj_residual(ref, ops) < 1e-9


def test_pauli_closed_state():
    spec, _ = model_pauli_strings((1, 3), alphas=(0.1, -0.05))
    rho = contract_closed(spec, 3)
    ref = kron(I2, I2, I2) / 8 + 0.1 * kron(X, X, X) - 0.05 * kron(Z, Z, Z)
    assert np.allclose(rho, ref)


@pytest.mark.parametrize("L", [2, 3, 4])
def test_ising_closed_state(L):
    spec, b = model_ising_thermal(1.0)
    assert spec.s == 2
    rho = contract_closed(spec, L)
    ref = ising_thermal(1.0, L)
    assert np.linalg.norm(_normalized(rho) - ref) < 1e-10 * np.linalg.norm(ref)
    # the full chain span contains the physical state
    assert proj_residual([ref], contract_pairs(spec, b, L)) < 1e-10


def test_ising_high_temperature():
    spec, _ = model_ising_thermal(1e-8)
    assert np.allclose(_normalized(contract_closed(spec, 3)), np.eye(8) / 8, atol=1e-9)


def test_ising_window_span():
    spec, b = model_ising_thermal(1.0)
    assert contract_window(spec, b, 2).span_dim == 4


@pytest.mark.parametrize("h", [0.0, 0.5, 2.0])
@pytest.mark.parametrize("L", [3, 4])
def test_tfim_orders_match_dense_products(h, L):
    spec, b = model_tfim_trotter(1.0, h, "field_outer")
    assert spec.s == 2
    ref = tfim_field_outer(1.0, h, L)
    assert np.linalg.norm(_normalized(contract_closed(spec, L)) - _normalized(ref)) < 1e-10
    spec, b = model_tfim_trotter(1.0, h, "coupling_outer")
    assert spec.s == 4
    ref = tfim_coupling_outer(1.0, h, L)
    assert np.linalg.norm(_normalized(contract_closed(spec, L)) - _normalized(ref)) < 1e-10


def test_tfim_zero_field_is_ising():
    for order in ("field_outer", "coupling_outer"):
        spec, _ = model_tfim_trotter(1.0, 0.0, order)
        assert np.allclose(_normalized(contract_closed(spec, 3)), ising_thermal(1.0, 3), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 1 / 3, 0.5, 1.0])
@pytest.mark.parametrize("L", [2, 3, 4])
def test_domain_wall_matches_recursion(p, L):
    spec, b = model_domain_wall(p)
    rho = contract_closed(spec, L)
    assert np.allclose(rho, domain_wall_state(p, L), atol=1e-10)


def test_domain_wall_ghz_and_span():
    spec, b = model_domain_wall(0.0)
    ghz = np.zeros(8)
    ghz[[0, 7]] = 1 / np.sqrt(2)
    assert np.allclose(contract_closed(spec, 3), np.outer(ghz, ghz), atol=1e-14)
    spec, b = model_domain_wall(0.5)
    assert full_chain_span_dim(spec, b, 3) == 8
    # the span is generated by the four psi choices and both wall parities
    refs = [part for a in (0, 1) for c in (0, 1) for part in domain_wall_parity_parts(0.5, 3, a, c)]
    assert span_rank(refs) == 8
    ops = contract_pairs(spec, b, 3)
    assert proj_residual(ops, refs) < 1e-10 and proj_residual(refs, ops) < 1e-10


def test_domain_wall_rejects_bad_p():
    with pytest.raises(ValueError):
        model_domain_wall(1.5)


def test_gram_and_dense_span_agree():
    for spec, b in [model_ising_thermal(1.0), model_domain_wall(0.3), model_pauli_strings((1, 2, 3))]:
        for L in (3, 4, 5):
            assert full_chain_span_dim(spec, b, L, method="dense") == full_chain_span_dim(spec, b, L, method="gram")
    spec, b = model_ising_thermal(1.0)
    assert target_dims(spec, b, [3, 12]) == {3: 4, 12: 4}


def test_span_monotone_under_boundary_restriction():
    spec, b = model_domain_wall(0.5)
    full = contract_window(spec, b, 3).span_dim
    sub = BoundarySpace(b.left[:5], b.right[:2])
    assert contract_window(spec, sub, 3).span_dim <= full


def test_boundary_validation():
    with pytest.raises(ValueError):
        BoundarySpace([], [np.ones(2)])
    with pytest.raises(ValueError):
        BoundarySpace([np.zeros(2)], [np.ones(2)])
    with pytest.raises(ValueError):
        BoundarySpace([np.ones(2)], [np.ones(2)], pairing=[(0, 3)])
    spec, _ = model_ising_thermal(1.0)
    with pytest.raises(DimensionError):
        contract_window(spec, BoundarySpace([np.ones(3)], [np.ones(3)]), 2)
    with pytest.raises(DimensionError):
        MpdoSpec(np.zeros((2, 3, 2, 2)))
    explicit = BoundarySpace(list(np.eye(2)), list(np.eye(2)), pairing=[(0, 0), (1, 1)])
    assert contract_window(spec, explicit, 2).ops.shape[0] == 2


@pytest.mark.parametrize("name", ["pauli", "ising", "tfim", "domain-wall"])
def test_json_round_trip(name):
    spec, b = build_model(name, J=(1, 2, 3), p=0.25, h=0.5, order="coupling_outer")
    text = dumps_spec(spec, b)
    spec2, b2 = loads_spec(text)
    assert np.array_equal(spec.tensor, spec2.tensor)
    assert all(np.array_equal(u, v) for u, v in zip(b.left + b.right, b2.left + b2.right))
    assert dumps_spec(spec2, b2) == text
    obj = json.loads(text)
    assert obj["format_version"] == 1 and obj["s"] == spec.s


def test_json_errors():
    spec, b = model_ising_thermal(1.0)
    obj = spec_to_dict(spec, b)
    bad = dict(obj, s=3)
    with pytest.raises(ValueError):
        spec_from_dict(bad)
    with pytest.raises(ValueError):
        spec_from_dict({k: v for k, v in obj.items() if k != "tensor"})
    with pytest.raises(ValueError):
        spec_from_dict(dict(obj, format_version=2))


def test_build_model_unknown():
    with pytest.raises(ValueError, match="available"):
        build_model("heisenberg")
