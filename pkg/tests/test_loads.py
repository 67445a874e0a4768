import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from traction_gap.loads import (LoadSystem, check_equilibrated, classify_compatibility, classify_T,
                                compatibility_value, eval_load_work, inf_F_status, load_norm2, load_vector,
                                resultant_force, resultant_matrix)
from traction_gap.mesh import AffineField, BoxDomain3


def _sampled_sign(T, rng, samples=10_000):
    """Oracle: largest sampled c(W) = <W^2, sym T> over unit skew W."""
    S = 0.5 * (T + T.T)
    if T.shape[0] == 2:
        return -np.trace(S)  # every unit W has W^2 = -I
    a = rng.standard_normal((samples, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    # W^2 = a (x) a - I for unit a
    return float(np.max(np.einsum("si,ij,sj->s", a, S, a) - np.trace(S)))


def test_normal_traction_resultant(mesh8):
    T = resultant_matrix(LoadSystem.normal(2.0), mesh8)
    np.testing.assert_allclose(T, 2.0 * np.eye(2), atol=1e-14)
    assert check_equilibrated(LoadSystem.normal(2.0), mesh8).equilibrated


@pytest.mark.parametrize("f0, kind", [(1.0, "strict"), (0.0, "weak"), (-1.0, "violated")])
def test_normal_traction_classes(mesh8, f0, kind):
    assert classify_compatibility(LoadSystem.normal(f0), mesh8).kind == kind


def test_weak_body_load(mesh8):
    cls = classify_compatibility(LoadSystem.linear_body([[1.0, 0.0], [0.0, -1.0]]), mesh8)
    assert cls.kind == "weak"
    assert cls.kernel[0].to_list() == [1.0]


def test_load_work_on_linear_fields(mesh8, rng):
    ls = LoadSystem(traction_kind="normal_scaled", traction_coefficient=0.7,
                    body_kind="linear", body_matrix=[[1.0, 2.0], [2.0, -0.5]])
    T = resultant_matrix(ls, mesh8)
    for _ in range(5):
        M = rng.standard_normal((2, 2))
        assert eval_load_work(ls, mesh8, AffineField(M)) == pytest.approx(np.sum(M * T), rel=1e-12)


def test_linear_body_load_is_exact(mesh8):
    # int g . v with g = (x1, 0), v = (x1, 0): int x1^2 = 1/12
    ls = LoadSystem.linear_body([[1.0, 0.0], [0.0, 0.0]])
    v = AffineField([[1.0, 0.0], [0.0, 0.0]])
    assert eval_load_work(ls, mesh8, v) == pytest.approx(1 / 12, rel=1e-13)
    assert load_norm2(ls, mesh8) == pytest.approx(1 / 12, rel=1e-13)


def test_per_edge_and_per_cell_loads(mesh8):
    f = np.zeros((len(mesh8.boundary_edges), 2))
    f[mesh8.edge_tags == 1] = [1.0, 0.0]
    f[mesh8.edge_tags == 3] = [-1.0, 0.0]
    ls = LoadSystem(traction_kind="per_edge", traction_values=f)
    assert check_equilibrated(ls, mesh8).equilibrated
    np.testing.assert_allclose(resultant_matrix(ls, mesh8), np.diag([1.0, 0.0]), atol=1e-14)
    g = np.tile([0.0, 1.0], (mesh8.n_triangles, 1))
    unbalanced = LoadSystem(body_kind="per_cell", body_values=g)
    eq = check_equilibrated(unbalanced, mesh8)
    assert not eq.equilibrated
    np.testing.assert_allclose(resultant_force(unbalanced, mesh8), [0.0, 1.0], atol=1e-14)
    with pytest.raises(ValueError, match="equilibrated"):
        classify_compatibility(unbalanced, mesh8)


def test_shape_errors(mesh8):
    with pytest.raises(ValueError):
        load_vector(LoadSystem(traction_kind="per_edge", traction_values=np.zeros((3, 2))), mesh8)
    with pytest.raises(ValueError):
        LoadSystem(traction_kind="sideways")
    with pytest.raises(ValueError):
        LoadSystem(body_kind="linear")


def test_scaled_load():
    ls = LoadSystem(traction_kind="normal_scaled", traction_coefficient=1.0, body_kind="linear",
                    body_matrix=np.eye(2))
    s = ls.scaled(-2.0)
    assert s.traction_coefficient == -2.0
    np.testing.assert_array_equal(s.body_matrix, -2.0 * np.eye(2))
    assert LoadSystem.zero().is_zero and LoadSystem.normal(0.0).is_zero


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (2, 2), elements=st.floats(-3, 3)))
def test_classifier_matches_sampling_oracle_2d(T):
    rng = np.random.default_rng(0)
    cls = classify_T(T)
    top = _sampled_sign(T, rng)
    if cls.kind == "violated":
        assert top > 0
    elif cls.kind == "strict":
        assert top < 0
    else:
        assert abs(top) <= 1e-9 * (1 + np.abs(T).max())


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
def test_classifier_matches_sampling_oracle_3d(T):
    cls = classify_T(T)
    scale = np.abs(T).max()
    if abs(cls.margin) < 0.05 * scale:
        return  # near the boundary sampling cannot decide
    top = _sampled_sign(T, np.random.default_rng(1))
    assert (cls.kind == "violated") == (top > 0)
    if cls.kind == "violated":
        assert compatibility_value(T, cls.witness) > 0
        assert cls.witness.norm == pytest.approx(1.0)


@pytest.mark.parametrize("diag, kind", [((-1.0, 1.0, 2.0), "weak"), ((-1.0, 1.5, 2.0), "strict"),
                                         ((-1.0, 0.5, 2.0), "violated")])
def test_3d_pair_sums(diag, kind):
    # c(a) = -sum_i a_i^2 (Tr T - t_i) in the eigenbasis
    cls = classify_T(np.diag(diag))
    assert cls.kind == kind
    if kind == "weak":
        np.testing.assert_allclose(np.abs(cls.kernel[0].values), [0, 0, 1])
    if kind == "violated":
        np.testing.assert_allclose(np.abs(cls.witness.values), [0, 0, 1])


def test_box_tension_is_strict():
    box = BoxDomain3()
    assert classify_compatibility(LoadSystem.normal(1.0), box).kind == "strict"
    assert classify_compatibility(LoadSystem.normal(-1.0), box).kind == "violated"


def test_inf_status():
    strict = classify_T(np.eye(2))
    assert inf_F_status(strict, -0.25).kind == "finite"
    assert inf_F_status(strict, -0.25).value == -0.25
    bad = classify_T(-np.eye(2))
    st_ = inf_F_status(bad, math.nan)
    assert st_.kind == "minus_infinity" and st_.value == -math.inf and st_.witness is not None


def test_witness_drives_load_work_up(mesh8):
    # along the witness, L(t W^2 x / 2) grows linearly: F -> -inf
    ls = LoadSystem.normal(-1.0)
    cls = classify_compatibility(ls, mesh8)
    W2 = cls.witness.square()
    works = [eval_load_work(ls, mesh8, AffineField(0.5 * t * W2)) for t in (1.0, 10.0, 100.0)]
    assert works[0] > 0 and works[2] == pytest.approx(100 * works[0])
