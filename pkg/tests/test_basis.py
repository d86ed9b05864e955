"""Series bases: partition of unity, independent recursions, derivatives.

The analytic derivatives are checked against central finite differences, and
the spline values against a direct Cox-de Boor recursion written here, so the
library's own evaluation never certifies itself.
"""
import numpy as np
import pytest

from stayerfx import ConfigError, DataError, eval_basis, make_spec, spec_digest
from stayerfx.basis import BasisSpec, spline_block, univariate_design

RNG = np.random.default_rng(42)
REF = np.sort(RNG.standard_normal(500)) * 1.3 + 0.2


def _fd(f, x, eps=1e-6):
    return (f(x + eps) - f(x - eps)) / (2 * eps)


# ---------------------------------------------------------------------------
# spline block


def _de_boor_value(knots, degree, j, x):
    """B_{j,degree}(x) by the raw recursion, half-open on the last interval."""
    t = knots
    if degree == 0:
        last = x == t[-1] and t[j] < t[j + 1] and t[j + 1] == t[-1]
        return 1.0 if (t[j] <= x < t[j + 1]) or last else 0.0
    left = 0.0
    if t[j + degree] > t[j]:
        left = (x - t[j]) / (t[j + degree] - t[j]) * _de_boor_value(t, degree - 1, j, x)
    right = 0.0
    if t[j + degree + 1] > t[j + 1]:
        right = (t[j + degree + 1] - x) / (t[j + degree + 1] - t[j + 1]) * \
            _de_boor_value(t, degree - 1, j + 1, x)
    return left + right


def test_spline_matches_de_boor_recursion():
    spec = make_spec("bspline", REF)
    lo, hi = spec.domain
    xs = np.linspace(lo, hi, 161)
    vals, _, _ = spline_block(spec, xs)
    expect = np.array([[_de_boor_value(spec.knots, 3, j, x) for j in range(5)] for x in xs])
    np.testing.assert_allclose(vals, expect, atol=1e-10)


def test_spline_partition_of_unity():
    spec = make_spec("bspline", REF)
    lo, hi = spec.domain
    xs = np.linspace(lo, hi, 1000)
    vals, ders, clamped = spline_block(spec, xs)
    assert np.max(np.abs(vals.sum(axis=1) - 1.0)) <= 1e-12
    assert np.max(np.abs(ders.sum(axis=1))) <= 1e-9
    assert not clamped.any()
    assert np.all(vals >= -1e-15)


def test_spline_clamps_and_flags_outside_domain():
    spec = make_spec("bspline", REF)
    lo, hi = spec.domain
    xs = np.array([lo - 1.0, lo, 0.5 * (lo + hi), hi, hi + 2.0])
    vals, _, clamped = spline_block(spec, xs)
    assert clamped.tolist() == [True, False, False, False, True]
    np.testing.assert_array_equal(vals[0], vals[1])
    np.testing.assert_array_equal(vals[4], vals[3])


def test_spline_derivative_by_finite_difference():
    spec = make_spec("bspline", REF)
    lo, hi = spec.domain
    xs = np.linspace(lo + 1e-3, hi - 1e-3, 200)
    _, ders, _ = spline_block(spec, xs)
    fd = _fd(lambda z: spline_block(spec, z)[0], xs)
    scale = np.maximum(np.abs(ders), 1.0)
    assert np.max(np.abs(ders - fd) / scale) <= 1e-6


def test_spline_knot_vector_layout():
    spec = make_spec("bspline", REF)
    lo, hi = float(REF.min()), float(REF.max())
    med = float(np.median(REF))
    assert spec.knots == (lo,) * 4 + (med,) + (hi,) * 4
    assert spec.domain == (lo, hi)
    assert spec.block_size == 4  # 5 spline columns, constant absorbed


# ---------------------------------------------------------------------------
# polynomials


def test_orthogonal_polynomial_gram_is_identity():
    for degree in (1, 2, 3, 4):
        spec = make_spec("polynomial", REF, degree=degree)
        vander = np.vander(REF, degree + 1, increasing=True)
        B = vander @ spec.coef_map
        gram = (B.T @ B) / REF.size
        assert np.max(np.abs(gram - np.eye(degree + 1))) <= 1e-8


def test_orthogonal_polynomial_first_column_is_constant_one():
    spec = make_spec("polynomial", REF, degree=3)
    vander = np.vander(REF, 4, increasing=True)
    B = vander @ spec.coef_map
    np.testing.assert_allclose(B[:, 0], np.ones(REF.size), atol=1e-10)


def test_raw_polynomial_additive_evaluates_powers_exactly():
    spec = make_spec("polynomial", REF, degree=1, orthogonalize=False)
    ev = eval_basis(spec, [0.3, -1.2], [2.0, 0.5])
    np.testing.assert_array_equal(ev.values[0], [1.0, 0.3, 2.0])
    np.testing.assert_array_equal(ev.values[1], [1.0, -1.2, 0.5])
    np.testing.assert_array_equal(ev.d_x1[0], [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(ev.d_x2[0], [0.0, 0.0, 1.0])


def test_raw_polynomial_tensor_evaluates_products_exactly():
    spec = make_spec("polynomial", REF, degree=1, structure="tensor", orthogonalize=False)
    a, b = 0.7, -0.4
    ev = eval_basis(spec, a, b)
    # row-major over (1, x1) x (1, x2)
    np.testing.assert_allclose(ev.values[0], [1.0, b, a, a * b])
    np.testing.assert_allclose(ev.d_x1[0], [0.0, 0.0, 1.0, b])
    np.testing.assert_allclose(ev.d_x2[0], [0.0, 1.0, 0.0, a])


# ---------------------------------------------------------------------------
# bivariate assembly


@pytest.mark.parametrize("kind", ["bspline", "polynomial"])
@pytest.mark.parametrize("structure", ["additive", "tensor"])
def test_partial_derivatives_by_finite_difference(kind, structure):
    spec = make_spec(kind, REF, structure=structure, degree=3)
    lo, hi = spec.domain
    pts = RNG.uniform(lo + 1e-2, hi - 1e-2, size=(40, 2))
    ev = eval_basis(spec, pts[:, 0], pts[:, 1])
    fd1 = _fd(lambda z: eval_basis(spec, z, pts[:, 1]).values, pts[:, 0])
    fd2 = _fd(lambda z: eval_basis(spec, pts[:, 0], z).values, pts[:, 1])
    scale = np.maximum(np.abs(ev.d_x1), 1.0)
    assert np.max(np.abs(ev.d_x1 - fd1) / scale) <= 1e-6
    scale = np.maximum(np.abs(ev.d_x2), 1.0)
    assert np.max(np.abs(ev.d_x2 - fd2) / scale) <= 1e-6


@pytest.mark.parametrize("kind", ["bspline", "polynomial"])
def test_additive_cross_derivatives_are_exactly_zero(kind):
    spec = make_spec(kind, REF, structure="additive", degree=3)
    xs = np.linspace(*spec.domain, 23)
    ev = eval_basis(spec, xs, xs[::-1])
    kb = spec.block_size
    # layout: [intercept | block(x1) | block(x2)]
    assert np.all(ev.d_x1[:, 1 + kb:] == 0.0)
    assert np.all(ev.d_x2[:, 1:1 + kb] == 0.0)
    assert np.all(ev.d_x1[:, 0] == 0.0) and np.all(ev.d_x2[:, 0] == 0.0)


@pytest.mark.parametrize("kind,structure,expected", [
    ("bspline", "additive", 1 + 4 + 4),
    ("bspline", "tensor", 25),
    ("polynomial", "additive", 1 + 2 + 2),
    ("polynomial", "tensor", 9),
])
def test_column_counts(kind, structure, expected):
    spec = make_spec(kind, REF, structure=structure, degree=2)
    assert spec.n_columns == expected
    ev = eval_basis(spec, [0.0, 0.1], [0.0, 0.2])
    assert ev.values.shape == (2, expected)
    assert ev.d_x1.shape == (2, expected)


def test_additive_design_has_full_rank():
    for kind in ("bspline", "polynomial"):
        spec = make_spec(kind, REF, structure="additive", degree=2)
        x1 = RNG.uniform(*spec.domain, 300)
        x2 = RNG.uniform(*spec.domain, 300)
        ev = eval_basis(spec, x1, x2)
        assert np.linalg.matrix_rank(ev.values) == spec.n_columns


def test_no_intercept_variants():
    spec = make_spec("polynomial", REF, degree=2, intercept=False)
    assert spec.n_columns == 4
    ev = eval_basis(spec, [0.5], [0.5])
    assert ev.values.shape == (1, 4)
    tensor = make_spec("polynomial", REF, degree=1, structure="tensor",
                       intercept=False, orthogonalize=False)
    assert tensor.n_columns == 3
    ev = eval_basis(tensor, [2.0], [3.0])
    np.testing.assert_allclose(ev.values[0], [3.0, 2.0, 6.0])


def test_mismatched_argument_shapes_rejected():
    spec = make_spec("polynomial", REF)
    with pytest.raises(ConfigError):
        eval_basis(spec, [0.0, 1.0], [0.0])


def test_univariate_design_layout():
    spec = make_spec("polynomial", REF, degree=1, orthogonalize=False)
    vals, ders = univariate_design(spec, [0.0, 2.0])
    np.testing.assert_array_equal(vals, [[1.0, 0.0], [1.0, 2.0]])
    np.testing.assert_array_equal(ders, [[0.0, 1.0], [0.0, 1.0]])


def test_scalar_arguments_accepted():
    spec = make_spec("bspline", REF)
    ev = eval_basis(spec, 0.1, 0.1)
    assert ev.values.shape == (1, spec.n_columns)


# ---------------------------------------------------------------------------
# spec construction, validation, serialization


def test_make_spec_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        make_spec("fourier", REF)
    with pytest.raises(ConfigError):
        make_spec("bspline", REF, structure="radial")
    with pytest.raises(DataError):
        make_spec("bspline", np.full(10, 3.0))
    with pytest.raises(DataError):
        make_spec("polynomial", np.array([1.0]))
    with pytest.raises(ConfigError):
        make_spec("polynomial", REF, degree=0)
    # 3 distinct values cannot support a cubic
    with pytest.raises(DataError):
        make_spec("polynomial", np.array([0.0, 1.0, 2.0, 1.0]), degree=3)
    # median equal to an endpoint leaves no strictly interior knot
    with pytest.raises(DataError):
        make_spec("bspline", np.array([0.0, 0.0, 0.0, 1.0]))
    with pytest.raises(DataError):
        make_spec("bspline", np.array([0.0, np.nan, 1.0]))


def test_spec_json_round_trip_preserves_evaluation():
    for kind, structure in (("bspline", "tensor"), ("polynomial", "additive")):
        spec = make_spec(kind, REF, structure=structure, degree=3)
        clone = BasisSpec.from_json(spec.to_json())
        assert spec_digest(clone) == spec_digest(spec)
        xs = np.linspace(*spec.domain, 17)
        np.testing.assert_array_equal(
            eval_basis(clone, xs, xs).values, eval_basis(spec, xs, xs).values
        )


def test_spec_digest_distinguishes_specs():
    a = make_spec("polynomial", REF, degree=2)
    b = make_spec("polynomial", REF, degree=3)
    assert spec_digest(a) != spec_digest(b)
    assert spec_digest(a) == spec_digest(make_spec("polynomial", REF, degree=2))


def test_clamped_flag_propagates_through_eval():
    spec = make_spec("bspline", REF)
    lo, hi = spec.domain
    ev = eval_basis(spec, [lo - 1.0, 0.0], [0.0, 0.0])
    assert ev.clamped.tolist() == [True, False]
    ev = eval_basis(spec, [0.0, 0.0], [0.0, hi + 1.0])
    assert ev.clamped.tolist() == [False, True]
