import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_gram, brute_kernel
from gsvma.kernels import (
    ANOVA, FAMILIES, LINEAR, POLYNOMIAL, RBF, ColumnTerms, DimensionMismatch, KernelError,
    KernelSpec, cross_gram, gram, kernel_eval,
)


@pytest.mark.parametrize("spec, x, y, expected", [
    (KernelSpec(LINEAR), (3, 4), (3, 4), 25.0),
    (KernelSpec(RBF, gamma=0.37), (1.5, -2, 7), (1.5, -2, 7), 1.0),
    (KernelSpec(ANOVA, sigma=1, degree=1), (0.2, 0.4, 0.9, 1.1), (0.2, 0.4, 0.9, 1.1), 4.0),
    (KernelSpec(POLYNOMIAL, degree=2), (1, 2), (3, 4), 144.0),
    (KernelSpec(ANOVA, sigma=1, degree=2), (0, 0), (1, 1), 2 * math.exp(-2)),
    (KernelSpec(RBF, gamma=1), (0, 0), (1, 0), math.exp(-1)),
])
def test_kernel_examples(spec, x, y, expected):
    assert kernel_eval(spec, x, y) == pytest.approx(expected, rel=1e-12)


def test_anova_example_digits():
    assert kernel_eval(KernelSpec(ANOVA, sigma=1, degree=2), (0, 0), (1, 1)) == pytest.approx(0.270671, abs=1e-6)
    assert kernel_eval(KernelSpec(RBF, gamma=1), (0, 0), (1, 0)) == pytest.approx(0.367879, abs=1e-6)


def test_default_gamma_is_inverse_width():
    x, y = np.zeros(4), np.ones(4)
    assert kernel_eval(KernelSpec(RBF), x, y) == pytest.approx(math.exp(-1.0))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        kernel_eval(KernelSpec(LINEAR), (1, 2), (1, 2, 3))
    with pytest.raises(DimensionMismatch):
        cross_gram(KernelSpec(LINEAR), np.ones((2, 3)), np.ones((2, 4)))


@pytest.mark.parametrize("kwargs", [
    dict(family="sigmoid"), dict(degree=0), dict(degree=1.5), dict(gamma=0.0), dict(sigma=-1.0),
])
def test_invalid_specs(kwargs):
    with pytest.raises(KernelError):
        KernelSpec(**kwargs)


def test_spec_round_trip():
    for spec in (KernelSpec(LINEAR), KernelSpec(POLYNOMIAL, degree=3),
                 KernelSpec(RBF, gamma=0.25), KernelSpec(ANOVA, degree=2, sigma=0.5)):
        assert KernelSpec.from_dict(spec.to_dict()) == spec


def test_gram_single_row_and_identity():
    x = np.array([[0.3, 0.7]])
    spec = KernelSpec(ANOVA, degree=2, sigma=0.5)
    np.testing.assert_allclose(gram(spec, x), [[kernel_eval(spec, x[0], x[0])]])
    np.testing.assert_array_equal(gram(KernelSpec(LINEAR), np.eye(5)), np.eye(5))


def random_spec(rng, family):
    if family == POLYNOMIAL:
        return KernelSpec(family, degree=int(rng.integers(1, 5)))
    if family == RBF:
        return KernelSpec(family, gamma=float(rng.uniform(0.05, 3)))
    if family == ANOVA:
        return KernelSpec(family, degree=int(rng.integers(1, 4)), sigma=float(rng.uniform(0.05, 3)))
    return KernelSpec(family)


def _params(spec):
    return {k: v for k, v in spec.to_dict().items() if k != "family"}


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_matches_brute_force(family):
    rng = np.random.default_rng(11)
    for _ in range(10):
        n, d = int(rng.integers(1, 12)), int(rng.integers(1, 8))
        X = rng.uniform(-1, 1, (n, d))
        spec = random_spec(rng, family).resolve(d)
        np.testing.assert_allclose(gram(spec, X), brute_gram(family, _params(spec), X),
                                   rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_exactly_symmetric(family):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(15, 6))
    G = gram(random_spec(rng, family), X)
    np.testing.assert_array_equal(G, G.T)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(lambda d: st.tuples(arrays(float, d, elements=finite),
                                                     arrays(float, d, elements=finite))),
       st.sampled_from(FAMILIES), st.integers(1, 3), st.floats(0.01, 5))
def test_kernel_properties(xy, family, degree, width):
    x, y = xy
    spec = KernelSpec(family, degree=degree, gamma=width, sigma=width)
    k = kernel_eval(spec, x, y)
    assert k == kernel_eval(spec, y, x)
    assert k == pytest.approx(brute_kernel(family, _params(spec), x, y), rel=1e-9, abs=1e-12)
    if family == RBF:
        assert 0 <= k <= 1
        if np.array_equal(x, y):
            assert k == 1
    if family == ANOVA:
        assert 0 <= k <= x.size
        assert kernel_eval(spec, x, x) == x.size


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_psd(family):
    rng = np.random.default_rng(99)
    for _ in range(100):
        n, d = int(rng.integers(1, 21)), int(rng.integers(1, 9))
        G = gram(random_spec(rng, family), rng.uniform(-1, 1, (n, d)))
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * max(1.0, np.abs(G).max())


def test_anova_degree_folds_into_sigma():
    rng = np.random.default_rng(5)
    for _ in range(100):
        X = rng.uniform(-1, 1, (int(rng.integers(2, 15)), int(rng.integers(1, 8))))
        sigma, d = float(rng.uniform(0.05, 3)), int(rng.integers(1, 5))
        a = gram(KernelSpec(ANOVA, degree=d, sigma=sigma), X)
        b = gram(KernelSpec(ANOVA, degree=1, sigma=d * sigma), X)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_column_terms_bit_identical(family):
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, (25, 9))
    spec = random_spec(rng, family)
    terms = ColumnTerms(spec, X)
    for _ in range(20):
        mask = rng.random(9) < 0.5
        if not mask.any():
            mask[0] = True
        np.testing.assert_array_equal(terms.gram(mask), gram(spec, X[:, mask]))


def test_column_terms_rejects_bad_masks():
    terms = ColumnTerms(KernelSpec(ANOVA), np.ones((3, 4)))
    with pytest.raises(KernelError):
        terms.gram(np.zeros(4, dtype=bool))
    with pytest.raises(DimensionMismatch):
        terms.gram(np.ones(5, dtype=bool))
