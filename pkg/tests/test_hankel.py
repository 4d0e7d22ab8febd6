from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hankelsysid.errors import InvalidDimensionError
from hankelsysid.hankel import (
    ImpulseResponse,
    antidiagonal_multiplicity,
    hankel_adjoint,
    hankel_map,
    numerical_rank,
    shaping_weights,
    weighted_hankel_adjoint,
    weighted_hankel_map,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def block_vectors(draw, max_n=6, max_mp=3):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_mp))
    p = draw(st.integers(1, max_mp))
    return draw(arrays(float, (2 * n - 1, m, p), elements=finite))


def brute_hankel(b):
    n = (b.shape[0] + 1) // 2
    m, p = b.shape[1:]
    M = np.zeros((n * m, n * p))
    for i in range(n):
        for l in range(n):
            M[i * m:(i + 1) * m, l * p:(l + 1) * p] = b[i + l]
    return M


def test_multiplicity_matches_enumeration(frozen):
    assert antidiagonal_multiplicity(4).tolist() == frozen["multiplicity_n4"]
    np.testing.assert_allclose(shaping_weights(4).k ** 2, frozen["multiplicity_n4"])


def test_adjoint_of_small_hankel(frozen):
    M = hankel_map([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(M, [[1, 2], [2, 3]])
    assert hankel_adjoint(M, 2).ravel().tolist() == frozen["adjoint_of_hankel_123"]


def test_geometric_ir_has_rank_one():
    assert numerical_rank(hankel_map(0.5 ** np.arange(5))) == 1


def test_hankel_norms_against_loop_oracle(frozen):
    for case in frozen["hankel_norm_cases"]:
        M = hankel_map(case["h"])
        assert np.linalg.norm(M, 2) == pytest.approx(case["norm"], rel=1e-8)
        assert np.linalg.norm(M) == pytest.approx(case["fro"], rel=1e-12)


@given(block_vectors())
def test_map_matches_brute_force(b):
    np.testing.assert_array_equal(hankel_map(b), brute_hankel(b))


@given(block_vectors(), st.integers(0, 2**32 - 1))
def test_adjoint_identity(b, seed):
    n, m, p = (b.shape[0] + 1) // 2, *b.shape[1:]
    M = np.random.default_rng(seed).standard_normal((n * m, n * p))
    lhs = np.sum(hankel_map(b) * M)
    rhs = np.sum(b * hankel_adjoint(M, n, m, p))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-8)


@given(block_vectors())
def test_weighted_map_is_isometry(b):
    k = shaping_weights((b.shape[0] + 1) // 2)
    assert np.linalg.norm(weighted_hankel_map(b, k)) == pytest.approx(np.linalg.norm(b), rel=1e-12, abs=1e-12)


@given(block_vectors())
def test_weighted_normal_operator_is_identity(b):
    n, m, p = (b.shape[0] + 1) // 2, *b.shape[1:]
    k = shaping_weights(n)
    back = weighted_hankel_adjoint(weighted_hankel_map(b, k), k, m, p)
    np.testing.assert_allclose(back, b, rtol=1e-12, atol=1e-9)


@given(st.integers(1, 40))
def test_normal_operator_is_multiplicity(n):
    e = np.eye(2 * n - 1)
    diag = [hankel_adjoint(hankel_map(e[j]), n)[j, 0, 0] for j in range(2 * n - 1)]
    np.testing.assert_array_equal(diag, antidiagonal_multiplicity(n))


def test_impulse_response_container():
    h = ImpulseResponse(np.arange(5.0))
    assert h.geometry == (3, 1, 1)
    assert (h + h).blocks[4, 0, 0] == 8.0
    mat = np.random.default_rng(0).standard_normal((5 * 2, 3))
    g = ImpulseResponse.from_matrix(mat, 3, p=2)
    np.testing.assert_array_equal(g.as_matrix(), mat)
    assert g.channel(1).geometry == (3, 1, 2)


@pytest.mark.parametrize("bad", [np.zeros(4), np.zeros((2, 2))])
def test_even_or_malformed_lengths_rejected(bad):
    with pytest.raises(InvalidDimensionError):
        hankel_map(bad)


def test_size_cap_and_shape_checks():
    with pytest.raises(InvalidDimensionError):
        shaping_weights(0)
    with pytest.raises(InvalidDimensionError):
        shaping_weights(10_000)
    with pytest.raises(InvalidDimensionError):
        hankel_adjoint(np.zeros((3, 2)), 2)
    with pytest.raises(InvalidDimensionError):
        weighted_hankel_map(np.zeros(5), np.ones(4))


def test_numerical_rank_accepts_spectrum():
    assert numerical_rank(np.array([1.0, 1e-3, 1e-12])) == 2
    assert numerical_rank(np.zeros((3, 3))) == 0
