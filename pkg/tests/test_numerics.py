import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingcft.numerics import (
    DimensionError,
    RngStream,
    SkewMatrix,
    brownian_increments,
    central_diff,
    pfaffian,
    pfaffian_oracle,
)


def random_skew(n, seed, complex_entries=False):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    if complex_entries:
        a = a + 1j * rng.normal(size=(n, n))
    return a - a.T


class TestPfaffian:
    def test_two_by_two(self):
        assert pfaffian([[0, 2], [-2, 0]]) == 2

    def test_four_by_four_closed_form(self):
        # upper entries (a..f) = (1..6): Pf = af - be + cd = 8
        a = np.array([[0, 1, 2, 3], [0, 0, 4, 5], [0, 0, 0, 6], [0, 0, 0, 0]], float)
        a = a - a.T
        assert pfaffian(a) == pytest.approx(8.0)
        assert pfaffian_oracle(a) == pytest.approx(8.0)

    def test_odd_dimension_is_zero(self):
        assert pfaffian(random_skew(3, 0)) == 0.0
        assert pfaffian_oracle(random_skew(5, 1)) == 0.0

    def test_empty_matrix(self):
        assert pfaffian(np.zeros((0, 0))) == 1.0

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError):
            pfaffian(np.eye(4))

    def test_oracle_dimension_guard(self):
        with pytest.raises(DimensionError):
            pfaffian_oracle(random_skew(14, 2))

    def test_rank_deficient_is_zero(self):
        rng = np.random.default_rng(3)
        u, v = rng.normal(size=8), rng.normal(size=8)
        a = np.outer(u, v) - np.outer(v, u)
        assert abs(pfaffian(a)) < 1e-12
        assert abs(pfaffian_oracle(a)) < 1e-12

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    @pytest.mark.parametrize("complex_entries", [False, True])
    def test_matches_matching_sum(self, n, complex_entries):
        a = random_skew(n, 11 * n, complex_entries)
        pf, oracle = pfaffian(a), pfaffian_oracle(a)
        assert abs(pf - oracle) <= 1e-9 * max(abs(oracle), 1.0)

    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=40, deadline=None)
    def test_square_is_determinant(self, half_n, seed):
        a = random_skew(2 * half_n, seed, complex_entries=seed % 2 == 0)
        pf = pfaffian(a)
        det = np.linalg.det(a)
        assert abs(pf * pf - det) <= 1e-8 * max(abs(det), 1e-12)

    @given(st.integers(min_value=2, max_value=4), st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=30, deadline=None)
    def test_row_column_swap_flips_sign(self, half_n, seed):
        a = random_skew(2 * half_n, seed)
        rng = np.random.default_rng(seed + 1)
        i, j = rng.choice(2 * half_n, size=2, replace=False)
        b = a.copy()
        b[[i, j], :] = b[[j, i], :]
        b[:, [i, j]] = b[:, [j, i]]
        assert pfaffian(b) == pytest.approx(-pfaffian(a), rel=1e-10, abs=1e-12)

    def test_skew_matrix_type_validates(self):
        m = SkewMatrix(random_skew(4, 5))
        assert m.n == 4
        with pytest.raises(ValueError):
            SkewMatrix(np.ones((3, 3)))


class TestCentralDiff:
    def test_first_derivative_square(self):
        assert central_diff(lambda z: z * z, 1.0, order=1) == pytest.approx(2.0, abs=1e-8)

    def test_second_derivative_reciprocal(self):
        # d^2/dz^2 (1/z) = 2/z^3 = 1/4 at z = 2
        assert central_diff(lambda z: 1.0 / z, 2.0, order=2) == pytest.approx(0.25, abs=1e-7)

    def test_zero_step_rejected(self):
        with pytest.raises(ValueError):
            central_diff(lambda z: z, 1.0, order=1, h=0.0)

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            central_diff(lambda z: z, 1.0, order=3)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            central_diff(lambda z: float("nan"), 1.0, order=1)

    def test_complex_argument(self):
        val = central_diff(lambda z: np.exp(z), 0.3 + 0.4j, order=1)
        assert val == pytest.approx(np.exp(0.3 + 0.4j), abs=1e-9)


class TestBrownianIncrements:
    def test_deterministic_per_key(self):
        s = RngStream(seed=1, stream_id=0)
        a = brownian_increments(s, 64, 0.01)
        b = brownian_increments(s, 64, 0.01)
        assert np.array_equal(a, b)

    def test_position_slices_the_same_sequence(self):
        s = RngStream(seed=9, stream_id=3)
        whole = brownian_increments(s, 50, 0.5)
        tail = brownian_increments(s.advanced(17), 33, 0.5)
        assert np.array_equal(tail, whole[17:])

    def test_moments_within_four_sigma(self):
        n, dt = 1_000_000, 0.01
        draws = brownian_increments(RngStream(seed=2, stream_id=0), n, dt)
        mean_se = np.sqrt(dt / n)
        var_se = dt * np.sqrt(2.0 / n)
        assert abs(draws.mean()) < 4 * mean_se
        assert abs(draws.var() - dt) < 4 * var_se

    def test_streams_are_uncorrelated(self):
        n = 100_000
        a = brownian_increments(RngStream(seed=1, stream_id=0), n, 1.0)
        b = brownian_increments(RngStream(seed=1, stream_id=1), n, 1.0)
        rho = np.corrcoef(a, b)[0, 1]
        assert abs(rho) < 0.01

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            brownian_increments(RngStream(1), 10, 0.0)

    @given(st.integers(min_value=0, max_value=2**63 - 1),
           st.integers(min_value=0, max_value=2**63 - 1))
    @settings(max_examples=20, deadline=None)
    def test_any_key_reproducible(self, seed, stream_id):
        s = RngStream(seed=seed, stream_id=stream_id)
        assert np.array_equal(brownian_increments(s, 8, 1.0),
                              brownian_increments(s, 8, 1.0))
