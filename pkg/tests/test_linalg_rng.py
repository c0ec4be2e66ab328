import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm as scipy_expm

from ctmc_waiting import linalg
from ctmc_waiting.errors import NumericError
from ctmc_waiting.rng import Seed, as_seed


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.01, 30))
def test_expm_matches_scipy(seed, size, scale):
    a = np.random.default_rng(seed).normal(size=(size, size)) * scale / size
    ref = scipy_expm(a)
    np.testing.assert_allclose(linalg.expm(a), ref, rtol=1e-11, atol=1e-12 * max(1.0, np.abs(ref).max()))


def test_expm_zero_is_identity():
    np.testing.assert_array_equal(linalg.expm(np.zeros((3, 3))), np.eye(3))


@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_perron_root_matches_dense(seed, size):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0, 1, (size, size)) * (rng.random((size, size)) < 0.8)
    m += np.roll(np.eye(size), 1, axis=1)  # irreducible
    np.fill_diagonal(m, -rng.uniform(0, 3, size))
    lam, vec = linalg.perron_root(m, shift=4.0)
    assert lam == pytest.approx(np.linalg.eigvals(m).real.max(), abs=1e-11)
    assert (vec > 0).all()
    np.testing.assert_allclose(m @ vec, lam * vec, atol=1e-10)


def test_singular_solve():
    with pytest.raises(NumericError):
        linalg.solve_dense(np.zeros((2, 2)), np.ones(2))


class TestSeed:
    def test_identical_triples_identical_draws(self):
        a = Seed(7, 3, "X").generator().random(5)
        b = Seed(7, 3, "X").generator().random(5)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("other", [Seed(8, 3, "X"), Seed(7, 4, "X"), Seed(7, 3, "Y")])
    def test_distinct_triples_differ(self, other):
        assert not np.array_equal(Seed(7, 3, "X").generator().random(5), other.generator().random(5))

    def test_high_bits_matter(self):
        lo = Seed(1).generator().random(3)
        hi = Seed(1 + (1 << 40)).generator().random(3)
        assert not np.array_equal(lo, hi)

    def test_child_and_replica(self):
        s = Seed(1, 2, "a")
        assert s.child("b") == Seed(1, 2, "a/b")
        assert s.replica(5) == Seed(1, 5, "a")
        assert as_seed(9) == Seed(9)

    @pytest.mark.parametrize("bad", [dict(seed=-1), dict(seed=1 << 64), dict(seed=0, index=-1)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Seed(**bad)
