import numpy as np
import pytest

from skillex import whitening
from skillex.errors import AlignmentError, DataError


def sample_covariance(x):
    """Independent 1/N covariance oracle."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    return centered.T @ centered / len(x)


class TestFit:
    def test_small_fixture_covariance(self):
        # {(1,0), (-1,0), (0,2), (0,-2)}: mean 0, covariance diag(0.5, 2).
        x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]])
        np.testing.assert_allclose(sample_covariance(x), np.diag([0.5, 2.0]))
        model = whitening.fit(x)
        whitened = whitening.apply(model, x)
        np.testing.assert_allclose(sample_covariance(whitened), np.eye(2),
                                   atol=1e-9)
        np.testing.assert_allclose(whitened.mean(axis=0), 0.0, atol=1e-12)

    def test_standard_normal_sample(self, rng):
        x = rng.standard_normal((1000, 16))
        model = whitening.fit(x)
        whitened = whitening.apply(model, x)
        assert np.abs(sample_covariance(whitened) - np.eye(16)).max() < 1e-6
        assert np.abs(whitened.mean(axis=0)).max() < 1e-9
        assert model.clamp_count == 0

    def test_too_few_rows(self):
        with pytest.raises(DataError, match="at least 2"):
            whitening.fit(np.ones((1, 4)))

    def test_nan_rejected(self):
        x = np.ones((3, 2))
        x[1, 1] = np.nan
        with pytest.raises(DataError):
            whitening.fit(x)

    def test_rank_deficient_clamps(self):
        # All points on the line y = x: one zero eigenvalue gets clamped.
        x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        model = whitening.fit(x)
        assert model.clamp_count == 1
        assert np.isfinite(model.transform).all()

    def test_identical_points_stay_finite(self):
        x = np.full((5, 3), 2.5)
        model = whitening.fit(x)
        assert np.isfinite(model.transform).all()
        whitened = whitening.apply(model, x)
        np.testing.assert_allclose(whitened, 0.0)

    def test_deterministic_refit(self, rng):
        x = rng.normal(size=(200, 8))
        a = whitening.fit(x)
        b = whitening.fit(x)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.transform, b.transform)
        assert a.clamp_count == b.clamp_count


class TestApply:
    def test_affine_difference_property(self, rng):
        model = whitening.fit(rng.normal(size=(100, 6)))
        for _ in range(25):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            lhs = whitening.apply(model, a) - whitening.apply(model, b)
            rhs = (a - b) @ model.transform
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_vector_matches_matrix_row(self, rng):
        # Single-vector and batched application agree to float64 precision
        # (the underlying matmuls may differ in the last bit).
        model = whitening.fit(rng.normal(size=(50, 4)))
        batch = rng.normal(size=(10, 4))
        whitened = whitening.apply(model, batch)
        for i in range(10):
            np.testing.assert_allclose(whitening.apply(model, batch[i]),
                                       whitened[i], rtol=1e-12, atol=1e-14)

    def test_width_mismatch(self, rng):
        model = whitening.fit(rng.normal(size=(50, 4)))
        with pytest.raises(AlignmentError, match="width 3.*width 4"):
            whitening.apply(model, np.zeros(3))

    def test_output_is_float64(self, rng):
        model = whitening.fit(rng.normal(size=(50, 4)).astype(np.float32))
        out = whitening.apply(model, np.zeros(4, dtype=np.float32))
        assert out.dtype == np.float64
