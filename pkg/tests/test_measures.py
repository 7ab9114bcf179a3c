"""
Measures Tests
Description: Validation, sampling and file formats of clouds, weighted measures and Gaussians
"""

import numpy as np
import pytest

from moreau_w2.core.measures import (
    AffineMap,
    EmpiricalCloud,
    GaussianSpec,
    WeightedMeasure,
    as_weighted,
    lifted_inner,
    lifted_norm,
    load_cloud_csv,
    load_gaussian_json,
    load_measure,
    mean,
    monte_carlo_tolerance,
    push_forward,
    sample_gaussian,
    save_cloud_csv,
    second_moment,
    validate_cloud,
)
from moreau_w2.utils.errors import (
    ArtifactIOError,
    DimensionMismatch,
    EmptyInput,
    InvalidWeights,
    NonFiniteEntry,
    NonSPD,
)


class TestValidateCloud:
    """Construction and validation of uniform clouds"""

    def test_two_points_on_the_line(self):
        """A flat list is read as points in one dimension"""
        cloud = validate_cloud([0.0, 1.0])
        assert cloud.n == 2
        assert cloud.d == 1

    def test_empty_input(self):
        """No points is rejected"""
        with pytest.raises(EmptyInput):
            validate_cloud([])

    def test_nan_reports_position(self):
        """A NaN coordinate is reported with its row and column"""
        with pytest.raises(NonFiniteEntry) as exc:
            validate_cloud([[0.0, 1.0], [2.0, float("nan")]])
        assert exc.value.details == {"row": 1, "col": 1}

    def test_points_are_read_only(self):
        """Clouds are immutable values"""
        cloud = validate_cloud([[1.0, 2.0]])
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 5.0

    def test_source_array_is_copied(self):
        """Mutating the input array does not change the cloud"""
        raw = np.array([[1.0], [2.0]])
        cloud = EmpiricalCloud(points=raw)
        raw[0, 0] = 9.0
        assert cloud.points[0, 0] == 1.0


class TestWeightedMeasure:
    """Weights must form a probability vector"""

    def test_valid_weights(self):
        """Weights summing to one are accepted"""
        m = WeightedMeasure(points=[[0.0], [1.0]], weights=[0.25, 0.75])
        assert m.m == 2
        assert second_moment(m) == pytest.approx(0.75)

    def test_negative_weight(self):
        """Negative weights are rejected"""
        with pytest.raises(InvalidWeights):
            WeightedMeasure(points=[[0.0], [1.0]], weights=[-0.5, 1.5])

    def test_weights_not_summing_to_one(self):
        """Weights must sum to one within 1e-12"""
        with pytest.raises(InvalidWeights):
            WeightedMeasure(points=[[0.0], [1.0]], weights=[0.5, 0.6])

    def test_length_mismatch(self):
        """Weights and points must have the same length"""
        with pytest.raises(DimensionMismatch):
            WeightedMeasure(points=[[0.0], [1.0]], weights=[1.0])

    def test_as_weighted_sums_exactly(self):
        """Uniform weights of a cloud sum to one"""
        m = as_weighted(validate_cloud(np.arange(7.0)))
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(m.weights, 1.0 / 7)


class TestGaussianSpec:
    """Gaussian parameters"""

    def test_rejects_asymmetric_covariance(self):
        """Covariance must be symmetric"""
        with pytest.raises(NonSPD):
            GaussianSpec(mean=[0.0, 0.0], covariance=[[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_singular_covariance(self):
        """Covariance must be positive definite"""
        with pytest.raises(NonSPD):
            GaussianSpec(mean=[0.0, 0.0], covariance=[[1.0, 1.0], [1.0, 1.0]])

    def test_shape_mismatch(self):
        """Mean and covariance must agree in dimension"""
        with pytest.raises(DimensionMismatch):
            GaussianSpec(mean=[0.0], covariance=np.eye(2))

    def test_inline_json(self):
        """Gaussians parse from inline JSON"""
        g = load_gaussian_json('{"mean": [1, 2], "cov": [[2, 0], [0, 3]]}')
        assert g.d == 2
        assert np.allclose(g.covariance, np.diag([2.0, 3.0]))

    def test_json_without_cov(self):
        """Missing keys are an I/O format error"""
        with pytest.raises(ArtifactIOError):
            load_gaussian_json('{"mean": [0]}')


class TestSampling:
    """Seeded Gaussian sampling"""

    def test_same_seed_same_cloud(self):
        """Sampling is deterministic per seed"""
        g = GaussianSpec.isotropic(2)
        a = sample_gaussian(g, 50, seed=7)
        b = sample_gaussian(g, 50, seed=7)
        assert np.array_equal(a.points, b.points)

    def test_different_seed_different_cloud(self):
        """Different seeds give different samples"""
        g = GaussianSpec.isotropic(2)
        assert not np.array_equal(sample_gaussian(g, 20, 1).points, sample_gaussian(g, 20, 2).points)

    def test_sample_mean_within_tolerance(self):
        """Empirical mean is within three standard errors of the true mean"""
        g = GaussianSpec(mean=[1.0, -2.0], covariance=[[2.0, 0.3], [0.3, 1.0]])
        cloud = sample_gaussian(g, 4000, seed=3)
        assert np.max(np.abs(mean(cloud) - g.mean)) <= monte_carlo_tolerance(g, 4000)

    def test_paired_sampling_is_linear(self):
        """Same-seed samples of N(0,1) and N(0,4) differ by the factor 2"""
        a = sample_gaussian(GaussianSpec(mean=[0.0], covariance=[[1.0]]), 30, seed=5)
        b = sample_gaussian(GaussianSpec(mean=[0.0], covariance=[[4.0]]), 30, seed=5)
        assert np.allclose(b.points, 2.0 * a.points)

    def test_zero_points(self):
        """A sample needs at least one point"""
        with pytest.raises(EmptyInput):
            sample_gaussian(GaussianSpec.isotropic(1), 0, seed=0)


class TestLiftedGeometry:
    """Inner product on the uniform atom space"""

    def test_lifted_inner(self):
        """E[A.B] averages the atom-wise dot products"""
        a = np.array([[1.0, 0.0], [0.0, 2.0]])
        b = np.array([[3.0, 1.0], [1.0, 1.0]])
        assert lifted_inner(a, b) == pytest.approx((3.0 + 2.0) / 2)

    def test_lifted_norm(self):
        """Lifted norm is the root mean square length"""
        assert lifted_norm(np.array([[3.0], [4.0]])) == pytest.approx(np.sqrt(12.5))

    def test_shape_mismatch(self):
        """Variables must share a shape"""
        with pytest.raises(DimensionMismatch):
            lifted_inner(np.zeros((2, 1)), np.zeros((3, 1)))


class TestMoments:
    """Second moments and means"""

    def test_uniform_cloud(self):
        """{0, 2} has second moment 2"""
        assert second_moment(validate_cloud([0.0, 2.0])) == pytest.approx(2.0)

    def test_weighted_measure(self):
        """1 with weight 1/4 and 3 with weight 3/4 give 7"""
        m = WeightedMeasure(points=[[1.0], [3.0]], weights=[0.25, 0.75])
        assert second_moment(m) == pytest.approx(7.0)
        assert mean(m)[0] == pytest.approx(2.5)

    def test_translation_expansion(self):
        """M2 after translating by b is M2 + 2 mean . b + |b|^2"""
        rng = np.random.default_rng(19)
        for _ in range(10):
            cloud = EmpiricalCloud(points=rng.standard_normal((int(rng.integers(1, 30)), 3)))
            b = rng.standard_normal(3)
            moved = push_forward(cloud, AffineMap.translation(b), 1.0)
            expected = second_moment(cloud) + 2.0 * float(mean(cloud) @ b) + float(b @ b)
            assert second_moment(moved) == pytest.approx(expected, abs=1e-10)


class TestAffineMaps:
    """Affine maps and push-forwards"""

    def test_push_forward(self):
        """(Id + h f) moves each point by h f(x)"""
        cloud = validate_cloud([[1.0], [2.0]])
        f = AffineMap(matrix=[[2.0]], shift=[1.0])
        moved = push_forward(cloud, f, 0.5)
        assert np.allclose(moved.points[:, 0], [1.0 + 0.5 * 3.0, 2.0 + 0.5 * 5.0])

    def test_compose(self):
        """Composition applies the inner map first"""
        outer = AffineMap(matrix=[[2.0]], shift=[0.0])
        inner = AffineMap(matrix=[[1.0]], shift=[1.0])
        composed = outer.compose(inner)
        assert composed(np.array([[3.0]]))[0, 0] == pytest.approx(8.0)

    def test_translation_field_is_constant(self):
        """A translation field moves every point by the same vector"""
        cloud = validate_cloud([[0.0, 0.0], [1.0, 3.0]])
        moved = push_forward(cloud, AffineMap.translation([1.0, -1.0]), 2.0)
        assert np.allclose(moved.points - cloud.points, [[2.0, -2.0], [2.0, -2.0]])


class TestCloudFiles:
    """CSV reading and writing"""

    def test_save_and_load(self, tmp_path):
        """A saved cloud loads back with the same points"""
        cloud = validate_cloud([[0.5, 1.0], [2.0, -1.0]])
        path = tmp_path / "cloud.csv"
        save_cloud_csv(cloud, path)
        assert path.read_text().splitlines()[0] == "x0,x1"
        assert np.array_equal(load_cloud_csv(path).points, cloud.points)

    def test_weighted_file(self, tmp_path):
        """A trailing w column yields a weighted measure"""
        path = tmp_path / "weighted.csv"
        path.write_text("x0,w\n0.0,0.5\n1.0,0.5\n")
        measure = load_measure(path)
        assert isinstance(measure, WeightedMeasure)

    def test_bad_header(self, tmp_path):
        """Headers other than x0..x{d-1} are rejected"""
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ArtifactIOError):
            load_cloud_csv(path)

    def test_missing_file(self, tmp_path):
        """Unreadable files raise an I/O error"""
        with pytest.raises(ArtifactIOError):
            load_cloud_csv(tmp_path / "missing.csv")

    def test_header_only(self, tmp_path):
        """A file without rows is empty input"""
        path = tmp_path / "empty.csv"
        path.write_text("x0\n")
        with pytest.raises(EmptyInput):
            load_cloud_csv(path)
