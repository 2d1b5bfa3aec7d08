import numpy as np
import pytest

from fairlens import analytics
from fairlens.errors import TooFewPoints
from fairlens.ingest import stub_embed


class TestPcaExamples:
    def test_points_on_a_line(self):
        direction = np.zeros(128)
        direction[17], direction[40] = 3.0, 4.0
        embs = {f"p{i}": direction * t for i, t in enumerate((-2.0, -0.5, 0.5, 2.0))}
        result = analytics.pca_project(embs)
        assert result.explained_ratios[0] == pytest.approx(1.0, abs=1e-8)
        assert result.explained_ratios[1] == pytest.approx(0.0, abs=1e-8)
        ys = [xy[1] for xy in result.projection.coords.values()]
        assert np.allclose(ys, 0.0, atol=1e-6)

    def test_two_points_at_plus_minus_v(self):
        v = np.zeros(128)
        v[3], v[7] = 2.0, 1.0
        result = analytics.pca_project({"p": v, "q": -v}, out_dims=1)
        coords = result.projection.coords
        norm = float(np.linalg.norm(v))
        assert sorted(xy[0] for xy in coords.values()) == pytest.approx([-norm, norm])

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            analytics.pca_project({"a": np.ones(128), "b": np.zeros(128) + 2})


class TestPcaAgainstDenseEigendecomposition:
    def setup_method(self):
        self.embs = {f"s{i:02d}": stub_embed(f"s{i}") for i in range(20)}
        keys = sorted(self.embs)
        x = np.stack([self.embs[k] for k in keys])
        centered = x - x.mean(axis=0)
        self.cov = centered.T @ centered / (len(keys) - 1)
        self.result = analytics.pca_project(self.embs)

    def test_top2_eigenpairs_match_brute_force(self):
        eigenvalues, eigenvectors = np.linalg.eigh(self.cov)
        order = np.argsort(eigenvalues)[::-1]
        total = float(np.trace(self.cov))
        for axis in range(2):
            expected_val = eigenvalues[order[axis]]
            expected_vec = eigenvectors[:, order[axis]]
            got_vec = self.result.components[axis]
            assert self.result.explained_ratios[axis] == pytest.approx(
                expected_val / total, abs=1e-6)
            # sign-free comparison
            align = abs(float(expected_vec @ got_vec))
            assert align == pytest.approx(1.0, abs=1e-6)

    def test_components_orthonormal(self):
        gram = self.result.components @ self.result.components.T
        assert np.allclose(gram, np.eye(2), atol=1e-8)

    def test_ratios_non_increasing_and_bounded(self):
        r = self.result.explained_ratios
        assert r[0] >= r[1] >= 0.0
        assert sum(r) <= 1.0 + 1e-8

    def test_sign_convention_first_nonzero_positive(self):
        for component in self.result.components:
            for entry in component:
                if abs(entry) > 1e-12:
                    assert entry > 0
                    break

    def test_deterministic(self):
        again = analytics.pca_project(self.embs)
        assert np.array_equal(again.components, self.result.components)
        assert again.projection.coords == self.result.projection.coords


def test_degenerate_covariance_zero_coordinates():
    same = np.ones(128)
    embs = {"a": same, "b": same.copy(), "c": same.copy()}
    result = analytics.pca_project(embs)
    assert result.explained_ratios == (0.0, 0.0)
    for xy in result.projection.coords.values():
        assert xy == (0.0, 0.0)
