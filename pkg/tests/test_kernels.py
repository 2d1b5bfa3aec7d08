import os
import subprocess
import sys

import numpy as np
import pytest

from fairlens import _kernels
from fairlens._kernels import pure

native = pytest.importorskip("fairlens._kernels._native")


@pytest.fixture()
def rng():
    return np.random.RandomState(8)


class TestBackendParity:
    def test_pairwise_sq_dists(self, rng):
        x = rng.randn(40, 16)
        a = pure.pairwise_sq_dists(x)
        b = native.pairwise_sq_dists(x)
        assert np.abs(a - b).max() <= 1e-10
        assert np.array_equal(b, b.T)
        assert np.all(np.diag(b) == 0.0)

    def test_tsne_kl_grad(self, rng):
        n = 30
        p = np.abs(rng.randn(n, n))
        p = (p + p.T) / 2
        np.fill_diagonal(p, 0.0)
        p /= p.sum()
        y = rng.randn(n, 2)
        kl_a, grad_a = pure.tsne_kl_grad(p, y)
        kl_b, grad_b = native.tsne_kl_grad(p, y)
        assert kl_a == pytest.approx(kl_b, rel=1e-12)
        assert np.abs(grad_a - grad_b).max() <= 1e-12

    def test_tsne_kl_grad_exaggerated_mass(self, rng):
        n = 20
        p = np.abs(rng.randn(n, n))
        p = (p + p.T) / 2
        np.fill_diagonal(p, 0.0)
        p = 12.0 * p / p.sum()
        y = rng.randn(n, 2)
        kl_a, grad_a = pure.tsne_kl_grad(p, y)
        kl_b, grad_b = native.tsne_kl_grad(p, y)
        assert kl_a == pytest.approx(kl_b, rel=1e-12)
        assert np.abs(grad_a - grad_b).max() <= 1e-11

    def test_convolve_region(self, rng):
        region = rng.randint(0, 256, size=(17, 23, 3)).astype(np.float64)
        kernel = np.array([0.25, 0.5, 0.25])
        a = pure.convolve_region(region, kernel)
        b = native.convolve_region(region, kernel)
        assert np.abs(a - b).max() <= 1e-10


def test_force_pure_backend_env():
    code = ("import fairlens._kernels as k; print(k.BACKEND_NAME)")
    env = dict(os.environ, FAIRLENS_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    assert out.stdout.strip() == "pure"
    env.pop("FAIRLENS_PURE")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    assert out.stdout.strip() == "native"


def test_available_backends_lists_both():
    assert set(_kernels.available_backends()) == {"pure", "native"}


def test_benchmark_smoke(capsys):
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "benchmarks"))
    try:
        import bench_kernels
    finally:
        sys.path.pop(0)
    bench_kernels.main(["--points", "64", "--dims", "16", "--image", "24",
                        "--tsne-iters", "3", "--repeats", "1"])
    out = capsys.readouterr().out
    assert "pairwise" in out and "native" in out and "pure" in out
