import numpy as np
import pytest
from hypothesis import settings

from semreg.correspondence import Correspondence
from semreg.geometry import Pose, random_rotation

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, scale=1.0):
    M = rng.normal(size=(3, 3))
    return scale * (M @ M.T) + 1e-3 * np.eye(3)


def make_corr(src, dst, src_cov=None, dst_cov=None, label=1, origin="semantic"):
    src_cov = np.eye(3) * 0.01 if src_cov is None else src_cov
    dst_cov = src_cov if dst_cov is None else dst_cov
    return Correspondence(np.asarray(src, float), np.asarray(dst, float), np.asarray(src_cov, float), np.asarray(dst_cov, float), label, origin)


def elongated(direction, big=1.0, small=0.02):
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    return small * np.eye(3) + (big - small) * np.outer(d, d)


def crossings_fixture(R=None, t=None):
    """Two symmetric endpoints with differently oriented anisotropic Gaussians.

    Returns ``(true_pair, crossed_pair)``: the correct correspondences and the
    pair with swapped destinations.
    """
    R = np.eye(3) if R is None else R
    t = np.zeros(3) if t is None else t
    a1, a2 = np.array([-2.0, 0, 0]), np.array([2.0, 0, 0])
    C1, C2 = elongated([1, 1, 0]), elongated([0, 1, 1])
    b1, b2 = R @ a1 + t, R @ a2 + t
    D1, D2 = R @ C1 @ R.T, R @ C2 @ R.T
    true_pair = (make_corr(a1, b1, C1, D1), make_corr(a2, b2, C2, D2))
    crossed = (make_corr(a1, b2, C1, D2), make_corr(a2, b1, C2, D1))
    return true_pair, crossed


def gross_outlier_fixture(seed, n=20, n_out=10):
    """Exact inliers plus gross outliers drawn inside the inlier destination box."""
    rng = np.random.default_rng(seed)
    gt = Pose(random_rotation(rng), rng.uniform(-10, 10, 3))
    X = rng.uniform(-10, 10, (n, 3))
    Y = gt.apply(X)
    lo, hi = Y[: n - n_out].min(axis=0), Y[: n - n_out].max(axis=0)
    Y[n - n_out:] = rng.uniform(lo, hi, (n_out, 3))
    return X, Y, gt


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
            terminalreporter.write_line(ACCEPTANCE[key])
