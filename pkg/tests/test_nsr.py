import math

import numpy as np
import pytest

from bwnas.errors import DegenerateTargetError, ShapeError
from bwnas.nsr import channel_variances, nsr_loss


def nsr_reference(target, pred):
    """Direct loop evaluation with exact summation."""
    m, c_n, l_n = target.shape
    total = 0.0
    for c in range(c_n):
        vals = [target[i, c, j] for i in range(m) for j in range(l_n)]
        mean = math.fsum(vals) / len(vals)
        var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
        err = math.fsum((target[i, c, j] - pred[i, c, j]) ** 2
                        for i in range(m) for j in range(l_n))
        total += err / var
    return total / c_n


def test_identity(rng):
    y = rng.standard_normal((4, 3, 5))
    assert nsr_loss(y, y.copy()) <= 1e-12


def test_hand_example():
    assert nsr_loss(np.array([[[1.0, -1.0]]]), np.zeros((1, 1, 2))) == pytest.approx(2.0, abs=1e-12)


def test_scale_invariance(rng):
    y, p = rng.standard_normal((2, 4, 3, 6))
    a, b = nsr_loss(y, p), nsr_loss(3.7 * y, 3.7 * p)
    assert abs(a - b) / a <= 1e-9


def test_permutation_equivariance(rng):
    y, p = rng.standard_normal((2, 3, 5, 4))
    perm = rng.permutation(5)
    assert nsr_loss(y[:, perm], p[:, perm]) == pytest.approx(nsr_loss(y, p), rel=1e-14)


def test_reference_agreement(rng):
    for _ in range(50):
        shape = tuple(rng.integers(1, 5, size=3))
        y = rng.standard_normal(shape) + rng.standard_normal()
        p = y + 0.3 * rng.standard_normal(shape)
        if shape[0] * shape[2] == 1:
            continue
        assert abs(nsr_loss(y, p) - nsr_reference(y, p)) <= 1e-12


def test_nonnegative_zero_iff_equal(rng):
    y = rng.standard_normal((3, 2, 4))
    p = y.copy()
    p[1, 1, 2] += 1e-6
    assert nsr_loss(y, p) > 0


def test_errors():
    with pytest.raises(ShapeError):
        nsr_loss(np.zeros((1, 2, 3)), np.zeros((1, 2, 4)))
    y = np.ones((2, 2, 3))
    y[:, 0] = np.arange(6).reshape(2, 3)
    with pytest.raises(DegenerateTargetError) as info:
        nsr_loss(y, y)
    assert info.value.channel == 1


def test_population_variance():
    y = np.array([[[1.0, 3.0]], [[5.0, 7.0]]])
    assert channel_variances(y)[0] == pytest.approx(np.var([1, 3, 5, 7]))
