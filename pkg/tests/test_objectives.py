import numpy as np
import pytest

from marginlab.objectives import (MarginVector, SmoothingConfig, cross_entropy,
                                  entropy, lambda_star, lse_smoothed_margin,
                                  lse_smoothed_margin_t,
                                  max_margin_over_classes, negative_margin,
                                  nll_of_probs, zero_one_error)
from marginlab.tensor import Tensor


def test_cross_entropy_uniform_logits():
    assert cross_entropy(np.zeros(10), 3).item() == pytest.approx(np.log(10.0))


def test_cross_entropy_out_of_range():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros(3), 5)


def test_nll_of_explicit_probability_vectors():
    eps = 0.01
    z_b = np.array([0.5 - eps, 0.5 + eps] + [0.0] * 8)
    z_a = np.full(10, 0.1)
    z_a[0] += eps
    z_a[1] -= eps
    assert nll_of_probs(z_b, 0) == pytest.approx(-np.log(0.49))
    assert nll_of_probs(z_a, 0) == pytest.approx(-np.log(0.11))


def test_zero_one_error_cases():
    assert zero_one_error([0.2, 0.0, 0.0], 0) == 0
    s = 0.8 / np.sqrt(2.0)
    assert zero_one_error([1 - s, -s, s], 0) == 1
    assert zero_one_error([1.0, 1.0, 1.0], 0) == 0  # lowest-index tie-break


def test_negative_margin_values():
    assert negative_margin([0.2, 0.0, 0.0], 0, 2).item() == pytest.approx(-0.2)
    assert negative_margin([0.7, -0.3], 1, 1).item() == 0.0
    s = 0.8 / np.sqrt(2.0)
    assert negative_margin([1 - s, -s, s], 0, 2).item() == pytest.approx(
        0.8 * np.sqrt(2.0) - 1.0)


def test_max_margin_tie_breaks():
    assert max_margin_over_classes([0.2, 0.0, 0.0], 0) == (1, pytest.approx(-0.2))
    assert max_margin_over_classes([0.0, 1.0, 0.0], 0) == (1, pytest.approx(1.0))
    assert max_margin_over_classes([5.0, 5.0, 5.0], 1) == (0, pytest.approx(0.0))
    with pytest.raises(ValueError):
        max_margin_over_classes([1.0], 0)


def test_lse_single_wrong_class_is_exact():
    mv = MarginVector(np.array([0.0, -0.37]), 0)
    for mu in (0.5, 1.0, 50.0):
        assert lse_smoothed_margin(mv, SmoothingConfig(mu)) == pytest.approx(-0.37)


def test_lse_equal_margins():
    mv = MarginVector(np.array([0.0, 0.0, 0.0]), 0)
    assert lse_smoothed_margin(mv, SmoothingConfig(1.0)) == pytest.approx(np.log(2.0))
    mv2 = MarginVector(np.array([0.0, -0.2, -0.2]), 0)
    assert lse_smoothed_margin(mv2, SmoothingConfig(10.0)) == pytest.approx(
        -0.2 + np.log(2.0) / 10.0)


def test_lse_tensor_version_matches_scalar():
    rng = np.random.default_rng(0)
    for _ in range(20):
        logits = rng.normal(size=5)
        y = int(rng.integers(5))
        mv = MarginVector.from_logits(logits, y)
        cfg = SmoothingConfig(float(rng.uniform(0.5, 30.0)))
        assert lse_smoothed_margin_t(Tensor(logits), y, cfg).item() == \
            pytest.approx(lse_smoothed_margin(mv, cfg), abs=1e-12)


def test_lambda_star_cases():
    cfg = SmoothingConfig(1.0)
    w = lambda_star(MarginVector(np.array([0.0, 0.3, 0.3]), 0), cfg)
    assert np.allclose(w, [0.0, 0.5, 0.5])
    # strong temperature saturates onto the unique best class
    w = lambda_star(MarginVector(np.array([0.0, 0.1, 0.2]), 0),
                    SmoothingConfig(1000.0))
    assert w[2] >= 0.999
    w = lambda_star(MarginVector(np.array([0.0, -1.3]), 0), SmoothingConfig(7.0))
    assert np.allclose(w, [0.0, 1.0])
    with pytest.raises(ValueError):
        SmoothingConfig(0.0)


def test_margin_error_equivalence_probes():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        logits = rng.normal(size=int(rng.integers(2, 7)))
        y = int(rng.integers(logits.size))
        _, value = max_margin_over_classes(logits, y)
        err = zero_one_error(logits, y)
        if value > 0:
            assert err == 1
        elif value < 0:
            assert err == 0


def test_base2_cross_entropy_upper_bounds_error():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        logits = rng.normal(size=int(rng.integers(2, 11))) * rng.uniform(0.1, 5.0)
        y = int(rng.integers(logits.size))
        assert cross_entropy(logits, y, base=2).item() >= \
            zero_one_error(logits, y)


def test_lse_sandwich():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        logits = rng.normal(size=k)
        y = int(rng.integers(k))
        mv = MarginVector.from_logits(logits, y)
        top = max(np.delete(mv.values, y))
        for mu in (1.0, 10.0, 100.0):
            lse = lse_smoothed_margin(mv, SmoothingConfig(mu))
            assert top - 1e-12 <= lse <= top + np.log(k - 1) / mu + 1e-12


def test_lambda_star_duality_identity():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        mv = MarginVector.from_logits(rng.normal(size=k), int(rng.integers(k)))
        cfg = SmoothingConfig(float(rng.uniform(0.2, 50.0)))
        w = lambda_star(mv, cfg)
        assert w.min() >= 0 and w[mv.y] == 0.0
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        lhs = float(w @ mv.values) + entropy(w) / cfg.mu
        assert abs(lhs - lse_smoothed_margin(mv, cfg)) < 1e-9


def test_surrogate_vs_margin_ranking_example():
    # the surrogate prefers the non-adversarial vector; the margin does not
    eps, k, y = 0.01, 10, 0
    z_a = np.full(k, 1.0 / k)
    z_a[0] += eps
    z_a[1] -= eps
    z_b = np.zeros(k)
    z_b[0], z_b[1] = 0.5 - eps, 0.5 + eps
    assert nll_of_probs(z_a, y) > nll_of_probs(z_b, y)
    _, m_a = max_margin_over_classes(z_a, y)
    _, m_b = max_margin_over_classes(z_b, y)
    assert m_a < 0 < m_b
