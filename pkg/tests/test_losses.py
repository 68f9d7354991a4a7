import math

import numpy as np
import pytest

from face6d import (
    CorrespondenceMatrix,
    LossWeights,
    UVPositionMap,
    corr_l1,
    correspondence_loss,
    seg_cross_entropy,
    total_loss,
    uv_weighted_l1,
)
from face6d.errors import DimensionMismatch, NotAProbabilityRow


def random_map(rng, h=6, w=7, coverage=0.5):
    weight = (rng.random((h, w)) < coverage).astype(np.float64)
    data = rng.normal(size=(h, w, 3)) * weight[:, :, None]
    return UVPositionMap(data, weight)


def random_sparse(rng, m=6, n=40):
    rows = []
    for _ in range(m):
        k = int(rng.integers(1, 4))
        idx = rng.choice(n, size=k, replace=False)
        rows.append((idx, rng.dirichlet(np.ones(k))))
    return CorrespondenceMatrix.from_rows(rows, n)


def random_simplex(rng, m, n):
    return rng.dirichlet(np.ones(n), size=m)


def interior_simplex(rng, m, n):
    # keeps every entry >= 1/(2n): away from the boundary, where finite
    # differences of the KL term lose accuracy to curvature
    return 0.5 * rng.dirichlet(np.ones(n), size=m) + 0.5 / n


def central_difference(f, x, h=1e-5):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return grad


def check_gradient(f, x, samples, rng, rel_tol=1e-5, h=1e-5):
    """Spot-check the analytic gradient against central differences."""
    loss, grad = f(x)
    fd = central_difference(lambda v: f(v)[0], x, h)
    flat_g, flat_fd = grad.ravel(), fd.ravel()
    idx = rng.choice(len(flat_g), size=min(samples, len(flat_g)), replace=False)
    scale = max(np.max(np.abs(flat_fd[idx])), 1e-8)
    assert np.max(np.abs(flat_g[idx] - flat_fd[idx])) / scale < rel_tol


def check_simplex_gradient(f, x, samples, rng, rel_tol=1e-5, h=1e-5):
    """Directional central differences along simplex tangents (e_i - e_j).

    Coordinate-wise steps of size h would push a row sum outside the
    1e-6 stochasticity precondition, so the check stays on the simplex.
    """
    _, grad = f(x)
    m, n = x.shape
    for _ in range(samples):
        r = int(rng.integers(0, m))
        i, j = rng.choice(n, size=2, replace=False)
        if min(x[r, i], x[r, j]) < 10 * h:  # keep entries positive after the step
            continue
        xp = x.copy()
        xm = x.copy()
        xp[r, i] += h
        xp[r, j] -= h
        xm[r, i] -= h
        xm[r, j] += h
        fd = (f(xp)[0] - f(xm)[0]) / (2 * h)
        want = grad[r, i] - grad[r, j]
        assert abs(fd - want) / max(abs(fd), abs(want), 1e-8) < rel_tol


class TestUvWeightedL1:
    def test_zero_at_equality(self, rng):
        s = random_map(rng)
        loss, grad = uv_weighted_l1(s, s.data)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_single_pixel_channel_l1(self):
        weight = np.zeros((4, 4))
        weight[1, 2] = 1.0
        data = np.zeros((4, 4, 3))
        gt = UVPositionMap(data * weight[:, :, None], weight)
        pred = np.zeros((4, 4, 3))
        pred[1, 2] = [1.0, 2.0, 3.0]
        loss, _ = uv_weighted_l1(gt, pred)
        assert loss == 6.0

    def test_masked_out_differences_ignored(self, rng):
        s = random_map(rng)
        pred = np.array(s.data)
        pred[s.weight == 0.0] += rng.normal(size=pred[s.weight == 0.0].shape)
        loss, grad = uv_weighted_l1(s, pred)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_gradient_matches_finite_differences(self, rng):
        s = random_map(rng)
        pred = s.data + rng.normal(size=s.data.shape)  # generic non-kink point
        check_gradient(lambda x: uv_weighted_l1(s, x), pred, 100, rng)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            uv_weighted_l1(random_map(rng, 4, 4), np.zeros((5, 4, 3)))


class TestCorrL1:
    def test_zero_at_equality(self, rng):
        pts = rng.normal(size=(10, 3))
        loss, grad = corr_l1(pts, pts.copy())
        assert loss == 0.0 and np.all(grad == 0.0)

    def test_single_coordinate_offset(self):
        gt = np.zeros((5, 3))
        pred = np.zeros((5, 3))
        pred[2, 0] = 0.001
        loss, _ = corr_l1(gt, pred)
        assert np.isclose(loss, 0.001)

    def test_matches_brute_force_sum(self, rng):
        gt = rng.normal(size=(20, 3))
        pred = rng.normal(size=(20, 3))
        loss, _ = corr_l1(gt, pred)
        brute = sum(
            abs(pred[i, j] - gt[i, j]) for i in range(20) for j in range(3)
        )
        assert abs(loss - brute) < 1e-12

    def test_gradient(self, rng):
        gt = rng.normal(size=(8, 3))
        pred = rng.normal(size=(8, 3))
        check_gradient(lambda x: corr_l1(gt, x), pred, 24, rng)


class TestCorrespondenceLoss:
    def test_zero_when_prediction_equals_one_hot_gt(self):
        gt = CorrespondenceMatrix.from_rows(
            [(np.array([2]), np.array([1.0])), (np.array([0]), np.array([1.0]))], 4
        )
        loss, _ = correspondence_loss(gt.to_dense(), gt, entropy_weight=0.1)
        assert loss == 0.0

    def test_zero_at_gt_for_sparse_rows_without_entropy(self, rng):
        gt = random_sparse(rng)
        loss, _ = correspondence_loss(gt.to_dense(), gt, entropy_weight=0.0)
        assert abs(loss) < 1e-12

    def test_uniform_prediction_entropy_term(self, rng):
        n = 1220
        gt = CorrespondenceMatrix.from_rows(
            [(np.array([7]), np.array([1.0]))] * 4, n
        )
        uniform = np.full((4, n), 1.0 / n)
        with_entropy, _ = correspondence_loss(uniform, gt, entropy_weight=0.1)
        without, _ = correspondence_loss(uniform, gt, entropy_weight=0.0)
        per_row_entropy = (with_entropy - without) / 0.1
        assert np.isclose(per_row_entropy, math.log(1220), atol=1e-9)
        assert np.isclose(math.log(1220), 7.10661, atol=5e-6)

    def test_lower_bound_minus_lambda_log_n(self, rng):
        n = 50
        lam = 0.1
        gt = random_sparse(rng, m=8, n=n)
        for _ in range(50):
            pred = random_simplex(rng, 8, n)
            loss, _ = correspondence_loss(pred, gt, entropy_weight=lam)
            assert loss >= -lam * math.log(n) - 1e-12

    def test_gt_is_minimum_without_entropy(self, rng):
        n = 30
        gt = random_sparse(rng, m=5, n=n)
        dense = gt.to_dense()
        base, _ = correspondence_loss(dense, gt, entropy_weight=0.0)
        for _ in range(100):
            mix = random_simplex(rng, 5, n)
            perturbed = dense + 1e-3 * (mix - dense)
            perturbed /= perturbed.sum(axis=1, keepdims=True)
            loss, _ = correspondence_loss(perturbed, gt, entropy_weight=0.0)
            assert loss >= base - 1e-15

    def test_gradient_default_direction(self, rng):
        gt = random_sparse(rng, m=4, n=12)
        pred = interior_simplex(rng, 4, 12)
        check_simplex_gradient(
            lambda x: correspondence_loss(x, gt, entropy_weight=0.1), pred, 48, rng
        )

    def test_gradient_printed_direction(self, rng):
        gt = random_sparse(rng, m=4, n=12)
        pred = interior_simplex(rng, 4, 12)
        check_simplex_gradient(
            lambda x: correspondence_loss(x, gt, entropy_weight=0.1, pred_first=True),
            pred, 48, rng,
        )

    def test_rejects_non_probability_rows(self, rng):
        gt = random_sparse(rng, m=3, n=10)
        bad = random_simplex(rng, 3, 10)
        bad[1] *= 1.5
        with pytest.raises(NotAProbabilityRow) as err:
            correspondence_loss(bad, gt, entropy_weight=0.1)
        assert err.value.row == 1


class TestSegCrossEntropy:
    def test_saturated_correct_logits(self):
        mask = np.zeros((4, 4), dtype=np.uint8)
        logits = np.zeros((4, 4, 2))
        logits[:, :, 0] = 20.0
        logits[:, :, 1] = -20.0
        loss, _ = seg_cross_entropy(logits, mask)
        assert loss < 1e-12

    def test_uniform_logits_give_log2(self, rng):
        mask = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        loss, _ = seg_cross_entropy(np.zeros((5, 5, 2)), mask)
        assert np.isclose(loss, math.log(2.0))

    def test_gradient_sums_to_zero_per_pixel(self, rng):
        mask = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        logits = rng.normal(size=(6, 6, 2))
        _, grad = seg_cross_entropy(logits, mask)
        assert np.max(np.abs(grad.sum(axis=2))) < 1e-15

    def test_gradient(self, rng):
        mask = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        logits = rng.normal(size=(5, 5, 2))
        check_gradient(lambda x: seg_cross_entropy(x, mask), logits, 50, rng)


class TestTotalLoss:
    def test_all_zero(self):
        assert total_loss(0, 0, 0, 0, LossWeights()) == 0.0

    def test_default_weights_on_unit_losses(self):
        # 0.5 + 0.01 + 1.0 + 0.01
        assert np.isclose(total_loss(1, 1, 1, 1, LossWeights()), 1.52)

    def test_unit_weights_plain_sum(self):
        w = LossWeights(1, 1, 1, 1, 0.0)
        assert total_loss(1.5, 2.5, 3.0, 4.0, w) == 11.0

    def test_default_weight_values(self):
        w = LossWeights()
        assert (w.uv, w.corr_matrix, w.corr_points, w.seg, w.entropy) == (
            0.5, 0.01, 1.0, 0.01, 0.1,
        )
