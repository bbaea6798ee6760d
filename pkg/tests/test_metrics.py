import math

import numpy as np
import pytest
from scipy.linalg import logm

from app.core.errors import InvalidParameter, NonUprightBox
from app.models.geometry import Box2D, Box3D, Dimensions
from app.models.schemas import DetectionRecord
from app.services.geometry import box_corners, rotation_from_angles, rotation_yaw
from app.services.metrics import (
    Detection,
    GroundTruth,
    aos,
    center_distance,
    closest_corner_distance,
    closest_point_distance_error,
    closest_surface_distance,
    difficulty_of,
    distance_binned_errors,
    geodesic_distance,
    in_difficulty,
    iou2d,
    iou3d,
    match_pairs,
    orientation_score,
    orientation_similarity,
    os_to_angle,
    viewpoint_stats,
)


def unit_box(center, yaw=0.0, dims=(1.0, 1.0, 1.0)):
    return Box3D(center=center, dims=Dimensions(*dims), yaw=yaw)


def monte_carlo_iou(a, b, rng, samples=1_000_000):
    """在两个框的外接包围盒内均匀采样估计 IoU"""
    corners = np.vstack([box_corners(a), box_corners(b)])
    low, high = corners.min(axis=0), corners.max(axis=0)
    points = rng.uniform(low, high, (samples, 3))

    def inside(box):
        local = (points - box.T) @ rotation_yaw(box.yaw)
        half = 0.5 * box.dims.as_array()
        return np.all(np.abs(local) <= half, axis=1)

    in_a, in_b = inside(a), inside(b)
    union = np.count_nonzero(in_a | in_b)
    return np.count_nonzero(in_a & in_b) / union if union else 0.0


# 朝向

def test_orientation_similarity_values():
    assert orientation_similarity(0.0) == pytest.approx(1.0)
    assert orientation_similarity(math.pi) == pytest.approx(0.0)
    assert orientation_similarity(math.pi / 3) == pytest.approx(0.75)


def test_orientation_score_and_angle():
    assert orientation_score(92.90, 92.98) == pytest.approx(0.99914, abs=1e-5)
    assert orientation_score(88.75, 89.04) == pytest.approx(0.99674, abs=1e-5)
    assert orientation_score(50.0, 50.0) == 1.0
    assert 3.3 <= math.degrees(os_to_angle(0.9991)) <= 3.5
    assert math.degrees(os_to_angle(0.9967)) == pytest.approx(6.6, abs=0.05)
    assert os_to_angle(1.0) == 0.0
    with pytest.raises(InvalidParameter):
        orientation_score(1.0, 0.0)
    with pytest.raises(InvalidParameter):
        os_to_angle(1.2)


# AOS

def test_aos_perfect_and_flipped():
    boxes = [Box2D(10 + 60 * i, 10, 50 + 60 * i, 60) for i in range(5)]
    gts = [[GroundTruth(b, 0.3 * i) for i, b in enumerate(boxes)]]
    dets = [[Detection(b, 0.3 * i, 0.9 - 0.1 * i) for i, b in enumerate(boxes)]]
    ap, aos_value, curve = aos(gts, dets, 0.7)
    assert ap == pytest.approx(1.0)
    assert aos_value == pytest.approx(1.0)
    assert np.all(np.diff(curve.recall) >= 0)

    flipped = [[Detection(b, 0.3 * i + math.pi, 0.9 - 0.1 * i) for i, b in enumerate(boxes)]]
    ap, aos_value, _ = aos(gts, flipped, 0.7)
    assert ap == pytest.approx(1.0)
    assert aos_value == pytest.approx(0.0, abs=1e-12)


def test_aos_ten_object_scene():
    # 10 个真值；检测 8 个 (漏检 2 个)，外加 1 个得分居中的误检
    boxes = [Box2D(100 * i, 0, 100 * i + 50, 50) for i in range(10)]
    gts = [[GroundTruth(b, 0.0) for b in boxes]]
    dets = [Detection(boxes[i], 0.0 if i % 2 == 0 else math.pi / 2, 1.0 - 0.05 * i) for i in range(8)]
    dets.insert(4, Detection(Box2D(5000, 0, 5050, 50), 0.0, 0.79))
    ap, aos_value, curve = aos(gts, [dets], 0.5)

    # 按得分排序: TP TP TP TP TP FP TP TP TP
    tp = np.cumsum([1, 1, 1, 1, 1, 0, 1, 1, 1])
    sim = np.cumsum([1, 0.5, 1, 0.5, 1, 0, 0.5, 1, 0.5])
    rank = np.arange(1, 10)
    recall, precision, similarity = tp / 10, tp / rank, sim / rank

    def eleven_point(values):
        return np.mean([values[recall >= r - 1e-12].max() if np.any(recall >= r - 1e-12) else 0.0 for r in np.linspace(0, 1, 11)])

    assert ap == pytest.approx(eleven_point(precision))
    assert aos_value == pytest.approx(eleven_point(similarity))
    assert np.allclose(curve.recall, recall)
    # recall 达不到 0.9 与 1.0
    assert ap == pytest.approx((6 * 1.0 + 3 * (8 / 9)) / 11)


def test_aos_three_object_scene():
    boxes = [Box2D(0, 0, 40, 40), Box2D(100, 0, 140, 40), Box2D(200, 0, 240, 40)]
    gts = [[GroundTruth(b, 0.0) for b in boxes]]
    dets = [[
        Detection(boxes[0], 0.0, 0.9),
        Detection(boxes[1], math.pi / 3, 0.8),
        Detection(boxes[2], math.pi, 0.7),
    ]]
    ap, aos_value, _ = aos(gts, dets, 0.7)
    assert ap == pytest.approx(1.0)
    # 累积相似度 1, 1.75/2, 1.75/3；recall 1/3, 2/3, 1
    expected = (4 * 1.0 + 3 * (1.75 / 2) + 4 * (1.75 / 3)) / 11
    assert aos_value == pytest.approx(expected)


def test_aos_ignores_dont_care_and_handles_empty():
    gts = [[GroundTruth(Box2D(0, 0, 40, 40), 0.0), GroundTruth(Box2D(300, 0, 400, 100), 0.0, ignore=True)]]
    dets = [[Detection(Box2D(0, 0, 40, 40), 0.0, 0.9), Detection(Box2D(320, 10, 360, 50), 0.0, 0.95)]]
    ap, aos_value, curve = aos(gts, dets, 0.7)
    assert ap == pytest.approx(1.0)
    assert len(curve) == 1

    ap, aos_value, curve = aos([[]], [[Detection(Box2D(0, 0, 1, 1), 0.0, 0.5)]])
    assert (ap, aos_value, len(curve)) == (0.0, 0.0, 0)
    with pytest.raises(InvalidParameter):
        aos([[]], [])


def test_aos_ignores_detections_below_min_height():
    gts = [[GroundTruth(Box2D(0, 0, 40, 40), 0.0)]]
    # 高 20 px 的误检，得分高于真检测
    dets = [[Detection(Box2D(0, 0, 40, 40), 0.0, 0.5), Detection(Box2D(200, 0, 230, 20), 0.0, 0.9)]]
    ap, _, curve = aos(gts, dets, 0.7)
    assert len(curve) == 2
    assert ap == pytest.approx(0.5)

    ap, aos_value, curve = aos(gts, dets, 0.7, min_height=25.0)
    assert len(curve) == 1
    assert (ap, aos_value) == (pytest.approx(1.0), pytest.approx(1.0))

    # 匹配上的矮检测仍然计为 TP
    small = [[GroundTruth(Box2D(0, 0, 20, 20), 0.0)]]
    ap, _, _ = aos(small, [[Detection(Box2D(0, 0, 20, 20), 0.0, 0.9)]], 0.7, min_height=25.0)
    assert ap == pytest.approx(1.0)


def test_aos_never_exceeds_ap(rng):
    for _ in range(30):
        frames_gt, frames_det = [], []
        for _ in range(3):
            boxes = [Box2D(x, 0, x + 40, 40) for x in rng.choice(np.arange(0, 2000, 50), 6, replace=False)]
            frames_gt.append([GroundTruth(b, rng.uniform(-math.pi, math.pi)) for b in boxes])
            dets = [
                Detection(b.shifted(rng.normal(0, 3)), rng.uniform(-math.pi, math.pi), rng.uniform())
                for b in boxes
                if rng.uniform() < 0.8
            ]
            frames_det.append(dets)
        ap, aos_value, curve = aos(frames_gt, frames_det, 0.5)
        assert aos_value <= ap + 1e-12
        assert np.all(curve.similarity <= curve.precision + 1e-12)


# 3D 框

def test_center_and_closest_point():
    a = unit_box((0, 0, 10))
    assert center_distance(a, a) == 0.0
    assert center_distance(a, unit_box((0, 0, 12))) == pytest.approx(2.0)
    assert closest_point_distance_error(a, a) == 0.0
    assert closest_point_distance_error(a, unit_box((0, 0, 11))) == pytest.approx(1.0, abs=1e-2)


def surface_samples_min(box, rng, samples=200_000):
    """在框的六个面上均匀撒点，返回到原点的最小距离"""
    u = rng.uniform(-0.5, 0.5, (samples, 3))
    rows = np.arange(samples)
    axis = rng.integers(0, 3, samples)
    u[rows, axis] = np.sign(u[rows, axis]) * 0.5
    local = u * box.dims.as_array()
    return np.linalg.norm(local @ rotation_yaw(box.yaw).T + box.T, axis=1).min()


def random_car(rng):
    return unit_box(tuple(rng.uniform([-3, 0, 8], [3, 1, 30])), rng.uniform(-3, 3), (4.0, 1.5, 1.8))


def test_exact_closest_point_matches_dense_surface_sampling(rng):
    for _ in range(20):
        gt, pred = random_car(rng), random_car(rng)
        dense = abs(surface_samples_min(gt, rng) - surface_samples_min(pred, rng))
        assert closest_point_distance_error(gt, pred, exact=True) == pytest.approx(dense, abs=0.05)


def test_closest_surface_distance_closed_form():
    assert closest_surface_distance(unit_box((0, 0, 10))) == pytest.approx(9.5)
    assert closest_surface_distance(unit_box((3, 4, 10), dims=(2, 2, 2))) == pytest.approx(math.sqrt(4 + 9 + 81))
    assert closest_surface_distance(unit_box((0.2, 0, 0.1))) == 0.0
    assert closest_corner_distance(unit_box((0, 0, 10))) == pytest.approx(math.sqrt(0.5 + 9.5**2))


def test_corner_and_surface_errors_differ_by_gap(rng):
    for _ in range(200):
        gt, pred = random_car(rng), random_car(rng)
        gap_gt = closest_corner_distance(gt) - closest_surface_distance(gt)
        gap_pred = closest_corner_distance(pred) - closest_surface_distance(pred)
        assert gap_gt >= 0 and gap_pred >= 0
        difference = abs(closest_point_distance_error(gt, pred) - closest_point_distance_error(gt, pred, exact=True))
        assert difference <= abs(gap_gt - gap_pred) + 1e-9


def test_corner_error_close_to_dense_sampling_for_accurate_predictions(rng):
    for _ in range(20):
        gt = random_car(rng)
        pred = unit_box(
            tuple(gt.T + rng.normal(0.0, 0.005, 3)),
            gt.yaw + rng.normal(0.0, 0.002),
            (4.0, 1.5, 1.8),
        )
        dense = abs(surface_samples_min(gt, rng) - surface_samples_min(pred, rng))
        assert abs(closest_point_distance_error(gt, pred) - dense) < 0.05


def test_iou3d_closed_forms():
    a = unit_box((0, 0, 10))
    assert iou3d(a, a) == pytest.approx(1.0)
    assert iou3d(a, unit_box((0.5, 0, 10))) == pytest.approx(1 / 3, abs=1e-9)
    assert iou3d(a, unit_box((5, 0, 10))) == 0.0
    assert iou3d(a, unit_box((0, 2, 10))) == 0.0
    rotated = unit_box((1.0, 0.5, 12.0), yaw=0.8, dims=(4.0, 1.5, 1.8))
    assert iou3d(rotated, rotated) == pytest.approx(1.0)


def test_iou3d_rejects_non_upright():
    tilted = Box3D(center=(0, 0, 10), dims=Dimensions(1, 1, 1), pitch=0.1)
    with pytest.raises(NonUprightBox):
        iou3d(tilted, unit_box((0, 0, 10)))


def test_iou3d_symmetric_and_rigid_invariant(rng):
    for _ in range(50):
        a = unit_box(tuple(rng.uniform(-1, 1, 3)), rng.uniform(-3, 3), tuple(rng.uniform(1, 3, 3)))
        b = unit_box(tuple(rng.uniform(-1, 1, 3)), rng.uniform(-3, 3), tuple(rng.uniform(1, 3, 3)))
        value = iou3d(a, b)
        assert 0.0 <= value <= 1.0
        assert iou3d(b, a) == pytest.approx(value, abs=1e-9)

        # 两个框同时绕竖直轴旋转并平移
        turn, shift = rng.uniform(-3, 3), rng.uniform(-5, 5, 3)
        R = rotation_yaw(turn)

        def moved(box):
            return unit_box(tuple(R @ box.T + shift), box.yaw + turn, (box.dims.dx, box.dims.dy, box.dims.dz))

        assert iou3d(moved(a), moved(b)) == pytest.approx(value, abs=1e-9)


def test_iou3d_matches_monte_carlo(rng):
    for _ in range(500):
        a = unit_box(tuple(rng.uniform(-0.5, 0.5, 3)), rng.uniform(-3, 3), tuple(rng.uniform(1, 3, 3)))
        b = unit_box(tuple(rng.uniform(-0.5, 0.5, 3)), rng.uniform(-3, 3), tuple(rng.uniform(1, 3, 3)))
        assert iou3d(a, b) == pytest.approx(monte_carlo_iou(a, b, rng), abs=5e-3)


# 视角

def test_geodesic_distance(rng):
    assert geodesic_distance(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-7)
    assert geodesic_distance(np.eye(3), rotation_yaw(math.pi / 6)) == pytest.approx(math.pi / 6)
    for _ in range(20):
        R1 = rotation_from_angles(*rng.uniform(-0.5, 0.5, 3))
        R2 = rotation_from_angles(*rng.uniform(-0.5, 0.5, 3))
        R3 = rotation_from_angles(*rng.uniform(-0.5, 0.5, 3))
        d12 = geodesic_distance(R1, R2)
        oracle = np.linalg.norm(np.real(logm(R1.T @ R2)), "fro") / math.sqrt(2)
        assert d12 == pytest.approx(oracle, abs=1e-6)
        assert d12 == pytest.approx(geodesic_distance(R2, R1), abs=1e-12)
        assert 0.0 <= d12 <= math.pi
        assert geodesic_distance(R1, R3) <= d12 + geodesic_distance(R2, R3) + 1e-9


def test_viewpoint_stats():
    assert viewpoint_stats([(np.eye(3), np.eye(3))] * 3) == pytest.approx((0.0, 1.0), abs=1e-7)
    pairs = [(np.eye(3), rotation_yaw(d)) for d in (0.1, 0.2, 0.9)]
    med, acc = viewpoint_stats(pairs)
    assert med == pytest.approx(0.2)
    assert acc == pytest.approx(2 / 3)
    med, _ = viewpoint_stats([(np.eye(3), rotation_yaw(d)) for d in (0.1, 0.2, 0.4, 0.9)])
    assert med == pytest.approx(0.3)
    with pytest.raises(InvalidParameter):
        viewpoint_stats([])


# 匹配、难度与分桶

def test_iou2d_and_match_pairs():
    a = Box2D(0, 0, 10, 10)
    assert iou2d(a, a) == pytest.approx(1.0)
    assert iou2d(a, Box2D(5, 0, 15, 10)) == pytest.approx(1 / 3)
    assert iou2d(a, Box2D(20, 20, 30, 30)) == 0.0

    gt = [(unit_box((0, 0, 10)), a), (unit_box((3, 0, 10)), Box2D(100, 0, 110, 10))]
    det = [
        (unit_box((0, 0, 10.5)), a.shifted(0.5), 0.6),
        (unit_box((0, 0, 11)), a.shifted(1.0), 0.9),
        (unit_box((9, 0, 10)), Box2D(300, 0, 310, 10), 0.8),
    ]
    pairs = match_pairs(gt, det, 0.7)
    assert len(pairs) == 1
    # 得分高的检测先匹配
    assert pairs[0].score == 0.9
    assert pairs[0].iou2d >= pairs[0].iou_thresh


def test_difficulty_buckets():
    def record(height, occluded=0, truncated=0.0):
        return DetectionRecord(
            category="Car",
            truncated=truncated,
            occluded=occluded,
            alpha=0.0,
            box2d=Box2D(0, 0, 50, height),
            dims=(1.5, 1.6, 4.0),
            location=(0, 1, 20),
            rotation_y=0.0,
        )

    assert difficulty_of(record(45)) == "easy"
    assert difficulty_of(record(30)) == "moderate"
    assert difficulty_of(record(30, occluded=2)) == "hard"
    assert difficulty_of(record(20)) is None
    assert in_difficulty(record(45), "hard")
    assert not in_difficulty(record(30), "easy")


def test_distance_binned_errors():
    pairs = match_pairs(
        [(unit_box((0, 0, d)), Box2D(100 * i, 0, 100 * i + 50, 50)) for i, d in enumerate((5, 15, 16))],
        [(unit_box((0, 0, d + 0.1 * i)), Box2D(100 * i, 0, 100 * i + 50, 50), 1.0) for i, d in enumerate((5, 15, 16))],
    )
    table = distance_binned_errors(pairs, bin_width=10.0)
    assert table["count"].tolist() == [1, 2]
    assert table.loc[1, "mean_center_error"] == pytest.approx(0.15)
    assert table.loc[0, "mean_iou3d"] == pytest.approx(1.0)
    assert distance_binned_errors([]).empty
