"""评测指标

- 朝向: orientation_similarity, os_to_angle, orientation_score, aos (11点插值)
- 3D框: center_distance, closest_point_distance_error (最近角点或精确表面点), iou3d
- 视角: geodesic_distance, viewpoint_stats (MedErr, Acc_π/6)
- 按真值距离分桶的误差表
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from app.core.errors import InvalidParameter, NonUprightBox
from app.core.logging import logging
from app.services.geometry import box_corners, box_rotation

RECALL_POINTS = np.linspace(0.0, 1.0, 11)
DONT_CARE_COVER = 0.5
CLIP_EPS = 1e-9

# KITTI 难度阈值: (最小高度 px, 最大遮挡等级, 最大截断比例)
DIFFICULTIES = {
    "easy": (40.0, 0, 0.15),
    "moderate": (25.0, 1, 0.30),
    "hard": (25.0, 2, 0.50),
}


@dataclass(frozen=True)
class MatchedPair:
    gt_box: object
    gt_box2d: object
    pred_box: object
    pred_box2d: object
    score: float
    iou2d: float
    iou_thresh: float


@dataclass(frozen=True)
class PRCurve:
    """按得分排序后每个检测处的 (recall, precision, orientation similarity)"""

    recall: np.ndarray
    precision: np.ndarray
    similarity: np.ndarray

    def __len__(self):
        return len(self.recall)


@dataclass(frozen=True)
class GroundTruth:
    """aos 的真值输入

    ignore 为 True 的条目 (DontCare 区域或不属于当前难度的物体) 不参与召回；
    与它 IoU 达到阈值、或面积一半以上落在它内部的未匹配检测既不算 TP 也不算 FP。
    """

    box2d: object
    yaw: float
    ignore: bool = False


@dataclass(frozen=True)
class Detection:
    box2d: object
    yaw: float
    score: float


# 朝向

def orientation_similarity(delta_theta):
    """(1 + cos Δθ) / 2"""
    return (1.0 + np.cos(delta_theta)) / 2.0


def os_to_angle(os_value):
    """OS 换算回角度误差 acos(2·OS - 1) (弧度)"""
    if not 0.0 <= os_value <= 1.0:
        raise InvalidParameter(f"OS 必须在 [0, 1] 内: {os_value}")
    return math.acos(2.0 * os_value - 1.0)


def orientation_score(aos_value, ap_value):
    """OS = AOS / AP"""
    if ap_value <= 0:
        raise InvalidParameter("AP 为 0 时无法计算 OS")
    if aos_value > ap_value + 1e-12:
        raise InvalidParameter(f"AOS ({aos_value}) 不能大于 AP ({ap_value})")
    return aos_value / ap_value


def iou2d(a, b):
    """两个轴对齐 2D 框的 IoU"""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _covered_fraction(det, region):
    iw = min(det.x_max, region.x_max) - max(det.x_min, region.x_min)
    ih = min(det.y_max, region.y_max) - max(det.y_min, region.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih / det.area


def _overlaps_ignored(det, region, iou_threshold):
    return (
        iou2d(det, region) >= iou_threshold
        or _covered_fraction(det, region) >= DONT_CARE_COVER
    )


def _interpolate(recall, values):
    """11点插值: 对每个召回阈值 r 取 recall ≥ r 处的最大值，再求平均"""
    total = 0.0
    for r in RECALL_POINTS:
        reached = values[recall >= r - 1e-12]
        total += reached.max() if reached.size else 0.0
    return total / len(RECALL_POINTS)


def aos(gt_frames, det_frames, iou_threshold=0.7, min_height=0.0):
    """
    计算 AP 与 AOS

    参数:
    gt_frames (list[list[GroundTruth]]): 每帧的真值
    det_frames (list[list[Detection]]): 每帧的检测，与 gt_frames 按帧对齐
    iou_threshold (float): 2D IoU 匹配阈值
    min_height (float): 未匹配且高度低于此值的检测不计为误检

    返回:
    tuple: (AP, AOS, PRCurve)
    """
    if len(gt_frames) != len(det_frames):
        raise InvalidParameter(f"真值 {len(gt_frames)} 帧，检测 {len(det_frames)} 帧")

    num_gt = sum(1 for frame in gt_frames for g in frame if not g.ignore)
    outcomes = []  # (score, 帧号, 帧内序号, is_tp, similarity)
    for f, (gts, dets) in enumerate(zip(gt_frames, det_frames)):
        valid = [g for g in gts if not g.ignore]
        regions = [g for g in gts if g.ignore]
        taken = [False] * len(valid)
        order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
        for i in order:
            det = dets[i]
            best, best_iou = -1, iou_threshold
            for j, gt in enumerate(valid):
                if taken[j]:
                    continue
                overlap = iou2d(det.box2d, gt.box2d)
                if overlap >= best_iou and (best < 0 or overlap > best_iou):
                    best, best_iou = j, overlap
            if best >= 0:
                taken[best] = True
                sim = float(orientation_similarity(det.yaw - valid[best].yaw))
                outcomes.append((det.score, f, i, True, sim))
            elif det.box2d.height < min_height:
                continue
            elif any(_overlaps_ignored(det.box2d, r.box2d, iou_threshold) for r in regions):
                continue
            else:
                outcomes.append((det.score, f, i, False, 0.0))

    if num_gt == 0:
        logging.warning("没有有效真值，AP 与 AOS 记为 0")
        empty = np.zeros(0)
        return 0.0, 0.0, PRCurve(empty, empty, empty)

    outcomes.sort(key=lambda o: (-o[0], o[1], o[2]))
    tp = np.cumsum([o[3] for o in outcomes], dtype=float)
    sim = np.cumsum([o[4] for o in outcomes], dtype=float)
    ranks = np.arange(1, len(outcomes) + 1, dtype=float)
    recall = tp / num_gt
    precision = tp / ranks
    similarity = sim / ranks

    ap = _interpolate(recall, precision)
    aos_value = _interpolate(recall, similarity)
    return ap, aos_value, PRCurve(recall, precision, similarity)


def difficulty_of(record):
    """按 KITTI 阈值返回记录满足的最严格难度，都不满足时返回 None"""
    height = record.box2d.height
    for name, (min_height, max_occlusion, max_truncation) in DIFFICULTIES.items():
        if (
            height >= min_height
            and record.occluded <= max_occlusion
            and record.truncated <= max_truncation
        ):
            return name
    return None


def in_difficulty(record, difficulty):
    """难度是累积的: easy 样本也属于 moderate 和 hard"""
    min_height, max_occlusion, max_truncation = DIFFICULTIES[difficulty]
    return (
        record.box2d.height >= min_height
        and record.occluded <= max_occlusion
        and record.truncated <= max_truncation
    )


# 3D 框

def center_distance(gt, pred):
    return float(np.linalg.norm(gt.T - pred.T))


def closest_corner_distance(box):
    """相机 (原点) 到框最近角点的距离"""
    return float(np.linalg.norm(box_corners(box), axis=1).min())


def closest_surface_distance(box):
    """相机到框表面的精确最近距离，相机在框内时为 0"""
    local = (-box.T) @ box_rotation(box)
    half = 0.5 * box.dims.as_array()
    return float(np.linalg.norm(local - np.clip(local, -half, half)))


def closest_point_distance_error(gt, pred, exact=False):
    """
    |最近点距离(gt) - 最近点距离(pred)|

    默认取最近角点；exact 为 True 时取框表面上的最近点。
    两者之差不超过 |角点与表面的距离差(gt) - 同一差值(pred)|。
    """
    distance = closest_surface_distance if exact else closest_corner_distance
    return abs(distance(gt) - distance(pred))


def _bev_polygon(box):
    """框在地面 (x-z 平面) 上的投影，逆时针四边形"""
    corners = box_corners(box)
    # 底面四个角点 (序号 0,1,5,4 围成一圈)
    ring = corners[[0, 1, 5, 4]][:, [0, 2]]
    signed = 0.5 * np.sum(ring[:, 0] * np.roll(ring[:, 1], -1) - np.roll(ring[:, 0], -1) * ring[:, 1])
    return ring if signed > 0 else ring[::-1]


def _clip(subject, clip_polygon):
    """Sutherland-Hodgman: 用凸多边形 clip_polygon 裁剪 subject (均为逆时针)"""

    def inside(p, a, b):
        # 边上的点 (含浮点误差) 视为在内部
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -CLIP_EPS

    def intersection(s, e, a, b):
        dc = a - b
        dp = s - e
        n1 = a[0] * b[1] - a[1] * b[0]
        n2 = s[0] * e[1] - s[1] * e[0]
        denom = dc[0] * dp[1] - dc[1] * dp[0]
        if abs(denom) < 1e-15:
            return np.asarray(e, dtype=float)
        return np.array([(n1 * dp[0] - n2 * dc[0]) / denom, (n1 * dp[1] - n2 * dc[1]) / denom])

    output = list(subject)
    a = clip_polygon[-1]
    for b in clip_polygon:
        if not output:
            break
        inputs, output = output, []
        s = inputs[-1]
        for e in inputs:
            if inside(e, a, b):
                if not inside(s, a, b):
                    output.append(intersection(s, e, a, b))
                output.append(e)
            elif inside(s, a, b):
                output.append(intersection(s, e, a, b))
            s = e
        a = b
    return output


def polygon_area(polygon):
    if len(polygon) < 3:
        return 0.0
    pts = np.asarray(polygon)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def iou3d(a, b):
    """
    两个竖直 (俯仰、横滚为零) 3D 框的 IoU

    鸟瞰图上用 Sutherland-Hodgman 求两个旋转矩形的交集面积，再乘以竖直方向的重叠高度。
    """
    for box in (a, b):
        if not box.is_upright:
            raise NonUprightBox(f"3D IoU 只支持竖直框: pitch={box.pitch}, roll={box.roll}")

    # y 轴向下，框的竖直范围为 [cy - h/2, cy + h/2]
    a_low, a_high = a.center[1] - a.dims.dy / 2, a.center[1] + a.dims.dy / 2
    b_low, b_high = b.center[1] - b.dims.dy / 2, b.center[1] + b.dims.dy / 2
    overlap_h = min(a_high, b_high) - max(a_low, b_low)
    if overlap_h <= 0:
        return 0.0

    inter_area = polygon_area(_clip(_bev_polygon(a), _bev_polygon(b)))
    inter = inter_area * overlap_h
    vol_a = a.dims.dx * a.dims.dy * a.dims.dz
    vol_b = b.dims.dx * b.dims.dy * b.dims.dz
    return float(min(max(inter / (vol_a + vol_b - inter), 0.0), 1.0))


# 视角

def geodesic_distance(R1, R2):
    """Δ(R1, R2) = ||log(R1ᵀR2)||_F / √2，即相对旋转的转角"""
    relative = np.asarray(R1, dtype=float).T @ np.asarray(R2, dtype=float)
    cos_angle = np.clip((np.trace(relative) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_angle))


def viewpoint_stats(rotation_pairs):
    """
    视角估计统计

    参数:
    rotation_pairs (list[tuple]): (R_gt, R_pred) 对

    返回:
    tuple: (MedErr 弧度, Acc_π/6 比例)
    """
    if len(rotation_pairs) == 0:
        raise InvalidParameter("viewpoint_stats 需要至少一对旋转")
    distances = np.array([geodesic_distance(r1, r2) for r1, r2 in rotation_pairs])
    # np.median 对偶数个取中间两个的平均
    return float(np.median(distances)), float(np.mean(distances < math.pi / 6))


# 3D 指标对比

def match_pairs(gt_items, det_items, iou_thresh=0.7):
    """
    按得分贪心匹配 2D 框，返回 IoU ≥ 阈值的 MatchedPair

    参数:
    gt_items (list[tuple]): (Box3D, Box2D)
    det_items (list[tuple]): (Box3D, Box2D, score)
    """
    taken = set()
    pairs = []
    order = sorted(range(len(det_items)), key=lambda i: (-det_items[i][2], i))
    for i in order:
        pred_box, pred_2d, score = det_items[i]
        best, best_iou = None, iou_thresh
        for j, (_, gt_2d) in enumerate(gt_items):
            if j in taken:
                continue
            overlap = iou2d(pred_2d, gt_2d)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = j, overlap
        if best is not None:
            taken.add(best)
            gt_box, gt_2d = gt_items[best]
            pairs.append(MatchedPair(gt_box, gt_2d, pred_box, pred_2d, score, best_iou, iou_thresh))
    return pairs


def pair_errors(pairs):
    """每对的三项 3D 指标及真值距离，返回 DataFrame"""
    rows = []
    for pair in pairs:
        upright = pair.gt_box.is_upright and pair.pred_box.is_upright
        rows.append(
            {
                "distance": float(np.linalg.norm(pair.gt_box.T)),
                "center_error": center_distance(pair.gt_box, pair.pred_box),
                "closest_point_error": closest_point_distance_error(pair.gt_box, pair.pred_box),
                "closest_surface_error": closest_point_distance_error(pair.gt_box, pair.pred_box, exact=True),
                "iou3d": iou3d(pair.gt_box, pair.pred_box) if upright else np.nan,
            }
        )
    return pd.DataFrame(
        rows, columns=["distance", "center_error", "closest_point_error", "closest_surface_error", "iou3d"]
    )


def distance_binned_errors(pairs, bin_width=10.0, max_distance=None):
    """
    按真值中心欧氏距离分桶的误差曲线

    返回:
    pandas.DataFrame: 每桶一行，列为 bin_start, bin_end, count 以及三项指标的均值/中位数
    """
    errors = pair_errors(pairs)
    columns = [
        "bin_start",
        "bin_end",
        "count",
        "mean_center_error",
        "median_center_error",
        "mean_closest_point_error",
        "mean_closest_surface_error",
        "mean_iou3d",
    ]
    if errors.empty:
        return pd.DataFrame(columns=columns)

    top = max_distance if max_distance is not None else errors["distance"].max()
    n_bins = max(int(math.ceil(top / bin_width)), 1)
    index = np.minimum((errors["distance"] // bin_width).astype(int), n_bins - 1)
    errors = errors.assign(bin=index)
    if max_distance is not None:
        errors = errors[errors["distance"] < max_distance]

    rows = []
    for b in range(n_bins):
        chunk = errors[errors["bin"] == b]
        rows.append(
            {
                "bin_start": b * bin_width,
                "bin_end": (b + 1) * bin_width,
                "count": len(chunk),
                "mean_center_error": chunk["center_error"].mean(),
                "median_center_error": chunk["center_error"].median(),
                "mean_closest_point_error": chunk["closest_point_error"].mean(),
                "mean_closest_surface_error": chunk["closest_surface_error"].mean(),
                "mean_iou3d": chunk["iou3d"].mean(),
            }
        )
    return pd.DataFrame(rows, columns=columns)
