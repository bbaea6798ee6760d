"""由 (K, R, 尺寸, 2D框) 求解 3D 框平移 T

2D框的每条边 s 被某个角点 X_j 的投影恰好触碰:
    (row_s(K) - coord_s·row_3(K)) · (R·X_j + T) = 0
左右边用 K 的第一行 (u 坐标)，上下边用第二行 (v 坐标)。四条边给出 4x3 的超定线性
方程组 A·T = b。A 只依赖边坐标，与角点分配无关，因此所有配置共享一次 SVD 分解，
只有 b 随配置变化；整个枚举可以批量求解。
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from app.core.errors import Infeasible, NoFeasibleConfiguration, RankDeficient
from app.core.logging import logging
from app.services.geometry import box_vertices

RANK_TOL = 1e-10
EXTENT_TOL = 1e-10
REFINE_ROUNDS = 3

SIDES = ("left", "right", "top", "bottom")
# 每条边使用的像素轴 (0=u, 1=v) 以及极值方向 (-1 取最小, +1 取最大)
_SIDE_AXIS = np.array([0, 0, 1, 1])
_SIDE_SIGN = np.array([-1.0, 1.0, -1.0, 1.0])


class ConstraintMode(str, Enum):
    GENERAL = "general"
    UPRIGHT = "upright"
    UPRIGHT_ZERO_ROLL = "zeroroll"
    KITTI_ZERO_PITCH_ROLL = "kitti"


_ALL = tuple(range(8))
_TOP_FACE = (2, 3, 6, 7)  # y = -dy/2 (y 向下，所以是顶面)
_BOTTOM_FACE = (0, 1, 4, 5)
# 竖直棱的代表角点 [±dx/2, ·, ±dz/2]，y 自由
_VERTICAL_EDGES = (0, 1, 4, 5)
# 沿 x 方向的水平棱的代表角点 [·, ±dy/2, ±dz/2]，x 自由
_HORIZONTAL_EDGES = (0, 2, 4, 6)

# (左, 右, 上, 下) 各自可用的角点
_ADMISSIBLE = {
    ConstraintMode.GENERAL: (_ALL, _ALL, _ALL, _ALL),
    ConstraintMode.UPRIGHT: (_ALL, _ALL, _TOP_FACE, _BOTTOM_FACE),
    ConstraintMode.UPRIGHT_ZERO_ROLL: (
        _VERTICAL_EDGES,
        _VERTICAL_EDGES,
        _HORIZONTAL_EDGES,
        _HORIZONTAL_EDGES,
    ),
    ConstraintMode.KITTI_ZERO_PITCH_ROLL: (_VERTICAL_EDGES, _VERTICAL_EDGES, (2, 6), (0, 4)),
}

# 自由坐标对应的角点序号异或掩码: 2 翻转 y 的符号, 1 翻转 x 的符号
_FREE_MASK = {
    ConstraintMode.GENERAL: (0, 0, 0, 0),
    ConstraintMode.UPRIGHT: (0, 0, 0, 0),
    ConstraintMode.UPRIGHT_ZERO_ROLL: (2, 2, 1, 1),
    ConstraintMode.KITTI_ZERO_PITCH_ROLL: (2, 2, 1, 1),
}


@dataclass(frozen=True)
class Configuration:
    """2D框四条边 (左, 右, 上, 下) 各自对应的角点序号"""

    left: int
    right: int
    top: int
    bottom: int

    def __post_init__(self):
        for side in SIDES:
            if not 0 <= getattr(self, side) < 8:
                raise ValueError(f"{side} 角点序号越界: {getattr(self, side)}")

    @property
    def corners(self):
        return (self.left, self.right, self.top, self.bottom)


@dataclass(frozen=True)
class LiftResult:
    T: np.ndarray
    configuration: Configuration
    configuration_index: int
    residual: float
    reprojection_error: float
    # 细化前的枚举配置，configuration 为细化后实际使用的角点
    enumerated: Configuration


@lru_cache(maxsize=None)
def _configurations(mode):
    subsets = _ADMISSIBLE[mode]
    return tuple(Configuration(*corners) for corners in itertools.product(*subsets))


def enumerate_configurations(mode):
    """
    枚举约束模式下所有允许的角点-边对应配置

    数量分别为 general 4096, upright 1024, zeroroll 256, kitti 64，顺序确定。
    """
    return list(_configurations(ConstraintMode(mode)))


def _system_matrix(K, box2d):
    """构造 4x3 的系数矩阵 A，并检查秩"""
    if box2d.width <= EXTENT_TOL or box2d.height <= EXTENT_TOL:
        raise RankDeficient(f"2D框退化: 宽 {box2d.width:.3g}, 高 {box2d.height:.3g}")
    Km = K.matrix
    coords = box2d.sides
    A = Km[_SIDE_AXIS] - coords[:, None] * Km[2]
    normalized = A / np.linalg.norm(A, axis=1, keepdims=True)
    smallest = np.linalg.svd(normalized, compute_uv=False)[-1]
    if smallest < RANK_TOL:
        raise RankDeficient(f"方程组秩亏: 最小奇异值 {smallest:.3g}")
    return A


def _solve_many(A, rotated_vertices, corners):
    """对 (N, 4) 的角点分配批量求最小二乘解，返回 T (N, 3) 与残差 (N,)"""
    # b_s = -a_s · (R·X_j)
    picked = rotated_vertices[corners]  # (N, 4, 3)
    b = -np.einsum("sk,nsk->ns", A, picked)
    T, *_ = np.linalg.lstsq(A, b.T, rcond=None)
    T = T.T
    residual = np.sum((T @ A.T - b) ** 2, axis=1)
    return T, residual


def solve_translation(K, R, dims, box2d, config):
    """
    在给定对应配置下求解平移 T

    参数:
    K (CameraIntrinsics): 相机内参
    R (array): 3x3 旋转矩阵
    dims (Dimensions): 框尺寸
    box2d (Box2D): 2D 检测框
    config (Configuration): 四条边对应的角点

    返回:
    tuple: (T, residual)，T 为 3 维向量 (米)，residual 为最小二乘目标值
    """
    A = _system_matrix(K, box2d)
    rotated = box_vertices(dims) @ np.asarray(R, dtype=float).T
    T, residual = _solve_many(A, rotated, np.array([config.corners]))
    T = T[0]
    depth = (rotated + T)[:, 2]
    if np.any(depth <= 0):
        raise Infeasible(f"配置 {config.corners} 的解使角点位于相机后方")
    return T, float(residual[0])


def _extreme_coordinates(Km, points):
    """(N, 8, 3) 相机坐标点的像素坐标，深度非正处为 nan"""
    homog = points @ Km.T
    depth = homog[..., 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.where(depth > 0, homog[..., :2] / depth, np.nan)
    return uv


def lift(K, R, dims, box2d, mode=ConstraintMode.KITTI_ZERO_PITCH_ROLL):
    """
    枚举所有允许的对应配置，返回重投影误差最小的平移

    候选按 (紧致外接矩形与 2D 框四边的平方差之和, 最小二乘残差, 配置序号) 排序。
    对自由坐标的边 (zeroroll/kitti 模式)，每轮求解后把角点换成同一条棱上投影更
    靠外的端点再求解，最多 REFINE_ROUNDS 轮。

    返回:
    LiftResult
    """
    mode = ConstraintMode(mode)
    configs = _configurations(mode)
    A = _system_matrix(K, box2d)
    Km = K.matrix
    R = np.asarray(R, dtype=float)
    rotated = box_vertices(dims) @ R.T
    sides = box2d.sides

    corners = np.array([c.corners for c in configs])
    masks = np.array(_FREE_MASK[mode])
    T, residual = _solve_many(A, rotated, corners)

    for _ in range(REFINE_ROUNDS if masks.any() else 0):
        uv = _extreme_coordinates(Km, rotated[None, :, :] + T[:, None, :])
        rows = np.arange(len(corners))[:, None]
        partners = corners ^ masks
        current = uv[rows, corners, _SIDE_AXIS]
        alternative = uv[rows, partners, _SIDE_AXIS]
        better = _SIDE_SIGN * (alternative - current) > 0
        if not better.any():
            break
        corners = np.where(better, partners, corners)
        T, residual = _solve_many(A, rotated, corners)

    points = rotated[None, :, :] + T[:, None, :]
    feasible = np.all(points[..., 2] > 0, axis=1)
    if not feasible.any():
        raise NoFeasibleConfiguration(f"{mode.value} 模式下 {len(configs)} 个配置均不可行")

    uv = _extreme_coordinates(Km, points[feasible])
    rect = np.stack(
        [uv[..., 0].min(1), uv[..., 0].max(1), uv[..., 1].min(1), uv[..., 1].max(1)], axis=1
    )
    reprojection = np.sum((rect - sides) ** 2, axis=1)
    index = np.flatnonzero(feasible)
    order = np.lexsort((index, residual[feasible], reprojection))
    best = order[0]
    chosen = int(index[best])

    logging.debug(
        f"lift: 模式 {mode.value}, 可行 {feasible.sum()}/{len(configs)}, "
        f"选中配置 {chosen}, 重投影误差 {reprojection[best]:.3e}"
    )
    return LiftResult(
        T=T[chosen].copy(),
        configuration=Configuration(*(int(c) for c in corners[chosen])),
        configuration_index=chosen,
        residual=float(residual[chosen]),
        reprojection_error=float(reprojection[best]),
        enumerated=configs[chosen],
    )
