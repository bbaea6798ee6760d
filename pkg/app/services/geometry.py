"""相机模型、旋转、3D框角点与透视投影

约定:
- 相机坐标系 x 向右, y 向下, z 向前 (KITTI 矫正相机坐标系)
- 物体坐标系 x 沿车长, y 向下 (车高), z 沿车宽; 原点在框中心
- R = R_yaw(θ)·R_pitch(φ)·R_roll(α); R_yaw 与 KITTI 的 rotation_y 矩阵一致，
  因此标注中的 rotation_y 可直接作为 θ 使用
- 角点序号的 bit0/bit1/bit2 分别表示 x/y/z 取负号:
  0=(+,+,+) 1=(-,+,+) 2=(+,-,+) 3=(-,-,+) 4=(+,+,-) 5=(-,+,-) 6=(+,-,-) 7=(-,-,-)
"""

import numpy as np

from app.core.errors import NonPositiveDepth
from app.models.geometry import Box2D

# (8, 3) 的符号表，行号即角点序号
VERTEX_SIGNS = np.array(
    [[-1.0 if (i >> axis) & 1 else 1.0 for axis in range(3)] for i in range(8)]
)


def wrap_angle(angle):
    """把角度包裹到 (-pi, pi]，支持标量与数组"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rotation_yaw(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_pitch(phi):
    # 绕物体 z 轴 (横向)
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_roll(alpha):
    # 绕物体 x 轴 (纵向)
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_from_angles(theta, phi=0.0, alpha=0.0):
    """
    由偏航、俯仰、横滚角构造旋转矩阵

    参数:
    theta (float): 偏航角 (弧度)
    phi (float): 俯仰角 (弧度)
    alpha (float): 横滚角 (弧度)

    返回:
    numpy.ndarray: 3x3 正交矩阵 R_yaw·R_pitch·R_roll
    """
    return rotation_yaw(theta) @ rotation_pitch(phi) @ rotation_roll(alpha)


def yaw_from_rotation(R):
    """从俯仰、横滚为零的旋转矩阵中取出偏航角"""
    R = np.asarray(R, dtype=float)
    return wrap_angle(np.arctan2(R[0, 2], R[0, 0]))


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def box_vertices(dims):
    """物体坐标系下的 8 个角点，顺序见模块说明"""
    return VERTEX_SIGNS * (0.5 * dims.as_array())


def box_rotation(box):
    return rotation_from_angles(box.yaw, box.pitch, box.roll)


def box_corners(box):
    """相机坐标系下的 8 个角点 R·X_j + T"""
    return box_vertices(box.dims) @ box_rotation(box).T + box.T


def project_points(K, points):
    """
    透视投影一组相机坐标系点

    参数:
    K (CameraIntrinsics): 相机内参
    points (array): (N, 3) 相机坐标系点

    返回:
    numpy.ndarray: (N, 2) 像素坐标
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    depth = points[:, 2]
    if np.any(depth <= 0):
        raise NonPositiveDepth(float(depth.min()))
    homog = points @ K.matrix.T
    return homog[:, :2] / homog[:, 2:3]


def project(K, R, T, X_o):
    """公式 x = K [R T] X_o 的透视投影，返回 (u, v)"""
    point = np.asarray(R, dtype=float) @ np.asarray(X_o, dtype=float) + np.asarray(T, dtype=float)
    return project_points(K, point[None, :])[0]


def rect_from_points(uv):
    uv = np.asarray(uv, dtype=float)
    return Box2D(
        x_min=float(uv[:, 0].min()),
        y_min=float(uv[:, 1].min()),
        x_max=float(uv[:, 0].max()),
        y_max=float(uv[:, 1].max()),
    )


def project_box(K, box):
    """3D框 8 个角点投影后的紧致外接矩形"""
    return rect_from_points(project_points(K, box_corners(box)))
