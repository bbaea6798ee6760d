"""几何领域类型

数值热路径上使用冻结的 dataclass；需要序列化的记录类型见 schemas.py。
"""

import math
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import InvalidParameter


@dataclass(frozen=True)
class CameraIntrinsics:
    """针孔相机内参 K (像素单位)"""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameter(f"焦距必须为正: fx={self.fx}, fy={self.fy}")
        if not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy, self.skew)):
            raise InvalidParameter("相机内参必须是有限值")

    @property
    def matrix(self):
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, K):
        K = np.asarray(K, dtype=float)
        return cls(fx=K[0, 0], fy=K[1, 1], cx=K[0, 2], cy=K[1, 2], skew=K[0, 1])


@dataclass(frozen=True)
class Dimensions:
    """物体坐标系下的尺寸 (米): dx 长, dy 高, dz 宽"""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise InvalidParameter(f"尺寸必须为正: ({self.dx}, {self.dy}, {self.dz})")

    def as_array(self):
        return np.array([self.dx, self.dy, self.dz])

    @classmethod
    def from_array(cls, values):
        dx, dy, dz = (float(v) for v in values)
        return cls(dx, dy, dz)


@dataclass(frozen=True)
class Box2D:
    """轴对齐的 2D 检测框 (像素)"""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidParameter(
                f"2D框无效: x=[{self.x_min}, {self.x_max}], y=[{self.y_min}, {self.y_max}]"
            )

    @property
    def sides(self):
        """按 (左, 右, 上, 下) 顺序返回边坐标"""
        return np.array([self.x_min, self.x_max, self.y_min, self.y_max])

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def center(self):
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self):
        return self.width * self.height

    def shifted(self, dx=0.0, dy=0.0):
        return Box2D(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


@dataclass(frozen=True)
class Box3D:
    """相机坐标系下的 3D 框: 中心 T, 尺寸, 偏航/俯仰/横滚角 (弧度)"""

    center: tuple
    dims: Dimensions
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    _center_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # 角度统一包裹到 (-pi, pi]
        from app.services.geometry import wrap_angle

        center = np.asarray(self.center, dtype=float).reshape(3)
        object.__setattr__(self, "center", tuple(float(v) for v in center))
        object.__setattr__(self, "_center_array", center)
        for name in ("yaw", "pitch", "roll"):
            object.__setattr__(self, name, float(wrap_angle(getattr(self, name))))

    @property
    def T(self):
        return self._center_array.copy()

    @property
    def is_upright(self):
        return self.pitch == 0.0 and self.roll == 0.0
