"""训练侧的数据增强: 2D框抖动与水平镜像

两种变换都保持 θ = θ_ray + θ_l: 2D框移动后 θ_ray 改变，局部朝向随之重算。
"""

import math

from app.models.geometry import Box2D, CameraIntrinsics
from app.services.geometry import wrap_angle
from app.services.multibin import ray_angle


def jitter_box2d(K, record, dx, dy):
    """平移 2D框 (dx, dy) 像素，全局偏航不变，alpha 按新的视线重算"""
    box2d = record.box2d.shifted(dx, dy)
    alpha = wrap_angle(record.rotation_y - ray_angle(K, box2d.center[0]))
    return record.model_copy(update={"box2d": box2d, "alpha": alpha})


def mirror_intrinsics(K, image_width):
    """水平翻转后的图像对应的内参: u' = W - u，即 cx' = W - cx，skew 取反"""
    return CameraIntrinsics(
        fx=K.fx, fy=K.fy, cx=image_width - K.cx, cy=K.cy, skew=-K.skew
    )


def mirror_record(record, image_width):
    """
    水平镜像一条标注

    参数:
    record (DetectionRecord): 原记录
    image_width (float): 图像宽度 (像素)

    返回:
    DetectionRecord: 2D框列坐标 u' = W - u, location 的 x 取反,
    rotation_y' = wrap(π - rotation_y), alpha' = wrap(π - alpha)。
    镜像后的记录与 mirror_intrinsics(K, W) 一致。
    """
    b = record.box2d
    box2d = Box2D(image_width - b.x_max, b.y_min, image_width - b.x_min, b.y_max)
    x, y, z = record.location
    return record.model_copy(
        update={
            "box2d": box2d,
            "location": (-x, y, z),
            "rotation_y": wrap_angle(math.pi - record.rotation_y),
            "alpha": wrap_angle(math.pi - record.alpha),
        }
    )
