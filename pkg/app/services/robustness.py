"""2D框噪声下的平移求解误差 (按真值距离分桶)"""

import math

import numpy as np
import pandas as pd

from app.core.errors import InvalidParameter, SolverError
from app.core.logging import logging
from app.models.geometry import Box2D, Box3D, Dimensions
from app.services.geometry import project_box, rotation_yaw
from app.services.translation_solver import ConstraintMode, lift

CAMERA_HEIGHT = 1.65
MIN_DISTANCE = 6.0
MAX_AZIMUTH = 0.4


def random_upright_box(rng, max_distance=50.0):
    """相机前方随机放置的车辆尺寸竖直框"""
    dims = Dimensions(rng.uniform(3.4, 4.6), rng.uniform(1.4, 1.7), rng.uniform(1.5, 1.9))
    distance = rng.uniform(MIN_DISTANCE, max_distance)
    azimuth = rng.uniform(-MAX_AZIMUTH, MAX_AZIMUTH)
    center = (
        distance * math.sin(azimuth),
        CAMERA_HEIGHT - dims.dy / 2.0,
        distance * math.cos(azimuth),
    )
    return Box3D(center=center, dims=dims, yaw=rng.uniform(-math.pi, math.pi))


def noise_study(K, n_boxes, sigma_px, rng, bin_width=10.0, max_distance=50.0, mode="kitti"):
    """
    给 2D框四条边加高斯噪声，用精确的 R 与尺寸求解平移，统计中心误差

    参数:
    K (CameraIntrinsics): 相机内参
    n_boxes (int): 随机框数量
    sigma_px (float): 噪声标准差 (像素)
    rng (numpy.random.Generator): 随机数发生器
    bin_width (float): 距离分桶宽度 (米)
    max_distance (float): 最大距离 (米)

    返回:
    pandas.DataFrame: 每桶一行，列为 bin_start, bin_end, count, failures,
    median_center_error, mean_center_error
    """
    if n_boxes < 1:
        raise InvalidParameter(f"n_boxes 必须 ≥ 1: {n_boxes}")
    if max_distance <= MIN_DISTANCE:
        raise InvalidParameter(f"max_distance 必须大于 {MIN_DISTANCE} 米")

    mode = ConstraintMode(mode)
    rows = []
    for _ in range(n_boxes):
        box = random_upright_box(rng, max_distance)
        distance = float(np.linalg.norm(box.T))
        exact = project_box(K, box)
        noise = rng.normal(0.0, sigma_px, 4)
        try:
            noisy = Box2D(
                exact.x_min + noise[0],
                exact.y_min + noise[2],
                exact.x_max + noise[1],
                exact.y_max + noise[3],
            )
            result = lift(K, rotation_yaw(box.yaw), box.dims, noisy, mode)
        except (SolverError, InvalidParameter) as e:
            logging.debug(f"距离 {distance:.1f} m 的框求解失败: {e}")
            rows.append({"distance": distance, "center_error": np.nan})
            continue
        rows.append({"distance": distance, "center_error": float(np.linalg.norm(result.T - box.T))})

    samples = pd.DataFrame(rows)
    n_bins = max(int(math.ceil(max_distance / bin_width)), 1)
    samples["bin"] = np.minimum(samples["distance"] // bin_width, n_bins - 1).astype(int)

    bins = range(n_bins)
    grouped = samples.groupby("bin")["center_error"]
    table = pd.DataFrame(
        {
            "bin_start": [b * bin_width for b in bins],
            "bin_end": [(b + 1) * bin_width for b in bins],
            "count": grouped.size().reindex(bins, fill_value=0).to_numpy(),
            "failures": samples["center_error"].isna().groupby(samples["bin"]).sum()
            .reindex(bins, fill_value=0)
            .to_numpy(),
            "median_center_error": grouped.median().reindex(bins).to_numpy(),
            "mean_center_error": grouped.mean().reindex(bins).to_numpy(),
        }
    )
    logging.info(
        f"噪声实验: {n_boxes} 个框, σ={sigma_px} px, 失败 {int(samples['center_error'].isna().sum())} 个"
    )
    return table
