"""MultiBin 朝向编码/解码、损失与解析梯度，以及局部/全局朝向换算

一个 n-bin 的编码对每个 bin i 给出 (置信度 c_i, cos Δθ_i, sin Δθ_i)。
bin 中心 center_i = wrap(2πi/n)，相邻 bin 的覆盖范围互相重叠。

损失:
    L_θ = L_conf + w·L_loc
    L_conf = softmax 交叉熵，目标为距离最近的 bin (one-hot)
    L_loc = -(1/n_θ*) Σ_{覆盖 θ* 的 bin} cos(θ* - center_i - Δθ_i)
    L_dims = (1/3) Σ (D* - D̄ - δ)²
    L = α·L_dims + L_θ

所有损失都有批量形式 (*_batch)，单样本接口只是它们的薄封装。
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from app.core.errors import InvalidParameter, ZeroVector
from app.models.geometry import Dimensions
from app.services.geometry import wrap_angle

DEFAULT_OVERLAP = 0.1
NORM_EPS = 1e-12


@dataclass(frozen=True)
class BinLayout:
    """n 个均匀分布、互相重叠的角度 bin"""

    n_bins: int
    coverage_half_width: float
    centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_bins < 1:
            raise InvalidParameter(f"bin 数必须 ≥ 1: {self.n_bins}")
        spacing = 2.0 * math.pi / self.n_bins
        if self.coverage_half_width < 0.5 * spacing:
            raise InvalidParameter("覆盖半宽小于 π/n，部分角度不被任何 bin 覆盖")
        if self.n_bins >= 2 and self.coverage_half_width >= spacing:
            raise InvalidParameter("覆盖半宽不小于 2π/n，bin 失去区分度")
        centers = wrap_angle(spacing * np.arange(self.n_bins))
        object.__setattr__(self, "centers", np.atleast_1d(centers))

    @classmethod
    def uniform(cls, n_bins, overlap=DEFAULT_OVERLAP):
        """半覆盖宽度 (1 + overlap)·π/n"""
        return cls(n_bins, (1.0 + overlap) * math.pi / n_bins)


@dataclass(frozen=True)
class MultiBinEncoding:
    """confidence 为 (n,)；residual 为 (n, 2) 的 (cos Δθ, sin Δθ)"""

    confidence: np.ndarray
    residual: np.ndarray

    @property
    def n_bins(self):
        return len(self.confidence)

    @property
    def angles(self):
        return np.arctan2(self.residual[:, 1], self.residual[:, 0])


# 覆盖与编解码

def angular_distance(a, b):
    return np.abs(wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def covering_mask(layout, theta):
    """(B, n) 布尔矩阵: bin 是否覆盖对应的 θ"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    distance = angular_distance(theta[:, None], layout.centers[None, :])
    return np.atleast_2d(distance <= layout.coverage_half_width)


def bins_covering(layout, theta):
    """覆盖角度 θ 的全部 bin 序号"""
    return set(np.flatnonzero(covering_mask(layout, theta)[0]).tolist())


def nearest_bin(layout, theta):
    """距离最近的 bin，距离相同取较小序号"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    distance = angular_distance(theta[:, None], layout.centers[None, :])
    return np.argmin(distance, axis=1)


def encode(layout, theta):
    """
    生成角度 θ 的 MultiBin 训练目标

    参数:
    layout (BinLayout): bin 划分
    theta (float): 真实角度，已包裹到 (-pi, pi]

    返回:
    MultiBinEncoding: one-hot 置信度；覆盖 θ 的 bin 给出残差 (cos, sin)，其余为 (1, 0)
    """
    confidence, residual = encode_batch(layout, theta)
    return MultiBinEncoding(confidence=confidence[0], residual=residual[0])


def encode_batch(layout, theta):
    """批量编码: θ (B,) -> confidence (B, n), residual (B, n, 2)"""
    theta = wrap_angle(np.atleast_1d(np.asarray(theta, dtype=float)))
    rows = np.arange(len(theta))
    confidence = np.zeros((len(theta), layout.n_bins))
    confidence[rows, nearest_bin(layout, theta)] = 1.0
    delta = np.where(covering_mask(layout, theta), wrap_angle(theta[:, None] - layout.centers[None, :]), 0.0)
    residual = np.stack([np.cos(delta), np.sin(delta)], axis=-1)
    return confidence, residual


def decode_batch(layout, confidence, residual):
    """批量解码: confidence (B, n), residual (B, n, 2) -> θ (B,)"""
    confidence = np.atleast_2d(confidence)
    residual = np.asarray(residual, dtype=float).reshape(confidence.shape[0], layout.n_bins, 2)
    best = np.argmax(confidence, axis=1)  # 并列时 argmax 返回较小序号
    rows = np.arange(confidence.shape[0])
    delta = np.arctan2(residual[rows, best, 1], residual[rows, best, 0])
    return wrap_angle(layout.centers[best] + delta)


def decode(layout, encoding):
    """取置信度最大的 bin，把它的 Δθ 加到该 bin 的中心上"""
    if encoding.n_bins != layout.n_bins:
        raise InvalidParameter(f"编码有 {encoding.n_bins} 个 bin，划分有 {layout.n_bins} 个")
    return float(decode_batch(layout, encoding.confidence[None], encoding.residual[None])[0])


# 损失

def loss_conf_batch(logits, targets):
    """
    softmax 交叉熵 (批量平均)

    参数:
    logits (array): (B, n)
    targets (array): (B,) 目标 bin 序号

    返回:
    tuple: (loss, grad)，grad 形状同 logits，已除以 B
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    targets = np.asarray(targets, dtype=int).reshape(-1)
    batch = logits.shape[0]
    rows = np.arange(batch)
    loss = np.mean(logsumexp(logits, axis=1) - logits[rows, targets])
    grad = softmax(logits, axis=1)
    grad[rows, targets] -= 1.0
    return float(loss), grad / batch


def loss_conf(logits, target_bin):
    """单样本置信度损失，梯度为 softmax - one-hot"""
    loss, grad = loss_conf_batch(np.asarray(logits, dtype=float)[None], [target_bin])
    return loss, grad[0]


def loss_loc_batch(layout, raw, theta):
    """
    定位损失 (批量平均)，梯度经过 L2 归一化层回传到原始 (cos, sin) 输出

    参数:
    layout (BinLayout): bin 划分
    raw (array): (B, n, 2) 未归一化的 (cos, sin)
    theta (array): (B,) 真实角度

    返回:
    tuple: (loss, grad)，grad 形状同 raw，已除以 B
    """
    raw = np.asarray(raw, dtype=float).reshape(-1, layout.n_bins, 2)
    theta = wrap_angle(np.atleast_1d(np.asarray(theta, dtype=float)))
    batch = raw.shape[0]

    norm = np.linalg.norm(raw, axis=2)
    if np.any(norm < NORM_EPS):
        raise ZeroVector(f"(cos, sin) 输出的模长过小: {norm.min():.3g}")
    unit = raw / norm[..., None]

    mask = covering_mask(layout, theta)
    weight = mask / mask.sum(axis=1, keepdims=True)
    # cos(θ*-c-Δθ) = cos(θ*-c)·cosΔθ + sin(θ*-c)·sinΔθ
    offset = theta[:, None] - layout.centers[None, :]
    target = np.stack([np.cos(offset), np.sin(offset)], axis=2)
    per_sample = -np.sum(weight * np.sum(target * unit, axis=2), axis=1)

    # d(unit)/d(raw) = (I - u·uᵀ)/|raw|
    g_unit = -weight[..., None] * target
    g_raw = (g_unit - unit * np.sum(g_unit * unit, axis=2, keepdims=True)) / norm[..., None]
    return float(per_sample.mean()), g_raw / batch


def loss_loc(layout, raw, theta):
    """单样本定位损失，raw 为 (n, 2)"""
    loss, grad = loss_loc_batch(layout, np.asarray(raw, dtype=float)[None], [theta])
    return loss, grad[0]


def loss_total_orientation(conf_part, loc_part, w=1.0):
    """L_θ = L_conf + w·L_loc"""
    if not w > 0:
        raise InvalidParameter(f"权重 w 必须为正: {w}")
    return conf_part + w * loc_part


def loss_dims_batch(target, mean, delta):
    """批量尺寸损失: 各样本三轴平方残差的均值再取批量平均"""
    target = np.atleast_2d(np.asarray(target, dtype=float))
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    diff = target - np.asarray(mean, dtype=float) - delta
    loss = np.mean(np.mean(diff**2, axis=1))
    grad = -(2.0 / 3.0) * diff / target.shape[0]
    return float(loss), grad


def loss_dims(target, mean, delta):
    """
    尺寸残差的 L2 损失

    参数:
    target (Dimensions): 真实尺寸 D*
    mean (Dimensions): 类别平均尺寸 D̄
    delta (array): 预测的残差 δ (3,)

    返回:
    tuple: (loss, grad)，grad = -(2/3)(D* - D̄ - δ)
    """
    loss, grad = loss_dims_batch(target.as_array(), mean.as_array(), delta)
    return loss, grad[0]


def loss_total(l_dims, l_theta, alpha=1.0):
    """L = α·L_dims + L_θ"""
    if not alpha > 0:
        raise InvalidParameter(f"权重 α 必须为正: {alpha}")
    return alpha * l_dims + l_theta


def dims_from_residual(mean, delta):
    """推理时的尺寸 D = D̄ + δ"""
    return Dimensions.from_array(mean.as_array() + np.asarray(delta, dtype=float))


# 局部/全局朝向

def ray_angle(K, u):
    """过像素列 u 的视线的偏航角 atan2(u - cx, fx)"""
    return float(np.arctan2(u - K.cx, K.fx))


def local_to_global(theta_local, theta_ray):
    """θ = wrap(θ_ray + θ_l)"""
    return wrap_angle(theta_ray + theta_local)


def global_to_local(theta, theta_ray):
    """θ_l = wrap(θ - θ_ray)"""
    return wrap_angle(theta - theta_ray)
