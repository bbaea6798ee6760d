"""合成数据上的小型朝向回归实验: MultiBin 与单标量 L2 回归的对比

输入为带噪声的 (cos θ*, sin θ*)，单隐层 tanh 网络，手写反向传播，普通梯度下降。
L2 基线直接回归包裹后的角度标量，在 ±π 处存在不连续。
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from app.core.errors import DivergedLoss, InvalidParameter
from app.core.logging import logging
from app.services.geometry import wrap_angle
from app.services.metrics import orientation_similarity
from app.services.multibin import (
    BinLayout,
    DEFAULT_OVERLAP,
    decode_batch,
    loss_conf_batch,
    loss_loc_batch,
    nearest_bin,
)

MULTIBIN = "multibin"
L2_SCALAR = "l2_scalar"
INIT_SCALE = 0.1
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class SyntheticSample:
    theta: float
    features: tuple


@dataclass(frozen=True)
class ToyDataset:
    features: np.ndarray  # (N, 2)
    theta: np.ndarray  # (N,)

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, i):
        return SyntheticSample(float(self.theta[i]), tuple(self.features[i]))


def make_dataset(n, sigma, rng):
    """θ* 在 (-π, π] 上均匀分布，特征为 (cos θ* + ε, sin θ* + ε)，ε ~ N(0, σ²)"""
    if n < 1:
        raise InvalidParameter(f"样本数必须 ≥ 1: {n}")
    theta = wrap_angle(rng.uniform(-math.pi, math.pi, n))
    features = np.stack([np.cos(theta), np.sin(theta)], axis=1) + rng.normal(0.0, sigma, (n, 2))
    return ToyDataset(features=features, theta=np.atleast_1d(theta))


class ToyModel:
    """单隐层网络；MultiBin 头输出 n 个置信度 logit 与 n 组 (cos, sin)，L2 头输出一个标量"""

    def __init__(self, kind, n_bins=1, hidden=32, seed=0, overlap=DEFAULT_OVERLAP):
        if kind not in (MULTIBIN, L2_SCALAR):
            raise InvalidParameter(f"未知的模型类型: {kind}")
        if n_bins < 1 or hidden < 1:
            raise InvalidParameter(f"n_bins 与 hidden 必须 ≥ 1: {n_bins}, {hidden}")
        self.kind = kind
        self.n_bins = n_bins if kind == MULTIBIN else 1
        self.layout = BinLayout.uniform(self.n_bins, overlap) if kind == MULTIBIN else None
        out = 3 * self.n_bins if kind == MULTIBIN else 1

        rng = np.random.default_rng(seed)
        self.params = {
            "W1": rng.uniform(-INIT_SCALE, INIT_SCALE, (2, hidden)),
            "b1": rng.uniform(-INIT_SCALE, INIT_SCALE, hidden),
            "W2": rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden, out)),
            "b2": rng.uniform(-INIT_SCALE, INIT_SCALE, out),
        }

    @property
    def name(self):
        return f"{MULTIBIN}({self.n_bins})" if self.kind == MULTIBIN else L2_SCALAR

    def forward(self, X):
        p = self.params
        hidden = np.tanh(X @ p["W1"] + p["b1"])
        return hidden, hidden @ p["W2"] + p["b2"]

    def _split(self, output):
        n = self.n_bins
        return output[:, :n], output[:, n:].reshape(-1, n, 2)

    def predict(self, X):
        _, output = self.forward(np.atleast_2d(X))
        if self.kind == L2_SCALAR:
            return wrap_angle(output[:, 0])
        logits, raw = self._split(output)
        return decode_batch(self.layout, logits, raw)

    def loss_and_grads(self, X, theta, w=1.0):
        """
        批量损失与各参数的解析梯度

        返回:
        tuple: (loss, {参数名: 梯度})
        """
        X = np.atleast_2d(X)
        theta = np.atleast_1d(theta)
        hidden, output = self.forward(X)
        batch = X.shape[0]

        if self.kind == L2_SCALAR:
            diff = output[:, 0] - theta
            loss = 0.5 * float(np.mean(diff**2))
            g_out = (diff / batch)[:, None]
        else:
            logits, raw = self._split(output)
            conf_loss, g_logits = loss_conf_batch(logits, nearest_bin(self.layout, theta))
            loc_loss, g_raw = loss_loc_batch(self.layout, raw, theta)
            loss = conf_loss + w * loc_loss
            g_out = np.concatenate([g_logits, w * g_raw.reshape(batch, -1)], axis=1)

        p = self.params
        g_hidden = (g_out @ p["W2"].T) * (1.0 - hidden**2)
        grads = {
            "W1": X.T @ g_hidden,
            "b1": g_hidden.sum(axis=0),
            "W2": hidden.T @ g_out,
            "b2": g_out.sum(axis=0),
        }
        return loss, grads


def gradient_check(model, X, theta, w=1.0, eps=1e-6):
    """
    中心差分检查每个参数张量的梯度

    返回:
    dict: {参数名: ||解析 - 数值|| / (||解析|| + ||数值||)}
    """
    _, analytic = model.loss_and_grads(X, theta, w)
    errors = {}
    for name in PARAM_NAMES:
        param = model.params[name]
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + eps
            plus, _ = model.loss_and_grads(X, theta, w)
            param[idx] = original - eps
            minus, _ = model.loss_and_grads(X, theta, w)
            param[idx] = original
            numeric[idx] = (plus - minus) / (2.0 * eps)
        scale = np.linalg.norm(analytic[name]) + np.linalg.norm(numeric)
        errors[name] = float(np.linalg.norm(analytic[name] - numeric) / max(scale, 1e-12))
    return errors


def train(
    kind,
    n_bins,
    data,
    epochs=200,
    lr=0.05,
    seed=0,
    w=1.0,
    batch_size=64,
    hidden=32,
    overlap=DEFAULT_OVERLAP,
):
    """
    普通小批量梯度下降训练

    参数:
    kind (str): "multibin" 或 "l2_scalar"
    n_bins (int): MultiBin 的 bin 数，L2 模型忽略
    data (ToyDataset): 训练集
    epochs (int): 轮数
    lr (float): 学习率
    seed (int): 同时决定初始化与每轮的样本顺序

    返回:
    tuple: (ToyModel, 每轮平均损失列表)
    """
    if len(data) == 0:
        raise InvalidParameter("训练集为空")
    model = ToyModel(kind, n_bins, hidden=hidden, seed=seed, overlap=overlap)
    rng = np.random.default_rng(seed + 1)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(data), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = model.loss_and_grads(data.features[idx], data.theta[idx], w)
            if not math.isfinite(loss):
                raise DivergedLoss(f"{model.name} 第 {epoch} 轮损失为 {loss}")
            for name in PARAM_NAMES:
                model.params[name] -= lr * grads[name]
            total += loss * len(idx)
        history.append(total / len(data))
        if epoch % 50 == 0:
            logging.debug(f"{model.name} 第 {epoch} 轮平均损失 {history[-1]:.5f}")
    return model, history


def evaluate(model, features, theta):
    """
    返回:
    tuple: (角度误差中位数 (弧度), 平均朝向相似度 OS)
    """
    predicted = model.predict(features)
    delta = wrap_angle(np.asarray(predicted) - np.asarray(theta))
    errors = np.abs(np.atleast_1d(delta))
    return float(np.median(errors)), float(np.mean(orientation_similarity(errors)))


def run_bin_sweep(settings, seed=0, w=1.0, overlap=DEFAULT_OVERLAP):
    """
    bin 数对朝向精度的影响；bin 数为 1 时即单标量 L2 回归

    参数:
    settings (ToySettings): 实验配置

    返回:
    tuple: (结果表 DataFrame, 损失曲线 DataFrame)
    """
    train_set = make_dataset(settings.samples, settings.sigma, np.random.default_rng(seed))
    test_set = make_dataset(settings.test_samples, settings.sigma, np.random.default_rng(seed + 1))

    rows, curves = [], []
    for bins in settings.sweep:
        kind = L2_SCALAR if bins == 1 else MULTIBIN
        model, history = train(
            kind,
            bins,
            train_set,
            epochs=settings.epochs,
            lr=settings.lr,
            seed=seed,
            w=w,
            batch_size=settings.batch_size,
            hidden=settings.hidden,
            overlap=overlap,
        )
        median_error, os_value = evaluate(model, test_set.features, test_set.theta)
        logging.info(f"bins={bins} ({model.name}): OS={os_value:.4f}, 误差中位数={median_error:.4f} rad")
        rows.append(
            {
                "bins": bins,
                "model": model.name,
                "os": os_value,
                "median_error": median_error,
                "final_loss": history[-1] if history else float("nan"),
            }
        )
        curves.extend({"bins": bins, "epoch": i, "loss": loss} for i, loss in enumerate(history))
    return pd.DataFrame(rows), pd.DataFrame(curves, columns=["bins", "epoch", "loss"])
