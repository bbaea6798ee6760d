"""KITTI 标注/标定文件与内部 JSON-lines 结果格式的读写"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.core.errors import (
    InvalidParameter,
    MalformedLine,
    MissingDimensions,
    MissingKey,
    NoSamples,
)
from app.core.logging import logging
from app.models.geometry import Box2D, Box3D, CameraIntrinsics, Dimensions
from app.models.schemas import DetectionRecord, LiftResultRow
from app.services.geometry import wrap_angle
from app.services.multibin import ray_angle

LABEL_COLUMNS = 15
DONT_CARE = "DontCare"


@dataclass(frozen=True)
class CalibRecord:
    """P2 投影矩阵 (3x4)；P2 = K·[I | t]，t 为相机平移偏移"""

    p2: np.ndarray
    intrinsics: CameraIntrinsics = field(init=False, repr=False)
    offset: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p2 = np.asarray(self.p2, dtype=float).reshape(3, 4)
        if abs(p2[2, 2] - 1.0) > 1e-6:
            raise InvalidParameter(f"P2[2][2] 应为 1，实际为 {p2[2, 2]}")
        K = CameraIntrinsics.from_matrix(p2[:, :3])
        object.__setattr__(self, "p2", p2)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "offset", np.linalg.solve(K.matrix, p2[:, 3]))


# 标注文件

def _parse_float(token, line_no):
    try:
        return float(token)
    except ValueError:
        raise MalformedLine(line_no, token, "不是数字") from None


def parse_label_line(line, line_no=1):
    tokens = line.split()
    if len(tokens) not in (LABEL_COLUMNS, LABEL_COLUMNS + 1):
        raise MalformedLine(line_no, line.strip(), f"列数为 {len(tokens)}，应为 15 或 16")

    category = tokens[0]
    values = [_parse_float(t, line_no) for t in tokens[1:]]
    if not values[1].is_integer():
        raise MalformedLine(line_no, tokens[2], "遮挡等级必须是整数")

    try:
        box2d = Box2D(*values[3:7])
        # 标注中的尺寸顺序为 (h, w, l)
        return DetectionRecord(
            category=category,
            truncated=values[0],
            occluded=int(values[1]),
            alpha=values[2],
            box2d=box2d,
            dims=tuple(values[7:10]),
            location=tuple(values[10:13]),
            rotation_y=values[13],
            score=values[14] if len(values) == 15 else None,
        )
    except (InvalidParameter, ValidationError) as e:
        raise MalformedLine(line_no, line.strip(), str(e).splitlines()[0]) from e


def parse_label_file(text, strict=True):
    """
    解析 KITTI 标注 (或结果) 文件

    参数:
    text (str): 文件内容，每行一个物体，15 列 (标注) 或 16 列 (结果，多一列得分)
    strict (bool): 为 False 时格式错误的行记为 None 并记录警告，不中断解析

    返回:
    list[DetectionRecord | None]: 按行顺序的记录；空行被跳过，DontCare 与未知类别原样保留
    """
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_label_line(line, line_no))
        except MalformedLine as e:
            if strict:
                raise
            logging.warning(str(e))
            records.append(None)
    return records


def format_record(record, precision=2):
    """一条记录的 KITTI 行；有得分时追加第 16 列"""
    dims = record.dims if record.dims is not None else (-1.0, -1.0, -1.0)
    b = record.box2d
    values = [
        record.truncated,
        record.alpha,
        b.x_min,
        b.y_min,
        b.x_max,
        b.y_max,
        *dims,
        *record.location,
        record.rotation_y,
    ]
    fixed = [f"{v:.{precision}f}" for v in values]
    fields = [record.category, fixed[0], str(record.occluded), *fixed[1:]]
    if record.score is not None:
        fields.append(f"{record.score:.{max(precision, 4)}f}")
    return " ".join(fields)


def write_results(records, precision=2):
    """按输入顺序输出 KITTI 格式文本；空输入返回空字符串"""
    return "".join(format_record(r, precision) + "\n" for r in records)


# 标定文件

def parse_calib_file(text):
    """
    解析 KITTI 标定文件，只要求 P2

    参数:
    text (str): "KEY: v0 v1 ..." 形式的行

    返回:
    CalibRecord
    """
    for line_no, line in enumerate(text.splitlines(), start=1):
        if ":" not in line:
            continue
        key, value = line.split(":", 1)
        if key.strip() != "P2":
            continue
        tokens = value.split()
        if len(tokens) != 12:
            raise MalformedLine(line_no, line.strip(), f"P2 应有 12 个数，实际 {len(tokens)} 个")
        p2 = np.array([_parse_float(t, line_no) for t in tokens]).reshape(3, 4)
        return CalibRecord(p2)
    raise MissingKey("P2")


# 坐标换算

def location_to_center(record):
    """
    KITTI 底面中心 location 转为 Box3D

    center = location - (0, h/2, 0)；尺寸 (h, w, l) 映射为 (dx=l, dy=h, dz=w)；yaw = rotation_y
    """
    if record.dims is None:
        raise MissingDimensions(f"{record.category} 记录没有尺寸")
    h, w, l = record.dims
    x, y, z = record.location
    return Box3D(center=(x, y - h / 2.0, z), dims=Dimensions(l, h, w), yaw=record.rotation_y)


def center_to_location(box):
    x, y, z = box.center
    return (x, y + box.dims.dy / 2.0, z)


def record_from_box(box, box2d, K, category="Car", score=None, truncated=0.0, occluded=0):
    """由 3D框和 2D框生成记录，alpha = wrap(θ - θ_ray)，θ_ray 取 2D框中心列"""
    theta_ray = ray_angle(K, box2d.center[0])
    return DetectionRecord(
        category=category,
        truncated=truncated,
        occluded=occluded,
        alpha=wrap_angle(box.yaw - theta_ray),
        box2d=box2d,
        dims=(box.dims.dy, box.dims.dz, box.dims.dx),
        location=center_to_location(box),
        rotation_y=box.yaw,
        score=score,
    )


# 尺寸统计

def _category_dims(records, category):
    dims = [
        r.dims
        for r in records
        if r is not None and r.category == category and not r.is_dont_care and r.dims
    ]
    if not dims:
        raise NoSamples(category)
    # (h, w, l) -> (dx=l, dy=h, dz=w)
    return np.array(dims)[:, [2, 0, 1]]


def compute_mean_dims(records, category):
    """类别平均尺寸 D̄ (逐轴算术平均)"""
    return Dimensions.from_array(_category_dims(records, category).mean(axis=0))


def dims_std(records, category):
    """逐轴标准差，顺序 (dx, dy, dz)"""
    return _category_dims(records, category).std(axis=0)


# 目录与 JSON-lines

def _frame_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"目录不存在: {directory}")
    return sorted(directory.glob("*.txt"))


def load_label_dir(directory, strict=True):
    """
    读取目录下所有 *.txt，返回 {帧编号: 记录列表}，按文件名排序

    strict 为 False 时格式错误的行在列表中占位为 None，行序号保持不变
    """
    frames = {}
    for path in _frame_files(directory):
        try:
            frames[path.stem] = parse_label_file(path.read_text(encoding="utf-8"), strict)
        except MalformedLine as e:
            logging.error(f"{path.name}: {e}")
            raise
    logging.info(f"从 {directory} 读取了 {len(frames)} 个标注文件")
    return frames


def load_calib_dir(directory):
    calibs = {}
    for path in _frame_files(directory):
        calibs[path.stem] = parse_calib_file(path.read_text(encoding="utf-8"))
    return calibs


def write_label_dir(directory, frames, precision=2):
    """每帧写一个 KITTI 格式文件 <帧编号>.txt"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame, records in sorted(frames.items()):
        (directory / f"{frame}.txt").write_text(write_results(records, precision), encoding="utf-8")


def write_results_jsonl(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(row.model_dump_json() + "\n")


def read_results_jsonl(path):
    rows = []
    with Path(path).open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(LiftResultRow.model_validate_json(line))
            except ValidationError as e:
                raise MalformedLine(line_no, line.strip()[:60], "不是有效的结果行") from e
    return rows


def row_to_record(row):
    """JSON-lines 结果行转为 DetectionRecord"""
    return DetectionRecord(
        category=row.category,
        truncated=row.truncated,
        occluded=row.occluded,
        alpha=row.alpha,
        box2d=Box2D(*row.box2d),
        dims=row.dims,
        location=row.location,
        rotation_y=row.rotation_y,
        score=row.score,
    )
