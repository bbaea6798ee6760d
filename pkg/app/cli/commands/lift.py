from pathlib import Path

from app.core.config import settings
from app.core.errors import EXIT_FAILURE, EXIT_OK, BoxliftError, MalformedLine
from app.core.logging import logging
from app.models.geometry import Box3D
from app.models.schemas import LiftResultRow, ResidualRow
from app.services.geometry import rotation_yaw
from app.services.kitti_io import (
    center_to_location,
    compute_mean_dims,
    dims_std,
    load_calib_dir,
    load_label_dir,
    location_to_center,
    row_to_record,
    write_label_dir,
    write_results_jsonl,
)
from app.services.multibin import dims_from_residual, local_to_global, ray_angle
from app.services.translation_solver import lift

MAX_FAILURE_RATIO = 0.5


def register(subparsers, common):
    parser = subparsers.add_parser(
        "lift", parents=[common], help="由 2D框、朝向与尺寸求解 3D 框平移"
    )
    parser.add_argument("labels", help="KITTI 标注目录 (提供 2D框、alpha 与尺寸)")
    parser.add_argument("calib", help="KITTI 标定目录")
    parser.add_argument("--residuals", help="JSON-lines 尺寸残差文件 (frame, index, delta)")
    parser.add_argument("--kitti-out", dest="kitti_out", help="额外导出 KITTI 格式结果的目录")
    parser.add_argument(
        "--mean-dims",
        dest="mean_dims",
        action="store_true",
        help="所有记录使用类别平均尺寸 (δ = 0)，不使用标注尺寸",
    )
    parser.set_defaults(handler=run)


def load_residuals(path):
    residuals = {}
    with Path(path).open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = ResidualRow.model_validate_json(line)
            except ValueError as e:
                raise MalformedLine(line_no, line.strip()[:60], "不是有效的残差行") from e
            residuals[(row.frame, row.index)] = row.delta
    return residuals


def lift_record(record, calib, mode, dims=None):
    """
    求解单条记录的 3D 框

    全局偏航 θ = θ_ray + alpha，θ_ray 取 2D框中心列；尺寸默认取标注值。
    求得的 T 包含 P2 的平移偏移，减去后得到相机坐标系下的中心。
    """
    K = calib.intrinsics
    theta = local_to_global(record.alpha, ray_angle(K, record.box2d.center[0]))
    if dims is None:
        dims = location_to_center(record).dims
    result = lift(K, rotation_yaw(theta), dims, record.box2d, mode)
    box = Box3D(center=result.T - calib.offset, dims=dims, yaw=theta)
    return box, result


def cmd_lift(
    labels_dir,
    calib_dir,
    out_path,
    config,
    residuals_path=None,
    kitti_out=None,
    use_mean_dims=False,
):
    """
    对目录下每条非 DontCare 记录求解平移，按 (文件, 行) 顺序写出 JSON-lines

    尺寸优先取残差文件 D̄ + δ，其次在 use_mean_dims 时取类别平均 D̄，否则取标注尺寸。
    格式错误的行与求解失败的记录只记日志并计数；失败超过一半时退出码为 1。
    """
    labels = load_label_dir(labels_dir, strict=False)
    calibs = load_calib_dir(calib_dir)
    residuals = load_residuals(residuals_path) if residuals_path else {}
    all_records = [r for records in labels.values() for r in records if r is not None]
    mean_dims = {}

    def category_mean(category):
        if category not in mean_dims:
            mean_dims[category] = compute_mean_dims(all_records, category)
            std = dims_std(all_records, category)
            logging.info(
                f"{category} 平均尺寸 (l, h, w) = {mean_dims[category].as_array().round(3).tolist()}, "
                f"标准差 {std.round(3).tolist()}"
            )
        return mean_dims[category]

    rows, total, failures = [], 0, 0
    for frame, records in labels.items():
        calib = calibs.get(frame)
        for index, record in enumerate(records):
            if record is None:
                total += 1
                failures += 1
                continue
            if record.is_dont_care:
                continue
            total += 1
            if calib is None:
                logging.warning(f"帧 {frame} 缺少标定文件，跳过第 {index} 条")
                failures += 1
                continue
            try:
                dims = None
                if (frame, index) in residuals:
                    dims = dims_from_residual(category_mean(record.category), residuals[(frame, index)])
                elif use_mean_dims:
                    dims = category_mean(record.category)
                box, result = lift_record(record, calib, config.mode.value, dims)
            except BoxliftError as e:
                logging.warning(f"帧 {frame} 第 {index} 条 ({record.category}) 求解失败: {e}")
                failures += 1
                continue
            rows.append(
                LiftResultRow(
                    frame=frame,
                    index=index,
                    category=record.category,
                    alpha=record.alpha,
                    box2d=(record.box2d.x_min, record.box2d.y_min, record.box2d.x_max, record.box2d.y_max),
                    dims=(box.dims.dy, box.dims.dz, box.dims.dx),
                    location=center_to_location(box),
                    rotation_y=box.yaw,
                    score=record.score if record.score is not None else 1.0,
                    configuration=result.configuration.corners,
                    configuration_index=result.configuration_index,
                    residual=result.residual,
                    reprojection_error=result.reprojection_error,
                )
            )

    write_results_jsonl(rows, out_path)
    if kitti_out:
        frames = {frame: [] for frame in labels}
        for row in rows:
            frames[row.frame].append(row_to_record(row))
        write_label_dir(kitti_out, frames)

    logging.info(f"求解完成: {len(rows)}/{total} 条成功，结果写入 {out_path}")
    print(f"lifted {len(rows)}/{total} records -> {out_path}")
    if total and failures / total > MAX_FAILURE_RATIO:
        logging.error(f"失败比例 {failures}/{total} 超过 {MAX_FAILURE_RATIO:.0%}")
        return EXIT_FAILURE
    return EXIT_OK


def run(args, config):
    out_path = Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / "results.jsonl"
    return cmd_lift(
        args.labels, args.calib, out_path, config, args.residuals, args.kitti_out, args.mean_dims
    )
