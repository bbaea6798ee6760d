import math
from pathlib import Path

import pandas as pd

from app.core.config import settings
from app.core.errors import EXIT_OK
from app.core.logging import logging
from app.models.schemas import DifficultyMetrics, EvalSummary, ViewpointSummary
from app.services.geometry import rotation_yaw
from app.services.kitti_io import load_label_dir, location_to_center, read_results_jsonl, row_to_record
from app.services.metrics import (
    DIFFICULTIES,
    Detection,
    GroundTruth,
    aos,
    distance_binned_errors,
    in_difficulty,
    match_pairs,
    orientation_score,
    os_to_angle,
    pair_errors,
    viewpoint_stats,
)

DISTANCE_BIN = 10.0


def register(subparsers, common):
    parser = subparsers.add_parser(
        "eval", parents=[common], help="计算 AP/AOS/OS、3D 指标与视角统计"
    )
    parser.add_argument("gt", help="KITTI 真值标注目录")
    parser.add_argument("results", help="lift 输出的 JSON-lines 文件，或 KITTI 格式结果目录")
    parser.add_argument("--category", help="评测类别，默认取配置中的 category")
    parser.set_defaults(handler=run, extra_overrides=lambda a: {"category": a.category})


def load_detections(path):
    """结果可以是 JSON-lines 文件或每帧一个 KITTI 文件的目录"""
    path = Path(path)
    if path.is_dir():
        return load_label_dir(path)
    frames = {}
    for row in read_results_jsonl(path):
        frames.setdefault(row.frame, []).append(row_to_record(row))
    return frames


def _difficulty_metrics(gt_frames, det_frames, category, difficulty, iou_thresh):
    gts, dets = [], []
    for frame, records in gt_frames.items():
        frame_gts = []
        for r in records:
            if r.is_dont_care:
                frame_gts.append(GroundTruth(r.box2d, 0.0, ignore=True))
            elif r.category == category:
                frame_gts.append(GroundTruth(r.box2d, r.rotation_y, ignore=not in_difficulty(r, difficulty)))
        gts.append(frame_gts)
        dets.append(
            [
                Detection(r.box2d, r.rotation_y, r.score if r.score is not None else 1.0)
                for r in det_frames.get(frame, [])
                if r.category == category
            ]
        )

    ap, aos_value, _ = aos(gts, dets, iou_thresh, min_height=DIFFICULTIES[difficulty][0])
    os_value = orientation_score(aos_value, ap) if ap > 0 else None
    return DifficultyMetrics(
        difficulty=difficulty,
        num_gt=sum(1 for frame in gts for g in frame if not g.ignore),
        num_det=sum(len(frame) for frame in dets),
        ap=ap,
        aos=aos_value,
        os=os_value,
        angle_error_deg=math.degrees(os_to_angle(min(os_value, 1.0))) if os_value is not None else None,
    )


def _three_d_pairs(gt_frames, det_frames, category, iou_thresh):
    pairs = []
    for frame, records in gt_frames.items():
        gt_items = [
            (location_to_center(r), r.box2d)
            for r in records
            if r.category == category and r.dims is not None
        ]
        det_items = [
            (location_to_center(r), r.box2d, r.score if r.score is not None else 1.0)
            for r in det_frames.get(frame, [])
            if r.category == category and r.dims is not None
        ]
        pairs.extend(match_pairs(gt_items, det_items, iou_thresh))
    return pairs


def cmd_eval(gt_dir, results_path, out_dir, config):
    """
    评测结果并写出 metrics.csv、distance_bins.csv 与 summary.json

    返回:
    EvalSummary
    """
    gt_frames = load_label_dir(gt_dir)
    det_frames = load_detections(results_path)
    missing = sorted(frame for frame in det_frames if frame not in gt_frames)
    for frame in missing:
        logging.warning(f"帧 {frame} 没有真值文件，跳过")

    category = config.category
    difficulties = [
        _difficulty_metrics(gt_frames, det_frames, category, d, config.iou_thresh)
        for d in DIFFICULTIES
    ]

    pairs = _three_d_pairs(gt_frames, det_frames, category, config.iou_thresh)
    errors = pair_errors(pairs)
    viewpoint = None
    if pairs:
        med_err, acc = viewpoint_stats(
            [(rotation_yaw(p.gt_box.yaw), rotation_yaw(p.pred_box.yaw)) for p in pairs]
        )
        viewpoint = ViewpointSummary(count=len(pairs), med_err_deg=math.degrees(med_err), acc_pi_6=acc)

    def _mean(column):
        values = errors[column].dropna() if not errors.empty else pd.Series(dtype=float)
        return float(values.mean()) if len(values) else None

    summary = EvalSummary(
        category=category,
        iou_thresh=config.iou_thresh,
        frames=len(gt_frames),
        missing_gt=missing,
        difficulties=difficulties,
        matched_pairs=len(pairs),
        mean_center_error=_mean("center_error"),
        mean_closest_point_error=_mean("closest_point_error"),
        mean_closest_surface_error=_mean("closest_surface_error"),
        mean_iou3d=_mean("iou3d"),
        viewpoint=viewpoint,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([d.model_dump() for d in difficulties]).to_csv(out_dir / "metrics.csv", index=False)
    distance_binned_errors(pairs, DISTANCE_BIN).to_csv(out_dir / "distance_bins.csv", index=False)
    (out_dir / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    logging.info(f"评测完成: {len(gt_frames)} 帧, {len(pairs)} 对匹配, 输出目录 {out_dir}")
    return summary


def run(args, config):
    out_dir = Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / "eval"
    summary = cmd_eval(args.gt, args.results, out_dir, config)
    for d in summary.difficulties:
        os_text = f"{d.os:.4f}" if d.os is not None else "-"
        print(f"{d.difficulty:<9} AP={d.ap:.4f} AOS={d.aos:.4f} OS={os_text}")
    if summary.mean_center_error is not None:
        iou_text = f"{summary.mean_iou3d:.3f}" if summary.mean_iou3d is not None else "-"
        print(
            f"center={summary.mean_center_error:.3f} m "
            f"closest={summary.mean_closest_point_error:.3f} m iou3d={iou_text}"
        )
    return EXIT_OK
