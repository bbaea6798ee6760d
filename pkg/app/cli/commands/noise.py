from pathlib import Path

import numpy as np

from app.core.config import settings
from app.core.errors import EXIT_OK
from app.models.geometry import CameraIntrinsics
from app.services.kitti_io import parse_calib_file
from app.services.robustness import noise_study

# KITTI 左彩色相机的常见内参
KITTI_INTRINSICS = CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)


def register(subparsers, common):
    parser = subparsers.add_parser(
        "noise", parents=[common], help="2D框噪声下平移误差随距离的变化"
    )
    parser.add_argument("--calib", help="KITTI 标定文件，默认使用常见 KITTI 内参")
    parser.add_argument("--sigma-px", dest="sigma_px", type=float, help="噪声标准差 (像素)")
    parser.add_argument("--boxes", type=int, help="随机框数量")
    parser.set_defaults(
        handler=run,
        extra_overrides=lambda a: {"noise.sigma_px": a.sigma_px, "noise.boxes": a.boxes},
    )


def cmd_noise(config, out_path, K=KITTI_INTRINSICS):
    noise = config.noise
    table = noise_study(
        K,
        noise.boxes,
        noise.sigma_px,
        np.random.default_rng(config.seed),
        bin_width=noise.bin_width,
        max_distance=noise.max_distance,
        mode=config.mode.value,
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False)
    return table


def run(args, config):
    K = KITTI_INTRINSICS
    if args.calib:
        K = parse_calib_file(Path(args.calib).read_text(encoding="utf-8")).intrinsics
    out_path = Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / "noise_study.csv"
    print(cmd_noise(config, out_path, K).to_string(index=False))
    return EXIT_OK
