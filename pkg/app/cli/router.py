import argparse

from app.cli.commands import codec, evaluate, lift, noise, toy
from app.models.schemas import ConstraintModeName


def _common_options():
    """所有子命令共享的参数；未给出的参数不覆盖配置文件"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML 或 JSON 配置文件")
    common.add_argument("--mode", choices=[m.value for m in ConstraintModeName], help="约束模式")
    common.add_argument("--bins", type=int, help="MultiBin 的 bin 数")
    common.add_argument("--overlap", type=float, help="bin 覆盖的重叠比例")
    common.add_argument("--w", type=float, help="L_θ = L_conf + w·L_loc 中的 w")
    common.add_argument("--alpha", type=float, help="L = α·L_dims + L_θ 中的 α")
    common.add_argument("--iou-thresh", dest="iou_thresh", type=float, help="2D IoU 匹配阈值")
    common.add_argument("--seed", type=int, help="随机种子")
    common.add_argument("--out", help="输出文件或目录")
    return common


def config_overrides(args):
    """命令行参数到配置键的映射"""
    return {
        "mode": args.mode,
        "seed": args.seed,
        "iou_thresh": args.iou_thresh,
        "multibin.bins": args.bins,
        "multibin.overlap": args.overlap,
        "multibin.w": args.w,
        "multibin.alpha": args.alpha,
        **getattr(args, "extra_overrides", lambda a: {})(args),
    }


def build_parser():
    parser = argparse.ArgumentParser(
        prog="boxlift", description="单目 3D 框求解、MultiBin 朝向编码与评测"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    # 注册各个子命令
    lift.register(subparsers, common)
    evaluate.register(subparsers, common)
    toy.register(subparsers, common)
    codec.register(subparsers, common)
    noise.register(subparsers, common)
    return parser
