from pathlib import Path

from app.core.config import settings
from app.core.errors import EXIT_OK
from app.core.logging import logging
from app.services.toy_trainer import run_bin_sweep


def register(subparsers, common):
    parser = subparsers.add_parser(
        "toy", parents=[common], help="合成数据上比较不同 bin 数的朝向回归"
    )
    parser.add_argument("--sweep", type=int, nargs="+", help="参与比较的 bin 数，默认 1 2 4 8")
    parser.add_argument("--epochs", type=int, help="训练轮数")
    parser.add_argument("--samples", type=int, help="训练样本数")
    parser.set_defaults(
        handler=run,
        extra_overrides=lambda a: {
            "toy.sweep": a.sweep,
            "toy.epochs": a.epochs,
            "toy.samples": a.samples,
        },
    )


def cmd_toy(config, out_dir):
    """
    运行 bin 数实验，写出 toy_sweep.csv 与 toy_loss_history.csv

    返回:
    pandas.DataFrame: 每个 bin 数一行 (bins, model, os, median_error, final_loss)
    """
    table, history = run_bin_sweep(
        config.toy, seed=config.seed, w=config.multibin.w, overlap=config.multibin.overlap
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "toy_sweep.csv", index=False)
    history.to_csv(out_dir / "toy_loss_history.csv", index=False)
    logging.info(f"bin 数实验结果写入 {out_dir}")
    return table


def run(args, config):
    out_dir = Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / "toy"
    table = cmd_toy(config, out_dir)
    print(table.to_string(index=False))
    return EXIT_OK
