"""encode / decode: MultiBin 编解码的调试入口

编码输出格式为 "conf,cos,sin;conf,cos,sin;..."，decode 接受同样的字符串。
"""

import argparse
import math

import numpy as np

from app.core.errors import EXIT_OK, ConfigError
from app.core.logging import logging
from app.services.multibin import BinLayout, MultiBinEncoding, decode, encode


def angle(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"无效的角度: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"角度必须是有限值: {text!r}")
    return value


def triplets(text):
    try:
        rows = [[float(v) for v in chunk.split(",")] for chunk in text.strip().split(";") if chunk]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无效的编码: {text!r}") from None
    if not rows or any(len(row) != 3 for row in rows):
        raise argparse.ArgumentTypeError("编码应为 'conf,cos,sin' 三元组，以 ';' 分隔")
    return np.array(rows)


def register(subparsers, common):
    enc = subparsers.add_parser("encode", parents=[common], help="打印角度的 MultiBin 编码")
    enc.add_argument("theta", type=angle, help="角度 (弧度)")
    enc.set_defaults(handler=run_encode)

    dec = subparsers.add_parser("decode", parents=[common], help="由 MultiBin 编码解出角度")
    dec.add_argument("encoding", type=triplets, help="'conf,cos,sin;...'")
    dec.set_defaults(handler=run_decode)


def format_encoding(encoding):
    return ";".join(
        f"{c!r},{cos!r},{sin!r}"
        for c, (cos, sin) in zip(encoding.confidence.tolist(), encoding.residual.tolist())
    )


def cmd_encode(theta, layout):
    encoding = encode(layout, theta)
    for i, (c, delta) in enumerate(zip(encoding.confidence, encoding.angles)):
        logging.debug(f"bin {i}: 中心 {layout.centers[i]:+.6f}, 置信度 {c:.0f}, Δθ {delta:+.6f}")
    return format_encoding(encoding)


def cmd_decode(values, layout):
    encoding = MultiBinEncoding(confidence=values[:, 0], residual=values[:, 1:])
    return decode(layout, encoding)


def run_encode(args, config):
    layout = BinLayout.uniform(config.multibin.bins, config.multibin.overlap)
    print(cmd_encode(args.theta, layout))
    return EXIT_OK


def run_decode(args, config):
    n = len(args.encoding)
    # 未指定 --bins 时由三元组个数决定
    if args.bins is not None and args.bins != n:
        raise ConfigError(f"--bins {args.bins} 与编码中的 {n} 个 bin 不一致")
    layout = BinLayout.uniform(n, config.multibin.overlap)
    print(repr(cmd_decode(args.encoding, layout)))
    return EXIT_OK
