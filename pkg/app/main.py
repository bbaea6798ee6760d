import sys

from app.cli.router import build_parser, config_overrides
from app.core.config import load_run_config
from app.core.errors import EXIT_FAILURE, BoxliftError
from app.core.logging import logging, setup_logging


def main(argv=None):
    """命令行入口，返回退出码 (0 成功, 1 运行失败, 2 用法/配置错误)"""
    # 配置日志
    setup_logging()

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_run_config(args.config, config_overrides(args))
        return args.handler(args, config)
    except BoxliftError as e:
        logging.error(f"{args.command} 失败: {e}")
        return e.exit_code
    except OSError as e:
        logging.error(f"{args.command} 读写文件失败: {e}")
        return EXIT_FAILURE


# 启动应用
if __name__ == "__main__":
    sys.exit(main())
