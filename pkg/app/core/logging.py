import logging
import sys
from pathlib import Path

from app.core.config import settings

_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def setup_logging(level=None):
    """配置日志

    参数:
    level (str): 日志级别名称，为空时读取 BOXLIFT_LOG 环境变量
    """
    requested = (level or settings.BOXLIFT_LOG or "INFO").upper()
    level_name = requested if requested in _LEVELS else "INFO"

    # 配置日志格式
    log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format = "%Y-%m-%d %H:%M:%S"

    # stdout 留给命令输出
    handlers = [logging.StreamHandler(sys.stderr)]
    if settings.BOXLIFT_LOG_DIR:
        log_dir = Path(settings.BOXLIFT_LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / "boxlift.log", encoding="utf-8"))

    # 配置根日志记录器
    logging.basicConfig(
        level=getattr(logging, level_name),
        format=log_format,
        datefmt=date_format,
        handlers=handlers,
        force=True,
    )

    if requested != level_name:
        logging.warning(f"未知的日志级别 {requested}，使用 INFO")
