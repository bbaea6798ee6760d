import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigError
from app.models.schemas import RunConfig


class Settings(BaseSettings):
    """进程级配置，来自环境变量或 .env"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # 日志
    BOXLIFT_LOG: str = "INFO"
    BOXLIFT_LOG_DIR: Optional[str] = None

    # 输出目录
    OUTPUT_DIR: str = "./output"


# 创建全局设置对象
settings = Settings()


def load_run_config(path=None, overrides=None):
    """
    读取运行配置并应用命令行覆盖项

    参数:
    path (str | Path): TOML 或 JSON 配置文件，为空时使用默认值
    overrides (dict): 点号分隔的键，如 {"multibin.bins": 4}；值为 None 的项被忽略

    返回:
    RunConfig: 校验后的配置
    """
    data = {}
    if path is not None:
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        try:
            if path.suffix.lower() == ".toml":
                data = tomllib.loads(raw.decode("utf-8"))
            elif path.suffix.lower() == ".json":
                data = json.loads(raw)
            else:
                raise ConfigError(f"不支持的配置格式 {path.suffix}，请使用 .toml 或 .json")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"配置文件 {path} 解析失败: {e}") from e

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            section = section.setdefault(key, {})
        section[leaf] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"配置无效: {e}") from e
