import logging
import tomllib
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from bench.models import ExperimentConfig
from core.exceptions import ConfigError

logger = logging.getLogger(__name__)


def parse_config(data: dict) -> ExperimentConfig:
    """校验配置字典; 未知字段视为错误"""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(
    path: Union[str, Path],
    trials: Optional[int] = None,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """
    读取 TOML 配置 ([scenario], [noise], [solver]), 可用 CLI 参数覆盖 trials / seed
    """
    path = Path(path)
    logger.info(f"Loading experiment config: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e

    config = parse_config(data)
    return with_overrides(config, trials=trials, seed=seed)


def with_overrides(config: ExperimentConfig, trials: Optional[int] = None,
                   seed: Optional[int] = None) -> ExperimentConfig:
    update = {}
    if trials is not None:
        update["trials"] = trials
    if seed is not None:
        update["seed"] = seed
    if not update:
        return config
    scenario = config.scenario.model_dump(by_alias=True)
    scenario.update(update)
    return parse_config({
        "scenario": scenario,
        "noise": config.noise.model_dump(),
        "solver": config.solver.model_dump(),
    })
