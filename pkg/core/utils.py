import os
import logging
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.config import settings


logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None) -> None:
    """
    配置日志格式和存储 (入口调用一次):
    1. 日志目录按配置创建
    2. 按日期写入文件 + 控制台输出
    """
    log_dir = log_dir or settings.log_dir
    os.makedirs(log_dir, exist_ok=True)

    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=LOG_FORMAT,
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.FileHandler(
                os.path.join(log_dir, f'nlos_{datetime.now().strftime("%Y%m%d")}.log'),
                encoding='utf-8'
            ),
            logging.StreamHandler()
        ]
    )


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    由基础种子和若干整数键派生独立随机数流

    同一 (seed, keys) 总是得到同一序列, 与 worker 数量和执行顺序无关。
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def parse_value_list(text: str) -> list[float]:
    """解析 CLI 的逗号分隔数值列表, 如 "0.1,0.3,1" """
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError(f"Empty value list: {text!r}")
    try:
        return [float(v) for v in values]
    except ValueError as e:
        raise ValueError(f"Cannot parse value list {text!r}: {e}") from e


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """写出 CSV (无索引, 固定换行符), 保证相同数据得到相同字节"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"✅ Wrote {len(frame)} rows to {path}")
    return path


def numbered_columns(prefix: str, count: int) -> list[str]:
    """x1..xk / d1..dL 这类列名"""
    return [f"{prefix}{i}" for i in range(1, count + 1)]


def as_float_array(values: Union[Sequence[float], Iterable[float], np.ndarray], name: str) -> np.ndarray:
    """转换为只读 float64 数组"""
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr
