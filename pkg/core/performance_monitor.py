"""
求解与基准测试的计时、并发与内存监控

- monitor: 进程内指标存储 (每个指标一组样本)
- timer / measure_time: 同步计时 (求解是 CPU 密集型, 在 executor 中运行)
- ConcurrencyLimiter: 限制同时在执行器中运行的试验数
- log_memory: 每个扫描点结束后记录常驻内存
"""
import time
import asyncio
import logging
from collections import defaultdict
from contextlib import asynccontextmanager, contextmanager
from dataclasses import dataclass, field
from functools import wraps
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np
import psutil

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricSample:
    value: float
    tags: Dict[str, object] = field(default_factory=dict)


class PerformanceMonitor:
    """按名称累积耗时样本, 供 timing 研究和日志汇总读取"""

    def __init__(self):
        self.samples: Dict[str, List[MetricSample]] = defaultdict(list)

    def record(self, name: str, value: float, **tags) -> None:
        self.samples[name].append(MetricSample(float(value), tags))

    def values(self, name: str) -> np.ndarray:
        return np.array([s.value for s in self.samples.get(name, [])])

    def get_stats(self, name: str) -> dict:
        """
        Returns:
            {count, mean, min, max, std}; 没有样本时返回空字典
        """
        values = self.values(name)
        if values.size == 0:
            return {}
        return {
            "count": int(values.size),
            "mean": float(values.mean()),
            "min": float(values.min()),
            "max": float(values.max()),
            "std": float(values.std()),
        }

    def clear(self, name: Optional[str] = None) -> None:
        if name is None:
            self.samples.clear()
        else:
            self.samples.pop(name, None)


monitor = PerformanceMonitor()


def timer(name: Optional[str] = None):
    """
    装饰器: 记录每次调用的耗时, 异常时打 status=error 标签后继续抛出

    ```python
    @timer("pnn_solve")
    def solve(inst, config): ...
    ```
    """
    def decorator(func: Callable):
        metric = name or f"{func.__module__}.{func.__name__}"

        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                elapsed = time.perf_counter() - start
                monitor.record(metric, elapsed, status="error")
                logger.error(f"❌ {metric} failed after {elapsed:.3f}s: {e}")
                raise
            elapsed = time.perf_counter() - start
            monitor.record(metric, elapsed, status="success")
            logger.debug(f"⏱️ {metric} completed in {elapsed:.3f}s")
            return result

        return wrapper
    return decorator


@dataclass
class Stopwatch:
    elapsed: float = 0.0


@contextmanager
def measure_time(name: str, log: bool = True) -> Iterator[Stopwatch]:
    """
    上下文管理器: 测量代码块耗时, 退出后 watch.elapsed 可读

    ```python
    with measure_time("benchmark_point[sigma=0.3]") as watch:
        outcomes = await run_trials(tasks, workers)
    ```
    """
    watch = Stopwatch()
    start = time.perf_counter()
    try:
        yield watch
    finally:
        watch.elapsed = time.perf_counter() - start
        monitor.record(name, watch.elapsed)
        if log:
            logger.info(f"⏱️ {name} took {watch.elapsed:.2f}s")


class ConcurrencyLimiter:
    """事件循环内的 Semaphore, 额外统计活跃数峰值"""

    def __init__(self, limit: int, name: str = "limiter"):
        if limit < 1:
            raise ValueError(f"{name}: limit must be >= 1, got {limit}")
        self.limit = limit
        self.name = name
        self._semaphore = asyncio.Semaphore(limit)
        self.active = 0
        self.peak = 0
        self.acquired = 0

    @asynccontextmanager
    async def acquire(self):
        async with self._semaphore:
            self.active += 1
            self.acquired += 1
            self.peak = max(self.peak, self.active)
            logger.debug(f"{self.name}: slot taken ({self.active}/{self.limit})")
            try:
                yield
            finally:
                self.active -= 1

    def get_stats(self) -> dict:
        return {"limit": self.limit, "active": self.active, "peak": self.peak, "acquired": self.acquired}


def memory_usage() -> dict:
    """当前进程内存 (MB) 与占比"""
    process = psutil.Process()
    info = process.memory_info()
    return {
        "rss_mb": info.rss / 1024 / 1024,
        "vms_mb": info.vms / 1024 / 1024,
        "percent": process.memory_percent(),
    }


def log_memory(context: str = "process") -> None:
    mem = memory_usage()
    logger.info(f"💾 {context}: {mem['rss_mb']:.1f}MB RSS ({mem['percent']:.1f}%)")
