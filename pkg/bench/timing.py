import time
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.config import settings
from core.performance_monitor import monitor
from dynamics.services import derivative
from formulation.models import ProblemInstance, VariableVector, problem_dims
from measurement.models import NoiseSpec
from measurement.services import generate_measurements
from scenario.services import build_random

logger = logging.getLogger(__name__)

WARMUP_STEPS = 20
# 每次调用的固定开销在最小规模上测量, 从各规模的耗时中扣除
OVERHEAD_L = 3
DEFAULT_SIZES = (40, 80, 160, 320)


@dataclass(frozen=True, eq=False)
class TimingTable:
    """
    列: L, K, mean_step_seconds, median_step_seconds, work_seconds

    work_seconds = 中位耗时 − OVERHEAD_L 上的中位耗时;
    slope 为 log(work_seconds) 对 log(L) 的拟合斜率。
    """
    frame: pd.DataFrame
    slope: float
    overhead_seconds: float


def _step_metric(L: int) -> str:
    return f"pnn_step_L{L}"


def _reference_state(L: int, seed: int):
    """随机部署上的问题实例与一个有界的固定状态 (真值 z, 小的乘子)"""
    deployment = build_random(L, settings.region_side, seed)
    measurements = generate_measurements(deployment, NoiseSpec.common(0.0, L), seed)
    inst = ProblemInstance.from_deployment(deployment, measurements)
    _, K, M = inst.dims
    y = np.concatenate((
        VariableVector.ground_truth(deployment).pack(),
        np.full(K, 0.1),
        np.full(M, 0.01),
    ))
    return inst, y


def _time_steps(L: int, repetitions: int, tau: float, seed: int) -> np.ndarray:
    """
    单步 (rhs + Euler 更新) 耗时

    每次都从同一个固定状态出发, 不沿轨迹推进。
    """
    inst, y_ref = _reference_state(L, seed)
    for _ in range(WARMUP_STEPS):
        y_ref + tau * derivative(y_ref, inst)

    metric = _step_metric(L)
    monitor.clear(metric)
    for _ in range(repetitions):
        start = time.perf_counter()
        y_ref + tau * derivative(y_ref, inst)
        monitor.record(metric, time.perf_counter() - start, L=L)
    return np.array(monitor.values(metric))


def timing_scaling(
    sizes: Sequence[int] = DEFAULT_SIZES,
    repetitions: int = 200,
    tau: Optional[float] = None,
    seed: int = 0,
) -> TimingTable:
    """
    测量不同 L 下单步的耗时, 并拟合扣除固定开销后的增长阶数 (期望约为 2)
    """
    sizes = [int(L) for L in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be strictly increasing, got {sizes}")
    tau = settings.tau if tau is None else tau

    rows = []
    overhead = float("nan")
    if repetitions > 0:
        overhead = float(np.median(_time_steps(OVERHEAD_L, repetitions, tau, seed)))
        for L in sizes:
            samples = _time_steps(L, repetitions, tau, seed)
            median = float(np.median(samples))
            rows.append({
                "L": L,
                "K": problem_dims(L, 2).K,
                "mean_step_seconds": float(samples.mean()),
                "median_step_seconds": median,
                "work_seconds": median - overhead,
            })
            logger.info(f"⏱️ L={L}: {median * 1e6:.1f} µs/step over {samples.size} steps")

    frame = pd.DataFrame(rows, columns=["L", "K", "mean_step_seconds", "median_step_seconds", "work_seconds"])
    slope = float("nan")
    if len(frame) >= 2:
        if (frame["work_seconds"] > 0).all():
            slope = float(np.polyfit(np.log(frame["L"]), np.log(frame["work_seconds"]), 1)[0])
            logger.info(f"✅ Per-step work scales as L^{slope:.2f} (overhead {overhead * 1e6:.1f} µs)")
        else:
            logger.warning("⚠️ Per-call overhead dominates at these sizes, slope not fitted")
    return TimingTable(frame=frame, slope=slope, overhead_seconds=overhead)
