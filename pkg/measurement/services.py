import logging
from typing import Iterable, Tuple, Union

import numpy as np

from core.exceptions import MeasurementRejectedError
from measurement.models import Deployment, MeasurementSet, NoiseSpec, Realization

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]


def _as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def true_range(deployment: Deployment, i: int) -> float:
    """
    传感器 i (1-based) 到源的欧氏距离 ‖x − x_i‖₂

    Raises:
        IndexError: i 不在 1…L 内
    """
    if not 1 <= i <= deployment.L:
        raise IndexError(f"sensor index {i} out of range 1..{deployment.L}")
    return float(np.linalg.norm(deployment.source_position - deployment.sensor_positions[i - 1]))


def with_nlos(sigma: float, L: int, pattern: Iterable[Tuple[int, float]]) -> NoiseSpec:
    """
    由 1-based (传感器编号, ω) 列表构造 NoiseSpec, 未列出的传感器为 LOS

    Args:
        sigma: 公共高斯噪声标准差 (米)
        L: 传感器数量
        pattern: [(index, omega), ...]
    """
    omega = np.zeros(L)
    for index, upper in pattern:
        if not 1 <= int(index) <= L:
            raise ValueError(f"NLOS sensor index {index} out of range 1..{L}")
        omega[int(index) - 1] = float(upper)
    return NoiseSpec.common(sigma, L, omega)


def generate_measurements(deployment: Deployment, noise: NoiseSpec, seed: SeedLike) -> MeasurementSet:
    """
    按 TOA 模型生成接收时间戳:
    t_i = t₀ + (‖x − x_i‖₂ + n_i + q_i) / c,  n_i ~ N(0, σ_i²),  q_i ~ U(0, ω_i)

    同一 seed 得到逐位相同的结果。

    Raises:
        MeasurementRejectedError: 任一 t_i ≤ 0 (不做截断)
    """
    if noise.L != deployment.L:
        raise ValueError(f"noise spec has {noise.L} sensors, deployment has {deployment.L}")

    rng = _as_generator(seed)
    n = rng.normal(0.0, 1.0, deployment.L) * noise.sigma
    u = rng.uniform(0.0, 1.0, deployment.L)
    q = np.where(noise.nlos_upper > 0, u * noise.nlos_upper, 0.0)

    c = deployment.propagation_speed
    timestamps = deployment.onset_time + (deployment.ranges() + n + q) / c

    bad = np.flatnonzero(timestamps <= 0)
    if bad.size:
        index = int(bad[0]) + 1
        logger.warning(f"⚠️ Rejected measurement draw: sensor {index} timestamp {timestamps[bad[0]]:.6g}")
        raise MeasurementRejectedError(index, float(timestamps[bad[0]]))

    n.setflags(write=False)
    q.setflags(write=False)
    return MeasurementSet.from_timestamps(timestamps, Realization(noise=n, nlos=q))
