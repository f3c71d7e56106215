import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from core.exceptions import EmptyFeasibleGridError
from formulation.models import ProblemInstance

logger = logging.getLogger(__name__)

CHUNK_POINTS = 200_000


@dataclass(frozen=True, eq=False)
class OracleResult:
    position: np.ndarray
    onset_time: float
    objective: float
    resolution: float


def _axis(lo: float, hi: float, resolution: float) -> np.ndarray:
    n = int(round((hi - lo) / resolution)) + 1
    return np.linspace(lo, hi, max(n, 2))


def grid_oracle(
    inst: ProblemInstance,
    resolution: float,
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> OracleResult:
    """
    暴力搜索未平滑的约束 ℓ1 目标 Σ|(t_i − t₀)c − ‖x − x_i‖₂|

    x 在 bounds (默认传感器包围盒) 上按 resolution 网格穷举;
    对每个 x, 目标是 t₀ 的凸分段线性函数, 其约束最优解为
    a_i = t_i − ‖x − x_i‖₂/c 的中位数截断到可行区间
    [0, min(min_i a_i, min_{i<j} (t_i + t_j − ‖x_i − x_j‖₂/c)/2)],
    区间为空的网格点被剔除。

    Raises:
        EmptyFeasibleGridError: 没有可行网格点
    """
    if inst.k != 2:
        raise ValueError("grid oracle supports k=2 only")
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")

    sensors = inst.sensor_positions
    if bounds is None:
        bounds = list(zip(sensors.min(axis=0), sensors.max(axis=0)))
    xs = _axis(bounds[0][0], bounds[0][1], resolution)
    ys = _axis(bounds[1][0], bounds[1][1], resolution)

    t, c = inst.timestamps, inst.c
    pair_ub = np.min((t[inst.pair_i] + t[inst.pair_j] - inst.pair_dist / c) / 2.0)

    best = (np.inf, None, None)
    rows = max(1, CHUNK_POINTS // ys.size)
    for start in range(0, xs.size, rows):
        gx, gy = np.meshgrid(xs[start:start + rows], ys, indexing="ij")
        points = np.column_stack((gx.ravel(), gy.ravel()))
        ranges = np.linalg.norm(points[:, None, :] - sensors[None, :, :], axis=2)
        onset = t - ranges / c

        upper = np.minimum(onset.min(axis=1), pair_ub)
        feasible = upper >= 0.0
        t0 = np.clip(np.median(onset, axis=1), 0.0, np.maximum(upper, 0.0))
        value = c * np.sum(np.abs(onset - t0[:, None]), axis=1)
        value[~feasible] = np.inf

        n = int(np.argmin(value))
        if value[n] < best[0]:
            best = (float(value[n]), points[n].copy(), float(t0[n]))

    if best[1] is None:
        raise EmptyFeasibleGridError(
            f"no grid point satisfies the temporal and triangle constraints at resolution {resolution}"
        )

    logger.debug(f"Grid oracle minimum {best[0]:.6g} at {best[1]} (resolution {resolution})")
    return OracleResult(position=best[1], onset_time=best[2], objective=best[0], resolution=resolution)
