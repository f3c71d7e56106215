import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.exceptions import InvalidDeploymentError
from measurement.models import Deployment, NoiseSpec
from measurement.services import with_nlos
from scenario.models import ScenarioSpec

logger = logging.getLogger(__name__)

NlosPattern = List[Tuple[int, float]]


def perimeter_positions(L: int, region_side: float) -> np.ndarray:
    """
    沿正方形边界等弧长放置 L 个点, 从 (0,0) 出发逆时针, 间隔 4·side/L
    """
    if L < 3:
        raise InvalidDeploymentError(f"perimeter layout needs L >= 3, got {L}")
    a = float(region_side)
    spacing = 4.0 * a / L
    points = []
    for m in range(L):
        s = m * spacing
        edge, offset = divmod(s, a)
        edge = int(edge)
        if edge == 0:
            points.append((offset, 0.0))
        elif edge == 1:
            points.append((a, offset))
        elif edge == 2:
            points.append((a - offset, a))
        else:
            points.append((0.0, a - offset))
    return np.array(points)


def build_deterministic(
    L: int,
    region_side: float,
    source: Sequence[float],
    onset_time: Optional[float] = None,
    propagation_speed: Optional[float] = None,
) -> Deployment:
    """边界均匀部署 (纯函数: 只依赖 L, side, source)"""
    return Deployment(
        sensor_positions=perimeter_positions(L, region_side),
        source_position=np.asarray(source, dtype=float),
        onset_time=settings.onset_time if onset_time is None else onset_time,
        propagation_speed=settings.propagation_speed if propagation_speed is None else propagation_speed,
    )


def build_random(
    L: int,
    region_side: float,
    seed,
    k: int = 2,
    source: Optional[Sequence[float]] = None,
    onset_time: Optional[float] = None,
    propagation_speed: Optional[float] = None,
) -> Deployment:
    """
    在 [0, side]^k 内独立均匀抽取 L 个传感器和源的位置

    任一传感器与源距离 < min_separation, 或两传感器重合时整体重抽,
    最多 settings.max_redraws 次。
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fixed_source = None if source is None else np.asarray(source, dtype=float)

    for attempt in range(1, settings.max_redraws + 1):
        sensors = rng.uniform(0.0, region_side, (L, k))
        src = rng.uniform(0.0, region_side, k) if fixed_source is None else fixed_source

        nearest = np.min(np.linalg.norm(sensors - src, axis=1))
        gaps = np.linalg.norm(sensors[:, None, :] - sensors[None, :, :], axis=2)[np.triu_indices(L, 1)]
        if nearest >= settings.min_separation and np.all(gaps > 0):
            if attempt > 1:
                logger.debug(f"Random deployment accepted after {attempt} draws")
            return Deployment(
                sensor_positions=sensors,
                source_position=src,
                onset_time=settings.onset_time if onset_time is None else onset_time,
                propagation_speed=settings.propagation_speed if propagation_speed is None else propagation_speed,
            )

    raise InvalidDeploymentError(
        f"no valid random deployment after {settings.max_redraws} draws "
        f"(min sensor-source separation {settings.min_separation} m)"
    )


# ========== NLOS 预设 ==========

def _first(n: int, start: int) -> Callable[[int, float], NlosPattern]:
    def pattern(L: int, omega: float) -> NlosPattern:
        if start + n - 1 > L:
            raise ValueError(f"preset needs {start + n - 1} sensors, scenario has {L}")
        return [(i, omega) for i in range(start, start + n)]
    return pattern


PRESETS: Dict[str, Callable[[int, float], NlosPattern]] = {
    "los": lambda L, omega: [],
    "mild-nlos": lambda L, omega: [(1, omega), (5, omega)],
    # 参考传感器为 NLOS
    "nlos-ref-2": _first(2, 1),
    "nlos-ref-5": _first(5, 1),
    "nlos-ref-8": _first(8, 1),
    # 参考传感器为 LOS
    "los-ref-2": _first(2, 2),
    "los-ref-5": _first(5, 2),
    "los-ref-8": _first(8, 2),
}


def preset_pattern(name: str, L: int, omega: float = 5.0) -> NlosPattern:
    """按名称展开 NLOS 预设"""
    if name not in PRESETS:
        raise ValueError(f"unknown NLOS preset {name!r}; choose from {sorted(PRESETS)}")
    pattern = PRESETS[name](L, omega)
    if any(i > L for i, _ in pattern):
        raise ValueError(f"preset {name!r} references a sensor beyond L={L}")
    return pattern


def base_pattern(spec: ScenarioSpec) -> NlosPattern:
    """场景的固定 NLOS 模式"""
    if spec.preset is not None:
        return preset_pattern(spec.preset, spec.L, spec.preset_omega)
    return [(int(i), float(w)) for i, w in spec.nlos_pattern]


def draw_nlos_pattern(spec: ScenarioSpec, rng: np.random.Generator) -> NlosPattern:
    """
    每次试验的 NLOS 模式:
    - redraw_nlos=False: 固定模式
    - redraw_nlos=True: 保持 NLOS 数量和 ω 值, 重新抽取传感器编号
    """
    pattern = base_pattern(spec)
    if not spec.redraw_nlos or not pattern:
        return pattern
    indices = np.sort(rng.choice(spec.L, size=len(pattern), replace=False)) + 1
    return [(int(i), w) for i, (_, w) in zip(indices, pattern)]


def build_for_trial(spec: ScenarioSpec, rng: np.random.Generator) -> Deployment:
    """试验部署: 边界场景固定, 随机场景每次重抽"""
    if spec.kind == "deterministic-perimeter":
        return build_deterministic(
            spec.L, spec.region_side, spec.source, spec.onset_time, spec.propagation_speed
        )
    source = None if spec.source == "random" else spec.source
    return build_random(
        spec.L, spec.region_side, rng, k=spec.k, source=source,
        onset_time=spec.onset_time, propagation_speed=spec.propagation_speed,
    )


def noise_for_trial(spec: ScenarioSpec, sigma: float, rng: np.random.Generator,
                    omega_override: Optional[float] = None) -> NoiseSpec:
    """
    试验噪声模型

    Args:
        omega_override: 扫描参数 b, 替换模式中所有 NLOS 传感器的 ω
    """
    pattern = draw_nlos_pattern(spec, rng)
    if omega_override is not None:
        pattern = [(i, float(omega_override)) for i, _ in pattern]
    return with_nlos(sigma, spec.L, pattern)
