from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.exceptions import InvalidDeploymentError
from core.utils import as_float_array


# 传感器 1 (下标 0) 固定为 TDOA 参考
REFERENCE_SENSOR = 0


@dataclass(frozen=True, eq=False)
class Deployment:
    """
    传感器与单个源的几何部署

    Attributes:
        sensor_positions: (L, k) 传感器坐标 (米)
        source_position: (k,) 源坐标 (米)
        onset_time: 源发射时刻 t₀ (秒)
        propagation_speed: 传播速度 c (米/秒)
    """
    sensor_positions: np.ndarray
    source_position: np.ndarray
    onset_time: float
    propagation_speed: float

    def __post_init__(self):
        sensors = as_float_array(self.sensor_positions, "sensor_positions")
        source = as_float_array(self.source_position, "source_position")
        object.__setattr__(self, "sensor_positions", sensors)
        object.__setattr__(self, "source_position", source)
        object.__setattr__(self, "onset_time", float(self.onset_time))
        object.__setattr__(self, "propagation_speed", float(self.propagation_speed))

        if sensors.ndim != 2:
            raise InvalidDeploymentError("sensor_positions must be an (L, k) array")
        L, k = sensors.shape
        if k not in (2, 3):
            raise InvalidDeploymentError(f"dimension k must be 2 or 3, got {k}")
        if source.shape != (k,):
            raise InvalidDeploymentError(f"source_position must have shape ({k},), got {source.shape}")
        if L < k + 1:
            raise InvalidDeploymentError(f"need at least k+1={k + 1} sensors, got {L}")
        if self.propagation_speed <= 0:
            raise InvalidDeploymentError(f"propagation_speed must be > 0, got {self.propagation_speed}")
        if self.onset_time < 0:
            raise InvalidDeploymentError(f"onset_time must be >= 0, got {self.onset_time}")

        ranges = np.linalg.norm(sensors - source, axis=1)
        if np.any(ranges <= 0):
            bad = int(np.argmin(ranges)) + 1
            raise InvalidDeploymentError(f"sensor {bad} coincides with the source")

        gaps = np.linalg.norm(sensors[:, None, :] - sensors[None, :, :], axis=2)
        iu = np.triu_indices(L, 1)
        if np.any(gaps[iu] <= 0):
            p = int(np.argmin(gaps[iu]))
            raise InvalidDeploymentError(
                f"sensors {iu[0][p] + 1} and {iu[1][p] + 1} share the same position"
            )

    @property
    def L(self) -> int:
        return self.sensor_positions.shape[0]

    @property
    def k(self) -> int:
        return self.sensor_positions.shape[1]

    def ranges(self) -> np.ndarray:
        """所有传感器到源的真实距离 ‖x − x_i‖₂"""
        return np.linalg.norm(self.sensor_positions - self.source_position, axis=1)

    def to_dict(self) -> dict:
        return {
            "sensor_positions": self.sensor_positions.tolist(),
            "source_position": self.source_position.tolist(),
            "onset_time": self.onset_time,
            "propagation_speed": self.propagation_speed,
        }


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """
    每个传感器的测量误差模型 (单位: 米)

    sigma[i] 为高斯噪声标准差 σ_i, nlos_upper[i] 为 NLOS 偏差均匀分布上界 ω_i。
    ω_i = 0 表示 LOS 路径; σ_i = 0 仅用于无噪声 (oracle) 测试。
    """
    sigma: np.ndarray
    nlos_upper: np.ndarray

    def __post_init__(self):
        sigma = as_float_array(self.sigma, "sigma")
        nlos = as_float_array(self.nlos_upper, "nlos_upper")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nlos_upper", nlos)

        if sigma.ndim != 1 or sigma.shape != nlos.shape:
            raise ValueError("sigma and nlos_upper must be 1-D arrays of equal length")
        if np.any(sigma < 0):
            raise ValueError("sigma must be >= 0")
        if np.any(nlos < 0):
            raise ValueError("nlos_upper must be >= 0")

    @classmethod
    def common(cls, sigma: float, L: int, nlos_upper: Optional[Sequence[float]] = None) -> "NoiseSpec":
        """所有传感器共用同一 σ (默认全部 LOS)"""
        omega = np.zeros(L) if nlos_upper is None else nlos_upper
        return cls(sigma=np.full(L, float(sigma)), nlos_upper=omega)

    @property
    def L(self) -> int:
        return self.sigma.shape[0]

    @property
    def is_los(self) -> bool:
        return bool(np.all(self.nlos_upper == 0))

    @property
    def nlos_sensors(self) -> list[int]:
        """NLOS 传感器的 1-based 编号"""
        return [int(i) + 1 for i in np.flatnonzero(self.nlos_upper > 0)]


@dataclass(frozen=True, eq=False)
class Realization:
    """一次抽样得到的 (n_i, q_i), 单位米"""
    noise: np.ndarray
    nlos: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """
    接收时间戳 t 与以传感器 1 为参考的 TDOA

    tdoas[i-2] = timestamps[i-1] − timestamps[0], i = 2…L
    """
    timestamps: np.ndarray
    tdoas: np.ndarray
    realization: Optional[Realization] = field(default=None)

    @classmethod
    def from_timestamps(cls, timestamps: Sequence[float], realization: Optional[Realization] = None) -> "MeasurementSet":
        t = as_float_array(timestamps, "timestamps")
        if t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("timestamps must be a 1-D array with at least two entries")
        tdoas = t[1:] - t[REFERENCE_SENSOR]
        tdoas.setflags(write=False)
        return cls(timestamps=t, tdoas=tdoas, realization=realization)

    @property
    def L(self) -> int:
        return self.timestamps.shape[0]
