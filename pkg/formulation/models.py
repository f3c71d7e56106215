from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional

import numpy as np

from core.config import settings
from core.exceptions import InvalidDeploymentError, MeasurementRejectedError
from core.utils import as_float_array
from measurement.models import Deployment, MeasurementSet


LossKind = Literal["smoothed-l1", "l2"]


class Dims(NamedTuple):
    """GCOP 维度: N 个变量, K 个不等式约束, M 个等式约束"""
    N: int
    K: int
    M: int


def problem_dims(L: int, k: int) -> Dims:
    """N = L+k+1, K = (L²+5L+2)/2, M = L"""
    return Dims(N=L + k + 1, K=(L * L + 5 * L + 2) // 2, M=L)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """
    一次定位问题: 测量、传感器几何和求解参数

    pair_i / pair_j 为 0-based 传感器对 (i<j), 顺序即不等式中传感器对块的顺序
    g_{1,2},…,g_{1,L},g_{2,3},…,g_{L−1,L}; pair_dist 为对应的 ‖x_i − x_j‖₂。
    """
    measurements: MeasurementSet
    sensor_positions: np.ndarray
    c: float
    gamma: float
    rho: float
    loss: LossKind
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_dist: np.ndarray

    @classmethod
    def build(
        cls,
        measurements: MeasurementSet,
        sensor_positions: np.ndarray,
        c: float,
        gamma: Optional[float] = None,
        rho: Optional[float] = None,
        loss: LossKind = "smoothed-l1",
    ) -> "ProblemInstance":
        sensors = as_float_array(sensor_positions, "sensor_positions")
        gamma = settings.gamma if gamma is None else float(gamma)
        rho = settings.rho if rho is None else float(rho)

        if sensors.ndim != 2 or sensors.shape[0] != measurements.L:
            raise ValueError(
                f"sensor_positions must be ({measurements.L}, k), got {sensors.shape}"
            )
        if c <= 0:
            raise ValueError(f"propagation speed must be > 0, got {c}")
        if gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        if rho <= 0:
            raise ValueError(f"rho must be > 0, got {rho}")
        if loss not in ("smoothed-l1", "l2"):
            raise ValueError(f"unknown loss {loss!r}")
        bad = np.flatnonzero(measurements.timestamps <= 0)
        if bad.size:
            raise MeasurementRejectedError(int(bad[0]) + 1, float(measurements.timestamps[bad[0]]))

        pair_i, pair_j = np.triu_indices(sensors.shape[0], 1)
        pair_dist = np.linalg.norm(sensors[pair_i] - sensors[pair_j], axis=1)
        if np.any(pair_dist <= 0):
            raise InvalidDeploymentError("sensor positions must be pairwise distinct")
        for arr in (pair_i, pair_j, pair_dist):
            arr.setflags(write=False)

        return cls(
            measurements=measurements,
            sensor_positions=sensors,
            c=float(c),
            gamma=gamma,
            rho=rho,
            loss=loss,
            pair_i=pair_i,
            pair_j=pair_j,
            pair_dist=pair_dist,
        )

    @classmethod
    def from_deployment(cls, deployment: Deployment, measurements: MeasurementSet, **kwargs) -> "ProblemInstance":
        return cls.build(measurements, deployment.sensor_positions, deployment.propagation_speed, **kwargs)

    def with_loss(self, loss: LossKind) -> "ProblemInstance":
        """同一测量换一种损失 (ℓ2 对照)"""
        return ProblemInstance.build(
            self.measurements, self.sensor_positions, self.c, self.gamma, self.rho, loss
        )

    @property
    def timestamps(self) -> np.ndarray:
        return self.measurements.timestamps

    @property
    def L(self) -> int:
        return self.sensor_positions.shape[0]

    @property
    def k(self) -> int:
        return self.sensor_positions.shape[1]

    @property
    def dims(self) -> Dims:
        return problem_dims(self.L, self.k)


@dataclass(frozen=True, eq=False)
class VariableVector:
    """变量 z = [t₀, xᵀ, dᵀ]ᵀ (t₀ 在首位)"""
    t0: float
    x: np.ndarray
    d: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate(([float(self.t0)], np.asarray(self.x, float), np.asarray(self.d, float)))

    @classmethod
    def unpack(cls, z: np.ndarray, k: int) -> "VariableVector":
        z = np.asarray(z, dtype=float)
        return cls(t0=float(z[0]), x=z[1:1 + k].copy(), d=z[1 + k:].copy())

    @classmethod
    def ground_truth(cls, deployment: Deployment) -> "VariableVector":
        """真值: t₀, 源位置, 以及 d_i = ‖x − x_i‖₂"""
        return cls(
            t0=deployment.onset_time,
            x=deployment.source_position.copy(),
            d=deployment.ranges(),
        )


@dataclass(frozen=True, eq=False)
class MultiplierVector:
    """乘子 ν = [μᵀ, λᵀ]ᵀ, μ 长度 K, λ 长度 M"""
    mu: np.ndarray
    lam: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate((np.asarray(self.mu, float), np.asarray(self.lam, float)))

    @classmethod
    def unpack(cls, nu: np.ndarray, K: int) -> "MultiplierVector":
        nu = np.asarray(nu, dtype=float)
        return cls(mu=nu[:K].copy(), lam=nu[K:].copy())

    @classmethod
    def zeros(cls, dims: Dims) -> "MultiplierVector":
        return cls(mu=np.zeros(dims.K), lam=np.zeros(dims.M))
