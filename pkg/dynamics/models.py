from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.config import IntegratorMethod, settings
from formulation.models import Dims
from kkt.models import KktReport
from measurement.models import Deployment


RunStatus = Literal["converged", "faulted"]


@dataclass(frozen=True, eq=False)
class NetworkState:
    """变量神经元 z 与拉格朗日神经元 (μ, λ) 的活动, time 为累计时间常数"""
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"time must be >= 0, got {self.time}")

    @classmethod
    def zeros(cls, dims: Dims) -> "NetworkState":
        """全零初始化"""
        return cls(z=np.zeros(dims.N), mu=np.zeros(dims.K), lam=np.zeros(dims.M))

    @classmethod
    def unpack(cls, y: np.ndarray, dims: Dims, time: float = 0.0) -> "NetworkState":
        y = np.asarray(y, dtype=float)
        return cls(
            z=y[:dims.N].copy(),
            mu=y[dims.N:dims.N + dims.K].copy(),
            lam=y[dims.N + dims.K:].copy(),
            time=float(time),
        )

    def pack(self) -> np.ndarray:
        return np.concatenate((self.z, self.mu, self.lam))

    @property
    def nu(self) -> np.ndarray:
        return np.concatenate((self.mu, self.lam))

    def check_dims(self, dims: Dims) -> None:
        if (self.z.size, self.mu.size, self.lam.size) != (dims.N, dims.K, dims.M):
            raise ValueError(
                f"state sizes {(self.z.size, self.mu.size, self.lam.size)} do not match {tuple(dims)}"
            )


class IntegratorConfig(BaseModel):
    """
    积分配置

    method: lsoda / bdf / radau 交给 scipy 的刚性自适应求解器,
    euler 为固定步长 τ 的离散实现, euler-adaptive 为步长加倍误差控制的 Euler。
    horizon: 读出时刻; settle 打开时 (仅 ODE 求解器), 若此时 ‖dy/dt‖∞ > settle_tol,
    按 settings.settle_chunk 继续积分直到平衡或到达 max_horizon。
    alpha: 投影尺度 (固定为 1)。
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: IntegratorMethod = Field(default_factory=lambda: settings.method)
    tau: float = Field(default_factory=lambda: settings.tau)
    horizon: float = Field(default_factory=lambda: settings.horizon)
    record_stride: float = Field(default_factory=lambda: settings.record_stride)
    alpha: float = 1.0
    settle: bool = True
    settle_tol: float = Field(default_factory=lambda: settings.settle_tol)
    max_horizon: float = Field(default_factory=lambda: settings.max_horizon)
    rtol: float = Field(default_factory=lambda: settings.ode_rtol)
    atol: float = Field(default_factory=lambda: settings.ode_atol)

    @field_validator("tau")
    @classmethod
    def _tau(cls, value: float) -> float:
        if not 0 < value <= settings.tau_max:
            raise ValueError(f"tau must be in (0, {settings.tau_max}]")
        return value

    @field_validator("horizon", "max_horizon")
    @classmethod
    def _horizon(cls, value: float) -> float:
        if value < 0:
            raise ValueError("horizon must be >= 0")
        return value

    @field_validator("record_stride", "rtol", "atol", "settle_tol")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, value: float) -> float:
        if value != 1.0:
            raise ValueError("alpha is fixed to 1")
        return value

    @property
    def uses_ode_solver(self) -> bool:
        return self.method not in ("euler", "euler-adaptive")

    @property
    def fixed_steps(self) -> int:
        """固定步长下的步数 N_PNN = horizon / τ"""
        return int(round(self.horizon / self.tau))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """按 record_stride 采样的轨迹"""
    times: np.ndarray
    z: np.ndarray
    kkt_inf_norm: np.ndarray
    mu_min: np.ndarray

    @property
    def size(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class RunRecord:
    """
    一次求解 (或一次 Monte-Carlo 试验) 的结果

    steps 为右端求值次数, 固定步长 Euler 下即 N_PNN = horizon / τ。
    faulted 记录不携带估计值; error 仅在估计和真值都存在时可用。
    """
    status: RunStatus
    steps: int
    wall_time: float
    final_state: Optional[NetworkState] = None
    estimate: Optional[np.ndarray] = None
    onset_estimate: Optional[float] = None
    kkt: Optional[KktReport] = None
    trajectory: Optional[Trajectory] = None
    fault: Optional[str] = None
    trial_index: int = 0
    truth: Optional[np.ndarray] = None
    deployment: Optional[Deployment] = field(default=None)
    solver: str = "l1-pnn"

    def __post_init__(self):
        if self.status == "faulted" and self.estimate is not None:
            raise ValueError("faulted runs carry no estimate")

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def error(self) -> Optional[float]:
        """‖x̂ − x‖₂ (米)"""
        if self.estimate is None or self.truth is None:
            return None
        return float(np.linalg.norm(self.estimate - self.truth))
