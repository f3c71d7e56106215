from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.config import IntegratorMethod, settings
from dynamics.models import IntegratorConfig, RunRecord
from scenario.models import ScenarioSpec


SweepParam = Literal["sigma", "b"]


# ========== 配置文件各段 ==========

class NoiseSection(BaseModel):
    """[noise] 段"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma: float = 0.0

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, value: float) -> float:
        if value < 0:
            raise ValueError("sigma must be >= 0")
        return value


class SolverConfig(BaseModel):
    """[solver] 段: 问题参数、积分参数与基准运行选项"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(default_factory=lambda: settings.gamma)
    rho: float = Field(default_factory=lambda: settings.rho)
    method: IntegratorMethod = Field(default_factory=lambda: settings.method)
    tau: float = Field(default_factory=lambda: settings.tau)
    horizon: float = Field(default_factory=lambda: settings.horizon)
    record_stride: float = Field(default_factory=lambda: settings.record_stride)
    settle: bool = True
    rtol: float = Field(default_factory=lambda: settings.ode_rtol)
    atol: float = Field(default_factory=lambda: settings.ode_atol)
    workers: int = Field(default_factory=lambda: settings.workers)
    baseline: bool = True

    @field_validator("gamma", "rho")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("workers")
    @classmethod
    def _workers(cls, value: int) -> int:
        if value < 1:
            raise ValueError("workers must be >= 1")
        return value

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(
            method=self.method,
            tau=self.tau,
            horizon=self.horizon,
            record_stride=self.record_stride,
            settle=self.settle,
            rtol=self.rtol,
            atol=self.atol,
        )


class ExperimentConfig(BaseModel):
    """完整实验配置: [scenario] + [noise] + [solver]"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: ScenarioSpec = Field(default_factory=ScenarioSpec)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    solver: SolverConfig = Field(default_factory=SolverConfig)


class SweepSpec(BaseModel):
    """扫描参数: sigma (高斯噪声标准差) 或 b (NLOS 均匀分布上界)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    param: SweepParam
    values: List[float]

    @field_validator("values")
    @classmethod
    def _values(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("sweep needs at least one value")
        if any(v < 0 for v in values):
            raise ValueError("sweep values must be >= 0")
        return values


# ========== 运行结果 ==========

@dataclass(frozen=True)
class TrialTask:
    """一次 Monte-Carlo 试验的全部输入 (可跨进程传递)"""
    scenario: ScenarioSpec
    solver: SolverConfig
    sigma: float
    omega_override: Optional[float]
    trial_index: int
    record_trajectory: bool = False


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    trial_index: int
    record: RunRecord
    baseline: Optional[RunRecord]
    crlb: Optional[float]


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    """
    一个扫描点的汇总

    rmse / baseline_rmse 只统计未故障的试验, fault_count 同时报告。
    """
    scenario: ScenarioSpec
    param: Optional[SweepParam]
    value: Optional[float]
    sigma: float
    records: List[RunRecord]
    baseline_records: List[RunRecord] = field(default_factory=list)
    rmse: float = float("nan")
    baseline_rmse: float = float("nan")
    cdf_grid: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    baseline_cdf_grid: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    crlb: Optional[float] = None
    fault_count: int = 0
    baseline_fault_count: int = 0
    flagged: bool = False

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records if r.converged])

    @property
    def baseline_errors(self) -> np.ndarray:
        return np.array([r.error for r in self.baseline_records if r.converged])


# ========== HTTP 请求体 ==========

class LocalizeRequest(BaseModel):
    """现场数据定位: 只需传感器坐标、接收时间戳和传播速度"""
    model_config = ConfigDict(extra="forbid")

    sensor_positions: List[List[float]]
    timestamps: List[float]
    propagation_speed: float = Field(default_factory=lambda: settings.propagation_speed)
    gamma: Optional[float] = None
    rho: Optional[float] = None
    method: Optional[IntegratorMethod] = None
    tau: Optional[float] = None
    horizon: Optional[float] = None
    settle: Optional[bool] = None


class LocalizeResponse(BaseModel):
    status: str
    x: Optional[List[float]] = None
    t0: Optional[float] = None
    steps: int
    time: Optional[float] = None
    kkt: Optional[dict] = None
    fault: Optional[str] = None


class BenchmarkRequest(BaseModel):
    """与 TOML 配置同结构, 另可附带扫描"""
    model_config = ConfigDict(extra="forbid")

    scenario: dict = Field(default_factory=dict)
    noise: dict = Field(default_factory=dict)
    solver: dict = Field(default_factory=dict)
    sweep: Optional[SweepSpec] = None
