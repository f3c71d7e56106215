from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

IntegratorMethod = Literal["lsoda", "bdf", "radau", "euler", "euler-adaptive"]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="NLOS_", env_file=".env", extra="ignore")

    # 求解器参数 (ρ = 5, γ = 100)
    gamma: float = 100.0                 # 平滑 ℓ1 损失参数
    rho: float = 5.0                     # 增广拉格朗日参数
    method: IntegratorMethod = "lsoda"   # 积分方法
    tau: float = 1e-3                    # Euler 步长 (时间常数)
    horizon: float = 40.0                # 读出时刻 (时间常数)
    record_stride: float = 0.1           # 轨迹采样间隔 (时间常数)
    settle_tol: float = 1e-6             # 平衡判定阈值 ‖dy/dt‖∞
    max_horizon: float = 2000.0          # 未平衡时延长积分的上限 (时间常数)
    settle_chunk: float = 20.0           # 每次延长的时长 (时间常数)
    ode_rtol: float = 1e-8               # ODE 求解器相对误差
    ode_atol: float = 1e-10              # ODE 求解器绝对误差
    tau_max: float = 0.1                 # Euler 步长上限

    # 物理场景
    onset_time: float = 0.1              # 源发射时刻 t₀ (秒)
    propagation_speed: float = 1.0       # 传播速度 c (米/秒)
    region_side: float = 20.0            # 正方形区域边长 (米)
    min_separation: float = 1e-3         # 传感器与源的最小距离 (米)
    max_redraws: int = 100               # 随机部署最大重抽次数

    # Monte-Carlo 基准
    trials: int = 100                    # 默认试验次数
    workers: int = 1                     # 并行 worker 数
    max_fault_fraction: float = 0.1      # 故障试验比例告警阈值

    # KKT 诊断
    eps_active: float = 1e-6             # 激活约束判定带宽
    rank_rtol: float = 1e-8              # 秩判定相对阈值

    # 日志与输出
    log_dir: str = "logs"
    log_level: str = "INFO"
    out_dir: str = "results"


settings = Settings()
