import math
import time
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from core.config import settings
from core.exceptions import IntegrationError, SolverFault
from core.performance_monitor import timer
from core.utils import numbered_columns, write_csv
from dynamics.models import IntegratorConfig, NetworkState, RunRecord, Trajectory
from formulation.models import Dims, ProblemInstance
from formulation.services import evaluate
from kkt.services import kkt_inf_norm, residuals

logger = logging.getLogger(__name__)

BLOCKS = ("z", "mu", "lambda")


def project_nonneg(u):
    """[u]⁺ = max(u, 0)"""
    value = np.maximum(u, 0.0)
    return float(value) if np.ndim(value) == 0 else value


def _locate(index: int, dims: Dims) -> Tuple[str, int]:
    """打包下标 → (块名, 块内下标)"""
    if index < dims.N:
        return "z", index
    if index < dims.N + dims.K:
        return "mu", index - dims.N
    return "lambda", index - dims.N - dims.K


def derivative(y: np.ndarray, inst: ProblemInstance, t: Optional[float] = None) -> np.ndarray:
    """
    打包状态 y = [z, μ, λ] 上的右端:
        dz/dt = −∇_z L_ρ(z, ν)
        dμ/dt = −μ + [μ + g(z)]⁺
        dλ/dt = h(z)

    Raises:
        SolverFault: 任一分量非有限
    """
    N, K, _ = inst.dims
    z, nu = y[:N], y[N:]
    mu = nu[:K]
    ev = evaluate(z, nu, inst)

    dy = np.empty_like(y)
    dy[:N] = -ev.grad
    dy[N:N + K] = np.maximum(mu + ev.g, 0.0) - mu
    dy[N + K:] = ev.h

    if not np.all(np.isfinite(dy)):
        block, index = _locate(int(np.flatnonzero(~np.isfinite(dy))[0]), inst.dims)
        raise SolverFault(block, index, t)
    return dy


def rhs(state: NetworkState, inst: ProblemInstance) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (dz/dt, dμ/dt, dλ/dt)"""
    state.check_dims(inst.dims)
    N, K, _ = inst.dims
    dy = derivative(state.pack(), inst, state.time)
    return dy[:N], dy[N:N + K], dy[N + K:]


def step(state: NetworkState, inst: ProblemInstance, config: IntegratorConfig) -> NetworkState:
    """一次显式 Euler 更新, 三个块同时更新"""
    state.check_dims(inst.dims)
    y = state.pack()
    y = y + config.tau * derivative(y, inst, state.time)
    return NetworkState.unpack(y, inst.dims, state.time + config.tau)


class _Recorder:
    """轨迹采样缓存"""

    def __init__(self, inst: ProblemInstance, alpha: float):
        self.inst = inst
        self.alpha = alpha
        self.times: List[float] = []
        self.zs: List[np.ndarray] = []
        self.kkt: List[float] = []
        self.mu_min: List[float] = []

    def add(self, t: float, y: np.ndarray) -> None:
        N, K, _ = self.inst.dims
        self.times.append(t)
        self.zs.append(y[:N].copy())
        self.kkt.append(kkt_inf_norm(y, self.inst, self.alpha))
        self.mu_min.append(float(np.min(y[N:N + K])))

    def build(self) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            z=np.array(self.zs).reshape(len(self.zs), self.inst.dims.N),
            kkt_inf_norm=np.array(self.kkt),
            mu_min=np.array(self.mu_min),
        )


def _integrate_fixed(y: np.ndarray, inst: ProblemInstance, config: IntegratorConfig,
                     recorder: Optional[_Recorder]) -> Tuple[np.ndarray, int, float]:
    steps = config.fixed_steps
    stride = max(1, int(round(config.record_stride / config.tau)))
    tau = config.tau
    for n in range(steps):
        if recorder is not None and n % stride == 0:
            recorder.add(n * tau, y)
        y = y + tau * derivative(y, inst, n * tau)
    return y, steps, steps * tau


def _integrate_adaptive(y: np.ndarray, inst: ProblemInstance, config: IntegratorConfig,
                        recorder: Optional[_Recorder]) -> Tuple[np.ndarray, int, float]:
    """
    步长加倍误差控制: 比较一步 τ 与两步 τ/2 的结果, 接受两步结果,
    局部误差 O(τ²), 新步长按 (1/err)^{1/2} 缩放, 上限 settings.tau_max
    """
    t, tau, calls = 0.0, config.tau, 0
    next_sample = 0.0
    while t < config.horizon - 1e-12:
        if recorder is not None and t >= next_sample - 1e-12:
            recorder.add(t, y)
            next_sample += config.record_stride
        tau = min(tau, config.horizon - t)
        f0 = derivative(y, inst, t)
        one = y + tau * f0
        half = y + 0.5 * tau * f0
        two = half + 0.5 * tau * derivative(half, inst, t + 0.5 * tau)
        calls += 2

        scale = config.atol + config.rtol * np.maximum(np.abs(y), np.abs(two))
        err = float(np.max(np.abs(two - one) / scale))
        if err <= 1.0:
            y, t = two, t + tau
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 / np.sqrt(err)))
        tau = min(settings.tau_max, tau * factor)
    return y, calls, t


# ========== 刚性 ODE 求解器 ==========

ODE_METHODS = {"lsoda": "LSODA", "bdf": "BDF", "radau": "Radau"}


class _CountedRhs:
    """
    solve_ivp 的右端回调, 统计求值次数

    第一次 SolverFault 之后返回零导数冻结状态, 求解器返回后由调用方重新抛出,
    异常不穿过编译的积分器。
    """

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.calls = 0
        self.fault: Optional[SolverFault] = None

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        if self.fault is not None:
            return np.zeros_like(y)
        self.calls += 1
        try:
            return derivative(y, self.inst, t)
        except SolverFault as e:
            self.fault = e
            return np.zeros_like(y)


def _sample_times(t_start: float, t_end: float, stride: float) -> np.ndarray:
    """[t_start, t_end) 内 stride 的整数倍"""
    first = math.ceil(t_start / stride - 1e-9)
    stop = math.ceil(t_end / stride - 1e-9)
    return np.clip(np.arange(first, stop) * stride, t_start, t_end)


def _integrate_span(y: np.ndarray, fun: _CountedRhs, config: IntegratorConfig,
                    recorder: Optional[_Recorder], t_start: float, t_end: float) -> np.ndarray:
    samples = _sample_times(t_start, t_end, config.record_stride) if recorder is not None else np.empty(0)
    if samples.size and samples[0] - t_start < 1e-9:
        # 段起点直接记录当前状态, 不经插值
        recorder.add(t_start, y)
        samples = samples[1:]
    sol = solve_ivp(
        fun,
        (t_start, t_end),
        y,
        method=ODE_METHODS[config.method],
        t_eval=np.append(samples, t_end),
        rtol=config.rtol,
        atol=config.atol,
    )
    if fun.fault is not None:
        raise fun.fault
    if not sol.success:
        raise IntegrationError(sol.message, float(sol.t[-1]) if sol.t.size else t_start)
    if recorder is not None:
        for t, column in zip(sol.t[:-1], sol.y[:, :-1].T):
            recorder.add(float(t), column)
    return sol.y[:, -1].copy()


def settle_residual(y: np.ndarray, inst: ProblemInstance) -> float:
    """‖dy/dt‖∞; α = 1 时与 KKT 残差的最大值相同"""
    return float(np.max(np.abs(derivative(y, inst))))


def _integrate_ode(y: np.ndarray, inst: ProblemInstance, config: IntegratorConfig,
                   recorder: Optional[_Recorder], fun: _CountedRhs) -> Tuple[np.ndarray, int, float]:
    """
    积分到 horizon 读出; settle 打开且尚未平衡时, 按 settle_chunk 分段继续,
    直到 ‖dy/dt‖∞ ≤ settle_tol 或到达 max_horizon
    """
    if config.horizon == 0:
        return y, 0, 0.0
    fun(0.0, y)
    if fun.fault is not None:
        raise fun.fault
    y = _integrate_span(y, fun, config, recorder, 0.0, config.horizon)
    t = config.horizon
    if not config.settle:
        return y, fun.calls, t

    residual = settle_residual(y, inst)
    while residual > config.settle_tol and t < config.max_horizon:
        t_next = min(t + settings.settle_chunk, config.max_horizon)
        y = _integrate_span(y, fun, config, recorder, t, t_next)
        t = t_next
        residual = settle_residual(y, inst)

    if residual > config.settle_tol:
        logger.warning(f"⚠️ PNN not settled by t={t:g}: ‖dy/dt‖∞={residual:.2e}")
    elif t > config.horizon:
        logger.debug(f"PNN settled at t={t:g} (‖dy/dt‖∞={residual:.2e})")
    return y, fun.calls, t


@timer("pnn_solve")
def solve(
    inst: ProblemInstance,
    config: Optional[IntegratorConfig] = None,
    init: Optional[NetworkState] = None,
    record: bool = True,
) -> RunRecord:
    """
    从 init (默认全零) 积分到 horizon (必要时延长到平衡), 读取最终 x 神经元作为位置估计

    非有限导数或求解器失败终止本次运行, 返回 status="faulted" 的记录。
    """
    config = config or IntegratorConfig()
    dims = inst.dims
    init = init or NetworkState.zeros(dims)
    init.check_dims(dims)

    recorder = _Recorder(inst, config.alpha) if record else None
    fun = _CountedRhs(inst)
    y = init.pack()
    start = time.perf_counter()

    try:
        if config.method == "euler":
            y, steps, elapsed_tc = _integrate_fixed(y, inst, config, recorder)
        elif config.method == "euler-adaptive":
            y, steps, elapsed_tc = _integrate_adaptive(y, inst, config, recorder)
        else:
            y, steps, elapsed_tc = _integrate_ode(y, inst, config, recorder, fun)
    except (SolverFault, IntegrationError) as e:
        wall = time.perf_counter() - start
        logger.warning(f"⚠️ PNN run faulted: {e}")
        if config.method == "euler" and e.time is not None:
            steps = int(round(e.time / config.tau))
        else:
            steps = fun.calls
        return RunRecord(
            status="faulted",
            steps=steps,
            wall_time=wall,
            trajectory=recorder.build() if recorder else None,
            fault=str(e),
            solver=_solver_name(inst),
        )

    final = NetworkState.unpack(y, dims, init.time + elapsed_tc)
    if recorder is not None:
        recorder.add(elapsed_tc, y)
    wall = time.perf_counter() - start
    report = residuals(final, inst, alpha=config.alpha)

    logger.debug(
        f"PNN run finished ({config.method}): {steps} evaluations, t={elapsed_tc:g}, "
        f"x={final.z[1:1 + inst.k]}, kkt={report.inf_norm:.2e}, {wall:.2f}s"
    )
    return RunRecord(
        status="converged",
        steps=steps,
        wall_time=wall,
        final_state=final,
        estimate=final.z[1:1 + inst.k].copy(),
        onset_estimate=float(final.z[0]),
        kkt=report,
        trajectory=recorder.build() if recorder else None,
        solver=_solver_name(inst),
    )


def _solver_name(inst: ProblemInstance) -> str:
    return "l2-pnn" if inst.loss == "l2" else "l1-pnn"


# ========== 轨迹导出 ==========

def trajectory_frame(record: RunRecord, inst: ProblemInstance) -> pd.DataFrame:
    """列: time_constant, t0, x1..xk, d1..dL, kkt_inf_norm"""
    if record.trajectory is None:
        raise ValueError("run was solved without trajectory recording")
    traj = record.trajectory
    columns = ["t0"] + numbered_columns("x", inst.k) + numbered_columns("d", inst.L)
    frame = pd.DataFrame(traj.z, columns=columns)
    frame.insert(0, "time_constant", traj.times)
    frame["kkt_inf_norm"] = traj.kkt_inf_norm
    return frame


def write_trace(record: RunRecord, inst: ProblemInstance, path: Union[str, Path]) -> Path:
    return write_csv(trajectory_frame(record, inst), path)
