import logging
from typing import Optional, Tuple

import numpy as np

from core.config import settings
from dynamics.models import NetworkState
from formulation.models import ProblemInstance
from formulation.services import evaluate
from kkt.models import KktReport

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-12


def equality_jacobian(z: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """
    ∇_z h(z) = [0_L | 2(Xᵀ − 1_L xᵀ) | 2 diag(d)], 形状 (L, N)
    """
    z = np.asarray(z, dtype=float)
    L, k = inst.L, inst.k
    x, d = z[1:1 + k], z[1 + k:]
    jac = np.zeros((L, L + k + 1))
    jac[:, 1:1 + k] = 2.0 * (inst.sensor_positions - x)
    jac[:, 1 + k:] = 2.0 * np.diag(d)
    return jac


def singular_values(jac: np.ndarray) -> np.ndarray:
    return np.linalg.svd(jac, compute_uv=False)


def has_full_row_rank(jac: np.ndarray, rtol: Optional[float] = None) -> bool:
    """秩判定阈值: rtol · 最大奇异值"""
    rtol = settings.rank_rtol if rtol is None else rtol
    sv = singular_values(jac)
    if sv.size == 0 or sv[0] == 0:
        return False
    return bool(np.sum(sv > rtol * sv[0]) == jac.shape[0])


def kkt_inf_norm(y: np.ndarray, inst: ProblemInstance, alpha: float = 1.0) -> float:
    """
    打包状态 y = [z, μ, λ] 上的 KKT 残差无穷范数 (不做 SVD, 供轨迹采样)
    """
    N, K, _ = inst.dims
    z, nu = y[:N], y[N:]
    mu = nu[:K]
    ev = evaluate(z, nu, inst)
    projection = np.maximum(mu + alpha * ev.g, 0.0) - mu
    return float(max(
        np.max(np.abs(ev.grad)),
        np.max(np.abs(projection)),
        np.max(np.abs(ev.h)),
    ))


def residuals(
    state: NetworkState,
    inst: ProblemInstance,
    alpha: float = 1.0,
    eps_act: Optional[float] = None,
) -> KktReport:
    """
    KKT 残差:
    (a) ∇_z L_ρ(z, ν) = 0
    (b) [μ + α g(z)]⁺ = μ
    (c) h(z) = 0
    以及 LICQ 诊断 (∇_z h 的最小奇异值) 和激活的不等式个数
    """
    eps_act = settings.eps_active if eps_act is None else eps_act
    state.check_dims(inst.dims)

    ev = evaluate(state.z, state.nu, inst)
    projection = np.maximum(state.mu + alpha * ev.g, 0.0) - state.mu
    sv = singular_values(equality_jacobian(state.z, inst))

    return KktReport(
        stationarity_inf_norm=float(np.max(np.abs(ev.grad))),
        projection_residual_inf_norm=float(np.max(np.abs(projection))),
        primal_equality_inf_norm=float(np.max(np.abs(ev.h))),
        licq_min_singular_value=float(sv.min()),
        active_inequality_count=int(np.sum(ev.g >= -eps_act)),
    )


def sosc_precondition(state: NetworkState, inst: ProblemInstance, eps_act: Optional[float] = None) -> bool:
    """
    二阶充分条件锥为空的前提: 没有激活的不等式, 且 ∇_z h 行满秩

    只做报告, 不构成证明 (共线等退化几何下可能不成立)。
    """
    report = residuals(state, inst, eps_act=eps_act)
    full_rank = has_full_row_rank(equality_jacobian(state.z, inst))
    if report.active_inequality_count:
        logger.debug(f"{report.active_inequality_count} inequality constraints active")
    return report.active_inequality_count == 0 and full_rank


def projection_equivalence_check(mu: float, g: float, alpha: float, tol: float = PROJECTION_TOL) -> Tuple[bool, bool]:
    """
    在单个 (μ, g) 上分别判定两种互补条件:
    - 经典形式: g ≤ 0, μ ≥ 0, μg = 0
    - 投影形式: [μ + αg]⁺ = μ

    Returns:
        (经典形式成立, 投影形式成立)
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    classic = g <= tol and mu >= -tol and abs(mu * g) <= tol
    projected = abs(max(mu + alpha * g, 0.0) - mu) <= tol
    return bool(classic), bool(projected)
