"""
LOS 条件下 TDOA 定位的 Cramér–Rao 下界

以传感器 1 为参考的距离差 r_i − r_1 (i = 2…L) 带有噪声 n_i − n_1,
n_i 独立同分布 N(0, σ²), 因而协方差为 Σ = σ²(I + 11ᵀ)。
雅可比第 i 行为 u_i − u_1, u_i = (x − x_i)/‖x − x_i‖₂,
FIM = Jᵀ Σ⁻¹ J, 下界 = √trace(FIM⁻¹)。
"""
import logging

import numpy as np

from core.exceptions import DegenerateGeometryError
from measurement.models import REFERENCE_SENSOR, Deployment

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12


def tdoa_covariance(L: int, sigma: float) -> np.ndarray:
    """距离差噪声协方差 σ²(I + 11ᵀ), 形状 (L−1, L−1)"""
    return sigma ** 2 * (np.eye(L - 1) + np.ones((L - 1, L - 1)))


def range_difference_jacobian(deployment: Deployment) -> np.ndarray:
    """∂(r_i − r_1)/∂x, 形状 (L−1, k)"""
    diff = deployment.source_position - deployment.sensor_positions
    unit = diff / np.linalg.norm(diff, axis=1)[:, None]
    others = np.delete(np.arange(deployment.L), REFERENCE_SENSOR)
    return unit[others] - unit[REFERENCE_SENSOR]


def fisher_information(deployment: Deployment, sigma: float) -> np.ndarray:
    jac = range_difference_jacobian(deployment)
    cov = tdoa_covariance(deployment.L, sigma)
    return jac.T @ np.linalg.solve(cov, jac)


def crlb_los(deployment: Deployment, sigma: float) -> float:
    """
    任意无偏估计 RMSE 的下界 (米)

    Raises:
        DegenerateGeometryError: FIM 奇异 (例如传感器与源共线)
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    fim = fisher_information(deployment, sigma)
    if not np.all(np.isfinite(fim)) or not np.linalg.cond(fim) <= COND_LIMIT:
        raise DegenerateGeometryError("Fisher information matrix is singular for this geometry")
    return float(np.sqrt(np.trace(np.linalg.inv(fim))))
