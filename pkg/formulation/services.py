"""
目标函数、约束与增广拉格朗日函数

约束编号在文档中为 1-based (与 GCOP 写法一致), 存储为 0-based,
两者之间只通过 inequality_offset 换算:

    g_1            = −t₀
    g_{i+1}        = t₀ − t_i                    i = 1…L
    g_{i+L+1}      = −d_i                        i = 1…L
    g_{i+2L+1}     = d_i − (t_i − t₀)c           i = 1…L
    g_{p(i,j)}     = (2t₀ − t_i − t_j)c + ‖x_i − x_j‖₂,
                     p(i,j) = (2L−i)(i−1)/2 + j − i + 3L + 1,  1 ≤ i < j ≤ L
    h_i            = d_i² − ‖x − x_i‖₂²          i = 1…L
"""
import math
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from formulation.models import MultiplierVector, ProblemInstance, VariableVector

LN2 = math.log(2.0)

ZLike = Union[np.ndarray, VariableVector]
NuLike = Union[np.ndarray, MultiplierVector]


# ========== 下标换算 ==========

def inequality_offset(index: int) -> int:
    """1-based 约束编号 → 0-based 存储下标"""
    return index - 1


def pair_flat_index(i: int, j: int, L: int) -> int:
    """传感器对 (i, j) (1-based, i<j) 在 g 中的 1-based 编号"""
    if not 1 <= i < j <= L:
        raise ValueError(f"invalid sensor pair ({i}, {j}) for L={L}")
    return (2 * L - i) * (i - 1) // 2 + j - i + 3 * L + 1


def pair_from_flat_index(p: int, L: int) -> Tuple[int, int]:
    """pair_flat_index 的逆: 1-based 编号 → (i, j)"""
    q = p - 3 * L - 1
    if not 1 <= q <= L * (L - 1) // 2:
        raise ValueError(f"constraint {p} is not in the sensor-pair block for L={L}")
    i = 1
    while (2 * L - (i + 1)) * i // 2 < q:
        i += 1
    j = q - (2 * L - i) * (i - 1) // 2 + i
    return i, j


def _z(z: ZLike) -> np.ndarray:
    return z.pack() if isinstance(z, VariableVector) else np.asarray(z, dtype=float)


def _nu(nu: NuLike) -> np.ndarray:
    return nu.pack() if isinstance(nu, MultiplierVector) else np.asarray(nu, dtype=float)


def _split(z: np.ndarray, k: int) -> Tuple[float, np.ndarray, np.ndarray]:
    return z[0], z[1:1 + k], z[1 + k:]


# ========== 损失 ==========

def smoothed_abs(u, gamma: float):
    """
    f₁(u) = ln((e^{γu} + e^{−γu}) / 2) / γ, 按不溢出的等价形式
    |u| + ln((1 + e^{−2γ|u|}) / 2) / γ 计算
    """
    a = np.abs(u)
    value = a + (np.log1p(np.exp(-2.0 * gamma * a)) - LN2) / gamma
    return float(value) if np.ndim(value) == 0 else value


def smoothed_abs_grad(u, gamma: float):
    """tanh(γu); np.tanh 对大参数饱和, 不会溢出"""
    value = np.tanh(gamma * np.asarray(u, dtype=float))
    return float(value) if np.ndim(value) == 0 else value


def loss_value(r: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    if inst.loss == "l2":
        return 0.5 * r * r
    return smoothed_abs(r, inst.gamma)


def loss_grad(u: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """损失的导数 (奇函数), 在 u = d_i + (t₀ − t_i)c 处求值"""
    if inst.loss == "l2":
        return u
    return smoothed_abs_grad(u, inst.gamma)


# ========== 目标与约束 ==========

def residuals(z: ZLike, inst: ProblemInstance) -> np.ndarray:
    """(t_i − t₀)c − d_i"""
    t0, _, d = _split(_z(z), inst.k)
    return (inst.timestamps - t0) * inst.c - d


def objective(z: ZLike, inst: ProblemInstance) -> float:
    """f(z) = Σ f₁((t_i − t₀)c − d_i)"""
    return float(np.sum(loss_value(residuals(z, inst), inst)))


def eval_inequalities(z: ZLike, inst: ProblemInstance) -> np.ndarray:
    """g(z), 长度 K, 顺序见模块文档"""
    t0, _, d = _split(_z(z), inst.k)
    t, c = inst.timestamps, inst.c
    pair = (2.0 * t0 - t[inst.pair_i] - t[inst.pair_j]) * c + inst.pair_dist
    return np.concatenate((
        [-t0],
        t0 - t,
        -d,
        d - (t - t0) * c,
        pair,
    ))


def eval_equalities(z: ZLike, inst: ProblemInstance) -> np.ndarray:
    """h(z) = d² − ‖x − x_i‖₂², 长度 M"""
    _, x, d = _split(_z(z), inst.k)
    diff = x - inst.sensor_positions
    return d * d - np.einsum("ij,ij->i", diff, diff)


def lagrangian(z: ZLike, nu: NuLike, inst: ProblemInstance) -> float:
    """L(z, ν) = f(z) + μᵀg(z) + λᵀh(z)"""
    K = inst.dims.K
    nu = _nu(nu)
    mu, lam = nu[:K], nu[K:]
    return objective(z, inst) + float(mu @ eval_inequalities(z, inst)) + float(lam @ eval_equalities(z, inst))


def augmented_lagrangian(z: ZLike, nu: NuLike, inst: ProblemInstance, rho: Optional[float] = None) -> float:
    """
    L_ρ(z, ν) = L(z, ν) + (ρ/2) { Σ[μ_i g_i(z)]² + Σ[λ_i h_i(z)]² }

    用于监控和有限差分检验, 不在积分内循环中使用。
    """
    rho = inst.rho if rho is None else rho
    K = inst.dims.K
    nu = _nu(nu)
    mu, lam = nu[:K], nu[K:]
    g = eval_inequalities(z, inst)
    h = eval_equalities(z, inst)
    penalty = float(np.sum((mu * g) ** 2) + np.sum((lam * h) ** 2))
    return objective(z, inst) + float(mu @ g) + float(lam @ h) + 0.5 * rho * penalty


# ========== 闭式梯度 ==========

class Evaluation(NamedTuple):
    """一次求值共享的量: ∇_z L_ρ, g(z), h(z)"""
    grad: np.ndarray
    g: np.ndarray
    h: np.ndarray


def evaluate(z: np.ndarray, nu: np.ndarray, inst: ProblemInstance, rho: Optional[float] = None) -> Evaluation:
    """
    闭式 ∇_z L_ρ(z, ν) 以及 g(z), h(z)

    ∂L_ρ/∂t₀ = c Σ φ(u_i) − μ₁ + Σ μ_{i+1} + c Σ μ_{i+2L+1} + 2c Σ μ_{p(i,j)}
               + ρ { μ₁² t₀ + Σ μ_{i+1}² (t₀ − t_i) + c Σ μ_{i+2L+1}² [d_i − (t_i − t₀)c]
                     + 2c Σ μ_{p(i,j)}² [(2t₀ − t_i − t_j)c + ‖x_i − x_j‖₂] }
    ∂L_ρ/∂x  = 2 Σ [λ_i + ρ λ_i² (d_i² − ‖x − x_i‖₂²)] (x_i − x)
    ∂L_ρ/∂d_i = φ(u_i) − μ_{i+L+1} + μ_{i+2L+1} + 2λ_i d_i
               + ρ { μ_{i+L+1}² d_i + μ_{i+2L+1}² [d_i − (t_i − t₀)c] + 2λ_i² d_i (d_i² − ‖x − x_i‖₂²) }

    其中 u_i = d_i + (t₀ − t_i)c, φ 为损失导数 (平滑 ℓ1 时为 tanh(γu))。
    """
    rho = inst.rho if rho is None else rho
    L, k, c = inst.L, inst.k, inst.c
    K = (L * L + 5 * L + 2) // 2
    t = inst.timestamps
    t0, x, d = z[0], z[1:1 + k], z[1 + k:]
    mu, lam = nu[:K], nu[K:]

    mu1 = mu[0]
    mu_t = mu[1:1 + L]
    mu_d = mu[1 + L:1 + 2 * L]
    mu_b = mu[1 + 2 * L:1 + 3 * L]
    mu_p = mu[1 + 3 * L:]

    u = d + (t0 - t) * c
    phi = loss_grad(u, inst)
    bound = d - (t - t0) * c
    pair = (2.0 * t0 - t[inst.pair_i] - t[inst.pair_j]) * c + inst.pair_dist
    to_sensor = inst.sensor_positions - x
    h = d * d - np.einsum("ij,ij->i", to_sensor, to_sensor)

    d_t0 = (
        c * np.sum(phi) - mu1 + np.sum(mu_t) + c * np.sum(mu_b) + 2.0 * c * np.sum(mu_p)
        + rho * (
            mu1 * mu1 * t0
            + np.sum(mu_t * mu_t * (t0 - t))
            + c * np.sum(mu_b * mu_b * bound)
            + 2.0 * c * np.sum(mu_p * mu_p * pair)
        )
    )
    d_x = 2.0 * ((lam + rho * lam * lam * h) @ to_sensor)
    d_d = (
        phi - mu_d + mu_b + 2.0 * lam * d
        + rho * (mu_d * mu_d * d + mu_b * mu_b * bound + 2.0 * lam * lam * d * h)
    )

    grad = np.empty(L + k + 1)
    grad[0] = d_t0
    grad[1:1 + k] = d_x
    grad[1 + k:] = d_d
    g = np.concatenate(([-t0], t0 - t, -d, bound, pair))
    return Evaluation(grad=grad, g=g, h=h)


def grad_augmented_lagrangian(z: ZLike, nu: NuLike, inst: ProblemInstance, rho: Optional[float] = None) -> np.ndarray:
    """闭式 ∇_z L_ρ; rho=0 时即普通拉格朗日函数的梯度 ∇_z L"""
    return evaluate(_z(z), _nu(nu), inst, rho).grad


def numeric_gradient(fun: Callable[[np.ndarray], float], z: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """中心差分梯度 (仅供测试对照闭式梯度)"""
    z = np.asarray(z, dtype=float)
    grad = np.empty_like(z)
    for n in range(z.size):
        h = step * max(1.0, abs(z[n]))
        forward = z.copy()
        backward = z.copy()
        forward[n] += h
        backward[n] -= h
        grad[n] = (fun(forward) - fun(backward)) / (2.0 * h)
    return grad
