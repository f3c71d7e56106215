import math

import numpy as np
import pytest

from core.exceptions import InvalidDeploymentError
from formulation.models import (
    MultiplierVector,
    ProblemInstance,
    VariableVector,
    problem_dims,
)
from formulation.services import (
    augmented_lagrangian,
    eval_equalities,
    eval_inequalities,
    grad_augmented_lagrangian,
    inequality_offset,
    lagrangian,
    numeric_gradient,
    objective,
    pair_flat_index,
    pair_from_flat_index,
    smoothed_abs,
    smoothed_abs_grad,
)
from measurement.models import MeasurementSet, NoiseSpec
from measurement.services import generate_measurements
from scenario.services import build_random


def _random_state(inst, rng):
    """真值附近的随机 (z, ν)"""
    N, K, M = inst.dims
    z = np.concatenate((
        [rng.uniform(0.0, 0.5)],
        rng.uniform(0.0, 20.0, inst.k),
        rng.uniform(1.0, 20.0, inst.L),
    ))
    nu = np.concatenate((rng.uniform(0.0, 1.0, K), rng.uniform(-0.05, 0.05, M)))
    return z, nu


def _noisy_instance(L, seed, **kwargs):
    dep = build_random(L, 20.0, seed=seed)
    ms = generate_measurements(dep, NoiseSpec.common(0.3, L), seed=seed)
    return ProblemInstance.from_deployment(dep, ms, **kwargs)


# ── 平滑绝对值 ────────────────────────────────────────────────────────────────

def test_smoothed_abs_values():
    assert smoothed_abs(0.0, 100.0) == 0.0
    assert smoothed_abs(1.0, 100.0) == pytest.approx(1 - math.log(2) / 100, abs=1e-12)
    assert smoothed_abs(1.0, 100.0) == pytest.approx(0.9930685, abs=1e-7)
    assert smoothed_abs(-1.0, 100.0) == smoothed_abs(1.0, 100.0)


def test_smoothed_abs_does_not_overflow():
    assert smoothed_abs(1e6, 100.0) == pytest.approx(1e6 - math.log(2) / 100)
    assert np.isfinite(smoothed_abs(np.array([-1e8, 1e8]), 1e3)).all()


@pytest.mark.parametrize("gamma", [1.0, 10.0, 100.0])
def test_smoothed_abs_gap_bound(gamma):
    u = np.linspace(-50, 50, 20001)
    gap = np.abs(u) - smoothed_abs(u, gamma)
    assert gap.min() >= -1e-12
    assert gap.max() <= math.log(2) / gamma + 1e-12


def test_smoothed_abs_grad_values():
    assert smoothed_abs_grad(0.0, 100.0) == 0.0
    assert smoothed_abs_grad(10.0, 100.0) == 1.0
    assert smoothed_abs_grad(0.01, 100.0) == pytest.approx(0.7615942, abs=1e-7)
    u = np.linspace(-0.2, 0.2, 401)
    assert np.all(np.abs(smoothed_abs_grad(u, 100.0)) <= 1.0)


def test_smoothed_abs_grad_matches_finite_difference():
    u = np.linspace(-0.05, 0.05, 11)
    h = 1e-7
    fd = (smoothed_abs(u + h, 100.0) - smoothed_abs(u - h, 100.0)) / (2 * h)
    assert np.allclose(fd, smoothed_abs_grad(u, 100.0), atol=1e-6)


# ── 维度与下标 ────────────────────────────────────────────────────────────────

def test_problem_dims():
    assert problem_dims(8, 2) == (11, 53, 8)
    assert problem_dims(10, 2).K == 76
    assert problem_dims(20, 2).K == 251


@pytest.mark.parametrize("L", range(3, 13))
def test_pair_index_matches_storage_order(L):
    pair_i, pair_j = np.triu_indices(L, 1)
    for p, (i, j) in enumerate(zip(pair_i + 1, pair_j + 1)):
        flat = pair_flat_index(i, j, L)
        assert inequality_offset(flat) == 1 + 3 * L + p
        assert pair_from_flat_index(flat, L) == (i, j)
    assert pair_flat_index(L - 1, L, L) == problem_dims(L, 2).K


def test_pair_index_rejects_bad_pairs():
    with pytest.raises(ValueError):
        pair_flat_index(2, 2, 5)
    with pytest.raises(ValueError):
        pair_from_flat_index(3, 5)


# ── 问题实例 ──────────────────────────────────────────────────────────────────

def test_instance_validation(noiseless_instance):
    ms = noiseless_instance.measurements
    sensors = noiseless_instance.sensor_positions
    with pytest.raises(ValueError, match="gamma"):
        ProblemInstance.build(ms, sensors, 1.0, gamma=0.0)
    with pytest.raises(ValueError, match="rho"):
        ProblemInstance.build(ms, sensors, 1.0, rho=-1.0)
    with pytest.raises(ValueError):
        ProblemInstance.build(ms, sensors[:5], 1.0)
    twins = sensors.copy()
    twins[1] = twins[0]
    with pytest.raises(InvalidDeploymentError):
        ProblemInstance.build(ms, twins, 1.0)


def test_variable_vector_layout(perimeter):
    truth = VariableVector.ground_truth(perimeter)
    z = truth.pack()
    assert z[0] == 0.1
    assert z[1:3].tolist() == [2.0, 3.0]
    back = VariableVector.unpack(z, 2)
    assert np.array_equal(back.d, perimeter.ranges())


# ── 目标与约束 ────────────────────────────────────────────────────────────────

def test_objective_zero_at_exact_fit(noiseless_instance, truth):
    assert objective(truth, noiseless_instance) == pytest.approx(0.0, abs=1e-10)


def test_objective_single_residual(noiseless_instance, truth):
    z = truth.copy()
    z[1 + 2] -= 1.0  # d_1 减 1, 残差 +1
    assert objective(z, noiseless_instance) == pytest.approx(0.9930685, abs=1e-6)


def test_inequalities_at_truth(noiseless_instance, truth):
    inst = noiseless_instance
    g = eval_inequalities(truth, inst)
    L = inst.L
    assert g.size == 53
    assert np.all(g <= 1e-12)
    # 距离上界块在无噪声真值处恰好为 0, 其余块严格可行
    assert np.allclose(g[1 + 2 * L:1 + 3 * L], 0.0, atol=1e-12)
    strict = np.concatenate((g[:1 + 2 * L], g[1 + 3 * L:]))
    assert np.all(strict < 0)


def test_pair_block_is_triangle_gap(noiseless_instance, truth, perimeter):
    inst = noiseless_instance
    g = eval_inequalities(truth, inst)
    r = perimeter.ranges()
    for i, j in [(1, 2), (3, 7), (7, 8)]:
        expected = np.linalg.norm(inst.sensor_positions[i - 1] - inst.sensor_positions[j - 1]) - r[i - 1] - r[j - 1]
        assert g[inequality_offset(pair_flat_index(i, j, inst.L))] == pytest.approx(expected, abs=1e-12)


def test_equalities(noiseless_instance, truth, perimeter):
    inst = noiseless_instance
    assert np.allclose(eval_equalities(truth, inst), 0.0, atol=1e-12)
    z = truth.copy()
    z[3:] += 1.0
    assert np.allclose(eval_equalities(z, inst), 2 * perimeter.ranges() + 1)


def test_equalities_total_at_sensor(noiseless_instance):
    inst = noiseless_instance
    z = np.zeros(inst.dims.N)
    z[1:3] = inst.sensor_positions[0]
    assert eval_equalities(z, inst)[0] == 0.0


# ── 增广拉格朗日函数 ──────────────────────────────────────────────────────────

def test_augmented_lagrangian_reduces_to_objective(noiseless_instance, truth):
    inst = noiseless_instance
    rng = np.random.default_rng(0)
    z, _ = _random_state(inst, rng)
    zero = MultiplierVector.zeros(inst.dims)
    assert augmented_lagrangian(z, zero, inst) == pytest.approx(objective(z, inst))

    lam_only = MultiplierVector(mu=np.zeros(inst.dims.K), lam=rng.normal(size=inst.dims.M))
    assert augmented_lagrangian(truth, lam_only, inst) == pytest.approx(objective(truth, inst), abs=1e-9)


def _naive_augmented_lagrangian(z, nu, inst):
    """逐项实现的对照版本"""
    L, k, c, rho = inst.L, inst.k, inst.c, inst.rho
    t = inst.timestamps
    X = inst.sensor_positions
    t0, x, d = z[0], z[1:1 + k], z[1 + k:]
    K = problem_dims(L, k).K
    mu, lam = nu[:K], nu[K:]

    f = sum(smoothed_abs((t[i] - t0) * c - d[i], inst.gamma) for i in range(L))
    g = [-t0]
    g += [t0 - t[i] for i in range(L)]
    g += [-d[i] for i in range(L)]
    g += [d[i] - (t[i] - t0) * c for i in range(L)]
    for i in range(L):
        for j in range(i + 1, L):
            g.append((2 * t0 - t[i] - t[j]) * c + math.dist(X[i], X[j]))
    h = [d[i] ** 2 - math.dist(x, X[i]) ** 2 for i in range(L)]

    value = f
    for m, gi in zip(mu, g):
        value += m * gi + 0.5 * rho * (m * gi) ** 2
    for l, hi in zip(lam, h):
        value += l * hi + 0.5 * rho * (l * hi) ** 2
    return value


@pytest.mark.parametrize("L", [3, 5, 8])
def test_augmented_lagrangian_matches_naive(L):
    inst = _noisy_instance(L, seed=L)
    rng = np.random.default_rng(L)
    for _ in range(5):
        z, nu = _random_state(inst, rng)
        expected = _naive_augmented_lagrangian(z, nu, inst)
        assert augmented_lagrangian(z, nu, inst) == pytest.approx(expected, rel=1e-12)


def test_lagrangian_is_rho_zero_case(noiseless_instance):
    inst = noiseless_instance
    z, nu = _random_state(inst, np.random.default_rng(3))
    assert augmented_lagrangian(z, nu, inst, rho=0.0) == pytest.approx(lagrangian(z, nu, inst))


# ── 闭式梯度 ──────────────────────────────────────────────────────────────────

def _relative_gradient_error(inst, z, nu, rho=None):
    analytic = grad_augmented_lagrangian(z, nu, inst, rho)
    numeric = numeric_gradient(lambda v: augmented_lagrangian(v, nu, inst, rho), z)
    return np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(analytic)))


@pytest.mark.parametrize("L", [4, 8, 10])
def test_gradient_matches_finite_differences(L):
    inst = _noisy_instance(L, seed=100 + L)
    rng = np.random.default_rng(L)
    errors = [_relative_gradient_error(inst, *_random_state(inst, rng)) for _ in range(100)]
    assert max(errors) < 1e-5


def test_l2_gradient_matches_finite_differences():
    inst = _noisy_instance(8, seed=3, loss="l2")
    rng = np.random.default_rng(8)
    errors = [_relative_gradient_error(inst, *_random_state(inst, rng)) for _ in range(20)]
    assert max(errors) < 1e-6


def test_gradient_at_rho_zero(noiseless_instance):
    inst = noiseless_instance
    z, nu = _random_state(inst, np.random.default_rng(4))
    numeric = numeric_gradient(lambda v: lagrangian(v, nu, inst), z)
    analytic = grad_augmented_lagrangian(z, nu, inst, rho=0.0)
    assert np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(analytic))) < 1e-5


def test_gradient_is_permutation_symmetric(perimeter):
    """传感器重新编号不改变 t₀ 和 x 分量"""
    ms = generate_measurements(perimeter, NoiseSpec.common(0.3, 8), seed=2)
    inst = ProblemInstance.from_deployment(perimeter, ms)
    perm = np.array([3, 0, 7, 5, 1, 2, 6, 4])
    shuffled = ProblemInstance.build(
        MeasurementSet.from_timestamps(ms.timestamps[perm]),
        perimeter.sensor_positions[perm],
        perimeter.propagation_speed,
    )
    rng = np.random.default_rng(9)
    z = np.concatenate(([0.2], [4.0, 6.0], rng.uniform(2.0, 18.0, 8)))
    z_perm = np.concatenate((z[:3], z[3:][perm]))
    nu = np.concatenate((np.zeros(inst.dims.K), rng.uniform(-0.01, 0.01, 8)))
    nu_perm = np.concatenate((np.zeros(inst.dims.K), nu[inst.dims.K:][perm]))

    a = grad_augmented_lagrangian(z, nu, inst)
    b = grad_augmented_lagrangian(z_perm, nu_perm, shuffled)
    assert np.allclose(a[:3], b[:3], rtol=1e-12, atol=1e-10)
    assert np.allclose(a[3:][perm], b[3:], rtol=1e-12, atol=1e-10)
