import math

import numpy as np
import pytest

from core.exceptions import InvalidDeploymentError, MeasurementRejectedError
from measurement.models import Deployment, MeasurementSet, NoiseSpec
from measurement.services import generate_measurements, true_range, with_nlos
from scenario.services import build_deterministic


def _triangle(source=(2.0, 3.0)):
    return Deployment(
        sensor_positions=[[0.0, 0.0], [20.0, 0.0], [20.0, 20.0]],
        source_position=source,
        onset_time=0.1,
        propagation_speed=1.0,
    )


# ── Deployment ───────────────────────────────────────────────────────────────

def test_sensor_at_source_is_rejected():
    with pytest.raises(InvalidDeploymentError, match="coincides"):
        Deployment([[2.0, 3.0], [0.0, 0.0], [20.0, 0.0]], [2.0, 3.0], 0.1, 1.0)


def test_duplicate_sensors_are_rejected():
    with pytest.raises(InvalidDeploymentError, match="share the same position"):
        Deployment([[0.0, 0.0], [0.0, 0.0], [20.0, 0.0]], [2.0, 3.0], 0.1, 1.0)


def test_too_few_sensors_are_rejected():
    with pytest.raises(InvalidDeploymentError, match="at least"):
        Deployment([[0.0, 0.0], [20.0, 0.0]], [2.0, 3.0], 0.1, 1.0)


@pytest.mark.parametrize("field, value", [("propagation_speed", 0.0), ("onset_time", -1.0)])
def test_invalid_scalars_are_rejected(field, value):
    kwargs = dict(sensor_positions=[[0, 0], [20, 0], [20, 20]], source_position=[2, 3],
                  onset_time=0.1, propagation_speed=1.0)
    kwargs[field] = value
    with pytest.raises(InvalidDeploymentError):
        Deployment(**kwargs)


def test_deployment_arrays_are_read_only():
    dep = _triangle()
    with pytest.raises(ValueError):
        dep.sensor_positions[0, 0] = 1.0


# ── true_range ───────────────────────────────────────────────────────────────

def test_true_range_values():
    assert true_range(_triangle(source=(3.0, 4.0)), 1) == pytest.approx(5.0)
    dep = _triangle()
    assert true_range(dep, 1) == pytest.approx(math.sqrt(13))
    assert true_range(dep, 1) == pytest.approx(3.605551, abs=1e-6)
    assert true_range(dep, 2) == pytest.approx(18.248288, abs=1e-6)


def test_true_range_index_is_one_based():
    dep = _triangle()
    with pytest.raises(IndexError):
        true_range(dep, 0)
    with pytest.raises(IndexError):
        true_range(dep, 4)


# ── generate_measurements ────────────────────────────────────────────────────

def test_noiseless_timestamps():
    ms = generate_measurements(_triangle(), NoiseSpec.common(0.0, 3), seed=0)
    assert ms.timestamps[0] == pytest.approx(3.705551, abs=1e-6)
    assert ms.tdoas[0] == pytest.approx(math.sqrt(333) - math.sqrt(13))
    assert ms.tdoas[0] == pytest.approx(14.642737, abs=1e-6)


def test_tdoas_are_exact_differences(perimeter):
    ms = generate_measurements(perimeter, with_nlos(0.3, 8, [(1, 5.0)]), seed=11)
    assert np.array_equal(ms.tdoas, ms.timestamps[1:] - ms.timestamps[0])


def test_los_realization_has_no_bias(perimeter):
    for seed in range(5):
        ms = generate_measurements(perimeter, NoiseSpec.common(0.5, 8), seed=seed)
        assert np.all(ms.realization.nlos == 0.0)


def test_same_seed_same_measurements(perimeter):
    noise = with_nlos(0.3, 8, [(1, 5.0), (5, 5.0)])
    a = generate_measurements(perimeter, noise, seed=42)
    b = generate_measurements(perimeter, noise, seed=42)
    assert np.array_equal(a.timestamps, b.timestamps)
    c = generate_measurements(perimeter, noise, seed=43)
    assert not np.array_equal(a.timestamps, c.timestamps)


def test_nlos_bias_is_uniform(perimeter):
    noise = NoiseSpec.common(0.0, 8, np.full(8, 5.0))
    q = np.concatenate([
        generate_measurements(perimeter, noise, seed=s).realization.nlos for s in range(12500)
    ])
    n = q.size
    assert n == 100_000
    assert q.min() >= 0.0 and q.max() <= 5.0
    # U(0, 5): 均值 2.5, 标准差 5/√12, 容差取三倍标准误
    assert q.mean() == pytest.approx(2.5, abs=3 * 5 / np.sqrt(12) / np.sqrt(n))


def test_negative_timestamp_is_rejected():
    dep = build_deterministic(20, 20.0, [2.0, 3.0], onset_time=0.0)
    with pytest.raises(MeasurementRejectedError) as info:
        generate_measurements(dep, NoiseSpec.common(1e6, 20), seed=0)
    assert 1 <= info.value.sensor_index <= 20


def test_noise_spec_length_must_match(perimeter):
    with pytest.raises(ValueError):
        generate_measurements(perimeter, NoiseSpec.common(0.1, 5), seed=0)


# ── NoiseSpec / MeasurementSet ───────────────────────────────────────────────

def test_with_nlos_pattern():
    noise = with_nlos(0.1, 8, [(1, 5.0), (5, 2.0)])
    assert noise.nlos_sensors == [1, 5]
    assert noise.nlos_upper[4] == 2.0
    assert not noise.is_los
    assert NoiseSpec.common(0.1, 8).is_los
    with pytest.raises(ValueError):
        with_nlos(0.1, 8, [(9, 5.0)])


def test_negative_noise_parameters_are_rejected():
    with pytest.raises(ValueError):
        NoiseSpec.common(-0.1, 3)
    with pytest.raises(ValueError):
        NoiseSpec.common(0.1, 3, [-1.0, 0.0, 0.0])


def test_from_timestamps():
    ms = MeasurementSet.from_timestamps([1.0, 3.0, 2.5])
    assert ms.realization is None
    assert ms.tdoas.tolist() == [2.0, 1.5]
    with pytest.raises(ValueError):
        MeasurementSet.from_timestamps([1.0])
    with pytest.raises(ValueError):
        MeasurementSet.from_timestamps([1.0, float("nan")])
