import numpy as np
import pytest

from formulation.models import ProblemInstance, VariableVector
from measurement.models import NoiseSpec
from measurement.services import generate_measurements, with_nlos
from scenario.services import build_deterministic

SOURCE = [2.0, 3.0]
SIDE = 20.0


@pytest.fixture
def perimeter():
    """L=8 边界部署, 源在 [2, 3], t₀=0.1, c=1"""
    return build_deterministic(8, SIDE, SOURCE, onset_time=0.1, propagation_speed=1.0)


@pytest.fixture
def noiseless_instance(perimeter):
    measurements = generate_measurements(perimeter, NoiseSpec.common(0.0, perimeter.L), seed=0)
    return ProblemInstance.from_deployment(perimeter, measurements)


@pytest.fixture
def truth(perimeter):
    return VariableVector.ground_truth(perimeter).pack()


@pytest.fixture
def mild_nlos_instance(perimeter):
    """σ² = 0.1, 传感器 1 和 5 的 NLOS 上界 ω = 5"""
    noise = with_nlos(np.sqrt(0.1), perimeter.L, [(1, 5.0), (5, 5.0)])
    measurements = generate_measurements(perimeter, noise, seed=7)
    return ProblemInstance.from_deployment(perimeter, measurements)


@pytest.fixture
def make_noiseless():
    """任意部署上的无噪声实例"""
    def build(deployment, **kwargs) -> ProblemInstance:
        measurements = generate_measurements(deployment, NoiseSpec.common(0.0, deployment.L), seed=0)
        return ProblemInstance.from_deployment(deployment, measurements, **kwargs)
    return build
