import numpy as np
import pytest
from pydantic import ValidationError

from core.exceptions import InvalidDeploymentError
from core.utils import trial_rng
from scenario.models import ScenarioSpec
from scenario.services import (
    PRESETS,
    build_deterministic,
    build_for_trial,
    build_random,
    draw_nlos_pattern,
    noise_for_trial,
    perimeter_positions,
    preset_pattern,
)


def test_perimeter_eight_sensors():
    expected = [(0, 0), (10, 0), (20, 0), (20, 10), (20, 20), (10, 20), (0, 20), (0, 10)]
    assert np.allclose(perimeter_positions(8, 20.0), expected)


def test_perimeter_four_sensors_are_corners():
    assert np.allclose(perimeter_positions(4, 20.0), [(0, 0), (20, 0), (20, 20), (0, 20)])


def test_deterministic_builder_is_pure():
    a = build_deterministic(8, 20.0, [2.0, 3.0])
    b = build_deterministic(8, 20.0, [2.0, 3.0])
    assert np.array_equal(a.sensor_positions, b.sensor_positions)
    assert a.source_position.tolist() == [2.0, 3.0]


def test_random_deployment_is_seed_deterministic():
    a = build_random(10, 20.0, seed=5)
    b = build_random(10, 20.0, seed=5)
    assert a.L == 10
    assert np.array_equal(a.sensor_positions, b.sensor_positions)
    assert np.array_equal(a.source_position, b.source_position)


def test_random_deployment_is_uniform_over_region():
    points = np.concatenate([build_random(8, 20.0, seed=s).sensor_positions for s in range(1250)])
    assert points.min() >= 0.0 and points.max() <= 20.0
    se = 20.0 / np.sqrt(12.0) / np.sqrt(points.shape[0])
    assert np.all(np.abs(points.mean(axis=0) - 10.0) < 4 * se)


def test_random_deployment_in_three_dimensions():
    dep = build_random(6, 20.0, seed=1, k=3)
    assert dep.sensor_positions.shape == (6, 3)


def test_random_deployment_gives_up(monkeypatch):
    from core.config import settings
    monkeypatch.setattr(settings, "min_separation", 1e6)
    with pytest.raises(InvalidDeploymentError, match="no valid random deployment"):
        build_random(8, 20.0, seed=0)


# ── 预设与场景 ────────────────────────────────────────────────────────────────

def test_presets():
    assert preset_pattern("los", 8) == []
    assert preset_pattern("mild-nlos", 8, 5.0) == [(1, 5.0), (5, 5.0)]
    assert [i for i, _ in preset_pattern("nlos-ref-5", 8)] == [1, 2, 3, 4, 5]
    assert [i for i, _ in preset_pattern("los-ref-5", 8)] == [2, 3, 4, 5, 6]
    assert len(preset_pattern("nlos-ref-8", 8)) == 8
    assert set(PRESETS) >= {"los", "mild-nlos", "nlos-ref-2", "los-ref-8"}


def test_preset_errors():
    with pytest.raises(ValueError, match="unknown NLOS preset"):
        preset_pattern("nope", 8)
    with pytest.raises(ValueError):
        preset_pattern("los-ref-8", 8)


def test_scenario_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        ScenarioSpec.model_validate({"kind": "deterministic-perimeter", "colour": "red"})


def test_scenario_rejects_preset_and_pattern():
    with pytest.raises(ValidationError):
        ScenarioSpec(preset="mild-nlos", nlos=[(1, 5.0)])


def test_scenario_rejects_random_source_on_perimeter():
    with pytest.raises(ValidationError):
        ScenarioSpec(kind="deterministic-perimeter", source="random")


def test_build_for_trial_redraws_random_geometry():
    spec = ScenarioSpec(kind="random-square", source="random", L=8)
    a = build_for_trial(spec, trial_rng(0, 0, 0))
    b = build_for_trial(spec, trial_rng(0, 1, 0))
    again = build_for_trial(spec, trial_rng(0, 0, 0))
    assert not np.array_equal(a.sensor_positions, b.sensor_positions)
    assert np.array_equal(a.sensor_positions, again.sensor_positions)


def test_build_for_trial_keeps_perimeter_fixed():
    spec = ScenarioSpec()
    a = build_for_trial(spec, trial_rng(0, 0, 0))
    b = build_for_trial(spec, trial_rng(0, 9, 0))
    assert np.array_equal(a.sensor_positions, b.sensor_positions)
    assert a.source_position.tolist() == [2.0, 3.0]


def test_redrawn_nlos_pattern_keeps_count_and_bounds():
    spec = ScenarioSpec(preset="mild-nlos", redraw_nlos=True)
    patterns = [draw_nlos_pattern(spec, trial_rng(0, t, 1)) for t in range(20)]
    assert all(len(p) == 2 and all(w == 5.0 for _, w in p) for p in patterns)
    assert all(len({i for i, _ in p}) == 2 for p in patterns)
    assert len({tuple(i for i, _ in p) for p in patterns}) > 1


def test_noise_for_trial_overrides_omega():
    spec = ScenarioSpec(nlos=[(1, 5.0), (5, 5.0)])
    noise = noise_for_trial(spec, 0.3, trial_rng(0, 0, 1), omega_override=2.0)
    assert noise.nlos_sensors == [1, 5]
    assert noise.nlos_upper[0] == 2.0 and noise.nlos_upper[4] == 2.0
    assert np.all(noise.sigma == 0.3)
