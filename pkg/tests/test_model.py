import json

import numpy as np
import pytest

from fluid_exit import ModelSpec, PiecewiseConstant, Constant, validate_model
from fluid_exit.errors import (
    BadBreakpoints,
    EmptySidePartition,
    ModelError,
    NegativeOffDiagonal,
    NegativeTime,
    PositiveRowSum,
    ZeroVelocity,
)
from fluid_exit.model import (
    as_spec,
    evolution_matrix,
    generator_at,
    load_model,
    model_from_dict,
    model_to_dict,
    propagate,
)
from fluid_exit.numerics import matrix_exp
from helpers import CONSERVATIVE, KILLED, conservative_model, random_killed_model, switching_model


def test_conservative_summary():
    m = conservative_model()
    assert m.plus_states == (0,) and m.minus_states == (1,)
    assert m.uniform_bound == 1.0 and m.killing_floor == 0.0
    assert m.is_homogeneous


@pytest.mark.parametrize(
    "velocities, matrix, err",
    [
        ([1.0, 0.0], CONSERVATIVE, ZeroVelocity),
        ([1.0, 2.0], CONSERVATIVE, EmptySidePartition),
        ([1.0, -1.0], [[-1.0, -0.5], [1.0, -1.0]], NegativeOffDiagonal),
        ([1.0, -1.0], [[-1.0, 1.5], [1.0, -1.0]], PositiveRowSum),
    ],
)
def test_invalid_models(velocities, matrix, err):
    with pytest.raises(err):
        validate_model(ModelSpec(["u", "d"], velocities, Constant(matrix)))


def test_error_payloads_name_the_culprit():
    with pytest.raises(ZeroVelocity) as info:
        validate_model(ModelSpec(["u", "d"], [1.0, 0.0], Constant(CONSERVATIVE)))
    assert "d" in str(info.value)
    with pytest.raises(EmptySidePartition) as info:
        validate_model(ModelSpec(["u", "d"], [1.0, 2.0], Constant(CONSERVATIVE)))
    assert "minus" in str(info.value)


@pytest.mark.parametrize("bps", [[1.0, 1.0], [-1.0], [2.0, 1.0]])
def test_bad_breakpoints(bps):
    mats = [CONSERVATIVE] * (len(bps) + 1)
    with pytest.raises(BadBreakpoints):
        validate_model(ModelSpec(["u", "d"], [1.0, -1.0], PiecewiseConstant(bps, mats)))


def test_matrix_count_must_match():
    with pytest.raises(BadBreakpoints):
        validate_model(ModelSpec(["u", "d"], [1.0, -1.0], PiecewiseConstant([1.0], [CONSERVATIVE])))


def test_plus_states_come_first_in_permutation():
    m = validate_model(ModelSpec(["a", "b", "c"], [-1.0, 2.0, -0.5], Constant(-np.eye(3))))
    assert m.plus_states == (1,) and m.minus_states == (0, 2)
    assert list(m.perm) == [1, 0, 2]
    assert m.max_speed == 2.0


def test_generator_lookup_is_right_continuous():
    m = switching_model()
    np.testing.assert_array_equal(generator_at(m, 0.999), CONSERVATIVE)
    np.testing.assert_array_equal(generator_at(m, 1.0), KILLED)
    np.testing.assert_array_equal(generator_at(conservative_model(), 17.3), CONSERVATIVE)
    with pytest.raises(NegativeTime):
        generator_at(m, -0.1)


def test_piecewise_bounds_are_taken_over_all_segments():
    m = switching_model(after=[[-3.0, 1.0], [1.0, -3.0]])
    assert m.uniform_bound == 3.0
    assert m.killing_floor == 0.0
    with pytest.raises(ModelError, match="constant schedule"):
        m.generator()


def test_validation_is_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = random_killed_model(rng)
        again = validate_model(as_spec(m))
        assert again.uniform_bound == m.uniform_bound
        assert again.killing_floor == m.killing_floor
        assert again.plus_states == m.plus_states


def test_arrays_are_read_only():
    m = conservative_model()
    with pytest.raises(ValueError):
        m.matrices[0, 0, 0] = 5.0


def test_evolution_matrix_chains_segments():
    m = switching_model()
    expected = matrix_exp(0.5 * CONSERVATIVE) @ matrix_exp(1.0 * KILLED)
    np.testing.assert_allclose(evolution_matrix(m, 0.5, 2.0), expected, rtol=1e-13)
    np.testing.assert_array_equal(evolution_matrix(m, 1.0, 1.0), np.eye(2))


def test_propagate_matches_evolution_matrix():
    m = switching_model()
    h = np.array([1.0, 0.0])
    times = np.array([0.0, 0.3, 1.0, 1.7, 2.5])
    out = propagate(m, times, 2.5, h)
    for t, row in zip(times, out):
        np.testing.assert_allclose(row, evolution_matrix(m, t, 2.5) @ h, rtol=1e-12, atol=1e-15)


def test_json_round_trip(tmp_path):
    m = switching_model()
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_dict(m)))
    back = load_model(path)
    np.testing.assert_array_equal(back.matrices, m.matrices)
    assert back.states == m.states


@pytest.mark.parametrize(
    "payload",
    [
        {"states": ["u", "d"], "velocities": [1, -1], "generator": {"type": "constant", "matrix": CONSERVATIVE.tolist()}, "extra": 1},
        {"states": ["u", "d"], "velocities": [1, -1], "generator": {"type": "spline"}},
        {"states": ["u", "d"], "velocities": [1, -1], "generator": {"type": "constant"}},
        {"states": ["u", "d"], "velocities": [1, -1]},
    ],
)
def test_bad_json_models(payload):
    with pytest.raises(ModelError):
        validate_model(model_from_dict(payload))
