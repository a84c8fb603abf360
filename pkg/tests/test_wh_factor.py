import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluid_exit.errors import NoConvergence, ShapeMismatch
from fluid_exit.numerics import matrix_exp
from fluid_exit.wh_factor import WienerHopfFactors, factorize, residual, tilt_factorize
from helpers import CONSERVATIVE, KILLED, V2, random_generator, random_velocities

SQRT3 = math.sqrt(3.0)


def test_killed_two_state_quadratic_oracle():
    F = factorize(KILLED, V2)
    assert F.Jplus[0, 0] == pytest.approx(2 - SQRT3, abs=1e-12)
    assert F.Qplus[0, 0] == pytest.approx(-SQRT3, abs=1e-12)
    assert F.Jminus[0, 0] == pytest.approx(2 - SQRT3, abs=1e-12)
    assert F.Qminus[0, 0] == pytest.approx(-SQRT3, abs=1e-12)
    assert F.residual_norm <= 1e-10


def test_zero_drift_conservative():
    F = factorize(CONSERVATIVE, V2)
    for M, target in [(F.Jplus, 1.0), (F.Jminus, 1.0), (F.Qplus, 0.0), (F.Qminus, 0.0)]:
        assert M[0, 0] == pytest.approx(target, abs=1e-6)


def test_zero_row_in_minus_state():
    F = factorize([[-1.0, 1.0], [0.0, 0.0]], V2)
    assert F.Jplus[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert F.Qplus[0, 0] == pytest.approx(-1.0, abs=1e-12)


def test_fixed_point_agrees_with_newton_when_killed():
    a = factorize(KILLED, V2, method="fixed_point")
    b = factorize(KILLED, V2, method="newton")
    np.testing.assert_allclose(a.Jplus, b.Jplus, atol=1e-10)
    assert a.iterations > b.iterations


def test_tilt_equals_extra_killing():
    t = tilt_factorize(CONSERVATIVE, V2, 1.0)
    assert t.tilt == 1.0
    assert t.Jplus[0, 0] == pytest.approx(2 - SQRT3, abs=1e-12)
    t2 = tilt_factorize(KILLED, V2, 1.0)
    assert t2.Jplus[0, 0] == pytest.approx(3 - 2 * math.sqrt(2.0), abs=1e-12)
    assert residual(t2, KILLED, V2) <= 1e-10
    zero = tilt_factorize(KILLED, V2, 0.0)
    np.testing.assert_array_equal(zero.Jplus, factorize(KILLED, V2).Jplus)


def test_residual_detects_perturbation_and_shapes():
    F = factorize(KILLED, V2)
    assert residual(F, KILLED, V2) <= 1e-12
    bad = WienerHopfFactors(**{**F.__dict__, "Jplus": F.Jplus + 0.1})
    assert residual(bad, KILLED, V2) >= 0.05
    wrong = WienerHopfFactors(**{**F.__dict__, "Jplus": np.zeros((2, 1))})
    with pytest.raises(ShapeMismatch):
        residual(wrong, KILLED, V2)


def test_iteration_budget_is_enforced():
    with pytest.raises(NoConvergence) as info:
        factorize(CONSERVATIVE, V2, max_iter=3)
    assert info.value.max_iter == 3


def test_bad_arguments():
    with pytest.raises(ValueError):
        factorize(KILLED, V2, tol=1e-3)
    with pytest.raises(ValueError):
        factorize(KILLED, V2, max_iter=0)
    with pytest.raises(ValueError):
        tilt_factorize(KILLED, V2, -1.0)


def test_dict_round_trip():
    F = tilt_factorize(KILLED, V2, 0.5)
    G = WienerHopfFactors.from_dict(F.to_dict())
    np.testing.assert_array_equal(G.Qplus, F.Qplus)
    assert residual(G, KILLED, V2) == pytest.approx(F.residual_norm, abs=1e-12)


@st.composite
def killed_models(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    m = draw(st.integers(2, 5))
    rng = np.random.default_rng(seed)
    return random_generator(rng, m), random_velocities(rng, m)


def _is_subgenerator(Q):
    off = Q - np.diag(np.diag(Q))
    return off.min() >= -1e-12 and Q.sum(axis=1).max() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(killed_models())
def test_factor_invariants(model):
    L, v = model
    F = factorize(L, v)
    assert F.residual_norm <= 1e-10
    for J in (F.Jplus, F.Jminus):
        assert J.min() >= -1e-12 and J.max() <= 1 + 1e-12
        assert J.sum(axis=1).max() <= 1 + 1e-9
    assert _is_subgenerator(F.Qplus) and _is_subgenerator(F.Qminus)


@settings(max_examples=25, deadline=None)
@given(killed_models(), st.floats(0.05, 2.0), st.floats(0.1, 3.0))
def test_more_killing_means_fewer_passages(model, dc, level):
    L, v = model
    lo = tilt_factorize(L, v, 0.1)
    hi = tilt_factorize(L, v, 0.1 + dc)
    for a, b in ((lo.Qplus, hi.Qplus), (lo.Qminus, hi.Qminus)):
        assert np.all(matrix_exp(level * b) <= matrix_exp(level * a) + 1e-12)


@settings(max_examples=25, deadline=None)
@given(killed_models(), st.floats(0.01, 5.0))
def test_passage_norm_decays_with_killing_floor(model, level):
    L, v = model
    F = factorize(L, v)
    c_min = float(-L.sum(axis=1).max())
    bound = math.exp(-c_min * level / np.abs(v).max())
    for Q in (F.Qplus, F.Qminus):
        assert np.abs(matrix_exp(level * Q)).sum(axis=1).max() <= bound + 1e-12
