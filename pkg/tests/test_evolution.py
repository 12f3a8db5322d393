import numpy as np
import pytest

from conftest import term, two_by_two
from hypdich.evolution import (EvolutionMatrix, SmoothingUnsupported, bound_check, evolution_matrix, evolve,
                               inf_norm, roughness, smooth_datum, smoothing_analysis, smoothing_time, step_plan)
from hypdich.solver import solve_ibvp


def test_identity_at_equal_times(specs):
    for name in ("feedback-2x2", "periodic-dichotomy"):
        U = evolution_matrix(specs[name], 0.1, 0.7, 0.7, 12)
        assert np.array_equal(U.matrix, np.eye(26))
        assert U.norm() == 1.0
    with pytest.raises(ValueError):
        step_plan(specs["feedback-2x2"], 12, 1.0, 0.5)


def test_extinction_after_transit(specs):
    spec = specs["decoupled-extinction"]
    U = evolution_matrix(spec, 0.1, 0.0, 2.0, 32)
    assert U.norm() <= 1e-9
    phi = np.ones((2, 33))
    assert np.abs(evolve(spec, 0.1, 0.0, 2.0, phi)).max() <= 1e-9


@pytest.mark.parametrize("name", ["feedback-2x2", "periodic-dichotomy"])
def test_cocycle_on_the_lattice(specs, name):
    spec = specs[name]
    whole = evolution_matrix(spec, 0.1, 0.0, 1.0, 16)
    first = evolution_matrix(spec, 0.1, 0.0, 0.5, 16)
    second = evolution_matrix(spec, 0.1, 0.5, 1.0, 16)
    composed = second @ first
    assert isinstance(composed, EvolutionMatrix) and (composed.s, composed.t) == (0.0, 1.0)
    assert inf_norm(whole.matrix - composed.matrix) <= 1e-12 * whole.norm()


def test_bound_check(specs):
    decoupled = bound_check(specs["decoupled-extinction"], 0.0, [0.0, 1.0], N=32)
    assert 1.0 <= decoupled <= 1.0 + 1e-9
    feedback = specs["feedback-2x2"]
    assert bound_check(feedback, 0.0, [0.0], N=32) >= 1.0


@pytest.mark.slow
def test_periodic_bound_matches_frozen_value(specs):
    spec = specs["periodic-dichotomy"]
    value = bound_check(spec, 0.0, [0.0, 1.0, 2.0, 3.0], N=64)
    assert value == pytest.approx(spec.meta["evolutionBound"], rel=1e-9)


def test_matrix_agrees_with_direct_solve(specs):
    spec = specs["kinetics-2x2"]
    N, tol = 20, 1e-11
    x = np.linspace(0.0, 1.0, N + 1)
    phi = np.vstack([np.exp(-x), np.cos(3 * x)])
    U = evolution_matrix(spec, 0.1, 0.0, 1.0, N)
    direct = solve_ibvp(spec, 0.1, 0.0, 1.0, phi, tol=tol).solution.values[:, :, -1]
    assert np.abs((U @ phi.ravel()).reshape(2, -1) - direct).max() <= 10 * tol
    assert np.abs(evolve(spec, 0.1, 0.0, 1.0, phi) - direct).max() <= 10 * tol


def test_off_lattice_times(specs):
    spec = specs["feedback-2x2"]
    steps, dt = step_plan(spec, 16, 0.0, 0.3)
    assert steps * dt == pytest.approx(0.3)
    assert evolution_matrix(spec, 0.0, 0.0, 0.3, 16).meta["steps"] == steps


def test_csv_lists_nonzeros():
    U = EvolutionMatrix(np.array([[1.0, 0.0], [0.0, -2.5]]), "toy", 0.0, 0.0, 1.0, 0)
    assert U.to_csv() == "row,col,value\n0,0,1\n1,1,-2.5\n"


def test_roughness_measure():
    x = np.linspace(0.0, 1.0, 11)
    assert roughness(2 * x + 1, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert roughness(x**2, 0.1) == pytest.approx(0.2)
    assert roughness(np.ones(2), 0.5) == 0.0


def test_smoothing_feedback(specs):
    report = smoothing_analysis(specs["feedback-2x2"], 0.1, 0.0, 64)
    assert (report.k, report.transit_max, report.d) == (2, pytest.approx(1.0), pytest.approx(2.0))
    assert len(report.profile) == 9
    assert report.drop_factor_after(report.d) >= 10
    assert report.smooth_time is not None and report.smooth_time <= report.d
    assert report.to_csv().splitlines()[0] == "t,roughness,smoothReference"


def test_smooth_reference_stays_below_threshold(specs):
    report = smoothing_analysis(specs["kinetics-2x2"], 0.0, 0.0, 48)
    assert all(ref <= report.threshold for _, _, ref in report.profile)
    assert roughness(smooth_datum(specs["kinetics-2x2"], 48), 1 / 48) <= report.threshold


def test_smoothing_extinction(specs):
    # the slab march leaves a geometrically decaying interpolation tail after d
    report = smoothing_analysis(specs["decoupled-extinction"], 0.0, 0.0, 32)
    assert report.k == 1 and report.d == pytest.approx(1.0)
    late = [r for t, r, _ in report.profile if t >= report.d - 1e-12]
    assert len(late) == 5
    assert all(b <= 0.1 * a for a, b in zip(late[:-1], late[1:]))
    assert late[-1] <= 1e-12 * report.initial_roughness


def test_full_reflection_is_unsupported():
    spec = two_by_two(p=[[[], [term(0.8)]]], q=[[[term(0.5)], []]])
    with pytest.raises(SmoothingUnsupported):
        smoothing_time(spec, 0.0, 0.0)
    with pytest.raises(SmoothingUnsupported):
        smoothing_analysis(spec, 0.0, 0.0, 16)
