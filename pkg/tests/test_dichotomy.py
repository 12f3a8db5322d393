import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypdich.dichotomy import (ZERO_RADIUS, DichotomyUnsupported, PreconditionError, SweepRow, SweepTable,
                               auto_eps_list, detect_dichotomy, monodromy_sequence, perturbation_gap,
                               robustness_sweep, segment_maps, verify_dichotomy)
from hypdich.evolution import EvolutionMatrix, inf_norm


def test_toy_diagonal_split():
    est = detect_dichotomy(np.diag([2.0, 0.25]), period_length=1.0)
    assert est.rank == 1
    assert est.beta == pytest.approx(np.log(2.0)) and est.gap == pytest.approx(np.log(2.0))
    assert est.P == pytest.approx(np.diag([1.0, 0.0]), abs=1e-14)
    assert est.M >= 1.0


def test_zero_map_convention():
    est = detect_dichotomy(np.zeros((3, 3)), period_length=4.0)
    assert est.rank == 0 and np.all(est.P == 0)
    assert est.beta == pytest.approx(np.log(1 / ZERO_RADIUS) / 4.0)


def test_rotation_has_no_split():
    c, s = np.cos(0.3), np.sin(0.3)
    assert detect_dichotomy(np.array([[c, -s], [s, c]]), period_length=1.0) is None


@given(seed=st.integers(0, 2**16))
def test_projection_properties(seed):
    rng = np.random.default_rng(seed)
    lam = np.array([3.0, 1.8, 0.5, 0.2, 0.05])
    V = rng.normal(size=(5, 5)) + 3 * np.eye(5)
    T = V @ np.diag(lam) @ np.linalg.inv(V)
    est = detect_dichotomy(T, period_length=2.0)
    assert est.rank == 2 == round(np.trace(est.P))
    assert inf_norm(est.P @ est.P - est.P) <= 1e-10 * max(1.0, inf_norm(est.P))
    assert inf_norm(T @ est.P - est.P @ T) <= 1e-9 * inf_norm(T) * max(1.0, inf_norm(est.P))


def test_sequence_checks():
    A = np.diag([2.0, 0.25])
    seq = [EvolutionMatrix(A, "toy", 0.0, 2.0 * n, 2.0 * (n + 1), 0) for n in range(3)]
    assert detect_dichotomy(seq).period_length == 2.0
    seq[2] = EvolutionMatrix(np.diag([2.0, 0.5]), "toy", 0.0, 4.0, 6.0, 0)
    with pytest.raises(DichotomyUnsupported):
        detect_dichotomy(seq)
    with pytest.raises(ValueError):
        detect_dichotomy(A)
    with pytest.raises(ArithmeticError):
        detect_dichotomy(np.array([[np.nan, 0.0], [0.0, 1.0]]), period_length=1.0)


def test_monodromy_sequences(specs):
    kinetics = monodromy_sequence(specs["kinetics-2x2"], 0.1, 0.0, 3, 12)
    assert [(T.s, T.t) for T in kinetics] == [(0.0, 4.0), (4.0, 8.0), (8.0, 12.0)]
    assert all(np.array_equal(T.matrix, kinetics[0].matrix) for T in kinetics)
    for T in monodromy_sequence(specs["decoupled-extinction"], 0.1, 0.0, 2, 32):
        assert T.norm() <= 1e-9
    periodic = monodromy_sequence(specs["periodic-dichotomy"], 0.1, 0.0, 2, 12)
    assert inf_norm(periodic[1].matrix - periodic[0].matrix) <= 1e-12 * periodic[0].norm()
    with pytest.raises(ValueError):
        monodromy_sequence(specs["kinetics-2x2"], 0.1, 0.0, 0, 12)


def test_autonomous_beta_matches_decay_fit(specs):
    T = monodromy_sequence(specs["kinetics-2x2"], 0.0, 0.0, 1, 24)[0]
    est = detect_dichotomy(T)
    stable = np.eye(T.dim) - est.P
    logs = []
    for _ in range(8):
        stable = T.matrix @ stable
        logs.append(np.log(inf_norm(stable)))
    rate = -np.polyfit(np.arange(1, 9) * est.period_length, logs, 1)[0]
    assert rate == pytest.approx(est.beta, rel=0.1)


def test_verify_periodic_dichotomy_coarse(specs):
    spec = specs["periodic-dichotomy"]
    maps = segment_maps(spec, 0.0, 0.0, 4.0, 24, parts=8)
    T = maps[0]
    for m in maps[1:]:
        T = m @ T
    est = detect_dichotomy(T, period_length=4.0, segments=maps)
    assert est.rank == 2 and est.gap >= 0.1
    report = verify_dichotomy(spec, 0.0, est, N=24, maps=maps)
    assert report.passed()
    assert report.commutation <= 1e-10 and report.invertibility <= 1e-10
    assert len(report.lines()) == 5


def test_verify_zero_projection(specs):
    spec = specs["decoupled-extinction"]
    maps = segment_maps(spec, 0.0, 0.0, 2.0, 12, parts=8)
    est = detect_dichotomy(np.zeros((26, 26)), period_length=2.0, segments=maps)
    assert est.rank == 0
    assert verify_dichotomy(spec, 0.0, est, N=12, maps=maps).passed()


def test_perturbation_gap(specs):
    kinetics = specs["kinetics-2x2"]
    assert perturbation_gap(kinetics, 0.0, 0.0, 16) == 0.0
    eps = kinetics.eps0 / 4
    ratio = perturbation_gap(kinetics, eps / 2, 0.0, 24) / perturbation_gap(kinetics, eps, 0.0, 24)
    assert 0.4 <= ratio <= 0.6
    shifted = perturbation_gap(kinetics, eps, 1.3, 24)
    assert shifted == pytest.approx(perturbation_gap(kinetics, eps, 0.0, 24), abs=1e-8)


def test_sweep_with_only_baseline(specs):
    table = robustness_sweep(specs["kinetics-2x2"], [0.0], 0.0, 12)
    assert len(table.rows) == 1
    row = table.rows[0]
    assert (row.eps, row.gap, row.found, row.rank) == (0.0, 0.0, True, table.baseline.rank)
    assert row.beta == table.baseline.beta


def test_sweep_precondition(specs):
    with pytest.raises(PreconditionError):
        robustness_sweep(specs["decoupled-extinction"], [0.1], 0.0, 12, gap_tol=100.0)


def test_sweep_table_helpers():
    base = detect_dichotomy(np.diag([2.0, 0.25]), period_length=1.0)
    rows = [SweepRow(0.4, 0.8, False, None, None, None),
            SweepRow(0.2, 0.4, True, 2, 0.5, 3.0),
            SweepRow(0.1, 0.2, True, 1, 0.6, 2.0),
            SweepRow(0.05, 0.1, True, 1, 0.69, 1.5)]
    table = SweepTable(rows, base)
    assert table.threshold_index() == 2
    assert table.slope() == pytest.approx(1.0)
    lines = table.to_csv().splitlines()
    assert lines[0] == "eps,gap,found,rank,beta,M"
    assert lines[1] == "0.40000000000000002,0.80000000000000004,false,,,"
    assert lines[3].split(",")[3] == "1"
    rows[-1] = SweepRow(0.05, 0.1, False, None, None, None)
    assert SweepTable(rows, base).threshold_index() is None


def test_auto_eps_list(specs):
    eps = auto_eps_list(specs["periodic-dichotomy"])
    assert len(eps) == 7 and eps[0] == 0.2 and eps[-1] == pytest.approx(0.2 / 64)
