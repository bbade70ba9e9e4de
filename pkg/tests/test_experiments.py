import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from haarblocks import experiments as ex
from haarblocks._io import dumps_csv, dumps_json, read_csv_rows
from haarblocks.core import DomainError, Seed
from haarblocks.density import TailQuery, marginal_tail
from haarblocks.experiments import (
    Schedule,
    TestFunction,
    gauss_hermite_log_mgf,
    run_as_trace,
    run_concentration,
    run_empirical_decay,
    run_logmgf,
    run_mdp_block,
    run_mdp_entry,
)

# log E[exp(0.5 tanh g)] and log E[exp(sin g)] by 40-digit adaptive quadrature
LOG_MGF_TANH_HALF = 0.048742268920775065917
LOG_MGF_SIN_ONE = 0.20646508816368375231


def _check_invariants(report):
    Ns = [r.N for r in report.rows]
    assert Ns == list(report.schedule.N_values)
    for r in report.rows:
        assert r.speed > 0
        assert r.mc_stderr is None or r.mc_stderr >= 0
        if r.hits == 0:
            assert r.status == "censored" and r.estimate is None


def test_test_functions_bounded():
    x = np.linspace(-50, 50, 1001)
    for f in (TestFunction("scaled_tanh", 0.7), TestFunction("scaled_sin", 2.0), TestFunction("clamped_quadratic", 1.5, 3.0)):
        assert np.max(np.abs(f(x))) <= f.a
    assert TestFunction.parse("quad:0.5,2") == TestFunction("clamped_quadratic", 0.5, 2.0)
    with pytest.raises(DomainError):
        TestFunction.parse("exp:1")
    with pytest.raises(DomainError):
        TestFunction("scaled_tanh", -1.0)


def test_gauss_hermite_reference():
    assert gauss_hermite_log_mgf(TestFunction("scaled_tanh", 0.5)) == pytest.approx(LOG_MGF_TANH_HALF, rel=1e-12)
    assert gauss_hermite_log_mgf(TestFunction("scaled_sin", 1.0)) == pytest.approx(LOG_MGF_SIN_ONE, rel=1e-12)
    assert gauss_hermite_log_mgf(TestFunction("scaled_sin", 0.0)) == 0.0


@pytest.mark.parametrize("p,shape", [(6, (2, 3)), (7, (1, 7)), (10, (2, 5)), (12, (3, 4)), (16, (4, 4))])
def test_most_square_factorization(p, shape):
    s = Schedule((p**2,), alpha=0.5)
    d = s.block_dims(p**2)
    assert (d.m, d.k) == shape and d.p == p


def test_schedule_validation():
    with pytest.raises(DomainError):
        Schedule((100, 100))
    with pytest.raises(DomainError):
        Schedule((100,), replicas=0)
    with pytest.raises(DomainError):
        Schedule((100,), alpha=1.0)
    with pytest.raises(DomainError):
        Schedule((100,), b=0.5)
    with pytest.raises(ValueError):
        Schedule((5,), alpha=0.99)  # p_5 = 5 = 1 x 5 needs N >= 6
    assert Schedule((4,), alpha=0.01).block_dims(4).p == 1
    with pytest.raises(DomainError):
        run_logmgf(TestFunction("scaled_tanh", 0.5), Schedule((100,)))


def test_logmgf_zero_function_exact():
    r = run_logmgf(TestFunction("scaled_sin", 0.0), Schedule((16, 64, 256), replicas=10, alpha=0.5))
    for row in r.rows:
        assert row.estimate == 0.0 and row.reference == 0.0 and row.abs_error == 0.0 and row.mc_stderr == 0.0


def test_logmgf_rows():
    r = run_logmgf(TestFunction("scaled_tanh", 0.5), Schedule((64, 256), replicas=300, root_seed=Seed(2), alpha=0.5))
    _check_invariants(r)
    for row in r.rows:
        assert row.reference == pytest.approx(LOG_MGF_TANH_HALF, rel=1e-12)
        assert row.abs_error < 0.05
        assert row.significant == (row.abs_error > 2 * row.mc_stderr)


@pytest.fixture
def tiny_chunks(monkeypatch):
    monkeypatch.setattr(ex, "_CHUNK_BUDGET", 500)


def test_serial_and_parallel_identical(tiny_chunks):
    s = Schedule((40, 90), replicas=97, root_seed=Seed(5), alpha=0.5)
    f = TestFunction("scaled_tanh", 1.0)
    serial = run_logmgf(f, s, threads=1).as_dict()
    parallel = run_logmgf(f, s, threads=4).as_dict()
    assert dumps_json(serial) == dumps_json(parallel)
    b1 = run_mdp_block(0.5, 2, 2, Schedule((40, 90), replicas=97, b=0.25), threads=1).as_dict()
    b3 = run_mdp_block(0.5, 2, 2, Schedule((40, 90), replicas=97, b=0.25), threads=3).as_dict()
    assert b1 == b3


def test_reports_reproducible_and_seed_sensitive():
    s = Schedule((50, 100), replicas=50, root_seed=Seed(3), alpha=0.5)
    a = run_empirical_decay(0.1, s).as_dict()
    assert a == run_empirical_decay(0.1, s).as_dict()
    other = run_empirical_decay(0.1, Schedule((50, 100), replicas=50, root_seed=Seed(4), alpha=0.5)).as_dict()
    assert a["rows"] != other["rows"] or a["schedule"] != other["schedule"]


def test_decay_large_epsilon_all_censored():
    r = run_empirical_decay(2.0, Schedule((16, 64, 256), replicas=50, alpha=0.5))
    _check_invariants(r)
    assert all(row.status == "censored" and row.estimate is None for row in r.rows)


def test_decay_estimates_nonnegative_and_flags_low_confidence():
    r = run_empirical_decay(0.15, Schedule((16, 100, 400), replicas=150, root_seed=Seed(1), alpha=0.5))
    _check_invariants(r)
    for row in r.rows:
        if row.estimate is not None:
            assert row.estimate >= 0
            assert (row.status == "low_confidence") == (row.hits < ex.MIN_HITS)


def test_as_trace():
    s = Schedule((100, 1000, 10000), alpha=0.5, root_seed=Seed(8))
    r = run_as_trace(s)
    _check_invariants(r)
    assert all(0 <= row.estimate <= 1 for row in r.rows)
    assert r.as_dict() == run_as_trace(s).as_dict()


def test_mdp_entry_rows():
    r = run_mdp_entry(1.0, Schedule((10**6, 10**7, 10**8), b=0.25))
    _check_invariants(r)
    est = [row.estimate for row in r.rows]
    assert est[0] > est[1] > est[2] > 0.5
    assert all(row.mc_stderr == 0.0 and row.reference == 0.5 for row in r.rows)
    assert r.rows[-1].abs_error <= 0.05


def test_mdp_entry_out_of_support():
    r = run_mdp_entry(2.0, Schedule((4, 16, 100), b=0.25))
    assert [row.status for row in r.rows] == ["out_of_support", "out_of_support", "ok"]
    assert r.rows[0].estimate is None


def test_mdp_block_full_event():
    r = run_mdp_block(0.0, 2, 2, Schedule((20, 40), replicas=30, b=0.25))
    for row in r.rows:
        assert row.hits == 30 and row.estimate == 0.0 and math.copysign(1, row.estimate) == 1


def test_mdp_block_single_entry_matches_two_sided_tail():
    N, M = 400, 20000
    r = run_mdp_block(1.0, 1, 1, Schedule((N,), replicas=M, root_seed=Seed(6), b=0.25))
    p_exact = 2 * math.exp(marginal_tail(TailQuery(1.0, "betaN", 0.25), N))
    p_hat = r.rows[0].hits / M
    assert abs(p_hat - p_exact) <= 4 * math.sqrt(p_exact * (1 - p_exact) / M)


def test_concentration_fit():
    r = run_concentration(Schedule((100, 1000), replicas=5000, root_seed=Seed(2)), 0.15, 2, 2)
    _check_invariants(r)
    assert r.summary["fitted_c"] > 0.1 and not r.summary["violation"]
    with pytest.raises(DomainError):
        run_concentration(Schedule((100,)), 0.5, 2, 2)


@given(st.lists(st.floats(0, 20), min_size=1, max_size=50), st.floats(0, 10), st.floats(0, 10))
def test_exceedance_nested(norms, r1, r2):
    lo, hi = sorted((r1, r2))
    assert ex.exceed_fraction(np.array(norms), hi) <= ex.exceed_fraction(np.array(norms), lo)


def test_json_and_csv_rows_agree():
    r = run_mdp_entry(1.0, Schedule((10**4, 10**5), b=0.25)).as_dict()
    doc = json.loads(dumps_json(r))
    csv_rows = read_csv_rows(dumps_csv(r["rows"], {"experiment": "mdp-entry"}))
    assert len(csv_rows) == len(doc["rows"])
    for j, c in zip(doc["rows"], csv_rows):
        for key, value in j.items():
            if value is None:
                assert c[key] == ""
            elif isinstance(value, float):
                assert float(c[key]) == value
            else:
                assert c[key] == str(value)
    assert doc["schema_version"] == ex.SCHEMA_VERSION
    assert "wall_time" not in doc


@pytest.mark.slow
def test_logmgf_gap_shrinks_for_most_seeds():
    f = TestFunction("clamped_quadratic", 1.0, 0.5)
    shrink = 0
    for seed in range(20):
        r = run_logmgf(f, Schedule((3, 4096), replicas=2000, root_seed=Seed(seed), alpha=0.5))
        shrink += r.rows[-1].abs_error < r.rows[0].abs_error
    assert shrink >= 18


@pytest.mark.slow
def test_decay_slope_grows_for_most_seeds():
    grows = 0
    for seed in range(10):
        r = run_empirical_decay(0.05, Schedule((100, 40000), replicas=200, root_seed=Seed(seed), alpha=0.5))
        rows = [row for row in r.rows if row.estimate is not None]
        grows += rows[-1].estimate > rows[0].estimate
    assert grows >= 8


@pytest.mark.slow
def test_concentration_fitted_constant_at_full_replicas():
    r = run_concentration(Schedule((1000, 10000), replicas=100_000, root_seed=Seed(0)), 0.15, 2, 2)
    assert r.summary["fitted_c"] > 0.1
