import math

import numpy as np
import pytest

from coalflow import verify
from coalflow.motions import DiffusionSpec
from coalflow.rng import RngStream

OU = DiffusionSpec.ornstein_uhlenbeck(1.0, 1.0)


def test_meeting_bound_reference_values():
    arr = DiffusionSpec.arratia()
    ref = verify.meeting_bound_reference(arr, 0.0, 0.1, (-10, 10), 1.0)
    assert ref == pytest.approx(0.1 / math.sqrt(math.pi), rel=1e-9)
    # series oracle: int_0^0.1 exp(y^2) dy = sum x^(2k+1)/(k! (2k+1))
    series = sum(0.1 ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1))
                 for k in range(8))
    ref_ou = verify.meeting_bound_reference(OU, 0.0, 0.1, (-10, 10), 1.0)
    assert ref_ou == pytest.approx(series, rel=1e-9)


def test_meeting_bound_passes_arratia_and_ou():
    r1 = verify.test_meeting_bound(DiffusionSpec.arratia(), 0.0, 0.1, -10,
                                   10, 1.0, 20000, RngStream(1, (0,)))
    assert r1.passed, (r1.statistic, r1.reference)
    r2 = verify.test_meeting_bound(OU, 0.0, 0.1, -10, 10, 1.0, 20000,
                                   RngStream(1, (1,)))
    assert r2.passed
    assert r2.statistic < r2.reference  # OU bound has real slack


def test_meeting_bound_equal_points_trivial():
    r = verify.test_meeting_bound(DiffusionSpec.arratia(), 0.2, 0.2, -10, 10,
                                  1.0, 100, RngStream(1, (2,)))
    assert r.passed and r.statistic == 0.0 and r.reference == 0.0


def test_meeting_bound_control_fails_without_bridge():
    r = verify.test_meeting_bound(DiffusionSpec.arratia(), 0.0, 0.1, -10, 10,
                                  1.0, 20000, RngStream(1, (3,)),
                                  use_bridge=False)
    assert not r.passed


def test_cluster_count_bound_and_oracle():
    rep, vals = verify.test_cluster_count(
        DiffusionSpec.arratia(), (0.0, 1.0), 0.0, 1.0, 128, 80,
        RngStream(2, (0,)))
    assert rep.passed
    assert len(vals) == 80
    oracle = verify.test_cluster_density_oracle(128, 0.05, 100,
                                                RngStream(2, (1,)))
    assert oracle.passed


def test_cluster_count_single_start_trivial():
    rep, _ = verify.test_cluster_count(DiffusionSpec.arratia(), (0.0, 1.0),
                                       0.0, 0.5, 1, 20, RngStream(2, (2,)))
    assert rep.passed and rep.statistic == 1.0


def test_no_meet_law():
    r = verify.test_no_meet_law(0.0, 1.0, 1.0, 20000, RngStream(3, (0,)),
                                tol=0.02)
    assert r.passed


def test_marginal_laws():
    r = verify.test_marginal_law(DiffusionSpec.arratia(), 0.0, 1.0, 5000,
                                 RngStream(4, (0,)))
    assert r.passed
    r = verify.test_marginal_law(OU, 1.0, 1.0, 5000, RngStream(4, (1,)))
    assert r.passed
    generic = DiffusionSpec.generic(lambda x: -x, lambda x: np.ones_like(x),
                                    1.0)
    r = verify.test_marginal_law(generic, 0.0, 1.0, 100, RngStream(4, (2,)))
    assert r.passed and "skipped" in r.rule


def test_marginal_degenerate_t_zero():
    r = verify.test_marginal_law(DiffusionSpec.arratia(), 0.4, 0.0, 100,
                                 RngStream(4, (3,)))
    assert r.passed


def test_marginal_control_fails_inflated_sigma():
    r = verify.test_marginal_law(DiffusionSpec.arratia(), 0.0, 1.0, 5000,
                                 RngStream(4, (4,)), sigma_scale=1.25)
    assert not r.passed


def test_ou_moments():
    r = verify.test_ou_moments(1.0, math.sqrt(2.0), 1.0, 1.0, 30000,
                               RngStream(5, (0,)), mean_tol=0.02,
                               var_tol=0.04)
    assert r.passed


def test_small_time_continuity_and_control():
    r = verify.test_small_time_continuity(
        DiffusionSpec.arratia(), 0.0, 0.75, (0.2, 0.1, 0.05, 0.02), 20000,
        RngStream(6, (0,)))
    assert r.passed
    bad = verify.test_small_time_continuity(
        DiffusionSpec.arratia(), 0.0, 0.75, (0.2, 0.1, 0.05, 0.02), 20000,
        RngStream(6, (1,)), jump_rate=2.0)
    assert not bad.passed


def test_stopped_equivalence_and_control():
    r = verify.test_stopped_equivalence(
        DiffusionSpec.arratia(), (0.0, 1.0), 1.0, 800, RngStream(7, (0,)),
        dt=2e-3, permutations=99)
    assert r.passed, (r.statistic, r.mc_std_error)
    bad = verify.test_stopped_equivalence(
        DiffusionSpec.arratia(), (0.0, 1.0), 1.0, 800, RngStream(7, (1,)),
        dt=2e-3, permutations=99, hostile_no_stop=True)
    assert not bad.passed


def test_stopped_equivalence_degenerate():
    r = verify.test_stopped_equivalence(
        DiffusionSpec.arratia(), (0.5, 0.5), 1.0, 10, RngStream(7, (2,)))
    assert r.passed


def test_shift_invariance_small_and_control():
    from coalflow.bundles import SHIFT_QUERIES
    queries = SHIFT_QUERIES[:3]
    cfg = verify.shift_invariance_config(
        DiffusionSpec.arratia(), window=(0.0, 1.0), dx=1.0 / 32, t0=0.0,
        t1=1.25, dt=2e-3, row_period=0.05, queries=queries, hs=(0.25,))
    reports = verify.test_shift_invariance(cfg, (0.25,), queries, 400,
                                           RngStream(8, (0,)),
                                           permutations=99)
    assert all(r.passed for r in reports), [
        (r.name, r.mc_std_error) for r in reports if not r.passed]
    hostile = verify.shift_invariance_config(
        verify.DriftInjectedSpec(kind="arratia", drift_amp=1.5,
                                 drift_period=0.5),
        window=(0.0, 1.0), dx=1.0 / 32, t0=0.0, t1=1.25, dt=2e-3,
        row_period=0.05, queries=queries, hs=(0.25,))
    bad = verify.test_shift_invariance(hostile, (0.25,), queries, 400,
                                       RngStream(8, (1,)), permutations=99)
    assert not all(r.passed for r in bad)
