import math

import numpy as np
import pytest

from listmatch import continuum, oracle, verify
from listmatch.distributions import DistKind
from listmatch.report import Status


def test_slack_and_indices():
    assert verify.slack(1000, 2) == pytest.approx(0.02)
    assert verify.sample_indices(100, 10) == [1, 11, 21, 31, 41, 51, 61, 71, 81, 91, 100]


def test_main_discrete_exact_passes():
    rep = verify.verify_main_discrete(1000, (1, 2, 4, 10, 20))
    assert rep.status is Status.PASS and rep.margin >= 0


def test_main_discrete_small_n_is_finding_not_failure():
    rep = verify.verify_main_discrete(100, (1, 2, 3))
    assert rep.status in (Status.PASS, Status.FINDING)


@pytest.mark.slow
def test_main_discrete_pareto_high_monte_carlo():
    rep = verify.verify_main_discrete(1000, (1, 2, 4, 10, 20), dist="pareto-high", reps=10_000, stride=50)
    assert rep.status is Status.PASS, rep.details


def test_main_discrete_degenerate_only_first_half_required():
    rep = verify.verify_main_discrete(1000, (1, 20), dist="degenerate", reps=4000, stride=25)
    assert rep.scope["required_i"] == "1..500"
    assert rep.status in (Status.PASS, Status.FINDING)
    assert rep.margin >= 0


def test_main_discrete_exact_rejects_nonuniform():
    with pytest.raises(ValueError):
        verify.verify_main_discrete(100, (1, 2), dist=DistKind.PARETO_LOW)


def test_school_love_passes():
    assert verify.verify_school_love(300).status is Status.PASS


def test_crossing_discrete():
    rep = verify.verify_crossing_discrete(1000)
    assert rep.status is Status.PASS and rep.margin > 0
    first = rep.details["first_crossing_index"]["1-2"]
    assert 1000 < first <= 1250
    assert first / 1000 == pytest.approx(continuum.crossing_time(1, 2), abs=0.01)


@pytest.mark.parametrize("d,lo,hi", [(1, 1 / 3, 2 / 5), (2, 2 / 5, 4 / 9), (20, 20 / 41, 40 / 81)])
def test_bound_discrete_cells(d, lo, hi):
    assert verify.bound_interval(d) == pytest.approx((lo, hi))
    p = oracle.exact_match_prob(1000, d, 1000)
    s = verify.slack(1000, d)
    assert lo - s <= p <= hi + s
    if d == 20:
        assert lo == pytest.approx(0.49, abs=0.003) and hi == pytest.approx(0.49, abs=0.005)


def test_bound_discrete_near_continuum():
    assert oracle.exact_match_prob(1000, 1, 1000) == pytest.approx(math.exp(-1), abs=5 / 1000)
    assert oracle.exact_match_prob(1000, 2, 1000) == pytest.approx(1 / math.cosh(1) ** 2, abs=20 / 1000)
    assert 1 / math.cosh(1) ** 2 == pytest.approx(0.4200, abs=1e-4)


def test_bound_discrete_suite():
    rep = verify.verify_bound_discrete(1000, 10, 100)
    assert rep.status is Status.PASS
    assert rep.details["continuum_margin"] > 0


def test_rank_bound_formula():
    assert verify.rank_bound(1, 1) == pytest.approx((3 / 5) ** 0.5 - 3 / 5)
    assert verify.rank_bound(1, 1) == pytest.approx(0.1746, abs=1e-4)
    assert verify.rank_bound(2, 1) == pytest.approx((4 / 7) ** (1 / 3) - (5 / 9) ** (1 / 2))
    assert verify.rank_bound(2, 2) == pytest.approx((4 / 7) ** (2 / 3) - 5 / 9)


def test_worst_case_rank_suite():
    rep = verify.verify_worst_case_rank(1000)
    assert rep.status is Status.PASS
    for cell in rep.details["cells"]:
        assert cell["gap_at_1"] == 0.0


def test_continuum_suites():
    for fn in (verify.verify_bound_cts, verify.verify_xd_bounds, verify.verify_ig):
        rep = fn()
        assert rep.status is Status.PASS, rep.claim_id


def test_conjecture_suite_small():
    rep = verify.verify_conjecture(3, 3)
    assert rep.status is Status.PASS
    assert rep.details["tau_vs_direct_d3"]["max_abs_diff"] <= 1e-4


def test_xts_decreasing():
    rep = verify.verify_xts_convergence((100, 1000, 10000), d=2, t_max=2.0, reps=200)
    assert rep.status is Status.PASS
    med = [r["median_sup"] for r in rep.details["rows"]]
    assert med[0] > med[1] > med[2]


def test_xts_zero_horizon():
    rep = verify.verify_xts_convergence((100,), d=2, t_max=0.0, reps=20)
    assert rep.details["rows"][0]["median_sup"] == 0.0


def test_xts_d1_rate_is_root_n():
    rep = verify.verify_xts_convergence((250, 1000, 4000), d=1, t_max=2.0, reps=100)
    assert rep.details["log_log_rate_of_median"] == pytest.approx(-0.5, abs=0.15)


def test_prob_to_xprime_and_serial():
    assert verify.verify_prob_to_xprime(reps=300).status is Status.PASS
    assert verify.verify_serial(reps=1000).status is Status.PASS


def test_figures_small_protocol(tmp_path):
    protocol = verify.FigureProtocol(n=200, d_set=(1, 2, 4), reps=2000, stride=10, out_dir=tmp_path)
    rep = verify.verify_figures(protocol)
    assert rep.status in (Status.PASS, Status.FINDING), rep.details
    lines = (tmp_path / "nonuniform.csv").read_text().splitlines()
    assert lines[0] == ",".join(verify.FIGURE_HEADER)
    assert len(lines) == 1 + 5 * 3 * len(verify.sample_indices(200, 10))
    assert rep.details["degenerate_taken_fraction_at_n"] == pytest.approx(0.5, abs=0.1)


def test_reports_are_deterministic():
    a = verify.verify_serial(n=200, m=200, reps=500, seed=3).to_json()
    b = verify.verify_serial(n=200, m=200, reps=500, seed=3, threads=3).to_json()
    assert a == b


def test_suite_registry_covers_every_claim():
    assert set(verify.SUITES) == {
        "main-discrete", "school-love", "crossing-discrete", "bound-discrete", "worst-case-rank",
        "bound-cts", "xts", "prob-to-xprime", "serial", "conjecture", "xd-bounds", "ig", "figures",
    }
    ids = {verify.SUITES[name]().claim_id for name in ("bound-cts", "ig")}
    assert ids == {"bound-cts", "ig"}
    assert np.isfinite(verify.verify_ig().margin)
