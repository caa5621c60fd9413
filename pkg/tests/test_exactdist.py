"""Ladder tables, the offset distribution, variance, and the TV bound."""

import json
import math

import numpy as np
import pytest

from changepoint.errors import (
    ConfigurationError,
    DomainError,
    PrecisionError,
    UnreachableLevelError,
)
from changepoint.exactdist import (
    Pmf,
    build_ladder_tables,
    build_pmf,
    cdf,
    pmf_to_json,
    read_pmf_csv,
    suggested_kmax,
    symmetric_interval,
    tv_bound,
    variance_closed_form,
    variance_for,
    write_pmf_csv,
)
from changepoint.numerics import std_normal_survival

ETAS = [0.5, 1.0, 1.5, 2.0, 2.5]


@pytest.fixture(scope="module")
def pmfs():
    return {eta: build_pmf(eta, tol=1e-10) for eta in ETAS}


@pytest.fixture(scope="module")
def tables():
    return {eta: build_ladder_tables(eta, suggested_kmax(eta, 1e-12), tol=1e-12) for eta in ETAS}


# --- ladder tables --------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_recursion_base_cases(eta, tables):
    t = tables[eta]
    assert t.q[0] == 1.0 and t.q_tilde[0] == 1.0
    assert t.q[1] == pytest.approx(std_normal_survival(eta / 2.0), rel=1e-14)
    expected_qt1 = math.exp(eta * eta) * std_normal_survival(1.5 * eta)
    assert t.q_tilde[1] == pytest.approx(expected_qt1, rel=1e-12)


@pytest.mark.parametrize("eta", ETAS)
def test_table_invariants(eta, tables):
    t = tables[eta]
    q, qt, b, bt = t.q, t.q_tilde, t.b[1:], t.b_tilde[1:]
    assert np.all(np.diff(q) <= 0)
    assert np.all(qt[1:] <= q[1:])
    assert np.all(qt > 0) and np.all(q <= 1.0)
    assert np.all(np.diff(b) < 0)
    assert np.all(bt <= b)
    assert 0.0 < t.no_ladder < 1.0
    assert 0.0 <= t.truncation_error < t.tol


def test_eta_guard_and_tol_range():
    with pytest.raises(ConfigurationError):
        build_ladder_tables(0.01, 10)
    with pytest.raises(ConfigurationError):
        build_pmf(0.01)
    with pytest.raises(ConfigurationError):
        build_pmf(1.0, tol=1e-3)


# --- pmf structure --------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_symmetry_bit_exact(eta, pmfs):
    pmf = pmfs[eta]
    for k in (1, 2, 5, pmf.support_halfwidth):
        assert pmf.prob(k) == pmf.prob(-k)


@pytest.mark.parametrize("eta", ETAS)
def test_atom_is_no_ladder_squared_bit_exact(eta, pmfs):
    pmf = pmfs[eta]
    assert pmf.prob(0) == pmf.no_ladder * pmf.no_ladder


@pytest.mark.parametrize("eta", ETAS)
def test_mass_reaches_one_minus_tol(eta, pmfs):
    assert pmfs[eta].total_mass() >= 1.0 - 1e-8
    assert pmfs[eta].tail_mass_bound < 1e-10


@pytest.mark.parametrize("eta", ETAS)
def test_total_mass_identity(eta, pmfs, tables):
    # the series total is exactly 1 + g^2 - 2 g (1-g) sum_{k>=1} q~_k;
    # the identity pins the (slightly super-unity) closed-form total
    pmf, t = pmfs[eta], tables[eta]
    g = 1.0 - t.no_ladder
    expected = 1.0 + g * g - 2.0 * g * (1.0 - g) * float(t.q_tilde[1:].sum())
    assert pmf.total_mass() == pytest.approx(expected, abs=5e-11)
    assert pmf.total_mass() >= 1.0


def test_mass_concentrates_for_large_change():
    assert build_pmf(10.0).prob(0) > 0.999


def test_confidence_level_partial_sums():
    for eta, target in [(1.47, 0.948), (1.52, 0.956), (1.60, 0.965)]:
        pmf = build_pmf(eta)
        s4 = pmf.prob(0) + 2.0 * sum(pmf.prob(k) for k in range(1, 5))
        assert s4 == pytest.approx(target, abs=2e-3)


# --- queries --------------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_cdf_partition_identity(eta, pmfs):
    pmf = pmfs[eta]
    assert cdf(pmf, -1) + pmf.prob(0) + (1.0 - cdf(pmf, 0)) == pytest.approx(1.0, abs=1e-12)
    assert cdf(pmf, 0) - cdf(pmf, -1) == pytest.approx(pmf.prob(0), abs=1e-15)


def test_cdf_edges():
    pmf = build_pmf(2.0)
    K = pmf.support_halfwidth
    assert cdf(pmf, -K - 1) == 0.0
    assert cdf(pmf, K) >= 1.0 - pmf.tail_mass_bound
    assert cdf(pmf, K + 5) <= 1.0


def test_cdf_paper_interval_mass():
    pmf = build_pmf(1.52)
    assert cdf(pmf, 4) - cdf(pmf, -5) == pytest.approx(0.956, abs=2e-3)


def test_symmetric_interval_cases():
    pmf = build_pmf(1.47)
    assert symmetric_interval(pmf, pmf.prob(0) / 2.0) == 0
    assert symmetric_interval(pmf, 0.948) == 4
    levels = [0.3, 0.6, 0.9, 0.95, 0.99]
    widths = [symmetric_interval(pmf, lv) for lv in levels]
    assert widths == sorted(widths)
    with pytest.raises(DomainError):
        symmetric_interval(pmf, 1.2)


def test_symmetric_interval_unreachable_level():
    half = np.array([0.4, 0.1])
    pmf = Pmf(eta=1.0, support_halfwidth=1, probs_half=half, tail_mass_bound=0.4,
              no_ladder=math.sqrt(0.4), tol=1e-10)
    with pytest.raises(UnreachableLevelError):
        symmetric_interval(pmf, 0.9)


# --- variance -------------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_variance_matches_direct_second_moment(eta, tables):
    pmf = build_pmf(eta, tol=1e-12)
    k = np.arange(1, pmf.support_halfwidth + 1, dtype=float)
    direct = 2.0 * float(np.sum(k * k * pmf.probs_half[1:]))
    closed = variance_closed_form(tables[eta])
    assert closed == pytest.approx(direct, rel=1e-6)
    assert closed >= 0.0


def test_variance_decreasing_in_eta():
    vals = [variance_for(eta) for eta in (1.0, 1.5, 2.0, 2.5)]
    assert vals == sorted(vals, reverse=True)
    assert variance_for(10.0) < 1e-4


def test_variance_insufficient_kmax():
    with pytest.raises(PrecisionError):
        variance_closed_form(build_ladder_tables(0.5, 20, tol=1e-12))


# --- tv bound -------------------------------------------------------------

def test_tv_bound_values_and_symmetry():
    assert tv_bound(2.0, 100, 50) == pytest.approx(4.0 * math.exp(-25.0), rel=1e-14)
    for eta, n in [(1.0, 60), (2.0, 100)]:
        assert tv_bound(eta, n, n // 2) == pytest.approx(
            4.0 * math.exp(-eta * eta * n / 16.0), rel=1e-12
        )


def test_tv_bound_monotone_and_capped():
    vals = [tv_bound(1.5, 200, tau) for tau in (10, 30, 60, 100)]
    assert vals == sorted(vals, reverse=True)
    assert tv_bound(0.1, 10, 5) == 1.0
    with pytest.raises(DomainError):
        tv_bound(1.0, 50, 0)
    with pytest.raises(DomainError):
        tv_bound(1.0, 50, 50)


# --- serialization --------------------------------------------------------

def test_csv_round_trip_bit_exact(tmp_path):
    pmf = build_pmf(1.6)
    path = tmp_path / "pmf.csv"
    write_pmf_csv(pmf, path)
    back = read_pmf_csv(path)
    assert back == pmf.as_mapping()


def test_json_shape(tmp_path):
    pmf = build_pmf(2.5)
    obj = json.loads(pmf_to_json(pmf))
    K = pmf.support_halfwidth
    assert obj["K"] == K
    assert obj["eta"] == 2.5
    assert len(obj["probs"]) == 2 * K + 1
    assert obj["probs"][K] == pmf.prob(0)
    assert obj["probs"][0] == obj["probs"][-1]
