from dataclasses import replace
from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transactional import qcore, scenarios, stats
from transactional.scenarios import RenningerConfig, ScenarioResult, SwapConfig
from transactional.stats import OPTIMAL_PSI_PLUS, TSIRELSON, ChshSetting, StatsError

from .conftest import binomial_sigma

N = 100_000


def fake(outcome, key="k", scenario="renninger"):
    return ScenarioResult(scenario, key, 0, outcome, 1.0, (), {}, {})


def run(cfg, n=N, master=0):
    return [scenarios.run_seeded(cfg, master, i) for i in range(n)]


def table_from_counts(counts):
    results = [fake(k) for k, c in counts.items() for _ in range(c)]
    return stats.tabulate(results, labels=list(counts))


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: 0.1 < np.linalg.norm(v)
).map(lambda v: qcore.MeasurementAxis(*(np.array(v) / np.linalg.norm(v))))
settings_st = st.builds(ChshSetting, unit, unit, unit, unit)
qubit = st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda v: np.linalg.norm(v) > 0.1)


# --- tabulate -------------------------------------------------------------------------


def test_tabulate_all_same():
    t = stats.tabulate([fake("E1")] * 10)
    assert t.entries == {"E1": stats.FrequencyEntry(10, 1.0, 0.0)}


def test_tabulate_zero_rows_and_sums():
    t = table_from_counts({"a": 3, "b": 0, "c": 7})
    assert t.entries["b"] == stats.FrequencyEntry(0, 0.0, 0.0)
    assert sum(e.count for e in t.entries.values()) == t.trials == 10
    assert sum(t.frequencies().values()) == pytest.approx(1, abs=1e-12)
    assert t.entries["a"].sigma == pytest.approx(sqrt(0.3 * 0.7 / 10))


def test_tabulate_renninger():
    t = stats.tabulate(run(RenningerConfig()))
    e = t.entries["E1"]
    assert abs(e.frequency - 0.5) <= 4 * binomial_sigma(0.5, N)
    assert e.sigma == pytest.approx(sqrt(e.frequency * (1 - e.frequency) / N))


def test_tabulate_swap_eve_marginals():
    results = run(SwapConfig(), master=3)
    eve = stats.tabulate([fake(dict(r.record)["eve"]) for r in results])
    assert set(eve.entries) == set(qcore.BELL_KINDS)
    for e in eve.entries.values():
        assert abs(e.frequency - 0.25) <= 4 * binomial_sigma(0.25, N)


def test_tabulate_errors():
    with pytest.raises(StatsError):
        stats.tabulate([])
    with pytest.raises(StatsError, match="mix"):
        stats.tabulate([fake("a", "k1"), fake("a", "k2")])
    with pytest.raises(StatsError, match="outside"):
        stats.tabulate([fake("z")], labels=["a"])


# --- compare --------------------------------------------------------------------------


@pytest.mark.parametrize("k", [0.0, 1.0, 5.0])
def test_compare_exact_match(k):
    t = table_from_counts({"a": 250, "b": 750})
    assert stats.compare(t, {"a": 0.25, "b": 0.75}, k).passed


def test_compare_renninger_run():
    t = stats.tabulate(run(RenningerConfig(), master=1), labels=["E1", "E2"])
    assert stats.compare(t, {"E1": 0.5, "E2": 0.5}, 5).passed


def test_compare_detects_large_deviation():
    t = table_from_counts({"a": 60_000, "b": 40_000})
    cmp = stats.compare(t, {"a": 0.5, "b": 0.5}, 5)
    assert not cmp.passed
    assert {r.label for r in cmp.failures()} == {"a", "b"}
    # oracle: 0.1 / sqrt(0.25 / 1e5) ~ 63 sigma
    assert abs(cmp.rows[0].frequency - 0.5) / cmp.rows[0].sigma == pytest.approx(63.2, abs=0.1)


def test_compare_label_mismatch():
    with pytest.raises(StatsError):
        stats.compare(table_from_counts({"a": 1}), {"a": 0.5, "b": 0.5}, 5)


def test_compare_zero_probability_row():
    t = table_from_counts({"a": 100, "b": 0})
    assert stats.compare(t, {"a": 1.0, "b": 0.0}, 5).passed
    t = table_from_counts({"a": 99, "b": 1})
    assert not stats.compare(t, {"a": 1.0, "b": 0.0}, 5).passed


def test_compare_binomial_fallback():
    # N*p = 2: normal gate would accept a negative count region; exact region is used
    t = table_from_counts({"rare": 2, "common": 998})
    assert stats.compare(t, {"rare": 0.002, "common": 0.998}, 5).passed
    t = table_from_counts({"rare": 40, "common": 960})
    assert not stats.compare(t, {"rare": 0.002, "common": 0.998}, 5).passed


@settings(max_examples=50)
@given(st.integers(0, 1000), st.floats(0.01, 0.99), st.floats(0, 6), st.floats(0, 6))
def test_compare_monotone_in_k(count, p, k1, dk):
    t = table_from_counts({"a": count, "b": 1000 - count})
    analytic = {"a": p, "b": 1 - p}
    if stats.compare(t, analytic, k1).passed:
        assert stats.compare(t, analytic, k1 + dk).passed


def test_comparison_csv_columns():
    t = table_from_counts({"a": 1, "b": 3})
    text = stats.comparison_csv(stats.compare(t, {"a": 0.25, "b": 0.75}, 5))
    lines = text.splitlines()
    assert lines[0] == "label,count,frequency,sigma,analytic_p,pass"
    assert lines[1].startswith("a,1,0.25,") and lines[1].endswith(",true")


# --- chsh, analytic -------------------------------------------------------------------


def test_chsh_psi_plus_optimal():
    s = stats.chsh(qcore.bell_state("Psi+", 1, 4), 1, 4, OPTIMAL_PSI_PLUS)
    # oracle: direct sum of four correlations at the fixed angles, E = -cos(ta + tb)
    ta, tap, tb, tbp = 0.0, pi / 2, 3 * pi / 4, pi / 4
    e = lambda x, y: -np.cos(x + y)
    direct = e(ta, tb) - e(ta, tbp) + e(tap, tb) + e(tap, tbp)
    assert s == pytest.approx(direct, abs=1e-9)
    assert abs(s) == pytest.approx(TSIRELSON, abs=1e-9)


def test_chsh_product_plus_plus():
    s = qcore.tensor(qcore.ket(1, "+"), qcore.ket(4, "+"))
    assert abs(stats.chsh(s, 1, 4, OPTIMAL_PSI_PLUS)) <= 2 + 1e-9


def test_chsh_singlet_same_axis_term():
    same = ChshSetting.from_angles(0.3, 1.0, 0.3, 2.0)
    singlet = qcore.bell_state("Psi-", 1, 4)
    assert qcore.spin_correlation(singlet, 1, same.a, 4, same.b) == pytest.approx(-1, abs=1e-12)


def test_chsh_rejects_same_subsystem():
    with pytest.raises(qcore.QuantumError):
        stats.chsh(qcore.bell_state("Psi+", 1, 4), 1, 1, OPTIMAL_PSI_PLUS)


@settings(max_examples=60)
@given(st.tuples(*[st.floats(-1, 1)] * 8).filter(lambda v: np.linalg.norm(v) > 0.1), settings_st)
def test_tsirelson_bound(v, setting):
    amps = np.array(v[:4]) + 1j * np.array(v[4:])
    s = qcore.state((1, 4), amps / np.linalg.norm(amps))
    assert abs(stats.chsh(s, 1, 4, setting)) <= TSIRELSON + 1e-9


@settings(max_examples=60)
@given(qubit, qubit, settings_st)
def test_local_bound_on_products(u, v, setting):
    a = np.array(u[:2]) + 1j * np.array(u[2:])
    b = np.array(v[:2]) + 1j * np.array(v[2:])
    s = qcore.tensor(qcore.state((1,), a / np.linalg.norm(a)), qcore.state((4,), b / np.linalg.norm(b)))
    assert abs(stats.chsh(s, 1, 4, setting)) <= 2 + 1e-9


def test_setting_axes_are_unit():
    for axis in (OPTIMAL_PSI_PLUS.a, OPTIMAL_PSI_PLUS.a_prime, OPTIMAL_PSI_PLUS.b, OPTIMAL_PSI_PLUS.b_prime):
        assert np.linalg.norm(axis.as_tuple()) == pytest.approx(1, abs=1e-12)


# --- chsh, sampled --------------------------------------------------------------------


def test_chsh_sampled_bell_psi_plus():
    est = stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "Psi+", N, np.random.default_rng(1))
    assert abs(est.s - TSIRELSON) <= 5 * est.sigma
    assert 0 < est.kept < 4 * N
    assert len(est.correlations) == 4


def test_chsh_sampled_product():
    cfg = SwapConfig(eve_basis="product")
    est = stats.chsh_sampled(cfg, OPTIMAL_PSI_PLUS, "+-", N, np.random.default_rng(2))
    assert abs(est.s) <= 2 + 5 * est.sigma
    pairs = scenarios.swap_conditional_pairs("product")
    oracle = stats.chsh(pairs["+-"][1], 1, 4, OPTIMAL_PSI_PLUS)
    assert abs(est.s - oracle) <= 5 * est.sigma


def test_chsh_sampled_errors():
    g = np.random.default_rng(0)
    with pytest.raises(StatsError):
        stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "Psi+", 0, g)
    with pytest.raises(StatsError):
        stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "GHZ", 10, g)


def test_chsh_sampled_zero_probability_condition(monkeypatch):
    real = scenarios.swap_tree

    def without_psi_minus(cfg):
        root = real(cfg)
        k = root.labels.index("Psi-")
        states = tuple(None if i == k else s for i, s in enumerate(root.states))
        return replace(root, states=states)

    monkeypatch.setattr(stats, "swap_tree", without_psi_minus)
    with pytest.raises(qcore.ImpossibleOutcomeError):
        stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "Psi-", 10, np.random.default_rng(0))


def test_chsh_sampled_deterministic():
    a = stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "Phi-", 5000, np.random.default_rng(4))
    b = stats.chsh_sampled(SwapConfig(), OPTIMAL_PSI_PLUS, "Phi-", 5000, np.random.default_rng(4))
    assert a == b


def test_chsh_estimator_consistency_over_seeds():
    cfg = SwapConfig()
    oracle = stats.chsh(qcore.bell_state("Psi+", 1, 4), 1, 4, OPTIMAL_PSI_PLUS)
    seeds = range(100)
    within = sum(
        abs(est.s - oracle) <= 5 * est.sigma
        for est in (stats.chsh_sampled(cfg, OPTIMAL_PSI_PLUS, "Psi+", N, np.random.default_rng(s))
                    for s in seeds)
    )
    assert within >= 99


@pytest.mark.parametrize("eve,expected", [("Psi+", TSIRELSON), ("Phi-", -TSIRELSON),
                                          ("Phi+", 0.0), ("Psi-", 0.0)])
def test_chsh_per_bell_condition(eve, expected):
    pair = scenarios.swap_conditional_pairs("bell")[eve][1]
    assert stats.chsh(pair, 1, 4, OPTIMAL_PSI_PLUS) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("kind", qcore.BELL_KINDS)
def test_optimal_setting_saturates_every_bell_state(kind):
    s = stats.chsh(qcore.bell_state(kind, 1, 4), 1, 4, stats.optimal_setting(kind))
    assert abs(s) == pytest.approx(TSIRELSON, abs=1e-9)


def test_optimal_setting_unknown():
    with pytest.raises(StatsError):
        stats.optimal_setting("GHZ")
