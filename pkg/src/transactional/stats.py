"""Frequency tables, sigma gates against analytic oracles, and CHSH values."""
from __future__ import annotations

import csv
import io
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from math import pi, sqrt

import numpy as np
from scipy import stats as sps

from . import qcore
from .qcore import MeasurementAxis, StateVector
from .scenarios import SwapConfig, ScenarioResult, swap_tree

TSIRELSON = 2 * sqrt(2)


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyEntry:
    count: int
    frequency: float
    sigma: float


@dataclass(frozen=True)
class FrequencyTable:
    trials: int
    entries: dict  # label -> FrequencyEntry

    def frequencies(self) -> dict:
        return {k: e.frequency for k, e in self.entries.items()}


def tabulate(results: Sequence[ScenarioResult], labels: Sequence[str] | None = None) -> FrequencyTable:
    """Count outcomes. ``labels`` fixes the row order and adds zero-count rows."""
    if not results:
        raise StatsError("cannot tabulate an empty result list")
    keys = {(r.scenario, r.config_key) for r in results}
    if len(keys) > 1:
        raise StatsError(f"results mix scenarios/configs: {sorted(keys)}")
    counts = Counter(r.outcome for r in results)
    if labels is None:
        labels = sorted(counts)
    else:
        extra = sorted(set(counts) - set(labels))
        if extra:
            raise StatsError(f"observed outcomes outside the label set: {extra}")
    n = len(results)
    entries = {}
    for label in labels:
        c = counts.get(label, 0)
        p = c / n
        entries[label] = FrequencyEntry(c, p, sqrt(p * (1 - p) / n))
    return FrequencyTable(n, entries)


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    count: int
    frequency: float
    sigma: float
    analytic_p: float
    passed: bool


@dataclass(frozen=True)
class Comparison:
    passed: bool
    k_sigma: float
    rows: tuple

    def failures(self) -> list[ComparisonRow]:
        return [r for r in self.rows if not r.passed]


def _binomial_ok(count: int, n: int, p: float, k_sigma: float) -> bool:
    # two-sided acceptance region with the same tail mass as a k-sigma normal gate
    alpha = 2 * sps.norm.sf(k_sigma)
    lo = sps.binom.ppf(alpha / 2, n, p)
    hi = sps.binom.isf(alpha / 2, n, p)
    return lo <= count <= hi


def compare(freqs: FrequencyTable, analytic: Mapping[str, float], k_sigma: float) -> Comparison:
    """Gate every outcome at ``k_sigma`` binomial standard errors around the analytic p.

    Sigma comes from the analytic p. Where the normal approximation is poor
    (N*p or N*(1-p) below 10) the exact binomial acceptance region is used.
    """
    if set(freqs.entries) != set(analytic):
        raise StatsError(
            f"label sets differ: observed {sorted(freqs.entries)} vs analytic {sorted(analytic)}"
        )
    n = freqs.trials
    rows = []
    for label, p in analytic.items():
        e = freqs.entries[label]
        p = min(max(float(p), 0.0), 1.0)
        sigma = sqrt(p * (1 - p) / n)
        if min(n * p, n * (1 - p)) < 10:
            ok = _binomial_ok(e.count, n, p, k_sigma)
        else:
            ok = abs(e.frequency - p) <= k_sigma * sigma
        rows.append(ComparisonRow(label, e.count, e.frequency, sigma, p, bool(ok)))
    return Comparison(all(r.passed for r in rows), k_sigma, tuple(rows))


def comparison_csv(cmp: Comparison) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "count", "frequency", "sigma", "analytic_p", "pass"])
    for r in cmp.rows:
        w.writerow([r.label, r.count, f"{r.frequency:.17g}", f"{r.sigma:.17g}",
                    f"{r.analytic_p:.17g}", str(r.passed).lower()])
    return buf.getvalue()


# --- CHSH -----------------------------------------------------------------------


@dataclass(frozen=True)
class ChshSetting:
    a: MeasurementAxis
    a_prime: MeasurementAxis
    b: MeasurementAxis
    b_prime: MeasurementAxis

    def pairs(self):
        """(x, y, sign) in the order S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
        return (
            (self.a, self.b, 1),
            (self.a, self.b_prime, -1),
            (self.a_prime, self.b, 1),
            (self.a_prime, self.b_prime, 1),
        )

    @classmethod
    def from_angles(cls, a, a_prime, b, b_prime) -> ChshSetting:
        """Polar angles in the x-z plane."""
        return cls(*(MeasurementAxis.from_angles(t) for t in (a, a_prime, b, b_prime)))


# Reaches S = +2*sqrt(2) on Psi+ (correlation -cos(ta + tb) in the x-z plane).
OPTIMAL_PSI_PLUS = ChshSetting.from_angles(0.0, pi / 2, 3 * pi / 4, pi / 4)
# Reaches S = +2*sqrt(2) on Phi+ and -2*sqrt(2) on Psi- (correlation +-cos(ta - tb)).
OPTIMAL_PHI_PLUS = ChshSetting.from_angles(0.0, pi / 2, pi / 4, 3 * pi / 4)


def optimal_setting(kind: str) -> ChshSetting:
    """Coplanar setting that saturates |S| = 2*sqrt(2) on the named Bell state."""
    if kind in ("Psi+", "Phi-"):
        return OPTIMAL_PSI_PLUS
    if kind in ("Phi+", "Psi-"):
        return OPTIMAL_PHI_PLUS
    raise StatsError(f"unknown Bell state {kind!r}")


def chsh(state: StateVector, i, j, setting: ChshSetting) -> float:
    if i == j:
        raise qcore.QuantumError("chsh needs two distinct subsystems")
    return sum(sign * qcore.spin_correlation(state, i, x, j, y) for x, y, sign in setting.pairs())


@dataclass(frozen=True)
class ChshEstimate:
    s: float
    sigma: float
    correlations: tuple  # (E, sigma_E, n) per setting pair
    kept: int


def chsh_sampled(
    cfg: SwapConfig,
    setting: ChshSetting,
    condition: str,
    trials: int,
    rng: np.random.Generator,
) -> ChshEstimate:
    """Sampled S on the (1, 4) ensemble post-selected on Eve's ``condition``.

    For each of the four axis pairs, ``trials`` swap runs (Eve first) are drawn;
    runs whose Eve outcome differs from ``condition`` are discarded.
    """
    if trials <= 0:
        raise StatsError("chsh_sampled needs at least one trial")
    cfg = replace(cfg, ordering="eve_first")
    estimates, s, var, kept_total = [], 0.0, 0.0, 0
    for x, y, sign in setting.pairs():
        root = swap_tree(replace(cfg, axis1=x, axis4=y))
        if condition not in root.labels:
            raise StatsError(f"unknown Eve outcome {condition!r}; have {root.labels}")
        k = root.labels.index(condition)
        if root.states[k] is None:
            raise qcore.ImpossibleOutcomeError(f"Eve outcome {condition!r} has probability 0")
        eve = qcore.sample_index(root.probs, rng.random(trials))
        n = int(np.count_nonzero(eve == k))
        if n == 0:
            raise StatsError(f"no trials with Eve outcome {condition!r} out of {trials}")
        node1 = root.children[k]
        first = qcore.sample_index(node1.probs, rng.random(n))
        u4 = rng.random(n)
        second = np.empty(n, dtype=int)
        for m, child in enumerate(node1.children):
            mask = first == m
            if child is not None and mask.any():
                second[mask] = qcore.sample_index(child.probs, u4[mask])
        # spin bases list "+" before "-", so index 0 is the +1 outcome
        prod = (1 - 2 * first) * (1 - 2 * second)
        e = float(prod.mean())
        se = float(prod.std(ddof=1) / sqrt(n)) if n > 1 else 1.0
        estimates.append((e, se, n))
        s += sign * e
        var += se**2
        kept_total += n
    return ChshEstimate(s, sqrt(var), tuple(estimates), kept_total)
