"""Command-line entry point: ``tisim run | analyze | graph``.

Exit codes: 0 success, 1 a statistical gate failed, 2 bad configuration,
3 incomplete absorber configuration.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from . import qcore, scenarios, stats
from .scenarios import ConfigError, SwapConfig
from .transaction import IncompleteConfigurationError, build_wave_graph, connected, swap_layout

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_INCOMPLETE = 0, 1, 2, 3
_TOP_LEVEL_KEYS = {"scenario", "chsh", *scenarios.SCENARIOS}


@dataclass(frozen=True)
class RunManifest:
    scenario: str
    config_path: Optional[str]
    trials: int
    seed: int
    out: Path
    csv_out: Path
    k_sigma: float = 5.0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"--trials must be at least 1, got {self.trials}")


# --- config -------------------------------------------------------------------


def load_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of sections")
    unknown = sorted(set(data) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys in {path}: {unknown}")
    return data


def chsh_setting_from(section: Optional[dict]) -> stats.ChshSetting:
    if not section:
        return stats.OPTIMAL_PSI_PLUS
    keys = ("a", "a_prime", "b", "b_prime")
    unknown = sorted(set(section) - set(keys))
    if unknown:
        raise ConfigError(f"unknown keys in [chsh] section: {unknown}")
    default = stats.OPTIMAL_PSI_PLUS
    axes = {k: scenarios._axis(section[k], f"chsh.{k}") if k in section else getattr(default, k)
            for k in keys}
    return stats.ChshSetting(**axes)


def resolve(args) -> tuple[str, object, dict]:
    """Scenario name, validated config and the raw file contents."""
    data = load_config_file(args.config) if args.config else {}
    name = args.scenario or args.scenario_flag or data.get("scenario")
    if name is None:
        raise ConfigError("no scenario given (positional, --scenario, or 'scenario:' in config)")
    if name not in scenarios.SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {scenarios.SCENARIOS}")
    section = dict(data.get(name) or {})
    if name == "swap":
        if getattr(args, "eve_basis", None):
            section["eve_basis"] = args.eve_basis
        if getattr(args, "ordering", None):
            section["ordering"] = args.ordering.replace("-", "_")
    if name == "maudlin" and getattr(args, "far_left_absorber", False):
        section["include_far_left_absorber"] = True
    return name, scenarios.config_from_dict(name, section), data


# --- serialization ------------------------------------------------------------

_FLOAT_TOKEN = re.compile(r'"\\u0000F(\d+)"')


def dumps_report(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    floats: list[float] = []

    def mark(x):
        if isinstance(x, bool) or x is None:
            return x
        if isinstance(x, float):
            floats.append(x)
            return f"\x00F{len(floats) - 1}"
        if isinstance(x, dict):
            return {str(k): mark(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [mark(v) for v in x]
        return x

    text = json.dumps(mark(obj), indent=2)
    return _FLOAT_TOKEN.sub(lambda m: format(floats[int(m.group(1))], ".17g"), text) + "\n"


# --- trial execution ------------------------------------------------------------


def _run_chunk(cfg, seed: int, start: int, stop: int):
    return [scenarios.run_seeded(cfg, seed, i) for i in range(start, stop)]


def run_trials(cfg, trials: int, seed: int, workers: int = 1) -> list:
    """Trials 0..N-1 with per-trial seeds; output order never depends on ``workers``."""
    if workers <= 1:
        return _run_chunk(cfg, seed, 0, trials)
    step = -(-trials // workers)
    bounds = [(a, min(a + step, trials)) for a in range(0, trials, step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = pool.map(_run_chunk, *zip(*[(cfg, seed, a, b) for a, b in bounds]))
        return [r for chunk in chunks for r in chunk]


def _conditional_summary(cfg, results) -> dict:
    if isinstance(cfg, SwapConfig) and cfg.ordering == "eve_first":
        per_outcome: dict = {}
        for r in results:
            eve = dict(r.record)["eve"]
            if eve in per_outcome:
                continue
            pair = r.conditional["pair14"]
            bell, fid = scenarios.closest_bell_state(pair, 1, 4)
            entry = {"schmidt": qcore.schmidt_coefficients(pair, (1,)), "closest_bell": bell,
                     "fidelity": fid}
            if cfg.eve_basis == "bell":
                entry["fidelity_same_label"] = qcore.fidelity(qcore.bell_state(eve, 1, 4), pair)
            per_outcome[eve] = entry
        return {k: per_outcome[k] for k in sorted(per_outcome)}
    if scenarios.scenario_name(cfg) == "quantum_liar":
        d = scenarios.liar_branches(cfg).atom_states["D"]
        if d is None:
            return {}
        bell, fid = scenarios.closest_bell_state(d, "atom1", "atom2")
        return {"D": {"schmidt": qcore.schmidt_coefficients(d, ("atom1",)),
                      "closest_bell": bell, "fidelity": fid}}
    return {}


def cmd_run(args) -> int:
    name, cfg, _ = resolve(args)
    out = Path(args.out or f"{name}_report.json")
    manifest = RunManifest(name, args.config, args.trials, args.seed, out,
                           out.with_suffix(".csv"), args.k_sigma, args.workers)
    analytic = scenarios.analytic_distribution(cfg)
    results = run_trials(cfg, manifest.trials, manifest.seed, manifest.workers)
    table = stats.tabulate(results, labels=list(analytic))
    cmp = stats.compare(table, analytic, manifest.k_sigma)
    report = {
        "scenario": name,
        "config": scenarios.config_to_dict(cfg),
        "config_hash": scenarios.config_hash(cfg),
        "master_seed": manifest.seed,
        "trials": manifest.trials,
        "k_sigma": float(manifest.k_sigma),
        "passed": cmp.passed,
        "rows": [
            {"label": r.label, "count": r.count, "frequency": r.frequency, "sigma": r.sigma,
             "analytic_p": r.analytic_p, "pass": r.passed}
            for r in cmp.rows
        ],
        "conditional": _conditional_summary(cfg, results),
    }
    if name == "swap":
        marginal: dict = {}
        for r in cmp.rows:
            eve = r.label.split(":")[0]
            marginal[eve] = marginal.get(eve, 0.0) + r.frequency
        report["eve_marginal"] = marginal
    manifest.out.parent.mkdir(parents=True, exist_ok=True)
    manifest.out.write_text(dumps_report(report), encoding="utf-8")
    csv_text = f"# seed={manifest.seed} trials={manifest.trials}\n" + stats.comparison_csv(cmp)
    manifest.csv_out.write_text(csv_text, encoding="utf-8")
    for r in cmp.rows:
        if r.analytic_p > 0 or r.count:
            print(f"{r.label:>10}  {r.frequency:.6f}  (p={r.analytic_p:.6f})  "
                  f"{'ok' if r.passed else 'FAIL'}")
    print(f"{'PASS' if cmp.passed else 'FAIL'}: {name}, N={manifest.trials}, seed={manifest.seed}, "
          f"k={manifest.k_sigma:g}; report {manifest.out}")
    return EXIT_OK if cmp.passed else EXIT_GATE


def analyze(cfg, setting: stats.ChshSetting) -> dict:
    report: dict = {"scenario": scenarios.scenario_name(cfg),
                    "distribution": scenarios.analytic_distribution(cfg)}
    if isinstance(cfg, SwapConfig):
        rows = {}
        for eve, (p, pair) in scenarios.swap_conditional_pairs(cfg.eve_basis).items():
            if pair is None:
                rows[eve] = {"p": p}
                continue
            bell, fid = scenarios.closest_bell_state(pair, 1, 4)
            rows[eve] = {"p": p, "schmidt": qcore.schmidt_coefficients(pair, (1,)),
                         "closest_bell": bell, "bell_fidelity": fid,
                         "chsh": stats.chsh(pair, 1, 4, setting)}
        report["eve_outcomes"] = rows
        report["conditional"] = {}
    else:
        report["conditional"] = _conditional_summary(cfg, [])
    return report


def cmd_analyze(args) -> int:
    name, cfg, data = resolve(args)
    report = analyze(cfg, chsh_setting_from(data.get("chsh")))
    print(f"scenario: {name}")
    for label, p in report["distribution"].items():
        print(f"  {label:>10}  p={p:.6f}")
    for eve, row in report.get("eve_outcomes", {}).items():
        if "schmidt" in row:
            sc = ", ".join(f"{x:.4f}" for x in row["schmidt"])
            print(f"  eve={eve:<5} p={row['p']:.4f}  schmidt=({sc})  "
                  f"bell={row['closest_bell']} F={row['bell_fidelity']:.6f}  S={row['chsh']:+.6f}")
    for label, row in report["conditional"].items():
        sc = ", ".join(f"{x:.4f}" for x in row["schmidt"])
        print(f"  conditional on {label}: schmidt=({sc}) bell={row['closest_bell']} "
              f"F={row['fidelity']:.6f}")
    if args.out:
        Path(args.out).write_text(dumps_report(report), encoding="utf-8")
    return EXIT_OK


def cmd_graph(args) -> int:
    name, cfg, _ = resolve(args)
    if name != "swap":
        raise ConfigError(f"wave graphs are defined for the swap layout only, not {name!r}")
    graph = build_wave_graph(swap_layout(cfg.eve_basis))
    dot = graph.to_dot()
    target = args.graph_out or args.out
    if target:
        Path(target).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    linked = connected(graph, "D1", "D4")
    print(f"D1 <-> D4: {'connected' if linked else 'disconnected'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tisim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", nargs="?", choices=scenarios.SCENARIOS)
        p.add_argument("--scenario", dest="scenario_flag", choices=scenarios.SCENARIOS)
        p.add_argument("--config", help="YAML file with per-scenario sections")
        p.add_argument("--eve-basis", choices=("bell", "product"))
        p.add_argument("--ordering", choices=("eve-first", "edges-first"))
        p.add_argument("--far-left-absorber", action="store_true",
                       help="maudlin: add absorber C at the far left")
        p.add_argument("--out")

    run = sub.add_parser("run", help="sample trials and gate them against the analytic oracle")
    common(run)
    run.add_argument("--trials", type=int, default=100_000)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--k-sigma", type=float, default=5.0)
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=cmd_run)

    ana = sub.add_parser("analyze", help="exact probabilities and entanglement, no sampling")
    common(ana)
    ana.set_defaults(func=cmd_analyze)

    graph = sub.add_parser("graph", help="export the offer/confirmation wave graph as DOT")
    common(graph)
    graph.add_argument("--graph-out")
    graph.set_defaults(func=cmd_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompleteConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"deficit: {exc.deficit:.6f}")
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
