"""The four thought experiments as runnable, seed-reproducible scenarios.

Every scenario has an analytic outcome distribution (``analytic_distribution``)
and a per-trial sampler (``run_trial``). Samplers only ever draw uniforms from
the supplied generator, so a trial is fully determined by its seed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from math import pi, sqrt
from typing import Any, Optional

import numpy as np

from . import qcore
from .qcore import (
    Z_AXIS,
    MeasurementAxis,
    MeasurementBasis,
    StateVector,
    bell_basis,
    bell_state,
    ket,
    product_basis,
    spin_basis,
)
from .transaction import (
    AbsorberConfiguration,
    IncompleteConfigurationError,
    form_transaction,
    validate_completeness,
)

SCENARIOS = ("renninger", "maudlin", "quantum_liar", "swap")
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    pass


def trial_seed(master_seed: int, index: int) -> int:
    """Seed of trial ``index``: splitmix64 finaliser applied to (master, index).

    Stateless, so trials can be run in any order or in parallel.
    """
    z = (master_seed * 0x9E3779B97F4A7C15 + (index + 1) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# --- configs ----------------------------------------------------------------


@dataclass(frozen=True)
class RenningerConfig:
    fraction: float = 0.5  # solid-angle fraction covered by shell E1
    r1: float = 1.0
    r2: float = 2.0
    speed: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ConfigError(f"fraction must lie in (0, 1), got {self.fraction}")
        if not 0 < self.r1 < self.r2:
            raise ConfigError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if self.speed <= 0:
            raise ConfigError(f"speed must be positive, got {self.speed}")

    @property
    def t1(self) -> float:
        return self.t0 + self.r1 / self.speed

    @property
    def t2(self) -> float:
        return self.t0 + self.r2 / self.speed


@dataclass(frozen=True)
class MaudlinConfig:
    include_far_left_absorber: bool = False  # absorber C at the far left


@dataclass(frozen=True)
class QuantumLiarConfig:
    reflection_phase: float = pi / 2  # radians; beam-splitter reflection factor exp(i*phase)
    blocking: tuple = ("+", "+")  # z eigenstate of atom 1 / atom 2 that absorbs the photon

    def __post_init__(self):
        blocking = tuple(self.blocking)
        if len(blocking) != 2 or any(b not in ("+", "-") for b in blocking):
            raise ConfigError(f"blocking must be two of '+'/'-', got {self.blocking!r}")
        object.__setattr__(self, "blocking", blocking)
        u = self.beam_splitter()
        if not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12, rtol=0):
            raise ConfigError("beam splitter is not unitary")

    def beam_splitter(self) -> np.ndarray:
        r = np.exp(1j * self.reflection_phase)
        return np.array([[1, r], [-np.conj(r), 1]], dtype=complex) / sqrt(2)


@dataclass(frozen=True)
class SwapConfig:
    eve_basis: str = "bell"
    ordering: str = "eve_first"
    axis1: MeasurementAxis = Z_AXIS
    axis4: MeasurementAxis = Z_AXIS

    def __post_init__(self):
        if self.eve_basis not in ("bell", "product"):
            raise ConfigError(f"eve_basis must be 'bell' or 'product', got {self.eve_basis!r}")
        if self.ordering not in ("eve_first", "edges_first"):
            raise ConfigError(
                f"ordering must be 'eve_first' or 'edges_first', got {self.ordering!r}"
            )
        for name in ("axis1", "axis4"):
            axis = getattr(self, name)
            if not isinstance(axis, MeasurementAxis):
                object.__setattr__(self, name, _axis(axis, name))


CONFIG_TYPES = {
    "renninger": RenningerConfig,
    "maudlin": MaudlinConfig,
    "quantum_liar": QuantumLiarConfig,
    "swap": SwapConfig,
}


def scenario_name(cfg) -> str:
    for name, typ in CONFIG_TYPES.items():
        if isinstance(cfg, typ):
            return name
    raise ConfigError(f"not a scenario config: {cfg!r}")


def _axis(value, name="axis") -> MeasurementAxis:
    if isinstance(value, MeasurementAxis):
        return value
    try:
        if isinstance(value, (int, float)):
            return MeasurementAxis.from_angles(float(value))
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected an angle or a 3-vector, got {value!r}") from exc
    try:
        return MeasurementAxis(x, y, z)
    except qcore.QuantumError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, MeasurementAxis):
            v = list(v.as_tuple())
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def config_from_dict(scenario: str, data: Optional[dict]):
    try:
        typ = CONFIG_TYPES[scenario]
    except KeyError:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}") from None
    data = dict(data or {})
    known = {f.name: f for f in fields(typ)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in [{scenario}] section: {unknown}")
    kwargs = {}
    for key, value in data.items():
        default = known[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{scenario}.{key} must be a boolean, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{scenario}.{key} must be a number, got {value!r}")
            value = float(value)
        elif isinstance(default, MeasurementAxis):
            value = _axis(value, f"{scenario}.{key}")
        elif isinstance(default, tuple):
            value = tuple(value)
        kwargs[key] = value
    try:
        return typ(**kwargs)
    except (TypeError, qcore.QuantumError) as exc:
        raise ConfigError(str(exc)) from exc


@lru_cache(maxsize=256)
def config_hash(cfg) -> str:
    payload = json.dumps(
        {"scenario": scenario_name(cfg), **config_to_dict(cfg)}, sort_keys=True, default=str
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# --- results ------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    config_key: str
    seed: Optional[int]
    outcome: str
    probability: float
    record: tuple = ()  # ((step, label), ...) in the order the steps happened
    conditional: dict = field(default_factory=dict)  # name -> StateVector
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.probability <= 1 + 1e-12:
            raise ValueError(
                f"realized outcome {self.outcome!r} has analytic probability {self.probability}"
            )


# --- sequential measurement trees ---------------------------------------------


@dataclass(frozen=True, eq=False)
class _Node:
    step: str
    labels: tuple
    probs: tuple
    states: tuple  # conditional state per outcome, None where impossible
    children: tuple  # _Node per outcome, None at leaves / impossible branches


def _measurement_tree(s: StateVector, steps: tuple) -> _Node:
    (name, basis), rest = steps[0], steps[1:]
    dist = qcore.outcome_distribution(s, basis)
    states, children = [], []
    for label, p in dist.items():
        if p <= qcore.ATOL:
            states.append(None)
            children.append(None)
            continue
        cond = qcore.conditional_state(s, basis, label)
        states.append(cond)
        children.append(_measurement_tree(cond, rest) if rest else None)
    return _Node(name, tuple(dist), tuple(dist.values()), tuple(states), tuple(children))


def _tree_paths(node: _Node, prefix=(), prob=1.0):
    for label, p, state, child in zip(node.labels, node.probs, node.states, node.children):
        if state is None:
            continue
        path = prefix + ((node.step, label),)
        if child is None:
            yield path, prob * p
        else:
            yield from _tree_paths(child, path, prob * p)


def _walk(node: _Node, rng: np.random.Generator):
    """Sample one path, drawing one uniform per measurement."""
    record, states, prob = [], {}, 1.0
    while node is not None:
        k = int(qcore.sample_index(node.probs, rng.random()))
        record.append((node.step, node.labels[k]))
        states[node.step] = node.states[k]
        prob *= node.probs[k]
        node = node.children[k]
    return tuple(record), states, prob


# --- Renninger ----------------------------------------------------------------


def _renninger_basis() -> MeasurementBasis:
    return MeasurementBasis(("shell",), (("E1", ket("shell", "+")), ("E2", ket("shell", "-"))))


def renninger_state(cfg: RenningerConfig) -> StateVector:
    return qcore.state(("shell",), [sqrt(cfg.fraction), sqrt(1 - cfg.fraction)])


@lru_cache(maxsize=64)
def renninger_absorbers(cfg: RenningerConfig) -> AbsorberConfiguration:
    amps = qcore.decompose(renninger_state(cfg), _renninger_basis())
    return AbsorberConfiguration.from_amplitudes("S", amps)


def run_renninger(cfg: RenningerConfig, rng: np.random.Generator, seed=None) -> ScenarioResult:
    tx = form_transaction(renninger_absorbers(cfg), rng, seed)
    return ScenarioResult(
        "renninger",
        config_hash(cfg),
        seed,
        tx.absorber,
        tx.probability,
        record=(("transaction", tx.absorber),),
        metadata={"t0": cfg.t0, "t1": cfg.t1, "t2": cfg.t2},
    )


# --- Maudlin ------------------------------------------------------------------

_INV_SQRT2 = 1 / sqrt(2)


def maudlin_absorbers(cfg: MaudlinConfig) -> AbsorberConfiguration:
    """Emission-time configuration: A in front of B on the right, C (optional) far left."""
    amps = {"A": _INV_SQRT2, "B": 0.0}
    if cfg.include_far_left_absorber:
        amps["C"] = _INV_SQRT2
    return AbsorberConfiguration.from_amplitudes("S", amps)


# Once the particle went left, B swings over and intercepts it ahead of C.
_LEFT_BRANCH = AbsorberConfiguration.from_amplitudes("S:left", {"B": 1.0, "C": 0.0})
_RIGHT_BRANCH = AbsorberConfiguration.from_amplitudes("S:right", {"A": 1.0, "B": 0.0})
_DIRECTION = {"A": "right", "B": "right", "C": "left"}


def run_maudlin(cfg: MaudlinConfig, rng: np.random.Generator, seed=None) -> ScenarioResult:
    first = form_transaction(maudlin_absorbers(cfg), rng, seed)
    direction = _DIRECTION[first.absorber]
    second = form_transaction(_LEFT_BRANCH if direction == "left" else _RIGHT_BRANCH, rng, seed)
    return ScenarioResult(
        "maudlin",
        config_hash(cfg),
        seed,
        second.absorber,
        first.probability * second.probability,
        record=(("direction", direction), ("absorber", second.absorber)),
    )


def _maudlin_distribution(cfg: MaudlinConfig) -> dict:
    first = maudlin_absorbers(cfg)
    check_complete(first)
    dist = {"A": 0.0, "B": 0.0, "C": 0.0}
    for a in first.absorbers:
        w = abs(a.offer_amplitude) ** 2
        branch = _LEFT_BRANCH if _DIRECTION[a.id] == "left" else _RIGHT_BRANCH
        for b in branch.absorbers:
            dist[b.id] += w * abs(b.offer_amplitude) ** 2
    return dist


def check_complete(cfg: AbsorberConfiguration) -> None:
    check = validate_completeness(cfg)
    if not check.ok:
        raise IncompleteConfigurationError(check.deficit, cfg.emitter)


# --- quantum liar -------------------------------------------------------------

LIAR_OUTCOMES = ("atom1", "atom2", "C", "D")


@dataclass(frozen=True, eq=False)
class LiarBranches:
    probabilities: dict  # outcome -> probability
    atom_states: dict  # outcome -> normalized two-atom state (None if impossible)


@lru_cache(maxsize=64)
def liar_branches(cfg: QuantumLiarConfig) -> LiarBranches:
    """Photon path (+ = path 1, - = path 2) through BS1, atom interception, BS2.

    An atom in its blocking state absorbs the photon on its own path; that
    branch is split off as a distinct outcome. After BS2, output ``+`` is the
    port that stays dark when neither path is obstructed and is labelled D.
    """
    bs = cfg.beam_splitter()
    x_up = [_INV_SQRT2, _INV_SQRT2]
    psi = qcore.tensor_all(
        [ket("photon", "+"), qcore.state(("atom1",), x_up), qcore.state(("atom2",), x_up)]
    )
    psi = qcore.apply(psi, bs, ("photon",))

    branches = {}
    survivor = psi
    for k, (path, atom_id) in enumerate((("+", "atom1"), ("-", "atom2"))):
        blocker = qcore.product_ket([("photon", path), (atom_id, cfg.blocking[k])])
        proj = np.outer(blocker.amplitudes, blocker.amplitudes.conj())
        absorbed = qcore.apply(psi, proj, ("photon", atom_id))
        survivor = qcore.state(survivor.subsystems, survivor.amplitudes - absorbed.amplitudes)
        branches[atom_id] = qcore.project(absorbed, product_basis(("photon",)), path)

    out = qcore.apply(survivor, bs, ("photon",))
    photon = product_basis(("photon",))
    branches["D"] = qcore.project(out, photon, "+")
    branches["C"] = qcore.project(out, photon, "-")

    probs, states = {}, {}
    for label in LIAR_OUTCOMES:
        b = branches[label]
        probs[label] = b.norm() ** 2
        states[label] = qcore.normalize(b) if probs[label] > qcore.ATOL else None
    return LiarBranches(probs, states)


@lru_cache(maxsize=64)
def liar_absorbers(cfg: QuantumLiarConfig) -> AbsorberConfiguration:
    return AbsorberConfiguration.from_weights("L", liar_branches(cfg).probabilities)


def run_quantum_liar(cfg: QuantumLiarConfig, rng: np.random.Generator, seed=None) -> ScenarioResult:
    tx = form_transaction(liar_absorbers(cfg), rng, seed)
    state = liar_branches(cfg).atom_states[tx.absorber]
    return ScenarioResult(
        "quantum_liar",
        config_hash(cfg),
        seed,
        tx.absorber,
        tx.probability,
        record=(("absorber", tx.absorber),),
        conditional={"atoms": state},
    )


# --- entanglement swapping ------------------------------------------------------


def swap_initial_state() -> StateVector:
    """Two singlets, particles (1, 2) and (3, 4)."""
    return qcore.tensor(bell_state("Psi-", 1, 2), bell_state("Psi-", 3, 4))


def eve_basis(kind: str) -> MeasurementBasis:
    return bell_basis(2, 3) if kind == "bell" else product_basis((2, 3))


def _swap_steps(cfg: SwapConfig) -> tuple:
    eve = ("eve", eve_basis(cfg.eve_basis))
    edges = (("1", spin_basis(1, cfg.axis1)), ("4", spin_basis(4, cfg.axis4)))
    return (eve,) + edges if cfg.ordering == "eve_first" else edges + (eve,)


@lru_cache(maxsize=256)
def swap_tree(cfg: SwapConfig) -> _Node:
    return _measurement_tree(swap_initial_state(), _swap_steps(cfg))


def swap_label(record) -> str:
    r = dict(record)
    return f"{r['eve']}:{r['1']}{r['4']}"


def swap_labels(cfg: SwapConfig) -> list[str]:
    return [f"{e}:{a}{b}" for e in eve_basis(cfg.eve_basis).labels for a in "+-" for b in "+-"]


def run_swap(cfg: SwapConfig, rng: np.random.Generator, seed=None) -> ScenarioResult:
    record, states, prob = _walk(swap_tree(cfg), rng)
    conditional = {}
    if cfg.ordering == "eve_first":
        conditional["pair14"] = states["eve"]
    return ScenarioResult(
        "swap", config_hash(cfg), seed, swap_label(record), prob, record=record,
        conditional=conditional,
    )


def swap_conditional_pairs(eve_kind: str) -> dict:
    """Eve outcome -> (probability, normalized state of particles 1 and 4)."""
    s = swap_initial_state()
    basis = eve_basis(eve_kind)
    out = {}
    for label, p in qcore.outcome_distribution(s, basis).items():
        cond = qcore.conditional_state(s, basis, label) if p > qcore.ATOL else None
        out[label] = (p, cond)
    return out


# --- dispatch -------------------------------------------------------------------

_RUNNERS = {
    "renninger": run_renninger,
    "maudlin": run_maudlin,
    "quantum_liar": run_quantum_liar,
    "swap": run_swap,
}


def run_trial(cfg, rng: np.random.Generator, seed=None) -> ScenarioResult:
    return _RUNNERS[scenario_name(cfg)](cfg, rng, seed)


def run_seeded(cfg, master_seed: int, index: int) -> ScenarioResult:
    seed = trial_seed(master_seed, index)
    return run_trial(cfg, trial_rng(seed), seed)


def analytic_distribution(cfg) -> dict:
    name = scenario_name(cfg)
    if name == "renninger":
        return {"E1": cfg.fraction, "E2": 1 - cfg.fraction}
    if name == "maudlin":
        return _maudlin_distribution(cfg)
    if name == "quantum_liar":
        return dict(liar_branches(cfg).probabilities)
    dist = dict.fromkeys(swap_labels(cfg), 0.0)
    for path, p in _tree_paths(swap_tree(cfg)):
        dist[swap_label(path)] += p
    return dist


def closest_bell_state(s: StateVector, i, j) -> tuple[str, float]:
    """Bell state label on (i, j) with the largest fidelity to ``s``."""
    scores = {k: qcore.fidelity(bell_state(k, i, j), s) for k in qcore.BELL_KINDS}
    best = max(scores, key=scores.get)
    return best, scores[best]


def with_axes(cfg: SwapConfig, axis1, axis4) -> SwapConfig:
    return replace(cfg, axis1=_axis(axis1), axis4=_axis(axis4))


def describe(cfg) -> dict[str, Any]:
    return {"scenario": scenario_name(cfg), **config_to_dict(cfg)}
