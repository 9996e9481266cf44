"""Offer/confirmation waves, absorber completeness, and transaction formation."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import networkx as nx
import numpy as np

from .qcore import sample_index

ROLES = ("detector", "source", "atom")


class IncompleteConfigurationError(ValueError):
    """Raised when the absorbers do not soak up the whole offer wave."""

    def __init__(self, deficit: float, emitter: str = ""):
        self.deficit = deficit
        self.emitter = emitter
        where = f" for emitter {emitter!r}" if emitter else ""
        super().__init__(
            f"incomplete absorber configuration{where}: deficit {deficit:.6f} "
            "(part of the offer wave is never absorbed)"
        )


class WaveGraphError(ValueError):
    pass


@dataclass(frozen=True)
class Absorber:
    id: str
    offer_amplitude: complex
    role: str = "detector"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"absorber role must be one of {ROLES}, got {self.role!r}")
        amp = complex(self.offer_amplitude)
        if not np.isfinite(amp.real) or not np.isfinite(amp.imag):
            raise ValueError(f"offer amplitude of {self.id!r} is not finite")
        if abs(amp) ** 2 > 1 + 1e-12:
            raise ValueError(f"|offer amplitude|^2 of {self.id!r} exceeds 1: {abs(amp) ** 2}")
        object.__setattr__(self, "offer_amplitude", amp)


@dataclass(frozen=True)
class ConfirmationWave:
    absorber_id: str
    amplitude: float


@dataclass(frozen=True)
class Completeness:
    ok: bool
    deficit: float


@dataclass(frozen=True)
class AbsorberConfiguration:
    emitter: str
    absorbers: tuple
    completeness_tolerance: float = 1e-9

    def __post_init__(self):
        absorbers = tuple(self.absorbers)
        ids = [a.id for a in absorbers]
        if len(set(ids)) != len(ids):
            raise ValueError(f"absorber ids must be unique, got {ids}")
        object.__setattr__(self, "absorbers", absorbers)

    @cached_property
    def weights(self) -> tuple:
        """Confirmation amplitude of each absorber, in declaration order."""
        return tuple(confirmation_wave(a).amplitude for a in self.absorbers)

    @classmethod
    def from_amplitudes(cls, emitter: str, amplitudes: Mapping[str, complex], **kwargs):
        return cls(emitter, tuple(Absorber(k, v) for k, v in amplitudes.items()), **kwargs)

    @classmethod
    def from_weights(cls, emitter: str, weights: Mapping[str, float], **kwargs):
        """Absorbers whose offer amplitudes are the square roots of ``weights``."""
        return cls.from_amplitudes(
            emitter, {k: np.sqrt(max(w, 0.0)) for k, w in weights.items()}, **kwargs
        )


@dataclass(frozen=True)
class Transaction:
    emitter: str
    absorber: str
    probability: float
    seed: Optional[int] = None


def confirmation_wave(a: Absorber) -> ConfirmationWave:
    # psi * conj(psi): real and independent of the offer's phase
    z = a.offer_amplitude
    return ConfirmationWave(a.id, float((z * z.conjugate()).real))


def validate_completeness(cfg: AbsorberConfiguration) -> Completeness:
    total = sum(cfg.weights)
    deficit = 1.0 - total
    return Completeness(abs(deficit) <= cfg.completeness_tolerance, deficit)


def form_transaction(
    cfg: AbsorberConfiguration, rng: np.random.Generator, seed: Optional[int] = None
) -> Transaction:
    """Select exactly one absorber with probability equal to its confirmation amplitude.

    Incomplete configurations are rejected, never renormalized.
    """
    check = validate_completeness(cfg)
    if not check.ok:
        raise IncompleteConfigurationError(check.deficit, cfg.emitter)
    weights = cfg.weights
    k = int(sample_index(weights, rng.random()))
    return Transaction(cfg.emitter, cfg.absorbers[k].id, weights[k], seed)


# --- offer/confirmation wave graph ------------------------------------------


@dataclass(frozen=True)
class WaveLayout:
    """Wiring of an experiment.

    ``sources`` maps each source to the particle lines it emits; ``detectors``
    maps each detector to the particle lines its basis vectors superpose.
    """

    sources: Mapping[str, Sequence[str]]
    detectors: Mapping[str, Sequence[str]]


@dataclass(frozen=True, order=True)
class WaveEdge:
    tail: str
    head: str
    wave: str  # "offer" | "confirmation"
    particle: str


@dataclass(frozen=True)
class WaveGraph:
    nodes: Mapping[str, str]  # node id -> kind
    edges: tuple = field(default_factory=tuple)

    def __post_init__(self):
        offers = {(e.tail, e.head, e.particle) for e in self.edges if e.wave == "offer"}
        for e in self.edges:
            if e.wave == "confirmation" and (e.head, e.tail, e.particle) not in offers:
                raise WaveGraphError(f"confirmation edge {e} has no matching offer edge")

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        for node, kind in self.nodes.items():
            g.add_node(node, kind=kind)
        for e in self.edges:
            g.add_edge(e.tail, e.head, wave=e.wave, particle=e.particle)
        return g

    def to_dot(self, name: str = "waves") -> str:
        lines = [f"digraph {name} {{"]
        for node in sorted(self.nodes):
            lines.append(f'  "{node}" [kind="{self.nodes[node]}"];')
        for e in sorted(self.edges):
            style = "solid" if e.wave == "offer" else "dashed"
            lines.append(
                f'  "{e.tail}" -> "{e.head}" '
                f'[wave="{e.wave}", particle="{e.particle}", style="{style}"];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_wave_graph(layout: WaveLayout) -> WaveGraph:
    line_source = {}
    for src, lines in layout.sources.items():
        for line in lines:
            if line in line_source:
                raise WaveGraphError(f"particle line {line!r} emitted by two sources")
            line_source[line] = src
    nodes = {src: "source" for src in layout.sources}
    edges = []
    reached = set()
    for det, lines in layout.detectors.items():
        if det in nodes:
            raise WaveGraphError(f"node id {det!r} used twice")
        nodes[det] = "detector"
        for line in lines:
            if line not in line_source:
                raise WaveGraphError(f"detector {det!r} watches unknown particle line {line!r}")
            reached.add(line)
            src = line_source[line]
            edges.append(WaveEdge(src, det, "offer", line))
            edges.append(WaveEdge(det, src, "confirmation", line))
    dangling = sorted(set(line_source) - reached)
    if dangling:
        raise WaveGraphError(f"particle lines without an absorbing detector: {dangling}")
    return WaveGraph(nodes, tuple(sorted(edges)))


def connected(g: WaveGraph, x: str, y: str) -> bool:
    """Same weakly connected component (edge direction ignored)."""
    for node in (x, y):
        if node not in g.nodes:
            raise WaveGraphError(f"unknown node {node!r}")
    return nx.has_path(g.to_networkx().to_undirected(as_view=True), x, y)


def swap_layout(eve_basis: str) -> WaveLayout:
    """Alice's source emits lines 1, 2; Bob's emits 3, 4; Eve measures 2 and 3."""
    if eve_basis == "bell":
        eve = {"E23": ("2", "3")}
    elif eve_basis == "product":
        eve = {"E2": ("2",), "E3": ("3",)}
    else:
        raise ValueError(f"eve_basis must be 'bell' or 'product', got {eve_basis!r}")
    return WaveLayout(
        sources={"S_A": ("1", "2"), "S_B": ("3", "4")},
        detectors={"D1": ("1",), "D4": ("4",), **eve},
    )
