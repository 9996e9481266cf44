"""Dense state-vector algebra for systems of two-level subsystems.

Basis ordering: the first subsystem is the most significant index, and
outcome ``+`` (the z-up eigenstate) is index 0, ``-`` is index 1.
"""
from __future__ import annotations

import itertools
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from math import atan2, cos, isclose, sin, sqrt

import numpy as np

MAX_SUBSYSTEMS = 12
ATOL = 1e-12
FIDELITY_ATOL = 1e-9

_SQRT1_2 = 1 / sqrt(2)
_LEVELS = ("+", "-")

SubsystemId = Hashable


class QuantumError(ValueError):
    """Invalid state, basis or operation arguments."""


class ImpossibleOutcomeError(QuantumError):
    """Conditioning on an outcome that has zero probability."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes over the product basis of ``subsystems``.

    Instances are immutable; the amplitude array is made read-only.
    """

    subsystems: tuple
    amplitudes: np.ndarray

    def __post_init__(self):
        subs = tuple(self.subsystems)
        if len(set(subs)) != len(subs):
            raise QuantumError(f"duplicate subsystem ids in {subs!r}")
        if len(subs) > MAX_SUBSYSTEMS:
            raise QuantumError(f"at most {MAX_SUBSYSTEMS} subsystems supported, got {len(subs)}")
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** len(subs):
            raise QuantumError(
                f"{len(subs)} subsystems need {2 ** len(subs)} amplitudes, got {amps.size}"
            )
        if not np.all(np.isfinite(amps)):
            raise QuantumError("amplitudes must be finite")
        amps.flags.writeable = False
        object.__setattr__(self, "subsystems", subs)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n(self) -> int:
        return len(self.subsystems)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)

    def amplitude(self, outcomes: str) -> complex:
        """Amplitude of the product ket named by a string such as ``"+-"``."""
        if len(outcomes) != self.n or any(c not in _LEVELS for c in outcomes):
            raise QuantumError(f"bad outcome string {outcomes!r} for {self.n} subsystems")
        return complex(self.tensor_view()[tuple(_LEVELS.index(c) for c in outcomes)])

    def __repr__(self):
        terms = []
        for bits, amp in zip(itertools.product(_LEVELS, repeat=self.n), self.amplitudes):
            if abs(amp) > ATOL:
                terms.append(f"({amp:.4g})|{''.join(bits)}>")
        return f"StateVector({list(self.subsystems)}: {' + '.join(terms) or '0'})"


def state(subsystems: Sequence[SubsystemId], amplitudes) -> StateVector:
    return StateVector(tuple(subsystems), np.asarray(amplitudes, dtype=complex))


def normalize(s: StateVector) -> StateVector:
    nrm = s.norm()
    if nrm <= ATOL:
        raise QuantumError("cannot normalize a zero vector")
    return StateVector(s.subsystems, s.amplitudes / nrm)


def ket(subsystem: SubsystemId, level: str) -> StateVector:
    """|+> or |-> on one subsystem."""
    if level not in _LEVELS:
        raise QuantumError(f"level must be '+' or '-', got {level!r}")
    amps = np.zeros(2, dtype=complex)
    amps[_LEVELS.index(level)] = 1
    return StateVector((subsystem,), amps)


def product_ket(assignment: Mapping[SubsystemId, str] | Sequence[tuple]) -> StateVector:
    items = list(assignment.items()) if isinstance(assignment, Mapping) else list(assignment)
    out = ket(*items[0])
    for sub, level in items[1:]:
        out = tensor(out, ket(sub, level))
    return out


def tensor(a: StateVector, b: StateVector) -> StateVector:
    collision = set(a.subsystems) & set(b.subsystems)
    if collision:
        raise QuantumError(f"subsystem ids collide in tensor product: {sorted(map(str, collision))}")
    return StateVector(a.subsystems + b.subsystems, np.kron(a.amplitudes, b.amplitudes))


def tensor_all(states: Iterable[StateVector]) -> StateVector:
    it = iter(states)
    out = next(it)
    for s in it:
        out = tensor(out, s)
    return out


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.subsystems != b.subsystems:
        raise QuantumError(f"subsystem lists differ: {a.subsystems!r} vs {b.subsystems!r}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2 after bringing ``b`` into ``a``'s subsystem order."""
    if set(a.subsystems) != set(b.subsystems):
        raise QuantumError(f"subsystem sets differ: {a.subsystems!r} vs {b.subsystems!r}")
    return abs(inner(a, reorder(b, a.subsystems))) ** 2


def same_state(a: StateVector, b: StateVector, atol: float = FIDELITY_ATOL) -> bool:
    return fidelity(normalize(a), normalize(b)) >= 1 - atol


BELL_KINDS = ("Phi+", "Phi-", "Psi+", "Psi-")


def bell_state(kind: str, i: SubsystemId, j: SubsystemId) -> StateVector:
    """Phi+- = (|++> +- |-->)/sqrt2, Psi+- = (|+-> +- |-+>)/sqrt2 on (i, j)."""
    if i == j:
        raise QuantumError("bell_state needs two distinct subsystems")
    table = {
        "Phi+": (1, 0, 0, 1),
        "Phi-": (1, 0, 0, -1),
        "Psi+": (0, 1, 1, 0),
        "Psi-": (0, 1, -1, 0),
    }
    try:
        amps = np.array(table[kind], dtype=complex) * _SQRT1_2
    except KeyError:
        raise QuantumError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}") from None
    return StateVector((i, j), amps)


def reorder(s: StateVector, new_order: Sequence[SubsystemId]) -> StateVector:
    new_order = tuple(new_order)
    if len(new_order) != s.n or set(new_order) != set(s.subsystems):
        raise QuantumError(f"{new_order!r} is not a permutation of {s.subsystems!r}")
    if new_order == s.subsystems:
        return s
    perm = [s.subsystems.index(x) for x in new_order]
    return StateVector(new_order, np.transpose(s.tensor_view(), perm).reshape(-1))


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    """Complete orthonormal family of labelled vectors on ``subsystems``."""

    subsystems: tuple
    outcomes: tuple  # ((label, StateVector), ...)

    def __post_init__(self):
        subs = tuple(self.subsystems)
        outcomes = tuple((label, reorder(vec, subs)) for label, vec in self.outcomes)
        labels = [label for label, _ in outcomes]
        if len(set(labels)) != len(labels):
            raise QuantumError(f"duplicate outcome labels {labels}")
        dim = 2 ** len(subs)
        if len(outcomes) != dim:
            raise QuantumError(f"incomplete basis: {len(outcomes)} outcomes for dimension {dim}")
        mat = np.array([vec.amplitudes for _, vec in outcomes])
        if not np.allclose(mat.conj() @ mat.T, np.eye(dim), atol=ATOL, rtol=0):
            raise QuantumError("basis vectors are not orthonormal")
        object.__setattr__(self, "subsystems", subs)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def labels(self) -> tuple:
        return tuple(label for label, _ in self.outcomes)

    def matrix(self) -> np.ndarray:
        """Rows are the basis vectors."""
        return np.array([vec.amplitudes for _, vec in self.outcomes])

    def vector(self, label) -> StateVector:
        for lab, vec in self.outcomes:
            if lab == label:
                return vec
        raise QuantumError(f"no outcome labelled {label!r}; have {self.labels}")


def product_basis(subsystems: Sequence[SubsystemId]) -> MeasurementBasis:
    """Computational basis, labels like ``"+-"``."""
    subsystems = tuple(subsystems)
    outcomes = []
    for bits in itertools.product(_LEVELS, repeat=len(subsystems)):
        outcomes.append(("".join(bits), product_ket(list(zip(subsystems, bits)))))
    return MeasurementBasis(subsystems, tuple(outcomes))


def bell_basis(i: SubsystemId, j: SubsystemId) -> MeasurementBasis:
    return MeasurementBasis((i, j), tuple((k, bell_state(k, i, j)) for k in BELL_KINDS))


def basis_product(a: MeasurementBasis, b: MeasurementBasis) -> MeasurementBasis:
    """Tensor product basis; labels concatenate, e.g. ``"Psi+" + "Phi-"``."""
    outcomes = []
    for la, va in a.outcomes:
        for lb, vb in b.outcomes:
            outcomes.append((f"{la}{lb}", tensor(va, vb)))
    return MeasurementBasis(a.subsystems + b.subsystems, tuple(outcomes))


@dataclass(frozen=True)
class MeasurementAxis:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not isclose(sqrt(self.x**2 + self.y**2 + self.z**2), 1.0, rel_tol=0, abs_tol=ATOL):
            raise QuantumError(f"axis {self.as_tuple()} is not unit norm")

    @classmethod
    def from_angles(cls, theta: float, phi: float = 0.0) -> MeasurementAxis:
        """Polar angle from +z, azimuth from +x. ``phi=0`` keeps the axis in the x-z plane."""
        return cls(sin(theta) * cos(phi), sin(theta) * sin(phi), cos(theta))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def pauli(self) -> np.ndarray:
        return np.array(
            [[self.z, self.x - 1j * self.y], [self.x + 1j * self.y, -self.z]], dtype=complex
        )


Z_AXIS = MeasurementAxis(0.0, 0.0, 1.0)


def spin_basis(i: SubsystemId, axis: MeasurementAxis) -> MeasurementBasis:
    """Eigenbasis of sigma.n on subsystem ``i``; ``+`` is the +1 eigenvector."""
    theta = atan2(sqrt(axis.x**2 + axis.y**2), axis.z)
    phi = atan2(axis.y, axis.x)
    up = np.array([cos(theta / 2), np.exp(1j * phi) * sin(theta / 2)])
    down = np.array([-np.exp(-1j * phi) * sin(theta / 2), cos(theta / 2)])
    return MeasurementBasis((i,), (("+", StateVector((i,), up)), ("-", StateVector((i,), down))))


def _split(s: StateVector, subs: Sequence[SubsystemId]) -> tuple[np.ndarray, tuple]:
    """Matrix with rows indexed by ``subs`` and columns by the remaining subsystems."""
    subs = tuple(subs)
    unknown = [x for x in subs if x not in s.subsystems]
    if unknown:
        raise QuantumError(f"unknown subsystems {unknown!r}; state has {s.subsystems!r}")
    if len(set(subs)) != len(subs):
        raise QuantumError(f"repeated subsystems in {subs!r}")
    rest = tuple(x for x in s.subsystems if x not in subs)
    moved = reorder(s, subs + rest)
    return moved.amplitudes.reshape(2 ** len(subs), 2 ** len(rest)), rest


def apply(s: StateVector, operator: np.ndarray, targets: Sequence[SubsystemId]) -> StateVector:
    """Apply ``operator`` to ``targets``; no renormalization (projectors are allowed)."""
    targets = tuple(targets)
    op = np.asarray(operator, dtype=complex)
    if op.shape != (2 ** len(targets),) * 2:
        raise QuantumError(f"operator shape {op.shape} does not match {len(targets)} targets")
    mat, rest = _split(s, targets)
    out = StateVector(targets + rest, (op @ mat).reshape(-1))
    return reorder(out, s.subsystems)


def decompose(s: StateVector, basis: MeasurementBasis) -> dict:
    """Coefficients <b_k|s> of ``s`` in a basis spanning all of its subsystems."""
    if set(basis.subsystems) != set(s.subsystems):
        raise QuantumError(
            f"basis on {basis.subsystems!r} does not span all subsystems {s.subsystems!r}"
        )
    coeffs = basis.matrix().conj() @ reorder(s, basis.subsystems).amplitudes
    return {label: complex(c) for label, c in zip(basis.labels, coeffs)}


def project(s: StateVector, basis: MeasurementBasis, label) -> StateVector:
    """Unnormalized state of the unmeasured subsystems after projecting onto ``label``."""
    mat, rest = _split(s, basis.subsystems)
    vec = basis.vector(label)
    return StateVector(rest, vec.amplitudes.conj() @ mat)


def outcome_distribution(s: StateVector, basis: MeasurementBasis) -> dict:
    mat, _ = _split(s, basis.subsystems)
    residuals = basis.matrix().conj() @ mat
    weights = np.sum(np.abs(residuals) ** 2, axis=1)
    total = weights.sum()
    if total <= ATOL:
        raise QuantumError("zero state has no outcome distribution")
    return {label: float(w / total) for label, w in zip(basis.labels, weights)}


def conditional_state(s: StateVector, basis: MeasurementBasis, outcome) -> StateVector:
    residual = project(s, basis, outcome)
    prob = residual.norm() ** 2 / s.norm() ** 2
    if prob <= ATOL:
        raise ImpossibleOutcomeError(f"outcome {outcome!r} has probability {prob:.3g}")
    return normalize(residual)


def sample_index(probabilities: Sequence[float], u):
    """Inverse-CDF pick over ``probabilities`` in declaration order.

    ``u`` may be a scalar or an array of uniforms in [0, 1). Zero-probability
    entries are never returned, even when rounding leaves the CDF short of 1.
    """
    if np.ndim(u) == 0:
        # scalar fast path; same left-to-right accumulation as np.cumsum
        total = 0.0
        for p in probabilities:
            total += p
        target, acc, last = float(u) * total, 0.0, -1
        for k, p in enumerate(probabilities):
            if p > 0:
                last = k
                acc += p
                if target < acc:
                    return k
        if last < 0:
            raise QuantumError("no outcome has positive probability")
        return last
    p = np.asarray(probabilities, dtype=float)
    if not np.any(p > 0):
        raise QuantumError("no outcome has positive probability")
    cdf = np.cumsum(p)
    last = int(np.flatnonzero(p > 0)[-1])
    idx = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
    return np.minimum(idx, last)


def measure(s: StateVector, basis: MeasurementBasis, rng: np.random.Generator):
    """Draw one outcome; returns ``(label, probability, conditional state)``."""
    dist = outcome_distribution(s, basis)
    labels = list(dist)
    label = labels[int(sample_index(list(dist.values()), rng.random()))]
    return label, dist[label], conditional_state(s, basis, label)


def schmidt_coefficients(s: StateVector, left: Iterable[SubsystemId]) -> list[float]:
    left = tuple(left)
    if not left or len(left) >= s.n:
        raise QuantumError(f"bipartition {left!r} of {s.subsystems!r} is trivial")
    mat, _ = _split(normalize(s), left)
    return [float(x) for x in np.linalg.svd(mat, compute_uv=False)]


def spin_correlation(
    s: StateVector,
    i: SubsystemId,
    a: MeasurementAxis,
    j: SubsystemId,
    b: MeasurementAxis,
) -> float:
    """<(sigma.a)_i (sigma.b)_j>, the mean product of the two +-1 outcomes."""
    if i == j:
        raise QuantumError("spin_correlation needs two distinct subsystems")
    s = normalize(s)
    op = np.kron(a.pauli(), b.pauli())
    value = inner(s, apply(s, op, (i, j))).real
    return float(np.clip(value, -1.0, 1.0))
