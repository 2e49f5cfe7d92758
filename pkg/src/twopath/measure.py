"""Born probabilities, projective measurement and the three collapse policies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from enum import Enum
from typing import Optional, Protocol, Sequence

import numpy as np

from .expstates import (
    BOMB,
    DETECTOR,
    IDLER,
    PARTICLE,
    Frame,
    IdlerBasis,
    bomb_layout,
    change_frame,
    detector_layout,
    frame_of,
    idler_states,
    particle_layout,
)
from .qcore import STATE_TOL, Ket, LayoutError

# Outcomes at or below this Born weight are treated as impossible.
PROB_FLOOR = 1e-15

COLLAPSE_EVENT = "collapse"


class RandomStream(Protocol):
    def random(self) -> float: ...


class ZeroProbabilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    subsystem: str
    outcomes: tuple[tuple[str, Ket], ...]

    def __post_init__(self):
        outcomes = tuple((str(lab), v) for lab, v in self.outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        labels = [lab for lab, _ in outcomes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate outcome labels {labels}")
        layouts = {v.layout for _, v in outcomes}
        if len(layouts) != 1:
            raise LayoutError("outcome vectors live on different layouts")
        layout = layouts.pop()
        if layout.names != (self.subsystem,):
            raise LayoutError(f"outcome vectors must live on {self.subsystem!r} alone")
        if len(outcomes) != layout.dim:
            raise ValueError(f"incomplete basis: {len(outcomes)} outcomes for dimension {layout.dim}")
        v = self.vectors()
        gram = v.conj() @ v.T
        if np.max(np.abs(gram - np.eye(len(outcomes)))) > STATE_TOL:
            raise ValueError("outcome vectors are not orthonormal")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.outcomes)

    def vectors(self) -> np.ndarray:
        return np.array([v.amps for _, v in self.outcomes])

    def aligned_to(self, psi: Ket) -> np.ndarray:
        """Outcome vectors as rows, in the coordinates ``psi`` uses for the subsystem."""
        target = psi.layout.subsystem(self.subsystem)
        own = self.outcomes[0][1].layout.subsystem(self.subsystem)
        if own.labels == target.labels:
            return self.vectors()
        if self.subsystem == PARTICLE:
            frame = frame_of(psi.layout)
            return np.array([change_frame(v, frame).amps for _, v in self.outcomes])
        raise LayoutError(f"basis labels {own.labels} do not match state labels {target.labels}")


@lru_cache(maxsize=None)
def screen_basis() -> MeasurementBasis:
    layout = particle_layout(Frame.SCREEN_AB)
    return MeasurementBasis(PARTICLE, (("A", Ket.basis(layout, "A")), ("B", Ket.basis(layout, "B"))))


@lru_cache(maxsize=None)
def which_path_basis() -> MeasurementBasis:
    layout = particle_layout(Frame.PATH_LR)
    return MeasurementBasis(PARTICLE, (("L", Ket.basis(layout, "L")), ("R", Ket.basis(layout, "R"))))


@lru_cache(maxsize=None)
def pointer_basis() -> MeasurementBasis:
    """Pointer readout: ready, pointing left, and the direction orthogonal to both.

    The third outcome is labeled ``D_R``; it coincides with the right pointer
    state exactly when the pointer overlap is zero.
    """
    layout = detector_layout()
    labels = ("D0", "D_L", "D_R")
    return MeasurementBasis(
        DETECTOR, tuple((lab, Ket.basis(layout, raw)) for lab, raw in zip(labels, layout.subsystems[0].labels))
    )


@lru_cache(maxsize=None)
def bomb_basis() -> MeasurementBasis:
    layout = bomb_layout()
    return MeasurementBasis(
        BOMB, (("NoExplosion", Ket.basis(layout, "B0")), ("Exploded", Ket.basis(layout, "BE")))
    )


@lru_cache(maxsize=None)
def idler_basis(kind: IdlerBasis) -> MeasurementBasis:
    return MeasurementBasis(IDLER, tuple(idler_states(kind)))


def _components(psi: Ket, basis: MeasurementBasis) -> tuple[np.ndarray, int]:
    """Rows: the partial inner products <v_k|psi> over the measured subsystem."""
    pos = psi.layout.position(basis.subsystem)
    v = basis.aligned_to(psi)
    t = np.moveaxis(psi.tensor_view(), pos, 0).reshape(v.shape[1], -1)
    return v.conj() @ t, pos


def born_probabilities(psi: Ket, basis: MeasurementBasis) -> dict[str, float]:
    comps, _ = _components(psi, basis)
    probs = np.sum(np.abs(comps) ** 2, axis=1)
    return dict(zip(basis.labels, (float(p) for p in probs)))


def _collapsed(psi: Ket, basis: MeasurementBasis, k: int, comps: np.ndarray, pos: int) -> Ket:
    v = basis.aligned_to(psi)[k]
    rest = comps[k]
    dims = psi.layout.dims
    moved = np.outer(v, rest).reshape((dims[pos],) + dims[:pos] + dims[pos + 1 :])
    amps = np.moveaxis(moved, 0, pos).reshape(-1)
    return Ket(psi.layout, amps / np.linalg.norm(amps))


def outcome_branches(psi: Ket, basis: MeasurementBasis) -> list[tuple[str, float, Optional[Ket]]]:
    """Every outcome with its Born weight and the collapsed state (None if impossible)."""
    comps, pos = _components(psi, basis)
    probs = np.sum(np.abs(comps) ** 2, axis=1)
    out = []
    for k, (label, p) in enumerate(zip(basis.labels, probs)):
        p = float(p)
        out.append((label, p, _collapsed(psi, basis, k, comps, pos) if p > PROB_FLOOR else None))
    return out


def project_collapse(psi: Ket, basis: MeasurementBasis, outcome_label: str) -> Ket:
    if outcome_label not in basis.labels:
        raise ValueError(f"unknown outcome {outcome_label!r}; basis has {basis.labels}")
    comps, pos = _components(psi, basis)
    k = basis.labels.index(outcome_label)
    p = float(np.sum(np.abs(comps[k]) ** 2))
    if p <= PROB_FLOOR:
        raise ZeroProbabilityError(f"outcome {outcome_label!r} has probability {p:.3g}")
    return _collapsed(psi, basis, k, comps, pos)


def select_outcome(probs: Sequence[float], u: float) -> int:
    """Inverse-CDF pick over outcomes in declared order: first k with u < cum_k.

    Outcomes with weight at or below PROB_FLOOR are never picked, even when
    rounding leaves ``u`` at or past the final cumulative sum.
    """
    cum = 0.0
    last = None
    for k, p in enumerate(probs):
        if p <= PROB_FLOOR:
            continue
        cum += p
        last = k
        if u < cum:
            return k
    if last is None:
        raise ZeroProbabilityError("no outcome carries positive probability")
    return last


def sample(psi: Ket, basis: MeasurementBasis, rng_stream: RandomStream) -> tuple[str, Ket]:
    branches = outcome_branches(psi, basis)
    k = select_outcome([p for _, p, _ in branches], rng_stream.random())
    label, _, state = branches[k]
    return label, state


class PolicyKind(str, Enum):
    UNITARY = "unitary"
    COLLAPSE_AT_DETECTOR = "collapse"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class CollapsePolicy:
    kind: PolicyKind = PolicyKind.UNITARY
    tau_star: Optional[float] = None

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PolicyKind.THRESHOLD:
            if self.tau_star is None or not math.isfinite(self.tau_star) or self.tau_star < 0:
                raise ValueError(f"threshold collapse needs a finite tau_star >= 0, got {self.tau_star}")

    @classmethod
    def unitary(cls) -> "CollapsePolicy":
        return cls(PolicyKind.UNITARY)

    @classmethod
    def collapse(cls) -> "CollapsePolicy":
        return cls(PolicyKind.COLLAPSE_AT_DETECTOR)

    @classmethod
    def threshold(cls, tau_star: float) -> "CollapsePolicy":
        return cls(PolicyKind.THRESHOLD, float(tau_star))


@dataclass(frozen=True)
class Event:
    name: str
    label: str
    time: float


@dataclass
class OutcomeRecord:
    events: list[Event] = field(default_factory=list)

    def add(self, name: str, label: str, time: float) -> None:
        if self.events and time < self.events[-1].time:
            raise ValueError(f"event {name!r} at t={time} precedes the last recorded event")
        self.events.append(Event(name, label, float(time)))

    def labels(self, names: Optional[Sequence[str]] = None) -> tuple[str, ...]:
        if names is None:
            return tuple(e.label for e in self.events)
        by_name = {e.name: e.label for e in self.events}
        return tuple(by_name[n] for n in names)

    def has(self, name: str) -> bool:
        return any(e.name == name for e in self.events)

    @property
    def threshold_fired(self) -> bool:
        return self.has(COLLAPSE_EVENT)


def policy_fires(policy: CollapsePolicy, now: float, after_detector: bool = False, fired: bool = False) -> bool:
    if policy.kind is PolicyKind.COLLAPSE_AT_DETECTOR:
        return after_detector
    if policy.kind is PolicyKind.THRESHOLD:
        return not fired and now >= policy.tau_star
    return False


def collapse_time(policy: CollapsePolicy, now: float) -> float:
    return policy.tau_star if policy.kind is PolicyKind.THRESHOLD else now


def apply_policy(
    psi: Ket,
    now: float,
    policy: CollapsePolicy,
    rng_stream: RandomStream,
    record: Optional[OutcomeRecord] = None,
    after_detector: bool = False,
) -> Ket:
    """Give the policy its chance to collapse ``psi`` onto a definite path.

    CollapseAtDetector fires only when called right after a detector-type
    channel.  Threshold fires once ``now`` reaches tau_star, at most once per
    trial: a collapse already present in ``record`` blocks it.
    """
    psi.layout.position(PARTICLE)
    fired = record is not None and record.threshold_fired
    if not policy_fires(policy, now, after_detector, fired):
        return psi
    label, out = sample(psi, which_path_basis(), rng_stream)
    if record is not None:
        last = record.events[-1].time if record.events else -math.inf
        record.add(COLLAPSE_EVENT, label, max(collapse_time(policy, now), last))
    return out
