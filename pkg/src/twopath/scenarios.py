"""Experiment definitions, exact outcome distributions and sampled trials.

A :class:`Scenario` compiles to a :class:`Program`: the state right after all
channels have acted, followed by the sequence of policy points and
measurements a trial walks through.  :func:`exact_distribution` enumerates
every branch of that sequence with its Born weight; :func:`run_trial`
follows a single branch chosen by a random stream.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, fields, replace
from enum import Enum
from itertools import product
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from .dynamics import (
    DecoherenceLaw,
    RotatingIdlerLaw,
    bomb_channel,
    emit_idler,
    entangle_which_path,
    monitor_environment,
    random_block_hamiltonian,
    rotate_idler,
)
from .expstates import (
    BombKind,
    IdlerBasis,
    PointerModel,
    Slits,
    bomb_ready,
    particle_state,
    pointer_states,
)
from .measure import (
    COLLAPSE_EVENT,
    CollapsePolicy,
    MeasurementBasis,
    OutcomeRecord,
    PolicyKind,
    RandomStream,
    bomb_basis,
    collapse_time,
    idler_basis,
    outcome_branches,
    pointer_basis,
    policy_fires,
    screen_basis,
    select_outcome,
    which_path_basis,
)
from .qcore import STATE_TOL, Ket, tensor


class ScenarioError(ValueError):
    pass


class Kind(str, Enum):
    SINGLE_SLIT_LEFT = "single-slit-left"
    SINGLE_SLIT_RIGHT = "single-slit-right"
    DOUBLE_SLIT = "double-slit"
    WHICH_PATH = "which-path"
    BOMB = "bomb"
    BOMB_PROTOCOL = "bomb-protocol"
    IDLER = "idler"
    DECOHERENCE = "decoherence"
    ROTATING_IDLER = "rotating-idler"
    FINITE_ENV = "finite-env"


class MeasureOrder(str, Enum):
    SCREEN_FIRST = "screen-first"
    IDLER_FIRST = "idler-first"


SWEEP_KINDS = frozenset({Kind.DECOHERENCE, Kind.ROTATING_IDLER, Kind.FINITE_ENV})

ALLOWED: dict[Kind, frozenset[str]] = {
    Kind.SINGLE_SLIT_LEFT: frozenset(),
    Kind.SINGLE_SLIT_RIGHT: frozenset(),
    Kind.DOUBLE_SLIT: frozenset(),
    Kind.WHICH_PATH: frozenset({"policy", "epsilon"}),
    Kind.BOMB: frozenset({"policy", "bomb_kind"}),
    Kind.BOMB_PROTOCOL: frozenset({"policy", "bomb_kind", "max_rounds"}),
    Kind.IDLER: frozenset({"idler_basis", "measure_order"}),
    Kind.DECOHERENCE: frozenset({"policy", "lambda_rate", "tau"}),
    Kind.ROTATING_IDLER: frozenset({"policy", "omega", "tau"}),
    Kind.FINITE_ENV: frozenset({"policy", "env_dim", "env_seed", "tau"}),
}

_DETECTOR_KINDS = {Kind.WHICH_PATH, Kind.BOMB, Kind.BOMB_PROTOCOL}
_POLICIES_FOR = {
    **{k: {PolicyKind.UNITARY, PolicyKind.COLLAPSE_AT_DETECTOR} for k in _DETECTOR_KINDS},
    **{k: {PolicyKind.UNITARY, PolicyKind.THRESHOLD} for k in SWEEP_KINDS},
}

Tau = Union[float, tuple[float, ...]]


@dataclass(frozen=True)
class Scenario:
    """One experiment.  Unset fields (None) take the defaults below."""

    kind: Kind
    policy: Optional[CollapsePolicy] = None
    epsilon: Optional[float] = None
    bomb_kind: Optional[BombKind] = None
    idler_basis: Optional[IdlerBasis] = None
    measure_order: Optional[MeasureOrder] = None
    lambda_rate: Optional[float] = None
    omega: Optional[float] = None
    tau: Optional[Tau] = None
    env_dim: Optional[int] = None
    env_seed: Optional[int] = None
    max_rounds: Optional[int] = None

    DEFAULTS = {
        "policy": CollapsePolicy(),
        "epsilon": 0.0,
        "bomb_kind": BombKind.REAL,
        "idler_basis": IdlerBasis.WHICH_PATH,
        "measure_order": MeasureOrder.SCREEN_FIRST,
        "lambda_rate": 1.0,
        "omega": 1.0,
        "tau": 0.0,
        "env_dim": 4,
        "env_seed": 0,
        "max_rounds": 50,
    }

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        for name, enum in (("bomb_kind", BombKind), ("idler_basis", IdlerBasis), ("measure_order", MeasureOrder)):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, enum(value))
        if isinstance(self.tau, (list, tuple, np.ndarray)):
            object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))
        self.validate()

    def param(self, name: str) -> Any:
        value = getattr(self, name)
        return self.DEFAULTS[name] if value is None else value

    def _set_fields(self) -> Iterator[str]:
        for f in fields(self):
            if f.name != "kind" and getattr(self, f.name) is not None:
                yield f.name

    def validate(self) -> None:
        allowed = ALLOWED[self.kind]
        extra = sorted(set(self._set_fields()) - allowed)
        if extra:
            raise ScenarioError(f"{self.kind.value} does not take {', '.join(extra)}")
        policy = self.param("policy")
        if self.policy is not None and policy.kind not in _POLICIES_FOR.get(self.kind, {PolicyKind.UNITARY}):
            raise ScenarioError(f"policy {policy.kind.value} does not apply to {self.kind.value}")
        eps = self.param("epsilon")
        if not 0.0 <= eps < 1.0:
            raise ScenarioError(f"epsilon must lie in [0, 1), got {eps}")
        for name in ("lambda_rate", "omega"):
            v = self.param(name)
            if not (math.isfinite(v) and v >= 0):
                raise ScenarioError(f"{name} must be finite and >= 0, got {v}")
        if self.param("env_dim") < 1:
            raise ScenarioError("env_dim must be >= 1")
        if self.param("max_rounds") < 1:
            raise ScenarioError("max_rounds must be >= 1")
        tau = self.param("tau")
        taus = tau if isinstance(tau, tuple) else (tau,)
        if not taus:
            raise ScenarioError("empty tau grid")
        if not all(math.isfinite(t) and t >= 0 for t in taus):
            raise ScenarioError("tau values must be finite and >= 0")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ScenarioError("tau grid must be strictly increasing")

    @property
    def is_grid(self) -> bool:
        return isinstance(self.tau, tuple)

    def at(self, tau: float) -> "Scenario":
        return replace(self, tau=float(tau))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind.value}
        for name in self._set_fields():
            value = getattr(self, name)
            if isinstance(value, CollapsePolicy):
                value = {"kind": value.kind.value, "tau_star": value.tau_star}
            elif isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {', '.join(unknown)}")
        if "kind" not in data:
            raise ScenarioError("scenario needs a kind")
        if isinstance(data.get("policy"), dict):
            data["policy"] = CollapsePolicy(**data["policy"])
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc


@dataclass(frozen=True)
class Measure:
    event: str
    basis: MeasurementBasis
    time: float


@dataclass(frozen=True)
class PolicyPoint:
    now: float
    after_detector: bool = False


Step = Union[Measure, PolicyPoint]


@dataclass(frozen=True, eq=False)
class Program:
    initial: Ket
    steps: tuple[Step, ...]
    policy: CollapsePolicy

    @property
    def events(self) -> tuple[str, ...]:
        return tuple(s.event for s in self.steps if isinstance(s, Measure))

    @property
    def bases(self) -> tuple[MeasurementBasis, ...]:
        return tuple(s.basis for s in self.steps if isinstance(s, Measure))


def _both() -> Ket:
    return particle_state(Slits.BOTH)


def compile_scenario(s: Scenario) -> Program:
    if s.kind is Kind.BOMB_PROTOCOL:
        s = Scenario(Kind.BOMB, policy=s.policy, bomb_kind=s.bomb_kind)
    if s.is_grid:
        raise ScenarioError("a tau grid describes a sweep; evaluate one grid point at a time")
    policy = s.param("policy")
    screen = screen_basis()
    kind = s.kind
    if kind in (Kind.SINGLE_SLIT_LEFT, Kind.SINGLE_SLIT_RIGHT, Kind.DOUBLE_SLIT):
        which = {
            Kind.SINGLE_SLIT_LEFT: Slits.ONLY_LEFT,
            Kind.SINGLE_SLIT_RIGHT: Slits.ONLY_RIGHT,
            Kind.DOUBLE_SLIT: Slits.BOTH,
        }[kind]
        return Program(particle_state(which), (Measure("screen", screen, 1.0),), policy)
    if kind is Kind.WHICH_PATH:
        model = PointerModel(s.param("epsilon"))
        d0, _, _ = pointer_states(model)
        psi = entangle_which_path(tensor(_both(), d0), model)
        steps = (PolicyPoint(0.0, after_detector=True), Measure("detector", pointer_basis(), 0.0), Measure("screen", screen, 1.0))
        return Program(psi, steps, policy)
    if kind is Kind.BOMB:
        psi = bomb_channel(tensor(_both(), bomb_ready()), s.param("bomb_kind"))
        steps = (PolicyPoint(0.0, after_detector=True), Measure("bomb", bomb_basis(), 0.0), Measure("screen", screen, 1.0))
        return Program(psi, steps, policy)
    if kind is Kind.IDLER:
        psi = emit_idler(_both())
        screen_m = Measure("screen", screen, 1.0)
        idler_m = Measure("idler", idler_basis(s.param("idler_basis")), 1.0)
        if s.param("measure_order") is MeasureOrder.SCREEN_FIRST:
            steps = (screen_m, replace(idler_m, time=2.0))
        else:
            steps = (idler_m, replace(screen_m, time=2.0))
        return Program(psi, steps, policy)
    tau = s.param("tau")
    if kind is Kind.DECOHERENCE:
        psi = monitor_environment(tau, DecoherenceLaw(s.param("lambda_rate")))
    elif kind is Kind.ROTATING_IDLER:
        psi = rotate_idler(tau, RotatingIdlerLaw(s.param("omega")))
    else:
        psi = random_block_hamiltonian(s.param("env_dim"), s.param("env_seed")).state(tau)
    return Program(psi, (PolicyPoint(tau), Measure("screen", screen, tau)), policy)


@dataclass(frozen=True)
class Distribution:
    """Joint distribution over the measurement events of a scenario.

    Keys are tuples of outcome labels in event order; cells that cannot occur
    are present with probability 0.
    """

    events: tuple[str, ...]
    probs: dict[tuple[str, ...], float]

    def __post_init__(self):
        if any(p < -STATE_TOL for p in self.probs.values()):
            raise ValueError("negative probability")
        total = math.fsum(self.probs.values())
        if abs(total - 1.0) > STATE_TOL:
            raise ValueError(f"probabilities sum to {total!r}")

    def __getitem__(self, labels: Union[str, tuple[str, ...]]) -> float:
        if isinstance(labels, str):
            labels = (labels,)
        return self.probs.get(tuple(labels), 0.0)

    def marginal(self, event: str) -> dict[str, float]:
        k = self.events.index(event)
        out: dict[str, float] = defaultdict(float)
        for labels, p in self.probs.items():
            out[labels[k]] += p
        return dict(out)

    def reorder(self, events: Sequence[str]) -> "Distribution":
        idx = [self.events.index(e) for e in events]
        return Distribution(tuple(events), {tuple(lab[i] for i in idx): p for lab, p in self.probs.items()})

    def flat_label(self, labels: tuple[str, ...]) -> str:
        return ";".join(f"{e}={lab}" for e, lab in zip(self.events, labels))

    def max_abs_diff(self, other: Union["Distribution", dict]) -> float:
        theirs = other.probs if isinstance(other, Distribution) else {
            (k,) if isinstance(k, str) else tuple(k): v for k, v in other.items()
        }
        keys = set(self.probs) | set(theirs)
        return max(abs(self.probs.get(k, 0.0) - theirs.get(k, 0.0)) for k in keys)


def _walk_exact(program: Program) -> dict[tuple[str, ...], float]:
    cells = {labels: 0.0 for labels in product(*(b.labels for b in program.bases))}
    steps = program.steps

    def walk(psi: Ket, i: int, weight: float, observed: tuple[str, ...], fired: bool) -> None:
        if i == len(steps):
            cells[observed] += weight
            return
        step = steps[i]
        if isinstance(step, PolicyPoint):
            if not policy_fires(program.policy, step.now, step.after_detector, fired):
                walk(psi, i + 1, weight, observed, fired)
                return
            for _, p, branch in outcome_branches(psi, which_path_basis()):
                if branch is not None:
                    walk(branch, i + 1, weight * p, observed, True)
            return
        for label, p, branch in outcome_branches(psi, step.basis):
            if branch is not None:
                walk(branch, i + 1, weight * p, observed + (label,), fired)

    walk(program.initial, 0, 1.0, (), False)
    return cells


VERDICT_EVENT = "verdict"


class Verdict(str, Enum):
    EXPLODED = "Exploded"
    CERTIFIED_GOOD = "CertifiedGood"
    INCONCLUSIVE = "Inconclusive"


def _protocol_distribution(s: Scenario) -> Distribution:
    single = exact_distribution(Scenario(Kind.BOMB, policy=s.policy, bomb_kind=s.bomb_kind))
    p_cont = single[("NoExplosion", "A")]
    p_cert = single[("NoExplosion", "B")]
    p_expl = single.marginal("bomb")["Exploded"]
    n = s.param("max_rounds")
    rounds = math.fsum(p_cont**k for k in range(n))
    probs = {
        (Verdict.EXPLODED.value,): p_expl * rounds,
        (Verdict.CERTIFIED_GOOD.value,): p_cert * rounds,
        (Verdict.INCONCLUSIVE.value,): p_cont**n,
    }
    return Distribution((VERDICT_EVENT,), probs)


def exact_distribution(s: Scenario) -> Distribution:
    """Joint Born distribution of every measurement event, by branch enumeration."""
    if s.kind is Kind.BOMB_PROTOCOL:
        return _protocol_distribution(s)
    program = compile_scenario(s)
    return Distribution(program.events, _walk_exact(program))


def observed_events(s: Scenario) -> tuple[str, ...]:
    if s.kind is Kind.BOMB_PROTOCOL:
        return (VERDICT_EVENT,)
    return compile_scenario(s).events


BranchCache = dict


def _walk_trial(
    program: Program,
    rng_stream: RandomStream,
    record: OutcomeRecord,
    cache: Optional[BranchCache] = None,
    time_offset: float = 0.0,
    prefix: str = "",
) -> None:
    """Follow one branch of ``program``, appending its events to ``record``.

    ``cache`` memoizes the branch list at each (step, path) node; the state
    walk is deterministic given the path, so a shared cache changes nothing
    but speed.
    """
    psi = program.initial
    path: tuple[str, ...] = ()
    fired = False
    for i, step in enumerate(program.steps):
        if isinstance(step, PolicyPoint):
            if not policy_fires(program.policy, step.now, step.after_detector, fired):
                continue
            basis, name = which_path_basis(), COLLAPSE_EVENT
            time = collapse_time(program.policy, step.now)
        else:
            basis, name, time = step.basis, step.event, step.time
        key = (i, path)
        branches = None if cache is None else cache.get(key)
        if branches is None:
            branches = outcome_branches(psi, basis)
            if cache is not None:
                cache[key] = branches
        k = select_outcome([p for _, p, _ in branches], rng_stream.random())
        label, _, psi = branches[k]
        path += (label,)
        if name == COLLAPSE_EVENT:
            fired = True
        record.add(prefix + name, label, time_offset + time)


def _bomb_rounds(
    program: Program, kind: BombKind, max_rounds: int, rng_stream: RandomStream, record: OutcomeRecord, cache: Optional[BranchCache]
) -> tuple[Verdict, int]:
    for r in range(1, max_rounds + 1):
        start = len(record.events)
        _walk_trial(program, rng_stream, record, cache, time_offset=2.0 * (r - 1), prefix=f"round{r}:")
        outcome = {e.name.split(":", 1)[1]: e.label for e in record.events[start:]}
        if outcome["bomb"] == "Exploded":
            return Verdict.EXPLODED, r
        if outcome["screen"] == "B":
            if kind is not BombKind.REAL:
                raise AssertionError("a dud bomb was certified")
            return Verdict.CERTIFIED_GOOD, r
    return Verdict.INCONCLUSIVE, max_rounds


@dataclass(frozen=True)
class BombVerdict:
    verdict: Verdict
    rounds_used: int


def bomb_saving_protocol(
    kind: BombKind,
    max_rounds: int,
    rng_stream: RandomStream,
    policy: Optional[CollapsePolicy] = None,
) -> BombVerdict:
    """Repeat single-particle bomb tests until the bomb explodes or is certified.

    No explosion with the particle at B certifies a real bomb without
    detonating it; no explosion at A is compatible with a dud, so the test is
    repeated, up to ``max_rounds`` times.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    s = Scenario(Kind.BOMB_PROTOCOL, policy=policy, bomb_kind=kind, max_rounds=max_rounds)
    verdict, rounds = _bomb_rounds(compile_scenario(s), BombKind(kind), max_rounds, rng_stream, OutcomeRecord(), None)
    return BombVerdict(verdict, rounds)


def run_trial(s: Scenario, rng_stream: RandomStream, cache: Optional[BranchCache] = None) -> OutcomeRecord:
    record = OutcomeRecord()
    program = _cached_program(s, cache)
    if s.kind is Kind.BOMB_PROTOCOL:
        verdict, rounds = _bomb_rounds(program, s.param("bomb_kind"), s.param("max_rounds"), rng_stream, record, cache)
        record.add(VERDICT_EVENT, verdict.value, 2.0 * rounds)
        return record
    _walk_trial(program, rng_stream, record, cache)
    return record


def _cached_program(s: Scenario, cache: Optional[BranchCache]) -> Program:
    if cache is None:
        return compile_scenario(s)
    program = cache.get("program")
    if program is None:
        program = cache["program"] = compile_scenario(s)
    return program


def observed_label(s: Scenario, record: OutcomeRecord) -> tuple[str, ...]:
    return record.labels(observed_events(s))


def sweep(s: Scenario) -> list[tuple[float, Distribution]]:
    """Exact distribution at every point of the scenario's tau grid."""
    if s.kind not in SWEEP_KINDS:
        raise ScenarioError(f"{s.kind.value} has no time parameter to sweep")
    taus = s.param("tau")
    if not isinstance(taus, tuple):
        taus = (taus,)
    return [(t, exact_distribution(s.at(t))) for t in taus]
