"""Named states and bases of the two-outcome interference experiments.

The particle ``P`` has a single two-dimensional subsystem, written either in
the path frame ``(L, R)`` (which slit) or in the screen frame ``(A, B)``
(where it lands).  The frames are tied together by

    |L> = (|A> - |B>)/sqrt(2),    |R> = (|A> + |B>)/sqrt(2).

Detectors, bombs, idlers and environments are modeled in the smallest
Hilbert space that reproduces the inner products between their states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .qcore import DensityOperator, Ket, LayoutError, Subsystem, SubsystemLayout

PARTICLE = "particle"
DETECTOR = "detector"
BOMB = "bomb"
IDLER = "idler"
ENVIRONMENT = "environment"

SQRT1_2 = 1 / math.sqrt(2)


class Frame(str, Enum):
    PATH_LR = "path"
    SCREEN_AB = "screen"

    @property
    def labels(self) -> tuple[str, str]:
        return ("L", "R") if self is Frame.PATH_LR else ("A", "B")


# Columns are |L>, |R> written in (A, B) coordinates.
PATH_TO_SCREEN = np.array([[1, 1], [-1, 1]], dtype=complex) * SQRT1_2
SCREEN_TO_PATH = PATH_TO_SCREEN.conj().T


def particle_subsystem(frame: Frame = Frame.PATH_LR) -> Subsystem:
    return Subsystem(PARTICLE, frame.labels)


def particle_layout(frame: Frame = Frame.PATH_LR) -> SubsystemLayout:
    return SubsystemLayout((particle_subsystem(frame),))


def frame_of(layout: SubsystemLayout) -> Frame:
    labels = layout.subsystem(PARTICLE).labels
    for frame in Frame:
        if labels == frame.labels:
            return frame
    raise LayoutError(f"particle subsystem has unrecognized labels {labels}")


class Slits(str, Enum):
    ONLY_LEFT = "left"
    ONLY_RIGHT = "right"
    BOTH = "both"


def particle_state(which: Slits, frame: Frame = Frame.PATH_LR) -> Ket:
    layout = particle_layout(Frame.PATH_LR)
    left, right = Ket.basis(layout, "L"), Ket.basis(layout, "R")
    if which is Slits.ONLY_LEFT:
        psi = left
    elif which is Slits.ONLY_RIGHT:
        psi = right
    else:
        psi = (left + right) * SQRT1_2
    return change_frame(psi, frame)


def screen_ket(label: str) -> Ket:
    return Ket.basis(particle_layout(Frame.SCREEN_AB), label)


State = Union[Ket, DensityOperator]


def change_frame(psi: State, to: Frame) -> State:
    """Re-express the particle factor of ``psi`` in the frame ``to``.

    Works on kets and on density operators; other subsystems are untouched.
    """
    src = frame_of(psi.layout)
    if src is to:
        return psi
    u = PATH_TO_SCREEN if to is Frame.SCREEN_AB else SCREEN_TO_PATH
    layout = psi.layout.replace(particle_subsystem(to))
    pos = psi.layout.position(PARTICLE)
    if isinstance(psi, Ket):
        t = np.moveaxis(psi.tensor_view(), pos, 0)
        t = np.tensordot(u, t, axes=(1, 0))
        return Ket(layout, np.moveaxis(t, 0, pos).reshape(-1))
    dims = psi.layout.dims
    n = len(dims)
    t = psi.matrix.reshape(dims + dims)
    t = np.moveaxis(np.tensordot(u, t, axes=(1, pos)), 0, pos)
    t = np.moveaxis(np.tensordot(t, u.conj().T, axes=(n + pos, 0)), -1, n + pos)
    d = psi.layout.dim
    return DensityOperator(layout, t.reshape(d, d))


@dataclass(frozen=True)
class PointerModel:
    """Detector whose two outcome pointer states overlap by ``epsilon``."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"pointer overlap must lie in [0, 1), got {self.epsilon}")


POINTER_LABELS = ("d0", "d1", "d2")


def detector_layout() -> SubsystemLayout:
    return SubsystemLayout.single(DETECTOR, POINTER_LABELS)


def pointer_states(model: PointerModel) -> tuple[Ket, Ket, Ket]:
    """Ready state D0 and the two outcome states D_L, D_R.

    D0 = (1, 0, 0), D_L = (0, 1, 0), D_R = (0, eps, sqrt(1 - eps^2)).
    """
    layout = detector_layout()
    eps = model.epsilon
    d0 = Ket(layout, [1, 0, 0])
    dl = Ket(layout, [0, 1, 0])
    dr = Ket(layout, [0, eps, math.sqrt(1 - eps * eps)])
    return d0, dl, dr


@dataclass(frozen=True)
class OverlapEstimate:
    lambda_atom: float
    n_atoms: float
    log10_overlap: float

    @property
    def log10_decades(self) -> float:
        """x in overlap ~ 10^(-10^x); -inf when the overlap is exactly 1."""
        if self.log10_overlap == 0.0:
            return -math.inf
        return math.log10(-self.log10_overlap)


def overlap_estimate(lambda_atom: float, n_atoms: float) -> OverlapEstimate:
    """Overlap of two macroscopic pointer states made of ``n_atoms`` atoms.

    Each atom contributes a factor ``lambda_atom``; the product is kept as a
    base-10 logarithm since it underflows any float for Avogadro-size ``n``.
    """
    if not (0.0 < lambda_atom <= 1.0):
        raise ValueError(f"per-atom overlap must lie in (0, 1], got {lambda_atom}")
    if not (n_atoms >= 1.0) or math.isinf(n_atoms):
        raise ValueError(f"atom count must be finite and >= 1, got {n_atoms}")
    return OverlapEstimate(lambda_atom, n_atoms, n_atoms * math.log10(lambda_atom))


class BombKind(str, Enum):
    REAL = "real"
    DUD = "dud"


BOMB_LABELS = ("B0", "BE")


def bomb_layout() -> SubsystemLayout:
    return SubsystemLayout.single(BOMB, BOMB_LABELS)


def bomb_ready() -> Ket:
    """Unexploded bomb B0; the dud's only state uses the same vector."""
    return Ket.basis(bomb_layout(), "B0")


def bomb_exploded() -> Ket:
    return Ket.basis(bomb_layout(), "BE")


class IdlerBasis(str, Enum):
    WHICH_PATH = "which-path"
    PLUS_MINUS = "plus-minus"


IDLER_LABELS = ("I_L", "I_R")


def idler_layout() -> SubsystemLayout:
    return SubsystemLayout.single(IDLER, IDLER_LABELS)


def idler_states(basis: IdlerBasis) -> list[tuple[str, Ket]]:
    layout = idler_layout()
    il, ir = Ket.basis(layout, "I_L"), Ket.basis(layout, "I_R")
    if basis is IdlerBasis.WHICH_PATH:
        return [("I_L", il), ("I_R", ir)]
    return [("I+", (ir + il) * SQRT1_2), ("I-", (ir - il) * SQRT1_2)]


ROTATING_IDLER_LABELS = ("I1", "I2")


def rotating_idler_layout() -> SubsystemLayout:
    return SubsystemLayout.single(IDLER, ROTATING_IDLER_LABELS)


def environment_layout(dim: int = 2) -> SubsystemLayout:
    return SubsystemLayout.single(ENVIRONMENT, tuple(f"e{i}" for i in range(dim)))
