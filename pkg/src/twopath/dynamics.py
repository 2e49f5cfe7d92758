"""Entangling and decohering channels acting on the particle's path.

Every channel here is an isometry on its declared input sector: a
which-path record (detector pointer, bomb, idler, environment) is attached
to each branch of the path superposition.  Channel outputs are expressed in
the path frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expstates import (
    BOMB,
    DETECTOR,
    PARTICLE,
    BombKind,
    Frame,
    PointerModel,
    bomb_exploded,
    bomb_ready,
    change_frame,
    environment_layout,
    idler_layout,
    particle_layout,
    pointer_states,
    rotating_idler_layout,
)
from .qcore import (
    STATE_TOL,
    UNITARY_TOL,
    Ket,
    LayoutError,
    NotHermitianError,
    Operator,
    SubsystemLayout,
    evolve_hermitian,
    hermitian_propagator,
    tensor,
)


class SectorError(ValueError):
    """Input state lies outside the sector a channel is defined on."""


def _path_amplitudes(psi: Ket) -> tuple[complex, complex]:
    if psi.layout.names != (PARTICLE,):
        raise LayoutError(f"expected a particle-only state, got subsystems {psi.layout.names}")
    psi = change_frame(psi, Frame.PATH_LR)
    return psi.amp("L"), psi.amp("R")


def _split_product(psi: Ket, other: str, ready: Ket) -> tuple[complex, complex]:
    """Path amplitudes (alpha, beta) of psi = (alpha|L> + beta|R>) (x) |ready>."""
    if set(psi.layout.names) != {PARTICLE, other} or len(psi.layout.names) != 2:
        raise LayoutError(f"expected particle (x) {other}, got {psi.layout.names}")
    psi = change_frame(psi, Frame.PATH_LR)
    t = psi.tensor_view()
    if psi.layout.position(PARTICLE) != 0:
        t = t.T
    alpha, beta = t[0] @ ready.amps.conj(), t[1] @ ready.amps.conj()
    residue = t - np.outer([alpha, beta], ready.amps)
    if np.max(np.abs(residue)) > STATE_TOL:
        raise SectorError(f"{other} is not in its ready state")
    return complex(alpha), complex(beta)


def _branches(alpha: complex, beta: complex, left_record: Ket, right_record: Ket) -> Ket:
    p = particle_layout(Frame.PATH_LR)
    left, right = Ket.basis(p, "L"), Ket.basis(p, "R")
    return tensor(left, left_record) * alpha + tensor(right, right_record) * beta


def entangle_which_path(particle_and_ready: Ket, model: PointerModel) -> Ket:
    """alpha|L>|D0> + beta|R>|D0>  ->  alpha|L>|D_L> + beta|R>|D_R>."""
    d0, dl, dr = pointer_states(model)
    alpha, beta = _split_product(particle_and_ready, DETECTOR, d0)
    return _branches(alpha, beta, dl, dr)


def bomb_channel(particle_and_bomb: Ket, kind: BombKind) -> Ket:
    """A real bomb in front of the left slit explodes on the L branch; a dud never does."""
    b0 = bomb_ready()
    alpha, beta = _split_product(particle_and_bomb, BOMB, b0)
    if kind is BombKind.DUD:
        return _branches(alpha, beta, b0, b0)
    return _branches(alpha, beta, bomb_exploded(), b0)


def emit_idler(particle: Ket) -> Ket:
    alpha, beta = _path_amplitudes(particle)
    layout = idler_layout()
    return _branches(alpha, beta, Ket.basis(layout, "I_L"), Ket.basis(layout, "I_R"))


def _both_slits() -> tuple[complex, complex]:
    return 1 / math.sqrt(2), 1 / math.sqrt(2)


@dataclass(frozen=True)
class DecoherenceLaw:
    """Environment branches whose overlap decays as exp(-lambda_rate * t)."""

    lambda_rate: float = 1.0

    def __post_init__(self):
        if not (self.lambda_rate >= 0.0) or math.isinf(self.lambda_rate):
            raise ValueError(f"decoherence rate must be finite and >= 0, got {self.lambda_rate}")

    def overlap(self, t: float) -> float:
        return math.exp(-self.lambda_rate * t)


def _check_time(t: float) -> None:
    if not (t >= 0.0) or math.isinf(t):
        raise ValueError(f"time must be finite and >= 0, got {t}")


def monitor_environment(t: float, law: DecoherenceLaw) -> Ket:
    """Both-slit state after the environment has monitored the path for time ``t``.

    The environment is reduced to the plane spanned by its two branch states:
    E_L = (1, 0) and E_R = (c, sqrt(1 - c^2)) with c = exp(-lambda t).  The
    second coordinate carries the entire orthogonal-complement weight.
    """
    _check_time(t)
    c = law.overlap(t)
    env = environment_layout(2)
    e_left = Ket(env, [1.0, 0.0])
    e_right = Ket(env, [c, math.sqrt(max(0.0, 1.0 - c * c))])
    return _branches(*_both_slits(), e_left, e_right)


@dataclass(frozen=True)
class RotatingIdlerLaw:
    omega: float = 1.0

    def __post_init__(self):
        if not (self.omega >= 0.0) or math.isinf(self.omega):
            raise ValueError(f"angular frequency must be finite and >= 0, got {self.omega}")

    def overlap(self, t: float) -> float:
        return math.cos(self.omega * t)


def rotate_idler(t: float, law: RotatingIdlerLaw) -> Ket:
    """Idler that stays at I1 on the left path and rotates towards I2 on the right."""
    _check_time(t)
    wt = law.omega * t
    layout = rotating_idler_layout()
    i1 = Ket.basis(layout, "I1")
    rotated = Ket(layout, [math.cos(wt), math.sin(wt)])
    return _branches(*_both_slits(), i1, rotated)


@dataclass(frozen=True, eq=False)
class BlockHamiltonian:
    """Hamiltonian that never mixes L and R: H = |L><L| (x) H_L + |R><R| (x) H_R."""

    H_L: np.ndarray
    H_R: np.ndarray
    E0: np.ndarray

    def __post_init__(self):
        hl = np.array(self.H_L, dtype=complex)
        hr = np.array(self.H_R, dtype=complex)
        e0 = np.array(self.E0, dtype=complex).reshape(-1)
        d = e0.shape[0]
        if hl.shape != (d, d) or hr.shape != (d, d):
            raise LayoutError("block shapes do not match the environment state")
        for name, h in (("H_L", hl), ("H_R", hr)):
            dev = np.max(np.abs(h - h.conj().T))
            if dev > UNITARY_TOL:
                raise NotHermitianError(f"{name} is not Hermitian (deviation {dev:.3g})")
        e0 = e0 / np.linalg.norm(e0)
        for arr in (hl, hr, e0):
            arr.setflags(write=False)
        object.__setattr__(self, "H_L", hl)
        object.__setattr__(self, "H_R", hr)
        object.__setattr__(self, "E0", e0)

    @property
    def dim_env(self) -> int:
        return self.E0.shape[0]

    def env_layout(self) -> SubsystemLayout:
        return environment_layout(self.dim_env)

    def full(self) -> Operator:
        """The block-diagonal Hamiltonian on particle (x) environment, path frame."""
        layout = particle_layout(Frame.PATH_LR).concat(self.env_layout())
        d = self.dim_env
        m = np.zeros((2 * d, 2 * d), dtype=complex)
        m[:d, :d] = self.H_L
        m[d:, d:] = self.H_R
        return Operator(layout, m)

    def branch_states(self, t: float) -> tuple[Ket, Ket]:
        env = self.env_layout()
        e0 = Ket(env, self.E0)
        e_left = evolve_hermitian(Operator(env, self.H_L), t, e0)
        e_right = evolve_hermitian(Operator(env, self.H_R), t, e0)
        return e_left, e_right

    def state(self, t: float) -> Ket:
        """(|L>|E_L(t)> + |R>|E_R(t)>)/sqrt(2) with E_X(t) = exp(-i H_X t) E0."""
        return _branches(*_both_slits(), *self.branch_states(t))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def random_block_hamiltonian(dim_env: int, seed: int) -> BlockHamiltonian:
    """Independent random Hermitian blocks; the environment starts in e0."""
    if dim_env < 1:
        raise ValueError("environment dimension must be >= 1")
    rng = np.random.default_rng(seed)
    e0 = np.zeros(dim_env)
    e0[0] = 1.0
    return BlockHamiltonian(random_hermitian(dim_env, rng), random_hermitian(dim_env, rng), e0)


def rotating_idler_hamiltonian(alpha: float) -> BlockHamiltonian:
    """H_L = 0, H_R = alpha (|I1><I2| + h.c.) on the idler plane.

    Generates E_R(t) = cos(alpha t)|I1> - i sin(alpha t)|I2>, which differs from
    the rotating-idler law only by a phase on |I2>; the overlap with
    E_L = |I1> is cos(alpha t) either way.
    """
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    return BlockHamiltonian(np.zeros((2, 2)), alpha * sx, np.array([1.0, 0.0]))


def finite_env_overlap(bh: BlockHamiltonian, t: float) -> complex:
    """<E_L(t)|E_R(t)> = <E0| exp(+i H_L t) exp(-i H_R t) |E0>, exact for any blocks."""
    e_left, e_right = bh.branch_states(t)
    return complex(np.vdot(e_left.amps, e_right.amps))


def difference_form_overlap(bh: BlockHamiltonian, t: float) -> complex:
    """<E0| exp(-i (H_R - H_L) t) |E0>.

    Coincides with :func:`finite_env_overlap` only when H_L and H_R commute.
    """
    u = hermitian_propagator(bh.H_R - bh.H_L, t)
    return complex(np.vdot(bh.E0, u @ bh.E0))


def blocks_commute(bh: BlockHamiltonian, atol: float = 1e-12) -> bool:
    comm = bh.H_L @ bh.H_R - bh.H_R @ bh.H_L
    return bool(np.max(np.abs(comm)) <= atol)


def noncommuting_counterexample() -> BlockHamiltonian:
    """H_L = sigma_x, H_R = sigma_z, E0 = |0>.

    Exact overlap cos(t) e^{-it}; the difference form gives
    cos(sqrt2 t) - i sin(sqrt2 t)/sqrt2.  At t = 1 they differ by about 0.3.
    """
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return BlockHamiltonian(sx, sz, np.array([1.0, 0.0]))


def env_overlap_of(psi: Ket) -> complex:
    """<E_L|E_R> read off a state (|L>|E_L> + |R>|E_R>)/sqrt(2) on particle (x) record."""
    psi = change_frame(psi, Frame.PATH_LR)
    t = psi.tensor_view()
    if psi.layout.position(PARTICLE) != 0:
        t = t.T
    left, right = t[0], t[1]
    return complex(np.vdot(left, right) / (np.linalg.norm(left) * np.linalg.norm(right)))
