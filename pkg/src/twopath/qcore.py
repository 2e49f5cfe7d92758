"""Dense complex linear algebra over small labeled tensor-product spaces.

Every state in the package lives on a :class:`SubsystemLayout`, an ordered
list of named subsystems each carrying its own basis labels.  Flat indices
are row-major over the subsystems in layout order, and the basis of each
subsystem is ordered as its labels were declared.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

# Storage invariants (norm, Hermiticity, trace).
STATE_TOL = 1e-12
# Unitarity and Hermiticity checks on operators.
UNITARY_TOL = 1e-10
# Agreement of composed evolutions.
EVOLUTION_TOL = 1e-9
# An allegedly unitary step that moves the norm further than this is a bug.
DRIFT_TOL = 1e-8
# Smallest eigenvalue tolerated in a density operator.
POSITIVITY_TOL = 1e-10


class LayoutError(ValueError):
    """Subsystem layouts are incompatible or malformed."""


class NotHermitianError(ValueError):
    pass


class NormDriftError(RuntimeError):
    """A step flagged as unitary changed the norm of the state."""


@dataclass(frozen=True)
class Subsystem:
    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise LayoutError(f"subsystem {self.name!r} needs at least one basis label")
        if len(set(self.labels)) != len(self.labels):
            raise LayoutError(f"duplicate basis labels in subsystem {self.name!r}")

    @property
    def dim(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SubsystemLayout:
    subsystems: tuple[Subsystem, ...]

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        names = [s.name for s in subs]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate subsystem names in {names}")

    @classmethod
    def single(cls, name: str, labels: Sequence[str]) -> "SubsystemLayout":
        return cls((Subsystem(name, tuple(labels)),))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=int))

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"no subsystem named {name!r} in {self.names}") from None

    def subsystem(self, name: str) -> Subsystem:
        return self.subsystems[self.position(name)]

    def labels_of(self, flat_index: int) -> tuple[str, ...]:
        multi = np.unravel_index(flat_index, self.dims)
        return tuple(s.labels[int(i)] for s, i in zip(self.subsystems, multi))

    def index_of(self, labels: Sequence[str]) -> int:
        if len(labels) != len(self.subsystems):
            raise LayoutError(f"expected {len(self.subsystems)} labels, got {len(labels)}")
        multi = tuple(s.labels.index(lab) for s, lab in zip(self.subsystems, labels))
        return int(np.ravel_multi_index(multi, self.dims))

    def basis_labels(self) -> list[tuple[str, ...]]:
        return list(product(*(s.labels for s in self.subsystems)))

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        clash = set(self.names) & set(other.names)
        if clash:
            raise LayoutError(f"subsystem name collision: {sorted(clash)}")
        return SubsystemLayout(self.subsystems + other.subsystems)

    def restrict(self, keep: Iterable[str]) -> "SubsystemLayout":
        keep = set(keep)
        return SubsystemLayout(tuple(s for s in self.subsystems if s.name in keep))

    def replace(self, sub: Subsystem) -> "SubsystemLayout":
        pos = self.position(sub.name)
        if sub.dim != self.subsystems[pos].dim:
            raise LayoutError(f"cannot replace {sub.name!r} with a subsystem of different dimension")
        subs = list(self.subsystems)
        subs[pos] = sub
        return SubsystemLayout(tuple(subs))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Ket:
    layout: SubsystemLayout
    amps: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amps).reshape(-1)
        if amps.shape != (self.layout.dim,):
            raise LayoutError(f"{amps.shape[0]} amplitudes for a layout of dimension {self.layout.dim}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitude")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis(cls, layout: SubsystemLayout, *labels: str) -> "Ket":
        amps = np.zeros(layout.dim, dtype=complex)
        amps[layout.index_of(labels)] = 1.0
        return cls(layout, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "Ket":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return Ket(self.layout, self.amps / n)

    def amp(self, *labels: str) -> complex:
        return complex(self.amps[self.layout.index_of(labels)])

    def tensor_view(self) -> np.ndarray:
        return self.amps.reshape(self.layout.dims)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amps, self.amps.conj()))

    def _check(self, other: "Ket") -> None:
        if other.layout != self.layout:
            raise LayoutError("kets live on different layouts")

    def __add__(self, other: "Ket") -> "Ket":
        self._check(other)
        return Ket(self.layout, self.amps + other.amps)

    def __sub__(self, other: "Ket") -> "Ket":
        self._check(other)
        return Ket(self.layout, self.amps - other.amps)

    def __mul__(self, scalar: complex) -> "Ket":
        return Ket(self.layout, self.amps * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "Ket":
        return Ket(self.layout, self.amps / scalar)

    def __neg__(self) -> "Ket":
        return Ket(self.layout, -self.amps)

    def allclose(self, other: "Ket", atol: float = STATE_TOL) -> bool:
        return self.layout == other.layout and bool(np.allclose(self.amps, other.amps, rtol=0, atol=atol))

    def __repr__(self) -> str:
        terms = [
            f"{a.real:+.6g}{a.imag:+.6g}j|{','.join(self.layout.labels_of(i))}>"
            for i, a in enumerate(self.amps)
            if abs(a) > STATE_TOL
        ]
        return f"Ket({' '.join(terms) or '0'})"


@dataclass(frozen=True, eq=False)
class Operator:
    layout: SubsystemLayout
    matrix: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.layout.dim
        if m.shape != (d, d):
            raise LayoutError(f"operator of shape {m.shape} on a layout of dimension {d}")
        if self.unitary:
            dev = np.max(np.abs(m.conj().T @ m - np.eye(d)))
            if dev > UNITARY_TOL:
                raise ValueError(f"operator flagged unitary deviates from U^dag U = I by {dev:.3g}")
        object.__setattr__(self, "matrix", m)

    def is_hermitian(self, atol: float = UNITARY_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= atol)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    layout: SubsystemLayout
    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.layout.dim
        if m.shape != (d, d):
            raise LayoutError(f"density matrix of shape {m.shape} on a layout of dimension {d}")
        object.__setattr__(self, "matrix", m)
        if self.validate:
            herm = np.max(np.abs(m - m.conj().T))
            if herm > STATE_TOL:
                raise NotHermitianError(f"density matrix not Hermitian (deviation {herm:.3g})")
            tr = np.trace(m)
            if abs(tr - 1.0) > STATE_TOL:
                raise ValueError(f"density matrix trace {tr} != 1")
            lo = np.linalg.eigvalsh(m).min()
            if lo < -POSITIVITY_TOL:
                raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def element(self, row: Sequence[str], col: Sequence[str]) -> complex:
        return complex(self.matrix[self.layout.index_of(row), self.layout.index_of(col)])

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def tensor(a: Ket, b: Ket) -> Ket:
    """|a> (x) |b> on the concatenated layout."""
    layout = a.layout.concat(b.layout)
    return Ket(layout, np.kron(a.amps, b.amps))


def inner(a: Ket, b: Ket) -> complex:
    """<a|b>, antilinear in the first argument."""
    if a.layout != b.layout:
        raise LayoutError("inner product of kets on different layouts")
    return complex(np.vdot(a.amps, b.amps))


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def partial_trace(rho: DensityOperator, keep: Sequence[str]) -> DensityOperator:
    """Trace out every subsystem not named in ``keep``.

    Kept subsystems stay in layout order whatever order ``keep`` lists them in.
    """
    keep = list(keep)
    if not keep:
        raise LayoutError("partial trace must keep at least one subsystem")
    for name in keep:
        rho.layout.position(name)
    n = len(rho.layout.subsystems)
    if n > len(_LETTERS) // 2:
        raise LayoutError("too many subsystems")
    dims = rho.layout.dims
    t = rho.matrix.reshape(dims + dims)
    row = list(_LETTERS[:n])
    col = list(_LETTERS[n : 2 * n])
    out_row, out_col = [], []
    for i, sub in enumerate(rho.layout.subsystems):
        if sub.name in keep:
            out_row.append(row[i])
            out_col.append(col[i])
        else:
            col[i] = row[i]
    spec = f"{''.join(row)}{''.join(col)}->{''.join(out_row)}{''.join(out_col)}"
    reduced = np.einsum(spec, t)
    sub_layout = rho.layout.restrict(keep)
    d = sub_layout.dim
    return DensityOperator(sub_layout, reduced.reshape(d, d))


def _check_hermitian(matrix: np.ndarray) -> None:
    dev = np.max(np.abs(matrix - matrix.conj().T), initial=0.0)
    if dev > UNITARY_TOL:
        raise NotHermitianError(f"matrix is not Hermitian (deviation {dev:.3g})")


def hermitian_propagator(matrix: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) for Hermitian ``matrix`` via its real spectral decomposition."""
    matrix = np.asarray(matrix, dtype=complex)
    _check_hermitian(matrix)
    # Symmetrize so eigh sees exactly the Hermitian part.
    w, v = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagator(H: Operator, t: float) -> Operator:
    return Operator(H.layout, hermitian_propagator(H.matrix, t), unitary=True)


def evolve_hermitian(H: Operator, t: float, psi: Ket) -> Ket:
    """Return exp(-i H t)|psi>."""
    if H.layout != psi.layout:
        raise LayoutError("Hamiltonian and state live on different layouts")
    return apply(propagator(H, t), psi)


def apply(U: Operator, psi: Ket) -> Ket:
    if U.layout != psi.layout:
        raise LayoutError("operator and state live on different layouts")
    out = Ket(psi.layout, U.matrix @ psi.amps)
    if U.unitary:
        drift = abs(out.norm() - psi.norm())
        if drift > DRIFT_TOL:
            raise NormDriftError(f"unitary step changed the norm by {drift:.3g}")
    return out


def local_operator(layout: SubsystemLayout, name: str, matrix: np.ndarray, unitary: bool = False) -> Operator:
    """Embed a single-subsystem matrix as identity (x) ... (x) matrix (x) ... (x) identity."""
    pos = layout.position(name)
    full = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(layout.dims):
        full = np.kron(full, matrix if i == pos else np.eye(d))
    return Operator(layout, full, unitary=unitary)
