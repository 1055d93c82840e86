"""Labelled finite-dimensional Hilbert spaces and the operations on them.

Subsystems are identified by string labels; a layout is an ordered list of
(label, dim) pairs and fixes the tensor order. All matrices are row-major,
and the composite index follows the layout order (first label varies
slowest), which makes np.kron and .reshape line up with the convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadPermutation,
    BadRank,
    EmptyKeep,
    InvariantViolation,
    LabelClash,
    LabelUnknown,
    LayoutMismatch,
)

# Shared numerical tolerances. One knob per invariant family.
TOL_NORM = 1e-9
TOL_HERM = 1e-9
TOL_PSD = 1e-9
TOL_ISO = 1e-9
TOL_NUM = 1e-9

# Eigenvalues below this are treated as numerically zero (rank decisions,
# Kraus extraction, matrix square roots).
RANK_CUTOFF = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.complex128)
    out.setflags(write=False)
    return out


def _as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def phase_fix(vec: np.ndarray) -> np.ndarray:
    """Rotate a global phase so the first non-negligible entry is real positive."""
    for x in vec:
        if abs(x) > RANK_CUTOFF:
            return vec * (np.conj(x) / abs(x))
    return vec


def eigh_desc(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition, eigenvalues descending, phase-fixed vectors.

    The ordering plus phase convention makes every downstream extraction
    deterministic for a given input matrix.
    """
    herm = (mat + mat.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(herm)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    for k in range(vecs.shape[1]):
        vecs[:, k] = phase_fix(vecs[:, k])
    return vals, vecs


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered collection of (label, dim) subsystems."""

    subsystems: tuple[tuple[str, int], ...]

    def __init__(self, subsystems: Iterable[tuple[str, int]]):
        subs = tuple((str(lbl), int(dim)) for lbl, dim in subsystems)
        if not subs:
            raise InvariantViolation("layout needs at least one subsystem")
        labels = [lbl for lbl, _ in subs]
        if len(set(labels)) != len(labels):
            raise LabelClash(f"duplicate labels in layout: {labels}")
        for lbl, dim in subs:
            if dim < 1:
                raise InvariantViolation(f"subsystem {lbl!r} has dim {dim} < 1")
        object.__setattr__(self, "subsystems", subs)

    @cached_property
    def total_dim(self) -> int:
        n = 1
        for _, d in self.subsystems:
            n *= d
        return n

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    def dim_of(self, label: str) -> int:
        for lbl, d in self.subsystems:
            if lbl == label:
                return d
        raise LabelUnknown(f"label {label!r} not in layout {self.labels}")

    def index_of(self, label: str) -> int:
        for i, (lbl, _) in enumerate(self.subsystems):
            if lbl == label:
                return i
        raise LabelUnknown(f"label {label!r} not in layout {self.labels}")

    def subset(self, keep: Sequence[str]) -> "SpaceLayout":
        """Sub-layout with the kept labels, preserving this layout's order."""
        keep_set = set(keep)
        unknown = keep_set - set(self.labels)
        if unknown:
            raise LabelUnknown(f"labels {sorted(unknown)} not in layout {self.labels}")
        return SpaceLayout([(l, d) for l, d in self.subsystems if l in keep_set])

    def joined(self, other: "SpaceLayout") -> "SpaceLayout":
        overlap = set(self.labels) & set(other.labels)
        if overlap:
            raise LabelClash(f"labels {sorted(overlap)} appear on both sides")
        return SpaceLayout(self.subsystems + other.subsystems)

    def to_json(self) -> list[list]:
        return [[lbl, d] for lbl, d in self.subsystems]

    @classmethod
    def from_json(cls, data: Sequence[Sequence]) -> "SpaceLayout":
        return cls([(str(l), int(d)) for l, d in data])


def _c2j(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _vec_to_json(v: np.ndarray) -> list[list[float]]:
    return [_c2j(z) for z in v]


def _vec_from_json(data) -> np.ndarray:
    return np.array([complex(re, im) for re, im in data], dtype=np.complex128)


def _mat_to_json(m: np.ndarray) -> list[list[list[float]]]:
    return [[_c2j(z) for z in row] for row in m]


def _mat_from_json(data) -> np.ndarray:
    return np.array(
        [[complex(re, im) for re, im in row] for row in data], dtype=np.complex128
    )


@dataclass(frozen=True)
class PureState:
    """Unit vector on a layout. Immutable once constructed."""

    layout: SpaceLayout
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if amp.shape[0] != self.layout.total_dim:
            raise LayoutMismatch(
                f"{amp.shape[0]} amplitudes for layout of dim {self.layout.total_dim}"
            )
        nrm = float(np.linalg.norm(amp))
        if abs(nrm - 1.0) > TOL_NORM:
            raise InvariantViolation(f"state norm {nrm} deviates from 1 beyond {TOL_NORM}")
        object.__setattr__(self, "amplitudes", _frozen(amp))

    def overlap(self, other: "PureState") -> complex:
        if self.layout != other.layout:
            raise LayoutMismatch("overlap needs identical layouts")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def to_json(self) -> dict:
        return {"layout": self.layout.to_json(), "amplitudes": _vec_to_json(self.amplitudes)}

    @classmethod
    def from_json(cls, data: dict) -> "PureState":
        return cls(SpaceLayout.from_json(data["layout"]), _vec_from_json(data["amplitudes"]))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix on a layout.

    Construction symmetrises nothing: hermiticity must already hold to
    TOL_HERM. Eigenvalues in [-TOL_PSD, 0) are clipped to zero (the matrix
    is rebuilt only in that case); anything more negative is an error.
    """

    layout: SpaceLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise LayoutMismatch(f"matrix shape {m.shape} for layout of dim {n}")
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > TOL_HERM:
            raise InvariantViolation(f"hermiticity violated by {herm_err}")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > TOL_NORM:
            raise InvariantViolation(f"trace {tr} deviates from 1 beyond {TOL_NORM}")
        vals = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        lo = float(vals[0])
        if lo < -TOL_PSD:
            raise InvariantViolation(f"negative eigenvalue {lo} below -{TOL_PSD}")
        if lo < 0.0:
            w, v = eigh_desc(m)
            m = (v * np.clip(w, 0.0, None)) @ v.conj().T
        object.__setattr__(self, "matrix", _frozen(m))

    def eigenvalues(self) -> np.ndarray:
        return eigh_desc(self.matrix)[0]

    def to_json(self) -> dict:
        return {"layout": self.layout.to_json(), "matrix": _mat_to_json(self.matrix)}

    @classmethod
    def from_json(cls, data: dict) -> "DensityMatrix":
        return cls(SpaceLayout.from_json(data["layout"]), _mat_from_json(data["matrix"]))


@dataclass(frozen=True)
class Isometry:
    """Inner-product preserving map between two layouts (V†V = 1)."""

    input_layout: SpaceLayout
    output_layout: SpaceLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        din = self.input_layout.total_dim
        dout = self.output_layout.total_dim
        if m.shape != (dout, din):
            raise LayoutMismatch(f"matrix shape {m.shape}, expected {(dout, din)}")
        if dout < din:
            raise BadRank(f"no isometry from dim {din} into dim {dout}")
        err = float(np.max(np.abs(m.conj().T @ m - np.eye(din))))
        if err > TOL_ISO:
            raise InvariantViolation(f"V†V deviates from identity by {err}")
        object.__setattr__(self, "matrix", _frozen(m))

    def to_json(self) -> dict:
        return {
            "in": self.input_layout.to_json(),
            "out": self.output_layout.to_json(),
            "matrix": _mat_to_json(self.matrix),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Isometry":
        return cls(
            SpaceLayout.from_json(data["in"]),
            SpaceLayout.from_json(data["out"]),
            _mat_from_json(data["matrix"]),
        )


# ---------------------------------------------------------------------------
# tensor algebra
# ---------------------------------------------------------------------------


def tensor(a, b):
    """Tensor product of two states of the same kind on disjoint labels."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        layout = a.layout.joined(b.layout)
        return PureState(layout, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        layout = a.layout.joined(b.layout)
        return DensityMatrix(layout, np.kron(a.matrix, b.matrix))
    raise TypeError("tensor expects two PureStates or two DensityMatrices")


def _ptrace_raw(mat: np.ndarray, dims: Sequence[int], keep_idx: Sequence[int]) -> np.ndarray:
    """Partial trace by index contraction on the 2n-axis tensor view."""
    n = len(dims)
    keep = list(keep_idx)
    t = mat.reshape(*dims, *dims)
    row = list(range(n))
    col = [i if i not in keep else n + i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    res = np.einsum(t, row + col, out)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d_keep, d_keep)


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Trace out every subsystem not named in keep (original order preserved)."""
    keep = list(keep)
    if not keep:
        raise EmptyKeep("must keep at least one subsystem")
    for lbl in keep:
        if lbl not in rho.layout.labels:
            raise LabelUnknown(f"label {lbl!r} not in layout {rho.layout.labels}")
    keep_idx = [i for i, (lbl, _) in enumerate(rho.layout.subsystems) if lbl in set(keep)]
    reduced = _ptrace_raw(rho.matrix, rho.layout.dims, keep_idx)
    return DensityMatrix(rho.layout.subset(keep), reduced)


def _permutation(layout: SpaceLayout, new_order: Sequence[str]) -> list[int]:
    if sorted(new_order) != sorted(layout.labels):
        raise BadPermutation(
            f"{tuple(new_order)} is not a permutation of {layout.labels}"
        )
    return [layout.index_of(lbl) for lbl in new_order]


def permute(state, new_order: Sequence[str]):
    """Reorder subsystems; the physical state is unchanged."""
    if isinstance(state, PureState):
        perm = _permutation(state.layout, new_order)
        t = state.amplitudes.reshape(state.layout.dims).transpose(perm)
        layout = SpaceLayout([state.layout.subsystems[i] for i in perm])
        return PureState(layout, t.reshape(-1))
    if isinstance(state, DensityMatrix):
        perm = _permutation(state.layout, new_order)
        n = len(state.layout.dims)
        t = state.matrix.reshape(*state.layout.dims, *state.layout.dims)
        t = t.transpose(perm + [n + i for i in perm])
        layout = SpaceLayout([state.layout.subsystems[i] for i in perm])
        d = layout.total_dim
        return DensityMatrix(layout, t.reshape(d, d))
    raise TypeError("permute expects a PureState or DensityMatrix")


def apply_isometry(v: Isometry, state):
    """Push a state through an isometry: |ψ⟩ ↦ V|ψ⟩ or ρ ↦ VρV†."""
    if isinstance(state, PureState):
        if state.layout != v.input_layout:
            raise LayoutMismatch("state layout does not match isometry input")
        return PureState(v.output_layout, v.matrix @ state.amplitudes)
    if isinstance(state, DensityMatrix):
        if state.layout != v.input_layout:
            raise LayoutMismatch("state layout does not match isometry input")
        return DensityMatrix(v.output_layout, v.matrix @ state.matrix @ v.matrix.conj().T)
    raise TypeError("apply_isometry expects a PureState or DensityMatrix")


def purify(rho: DensityMatrix, env_label: str = "E") -> PureState:
    """Standard purification with the smallest environment that works.

    The environment dimension equals the numerical rank of rho (eigenvalues
    above RANK_CUTOFF) and is appended as the last subsystem.
    """
    if env_label in rho.layout.labels:
        raise LabelClash(f"environment label {env_label!r} already used")
    w, v = eigh_desc(rho.matrix)
    rank = int(np.sum(w > RANK_CUTOFF))
    rank = max(rank, 1)
    amps = np.zeros(rho.layout.total_dim * rank, dtype=np.complex128)
    # |phi> = sum_i sqrt(w_i) |v_i> ⊗ |i_E>; env index is fastest (last axis)
    block = (v[:, :rank] * np.sqrt(np.clip(w[:rank], 0.0, None)))
    amps = block.reshape(rho.layout.total_dim, rank).reshape(-1)
    amps = amps / np.linalg.norm(amps)
    layout = rho.layout.joined(SpaceLayout([(env_label, rank)]))
    return PureState(layout, amps)


def basis_state(layout: SpaceLayout, index: int) -> PureState:
    amps = np.zeros(layout.total_dim, dtype=np.complex128)
    amps[index] = 1.0
    return PureState(layout, amps)


# ---------------------------------------------------------------------------
# Haar sampling
# ---------------------------------------------------------------------------


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def haar_isometry_matrix(rng: np.random.Generator, dout: int, din: int) -> np.ndarray:
    """Haar-distributed isometry via QR of a Ginibre matrix.

    R's diagonal phases are divided out, which is what makes the column
    distribution actually uniform rather than QR-convention dependent.
    """
    q, r = np.linalg.qr(_ginibre(rng, dout, din))
    d = np.diag(r)
    ph = d / np.abs(d)
    return q * ph


def random_pure(layout: SpaceLayout, seed: int | np.random.Generator) -> PureState:
    rng = _as_rng(seed)
    g = _ginibre(rng, layout.total_dim, 1).ravel()
    return PureState(layout, g / np.linalg.norm(g))


def random_density(
    layout: SpaceLayout, rank: int, seed: int | np.random.Generator
) -> DensityMatrix:
    """Reduced state of a Haar-random purification with the given rank."""
    n = layout.total_dim
    if rank < 1 or rank > n:
        raise BadRank(f"rank {rank} not in [1, {n}]")
    rng = _as_rng(seed)
    g = _ginibre(rng, n, rank)
    m = g @ g.conj().T
    return DensityMatrix(layout, m / np.trace(m).real)


def random_isometry(
    input_layout: SpaceLayout,
    output_layout: SpaceLayout,
    seed: int | np.random.Generator,
) -> Isometry:
    din = input_layout.total_dim
    dout = output_layout.total_dim
    if dout < din:
        raise BadRank(f"no isometry from dim {din} into dim {dout}")
    rng = _as_rng(seed)
    return Isometry(input_layout, output_layout, haar_isometry_matrix(rng, dout, din))
