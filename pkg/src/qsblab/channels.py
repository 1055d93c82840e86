"""Completely positive trace-preserving maps in Kraus form.

Conversions to and from Stinespring isometries and Choi matrices use one
fixed convention throughout: the Choi matrix lives on output ⊗ input with
no 1/d normalisation, so trace preservation reads "partial trace over the
output equals the input identity". Row-major vectorisation of a Kraus
operator is then exactly its Choi eigenvector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BadEnvLabels, InvariantViolation, LayoutMismatch
from .hilbert import (
    RANK_CUTOFF,
    TOL_ISO,
    TOL_PSD,
    DensityMatrix,
    Isometry,
    SpaceLayout,
    _mat_from_json,
    _mat_to_json,
    eigh_desc,
)
from .metrics import BoundCheck


@dataclass(frozen=True)
class KrausChannel:
    """CPT map given by a finite Kraus family (sum K†K = 1)."""

    input_layout: SpaceLayout
    output_layout: SpaceLayout
    kraus_ops: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        din = self.input_layout.total_dim
        dout = self.output_layout.total_dim
        ops = tuple(np.asarray(k, dtype=np.complex128) for k in self.kraus_ops)
        if not ops:
            raise InvariantViolation("channel needs at least one Kraus operator")
        if len(ops) > din * dout:
            raise InvariantViolation(
                f"{len(ops)} Kraus operators exceed the canonical maximum {din * dout}"
            )
        for k in ops:
            if k.shape != (dout, din):
                raise LayoutMismatch(f"Kraus shape {k.shape}, expected {(dout, din)}")
        acc = np.zeros((din, din), dtype=np.complex128)
        for k in ops:
            acc += k.conj().T @ k
        err = float(np.max(np.abs(acc - np.eye(din))))
        if err > TOL_ISO:
            raise InvariantViolation(f"completeness violated by {err}")
        frozen = []
        for k in ops:
            kk = k.copy()
            kk.setflags(write=False)
            frozen.append(kk)
        object.__setattr__(self, "kraus_ops", tuple(frozen))

    def to_json(self) -> dict:
        return {
            "in": self.input_layout.to_json(),
            "out": self.output_layout.to_json(),
            "kraus": [_mat_to_json(k) for k in self.kraus_ops],
        }

    @classmethod
    def from_json(cls, data: dict) -> "KrausChannel":
        return cls(
            SpaceLayout.from_json(data["in"]),
            SpaceLayout.from_json(data["out"]),
            tuple(_mat_from_json(k) for k in data["kraus"]),
        )


@dataclass(frozen=True)
class ChoiMatrix:
    """Choi operator of a CPT map, on output ⊗ input, unnormalised."""

    input_layout: SpaceLayout
    output_layout: SpaceLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        din = self.input_layout.total_dim
        dout = self.output_layout.total_dim
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (din * dout, din * dout):
            raise LayoutMismatch(f"Choi shape {m.shape}, expected {(din * dout,) * 2}")
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > 1e-8:
            raise InvariantViolation(f"Choi hermiticity violated by {herm_err}")
        lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0)[0])
        if lo < -TOL_PSD * max(din, dout):
            raise InvariantViolation(f"Choi not PSD: min eigenvalue {lo}")
        # trace over the output factor must give the input identity
        t = m.reshape(dout, din, dout, din)
        reduced = np.einsum(t, [0, 1, 0, 2], [1, 2])
        tp_err = float(np.max(np.abs(reduced - np.eye(din))))
        if tp_err > 1e-8:
            raise InvariantViolation(f"trace preservation violated by {tp_err}")
        mm = m.copy()
        mm.setflags(write=False)
        object.__setattr__(self, "matrix", mm)


def apply(channel: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """Push a density matrix through the channel."""
    if rho.layout != channel.input_layout:
        raise LayoutMismatch("state layout does not match channel input")
    dout = channel.output_layout.total_dim
    out = np.zeros((dout, dout), dtype=np.complex128)
    for k in channel.kraus_ops:
        kr = k @ rho.matrix
        out += kr @ k.conj().T
    out = (out + out.conj().T) / 2.0
    return DensityMatrix(channel.output_layout, out)


def from_stinespring(v: Isometry, env_labels: Iterable[str]) -> KrausChannel:
    """Trace the named environment subsystems out of an isometry.

    The Kraus family is indexed by the environment basis; an empty label
    set returns the single-operator (isometric) channel.
    """
    env = list(env_labels)
    out_labels = v.output_layout.labels
    unknown = set(env) - set(out_labels)
    if unknown:
        raise BadEnvLabels(f"labels {sorted(unknown)} not in isometry output")
    keep = [l for l in out_labels if l not in set(env)]
    if not keep:
        raise BadEnvLabels("tracing out the whole output leaves no channel")
    if not env:
        return KrausChannel(v.input_layout, v.output_layout, (v.matrix,))

    dims = v.output_layout.dims
    n = len(dims)
    keep_idx = [i for i, l in enumerate(out_labels) if l not in set(env)]
    env_idx = [i for i, l in enumerate(out_labels) if l in set(env)]
    din = v.input_layout.total_dim
    d_keep = int(np.prod([dims[i] for i in keep_idx]))
    d_env = int(np.prod([dims[i] for i in env_idx]))

    # move kept axes first, environment axes last, then slice over env basis
    t = v.matrix.reshape(*dims, din).transpose(keep_idx + env_idx + [n])
    t = t.reshape(d_keep, d_env, din)
    ops = tuple(np.ascontiguousarray(t[:, e, :]) for e in range(d_env))
    out_layout = v.output_layout.subset(keep)
    return KrausChannel(v.input_layout, out_layout, ops)


def to_stinespring(channel: KrausChannel, env_label: str = "E") -> Isometry:
    """Dilate the channel to an isometry with the environment appended last."""
    if env_label in channel.output_layout.labels:
        raise BadEnvLabels(f"environment label {env_label!r} already in output")
    r = len(channel.kraus_ops)
    din = channel.input_layout.total_dim
    dout = channel.output_layout.total_dim
    m = np.zeros((dout * r, din), dtype=np.complex128)
    for e, k in enumerate(channel.kraus_ops):
        # output index (o, e) is row o * r + e in row-major layout order
        m[e::r, :] = k
    out_layout = channel.output_layout.joined(SpaceLayout([(env_label, r)]))
    return Isometry(channel.input_layout, out_layout, m)


def to_choi(channel: KrausChannel) -> ChoiMatrix:
    """Choi operator: sum of outer products of row-vectorised Kraus operators."""
    din = channel.input_layout.total_dim
    dout = channel.output_layout.total_dim
    m = np.zeros((din * dout, din * dout), dtype=np.complex128)
    for k in channel.kraus_ops:
        v = k.reshape(-1)
        m += np.outer(v, v.conj())
    return ChoiMatrix(channel.input_layout, channel.output_layout, m)


def kraus_from_choi(choi: ChoiMatrix) -> KrausChannel:
    """Canonical Kraus family from the Choi eigendecomposition.

    Eigenvalues below RANK_CUTOFF are discarded, so the family size never
    exceeds din*dout and mixing channels stays within the invariant.
    """
    din = choi.input_layout.total_dim
    dout = choi.output_layout.total_dim
    w, v = eigh_desc(choi.matrix)
    ops = []
    for i in range(len(w)):
        if w[i] <= RANK_CUTOFF:
            break
        ops.append(np.sqrt(w[i]) * v[:, i].reshape(dout, din))
    return KrausChannel(choi.input_layout, choi.output_layout, tuple(ops))


def validate_cpt(channel: KrausChannel) -> BoundCheck:
    """Completeness diagnostic: residual ||sum K†K - 1|| against TOL_ISO.

    Runs on the raw Kraus list without reconstructing the channel, so it
    can grade candidate families that would fail construction.
    """
    return validate_kraus_family(
        channel.kraus_ops, channel.input_layout.total_dim
    )


def validate_kraus_family(ops: Sequence[np.ndarray], din: int) -> BoundCheck:
    acc = np.zeros((din, din), dtype=np.complex128)
    for k in ops:
        acc += np.asarray(k).conj().T @ np.asarray(k)
    residual = float(np.max(np.abs(acc - np.eye(din))))
    return BoundCheck.of(TOL_ISO, residual, label="kraus_completeness")


def choi_psd_check(matrix: np.ndarray) -> BoundCheck:
    """Complete-positivity diagnostic on a candidate Choi matrix."""
    m = np.asarray(matrix, dtype=np.complex128)
    lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0)[0])
    return BoundCheck.of(lo, -TOL_PSD, label="choi_psd")


def mix(a: KrausChannel, b: KrausChannel, weight: float) -> KrausChannel:
    """Convex combination (1-w)·a + w·b via the Choi picture."""
    if a.input_layout != b.input_layout or a.output_layout != b.output_layout:
        raise LayoutMismatch("channels must share input and output layouts")
    if not 0.0 <= weight <= 1.0:
        raise InvariantViolation(f"mixing weight {weight} outside [0, 1]")
    ca = to_choi(a).matrix
    cb = to_choi(b).matrix
    blended = ChoiMatrix(a.input_layout, a.output_layout, (1.0 - weight) * ca + weight * cb)
    return kraus_from_choi(blended)


def identity_channel(layout: SpaceLayout) -> KrausChannel:
    return KrausChannel(layout, layout, (np.eye(layout.total_dim, dtype=np.complex128),))


def depolarizing_channel(
    input_layout: SpaceLayout, output_layout: SpaceLayout
) -> KrausChannel:
    """Erase everything: every input goes to the maximally mixed output."""
    din = input_layout.total_dim
    dout = output_layout.total_dim
    scale = 1.0 / np.sqrt(dout)
    ops = []
    for i in range(dout):
        for j in range(din):
            k = np.zeros((dout, din), dtype=np.complex128)
            k[i, j] = scale
            ops.append(k)
    return KrausChannel(input_layout, output_layout, tuple(ops))
