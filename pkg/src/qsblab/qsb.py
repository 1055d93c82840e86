"""Shared broadcasting of pure states into two overlapping receivers.

A broadcast instance is a channel from a source S into three subsystems
A, B, C together with two representation isometries: receiver I reads the
pair (A, B), receiver II the pair (A, C), and each should see the source
state as the corresponding isometric image. Perfect operation is possible
exactly when the source fits inside the shared part (d_S <= d_A); the
machinery below constructs that regime, measures the worst-case fidelity
deficit everywhere else, and evaluates the chain of bounds that turns a
small deficit at d_S > d_A into a contradiction with the optimal-cloning
ceiling of 5/6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .channels import KrausChannel, apply, from_stinespring
from .errors import (
    BadAmplitudes,
    BadDim,
    BadEpsilon,
    BoundVacuous,
    ChainNotApplicable,
    DegenerateResidual,
    EmptyInput,
    InvariantViolation,
    LayoutMismatch,
    NoPerfectQsb,
)
from .hilbert import (
    DensityMatrix,
    Isometry,
    PureState,
    SpaceLayout,
    apply_isometry,
    basis_state,
    eigh_desc,
    partial_trace,
    purify,
    random_pure,
    tensor,
    _as_rng,
)
from .metrics import BoundCheck, fidelity_pure, fidelity_states

# Worst-case ceiling for universal qubit cloning: no input-independent
# 1 -> 2 copier pushes both copy fidelities above this value.
CLONING_CEILING = 5.0 / 6.0


@dataclass(frozen=True)
class QsbInstance:
    """A broadcast channel plus the two representation isometries."""

    channel: KrausChannel
    v_abs: Isometry
    v_acs: Isometry

    def __post_init__(self):
        cin = self.channel.input_layout
        cout = self.channel.output_layout
        if len(cin.subsystems) != 1:
            raise InvariantViolation("channel input must be a single subsystem")
        if len(cout.subsystems) != 3:
            raise InvariantViolation("channel output must have exactly three subsystems")
        a, b, c = cout.subsystems
        if self.v_abs.input_layout != cin or self.v_acs.input_layout != cin:
            raise LayoutMismatch("representation isometries must start on the source")
        if self.v_abs.output_layout.subsystems != (a, b):
            raise LayoutMismatch("first representation must land on the (shared, I) pair")
        if self.v_acs.output_layout.subsystems != (a, c):
            raise LayoutMismatch("second representation must land on the (shared, II) pair")

    @property
    def d_s(self) -> int:
        return self.channel.input_layout.total_dim

    @property
    def d_a(self) -> int:
        return self.channel.output_layout.subsystems[0][1]

    @property
    def d_b(self) -> int:
        return self.channel.output_layout.subsystems[1][1]

    @property
    def d_c(self) -> int:
        return self.channel.output_layout.subsystems[2][1]

    @property
    def source_layout(self) -> SpaceLayout:
        return self.channel.input_layout

    def to_json(self) -> dict:
        data = self.channel.to_json()
        data["v_abs"] = self.v_abs.to_json()
        data["v_acs"] = self.v_acs.to_json()
        return data

    @classmethod
    def from_json(cls, data: dict) -> "QsbInstance":
        channel = KrausChannel.from_json(
            {"in": data["in"], "out": data["out"], "kraus": data["kraus"]}
        )
        return cls(
            channel,
            Isometry.from_json(data["v_abs"]),
            Isometry.from_json(data["v_acs"]),
        )


def perfect_qsb_construct(d_s: int, d_a: int, d_b: int, d_c: int) -> QsbInstance:
    """Exact broadcast for d_s <= d_a: embed into the shared subsystem.

    The channel sends |k_S> to |k_A> with both private subsystems parked in
    their ground states, and each representation isometry embeds the source
    the same way, so both receivers see the input with fidelity one.
    """
    for name, d in (("d_s", d_s), ("d_a", d_a), ("d_b", d_b), ("d_c", d_c)):
        if d < 1:
            raise InvariantViolation(f"{name} = {d} must be >= 1")
    if d_s > d_a:
        raise NoPerfectQsb(
            f"source dim {d_s} exceeds shared dim {d_a}: perfect shared "
            "broadcasting needs the source to fit in the shared subsystem"
        )
    lay_s = SpaceLayout([("S", d_s)])
    lay_abc = SpaceLayout([("A", d_a), ("B", d_b), ("C", d_c)])
    lay_ab = SpaceLayout([("A", d_a), ("B", d_b)])
    lay_ac = SpaceLayout([("A", d_a), ("C", d_c)])

    m_abc = np.zeros((d_a * d_b * d_c, d_s), dtype=np.complex128)
    m_ab = np.zeros((d_a * d_b, d_s), dtype=np.complex128)
    m_ac = np.zeros((d_a * d_c, d_s), dtype=np.complex128)
    for k in range(d_s):
        m_abc[k * d_b * d_c, k] = 1.0
        m_ab[k * d_b, k] = 1.0
        m_ac[k * d_c, k] = 1.0

    channel = KrausChannel(lay_s, lay_abc, (m_abc,))
    return QsbInstance(
        channel,
        Isometry(lay_s, lay_ab, m_ab),
        Isometry(lay_s, lay_ac, m_ac),
    )


@dataclass(frozen=True)
class FidelityPair:
    """The two receiver fidelities for one input state."""

    f_ab: float
    f_ac: float

    @property
    def worst(self) -> float:
        return min(self.f_ab, self.f_ac)


def _output_dims(instance: QsbInstance) -> tuple[int, int, int]:
    return instance.d_a, instance.d_b, instance.d_c


def branch_fidelity_matrix(
    instance: QsbInstance, psi_columns: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Both receiver fidelities for a batch of source columns (d_s, n)."""
    d_a, d_b, d_c = _output_dims(instance)
    n = psi_columns.shape[1]
    psi_ab = (instance.v_abs.matrix @ psi_columns).reshape(d_a, d_b, n)
    psi_ac = (instance.v_acs.matrix @ psi_columns).reshape(d_a, d_c, n)
    f_ab = np.zeros(n)
    f_ac = np.zeros(n)
    for k in instance.channel.kraus_ops:
        t = (k @ psi_columns).reshape(d_a, d_b, d_c, n)
        w = np.einsum("abn,abcn->cn", psi_ab.conj(), t)
        f_ab += np.einsum("cn,cn->n", w, w.conj()).real
        w = np.einsum("acn,abcn->bn", psi_ac.conj(), t)
        f_ac += np.einsum("bn,bn->n", w, w.conj()).real
    return np.clip(f_ab, 0.0, 1.0), np.clip(f_ac, 0.0, 1.0)


def broadcast_fidelities(instance: QsbInstance, psi: PureState) -> FidelityPair:
    """F(rho_AB; |psi_AB>) and F(rho_AC; |psi_AC>) for one input."""
    if psi.layout != instance.source_layout:
        raise LayoutMismatch("input does not live on the source layout")
    f_ab, f_ac = branch_fidelity_matrix(instance, psi.amplitudes.reshape(-1, 1))
    return FidelityPair(float(f_ab[0]), float(f_ac[0]))


def measure_eps(
    instance: QsbInstance, states: Sequence[PureState]
) -> tuple[float, list[FidelityPair]]:
    """Largest fidelity deficit seen over the supplied probe states.

    The result is a lower estimate of the true worst-case deficit: it only
    sees the states it is given. Feed it default_probe_states (or better)
    for a usable estimate.
    """
    states = list(states)
    if not states:
        raise EmptyInput("measure_eps needs at least one probe state")
    for s in states:
        if s.layout != instance.source_layout:
            raise LayoutMismatch("probe state does not live on the source layout")
    cols = np.stack([s.amplitudes for s in states], axis=1)
    f_ab, f_ac = branch_fidelity_matrix(instance, cols)
    pairs = [FidelityPair(float(x), float(y)) for x, y in zip(f_ab, f_ac)]
    eps_hat = 1.0 - min(p.worst for p in pairs)
    return float(max(eps_hat, 0.0)), pairs


def default_probe_states(
    layout: SpaceLayout,
    seed: int | np.random.Generator,
    haar_count: int = 200,
    phase_count: int = 8,
    include_basis: bool = True,
) -> list[PureState]:
    """Probe family: basis, balanced two-level superpositions, Haar samples.

    The balanced states run over all index pairs with phase_count relative
    phases; they catch coherence loss the basis alone cannot see.
    """
    rng = _as_rng(seed)
    d = layout.total_dim
    probes: list[PureState] = []
    if include_basis:
        probes.extend(basis_state(layout, k) for k in range(d))
    root2 = 1.0 / np.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            for p in range(phase_count):
                amps = np.zeros(d, dtype=np.complex128)
                amps[i] = root2
                amps[j] = root2 * np.exp(2j * np.pi * p / phase_count)
                probes.append(PureState(layout, amps))
    for _ in range(haar_count):
        probes.append(random_pure(layout, rng))
    return probes


# ---------------------------------------------------------------------------
# product-state extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductApprox:
    """Single-subsystem states approximating a broadcast output as a product.

    phi_a/phi_b/phi_c live on the individual output subsystems; phi_e on the
    purifying environment. The achieved fidelities are recorded against the
    full output state and against both representation images.
    """

    phi_a: PureState
    phi_b: PureState
    phi_c: PureState
    phi_e: PureState
    fidelity_product_abc: float
    fidelity_ab: float
    fidelity_ac: float
    primary_branch: str = "B"


def _contract_pure(big: PureState, small: PureState, labels: Sequence[str]) -> np.ndarray:
    """<small| applied to the named subsystems of |big>, as a raw tensor."""
    lay = big.layout
    dims = lay.dims
    n = len(dims)
    pos = [lay.index_of(l) for l in labels]
    rest = [i for i in range(n) if i not in pos]
    t = big.amplitudes.reshape(dims)
    s = small.amplitudes.conj().reshape([dims[i] for i in pos])
    return np.einsum(s, pos, t, list(range(n)), rest)


def extract_product_approx(
    instance: QsbInstance, psi: PureState, primary_branch: str = "B"
) -> ProductApprox:
    """Pull near-product structure out of one broadcast output.

    phi_a and the secondary receiver's state are top eigenvectors of the
    marginals of the secondary representation image; the primary receiver's
    state comes from factorising the purified channel output against that
    image. primary_branch chooses which of the two private subsystems gets
    the purification route (the bound there is tighter).
    """
    if primary_branch not in ("B", "C"):
        raise InvariantViolation(f"primary_branch must be 'B' or 'C', got {primary_branch!r}")
    if psi.layout != instance.source_layout:
        raise LayoutMismatch("input does not live on the source layout")

    out = instance.channel.output_layout
    lbl_a, lbl_b, lbl_c = out.labels
    lbl_x = lbl_b if primary_branch == "B" else lbl_c  # purification route
    lbl_y = lbl_c if primary_branch == "B" else lbl_b  # direct route

    psi_ab = apply_isometry(instance.v_abs, psi)
    psi_ac = apply_isometry(instance.v_acs, psi)
    psi_ay = psi_ac if primary_branch == "B" else psi_ab

    rho_abc = apply(instance.channel, psi.density())
    phi_pure = purify(rho_abc, env_label="E")

    # Factorise the purification against the secondary image: the partial
    # overlap is (up to norm) the best pure companion on (X, E).
    v_xe = _contract_pure(phi_pure, psi_ay, [lbl_a, lbl_y])
    nrm = np.linalg.norm(v_xe)
    if nrm < 1e-12:
        raise InvariantViolation(
            "purified output is orthogonal to the secondary representation image"
        )
    lay_xe = phi_pure.layout.subset([lbl_x, "E"])
    psi_xe = PureState(lay_xe, v_xe.reshape(-1) / nrm)

    sigma_a = partial_trace(psi_ay.density(), [lbl_a])
    sigma_y = partial_trace(psi_ay.density(), [lbl_y])
    sigma_x = partial_trace(psi_xe.density(), [lbl_x])
    sigma_e = partial_trace(psi_xe.density(), ["E"])

    def top(rho: DensityMatrix) -> PureState:
        _, vecs = eigh_desc(rho.matrix)
        return PureState(rho.layout, vecs[:, 0])

    phi_a = top(sigma_a)
    phi_x = top(sigma_x)
    phi_y = top(sigma_y)
    phi_e = top(sigma_e)
    phi_b, phi_c = (phi_x, phi_y) if primary_branch == "B" else (phi_y, phi_x)

    product_abc = tensor(tensor(phi_a, phi_b), phi_c)
    f_abc = fidelity_pure(rho_abc, product_abc)
    f_ab = fidelity_states(psi_ab, tensor(phi_a, phi_b))
    f_ac = fidelity_states(psi_ac, tensor(phi_a, phi_c))
    return ProductApprox(
        phi_a=phi_a,
        phi_b=phi_b,
        phi_c=phi_c,
        phi_e=phi_e,
        fidelity_product_abc=f_abc,
        fidelity_ab=f_ab,
        fidelity_ac=f_ac,
        primary_branch=primary_branch,
    )


def product_floors(eps: float, primary_branch: str = "B") -> dict[str, float]:
    """Extraction guarantees at deficit eps, before clamping.

    The purification-route receiver keeps 1 - 2*sqrt(eps); the direct-route
    receiver and the full product keep 1 - 3.4*eps^(1/8) and 1 - 3*eps^(1/8).
    """
    if not 0.0 < eps <= 1.0:
        raise BadEpsilon(f"eps = {eps} outside (0, 1]")
    tight = 1.0 - 2.0 * math.sqrt(eps)
    loose = 1.0 - 3.4 * eps ** 0.125
    product = 1.0 - 3.0 * eps ** 0.125
    if primary_branch == "B":
        return {"floor_ab": tight, "floor_ac": loose, "floor_abc": product}
    return {"floor_ab": loose, "floor_ac": tight, "floor_abc": product}


# ---------------------------------------------------------------------------
# overlap geometry
# ---------------------------------------------------------------------------


def overlap_lower_bound(m: int, d: int) -> float:
    """Any m unit vectors in dim d < m contain a pair with overlap above this.

    The bound sqrt((m-d)/(d(m-1))) comes from Tr[rho^2] >= 1/d for the
    uniform mixture of the vectors; below is the witness scan that finds
    the pair.
    """
    if m < 1 or d < 1:
        raise InvariantViolation(f"need positive counts, got m={m}, d={d}")
    if m <= d:
        raise BoundVacuous(f"{m} vectors fit orthogonally in dim {d}")
    return math.sqrt((m - d) / (d * (m - 1.0)))


def max_overlap_pair(vectors: Sequence[PureState]) -> tuple[tuple[int, int], float]:
    """Exhaustive scan for the largest pairwise overlap |<phi_i|phi_j>|."""
    vecs = list(vectors)
    if len(vecs) < 2:
        raise EmptyInput("need at least two vectors to compare")
    lay = vecs[0].layout
    for v in vecs[1:]:
        if v.layout != lay:
            raise LayoutMismatch("all vectors must share one layout")
    best = (0, 1)
    best_val = -1.0
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            val = abs(vecs[i].overlap(vecs[j]))
            if val > best_val:
                best_val = val
                best = (i, j)
    m, d = len(vecs), lay.total_dim
    if m > d:
        bound = overlap_lower_bound(m, d)
        if best_val < bound - 1e-12:
            raise InvariantViolation(
                f"max overlap {best_val} below the guaranteed {bound}; "
                "this indicates a numerical defect"
            )
    return best, float(best_val)


def gram_schmidt_residual(phi1: PureState, phi2: PureState, theta: float) -> PureState:
    """Normalised component of phi2 orthogonal to phi1, rotated by exp(i theta)."""
    if phi1.layout != phi2.layout:
        raise LayoutMismatch("residual needs a common layout")
    c = phi1.overlap(phi2)
    if abs(c) >= 1.0 - 1e-9:
        raise DegenerateResidual(f"vectors nearly parallel (overlap {abs(c)})")
    res = phi2.amplitudes - c * phi1.amplitudes
    res = res / np.linalg.norm(res)
    return PureState(phi1.layout, np.exp(1j * theta) * res)


def lambda_max_rank2(alpha: complex, beta: complex, f12: float) -> float:
    """Top eigenvalue of |a|^2 P1 + |b|^2 P2 when F(phi1;phi2) = f12.

    Closed form (1 + sqrt(1 - 4|ab|^2(1-f12)))/2; the mixture lives in the
    two-dimensional span so the determinant fixes both eigenvalues.
    """
    a2 = abs(alpha) ** 2
    b2 = abs(beta) ** 2
    if abs(a2 + b2 - 1.0) > 1e-9:
        raise BadAmplitudes(f"|alpha|^2 + |beta|^2 = {a2 + b2} must be 1")
    if not -1e-12 <= f12 <= 1.0 + 1e-12:
        raise BadAmplitudes(f"f12 = {f12} outside [0, 1]")
    f12 = min(max(f12, 0.0), 1.0)
    # (a2-b2)^2 + 4 a2 b2 f12 equals 1 - 4 a2 b2 (1-f12) on the simplex but
    # has no cancellation, so the sqrt stays accurate near the balanced point.
    disc = (a2 - b2) ** 2 + 4.0 * a2 * b2 * f12
    return 0.5 * (a2 + b2 + math.sqrt(disc))


# ---------------------------------------------------------------------------
# qubit cloning baseline
# ---------------------------------------------------------------------------


def _cloner_isometry() -> np.ndarray:
    """Symmetric universal qubit copier, source -> (copy1, copy2, ancilla)."""
    v = np.zeros((8, 2), dtype=np.complex128)
    s23 = math.sqrt(2.0 / 3.0)
    s16 = math.sqrt(1.0 / 6.0)
    # |0> -> s23|000> + s16(|011> + |101>);  |1> -> s23|111> + s16(|010> + |100>)
    v[0b000, 0] = s23
    v[0b011, 0] = s16
    v[0b101, 0] = s16
    v[0b111, 1] = s23
    v[0b010, 1] = s16
    v[0b100, 1] = s16
    return v


def cloner_baseline(psi: PureState) -> tuple[DensityMatrix, DensityMatrix]:
    """Marginals of the optimal symmetric universal cloner on a qubit.

    Both outputs are returned on the input's own layout so their fidelity
    against |psi> can be read off directly; it equals 5/6 for every input.
    """
    if psi.layout.total_dim != 2:
        raise BadDim("cloning baseline is defined for qubit inputs")
    t = (_cloner_isometry() @ psi.amplitudes).reshape(2, 2, 2)
    rho_b = np.einsum("bca,dca->bd", t, t.conj())
    rho_c = np.einsum("bca,bda->cd", t, t.conj())
    return (
        DensityMatrix(psi.layout, rho_b),
        DensityMatrix(psi.layout, rho_c),
    )


# ---------------------------------------------------------------------------
# deficit chain
# ---------------------------------------------------------------------------


def epsilon_threshold(d_a: int) -> tuple[float, float, float]:
    """Deficit below which broadcasting at d_S > d_A is ruled out.

    Two candidates: a fixed ceiling from pushing the chain floors past the
    cloning value, and a dimension-dependent admissibility ceiling. The
    threshold is their minimum; returns (threshold, fixed, dimensional).
    """
    if d_a < 1:
        raise InvariantViolation(f"d_a = {d_a} must be >= 1")
    fixed = 0.6e-175
    dimensional = 2.4e-14 / float(d_a) ** 8
    return min(fixed, dimensional), fixed, dimensional


def _collapse(*terms: tuple[float, float]) -> tuple[float, float]:
    """Upper-bound a sum of c*eps^e terms by one term at the weakest exponent."""
    return (sum(c for c, _ in terms), min(e for _, e in terms))


def _root_term(term: tuple[float, float]) -> tuple[float, float]:
    c, e = term
    return (math.sqrt(c), e / 2.0)


def asymptotic_ladder() -> dict[str, tuple[float, float]]:
    """Leading (coefficient, exponent) form of every chain constant.

    Each constant is a nested expression in eps; collapsing all terms onto
    the weakest exponent (valid for eps <= 1) gives the single-power form
    quoted alongside the exact values.
    """
    pb = (2.0, 1.0 / 2.0)
    pc = (3.4, 1.0 / 8.0)

    def dprime(p):
        return _collapse((2.0 * math.sqrt(p[0]), p[1] / 2.0), p)

    def tprime(p, d):
        return _collapse((3.0 * math.sqrt(p[0]), p[1] / 2.0), _root_term(d), d)

    dpb = dprime(pb)
    dpc = dprime(pc)
    tpb = tprime(pb, dpb)
    tpc = tprime(pc, dpc)
    shared = _collapse(
        (4.0 * math.sqrt(pb[0]), pb[1] / 2.0),
        (4.0 * math.sqrt(tpb[0]), tpb[1] / 2.0),
    )

    def iv(t):
        inner = _collapse(_root_term(t), _root_term(shared))
        return _collapse((1.0, 1.0 / 2.0), _root_term(inner))

    return {
        "eps_prime_b": pb,
        "eps_prime_c": pc,
        "eps_dprime_b": dpb,
        "eps_dprime_c": dpc,
        "eps_tprime_b": tpb,
        "eps_tprime_c": tpc,
        "shared_closeness": shared,
        "eps_iv_b": iv(tpb),
        "eps_iv_c": iv(tpc),
    }


@dataclass(frozen=True)
class EpsilonChainReport:
    """Constants and verified inequalities of the deficit chain at one eps.

    Floors are recorded unclamped in the constants and clamped inside the
    checks; a vacuous check (floor <= 0 or ceiling >= 1) is kept for the
    record but excluded from all_satisfied.
    """

    eps: float
    d_a: int
    eps_prime_b: float
    eps_prime_c: float
    eps_dprime_b: float
    eps_dprime_c: float
    eps_tprime_b: float
    eps_tprime_c: float
    eps_iv_b: float
    eps_iv_c: float
    shared_closeness_deficit: float
    eps_zero: float
    eps_zero_candidates: tuple[float, float]
    admissible_b: bool
    admissible_c: bool
    asymptotic: dict[str, tuple[float, float]] = field(repr=False)
    checks: tuple[BoundCheck, ...] = ()
    selected_pair: tuple[int, int] | None = None
    theta: dict[str, float] = field(default_factory=dict)
    residual_degenerate: tuple[str, ...] = ()
    cloning_contradiction: bool = False

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks if not c.vacuous)

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "d_a": self.d_a,
            "constants": {
                "eps_prime_b": self.eps_prime_b,
                "eps_prime_c": self.eps_prime_c,
                "eps_dprime_b": self.eps_dprime_b,
                "eps_dprime_c": self.eps_dprime_c,
                "eps_tprime_b": self.eps_tprime_b,
                "eps_tprime_c": self.eps_tprime_c,
                "eps_iv_b": self.eps_iv_b,
                "eps_iv_c": self.eps_iv_c,
                "shared_closeness_deficit": self.shared_closeness_deficit,
            },
            "eps_zero": self.eps_zero,
            "eps_zero_candidates": list(self.eps_zero_candidates),
            "admissible_b": self.admissible_b,
            "admissible_c": self.admissible_c,
            "asymptotic": {k: list(v) for k, v in self.asymptotic.items()},
            "selected_pair": list(self.selected_pair) if self.selected_pair else None,
            "theta": dict(self.theta),
            "residual_degenerate": list(self.residual_degenerate),
            "cloning_contradiction": self.cloning_contradiction,
            "all_satisfied": self.all_satisfied,
            "checks": [
                {
                    "label": c.label,
                    "lhs": c.lhs,
                    "rhs": c.rhs,
                    "slack": c.slack,
                    "satisfied": c.satisfied,
                    "vacuous": c.vacuous,
                }
                for c in self.checks
            ],
        }

    def csv_rows(self) -> list[list]:
        return [c.row() for c in self.checks]


def chain_constants(eps: float, d_a: int) -> EpsilonChainReport:
    """All deficit-chain constants at a given eps and shared dimension."""
    if not 0.0 < eps <= 1.0:
        raise BadEpsilon(f"eps = {eps} outside (0, 1]")
    if d_a < 1:
        raise InvariantViolation(f"d_a = {d_a} must be >= 1")
    ep_b = 2.0 * math.sqrt(eps)
    ep_c = 3.4 * eps ** 0.125
    edp_b = 2.0 * math.sqrt(ep_b) + ep_b
    edp_c = 2.0 * math.sqrt(ep_c) + ep_c
    etp_b = 3.0 * math.sqrt(ep_b) + math.sqrt(edp_b) + edp_b
    etp_c = 3.0 * math.sqrt(ep_c) + math.sqrt(edp_c) + edp_c
    shared = 4.0 * (math.sqrt(ep_b) + math.sqrt(etp_b))
    iv_b = 3.8 * eps ** (1.0 / 64.0)
    iv_c = 3.9 * eps ** (1.0 / 128.0)
    eps_zero, fixed, dimensional = epsilon_threshold(d_a)
    cap = 1.0 / float(d_a) ** 2
    return EpsilonChainReport(
        eps=eps,
        d_a=d_a,
        eps_prime_b=ep_b,
        eps_prime_c=ep_c,
        eps_dprime_b=edp_b,
        eps_dprime_c=edp_c,
        eps_tprime_b=etp_b,
        eps_tprime_c=etp_c,
        eps_iv_b=iv_b,
        eps_iv_c=iv_c,
        shared_closeness_deficit=shared,
        eps_zero=eps_zero,
        eps_zero_candidates=(fixed, dimensional),
        admissible_b=edp_b <= cap,
        admissible_c=edp_c <= cap,
        asymptotic=asymptotic_ladder(),
    )


def _floor_check(label: str, value: float, floor: float, enforced: bool = True) -> BoundCheck:
    clamped = min(max(floor, 0.0), 1.0)
    return BoundCheck.of(value, clamped, label=label, vacuous=floor <= 0.0 or not enforced)


def _ceiling_check(
    label: str, value: float, ceiling: float, enforced: bool = True
) -> BoundCheck:
    clamped = min(max(ceiling, 0.0), 1.0)
    return BoundCheck.of(clamped, value, label=label, vacuous=ceiling >= 1.0 or not enforced)


def _phase_objective(offsets: np.ndarray, cross: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """min over samples of offsets + 2 Re(cross * exp(i theta)), per theta."""
    vals = offsets[:, None] + 2.0 * np.real(cross[:, None] * np.exp(1j * thetas)[None, :])
    return vals.min(axis=0)


def _best_phase(offsets: np.ndarray, cross: np.ndarray) -> tuple[float, float]:
    """Maximise the worst-sample value over a global phase.

    256-point grid, then golden-section refinement around the best cell.
    """
    grid = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
    vals = _phase_objective(offsets, cross, grid)
    k = int(np.argmax(vals))
    lo = grid[k] - 2.0 * np.pi / 256.0
    hi = grid[k] + 2.0 * np.pi / 256.0
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = _phase_objective(offsets, cross, np.array([c]))[0]
    fd = _phase_objective(offsets, cross, np.array([d]))[0]
    for _ in range(60):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _phase_objective(offsets, cross, np.array([c]))[0]
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _phase_objective(offsets, cross, np.array([d]))[0]
    theta = (a + b) / 2.0
    return float(theta % (2.0 * np.pi)), float(_phase_objective(offsets, cross, np.array([theta]))[0])


def _superposition_coeffs(
    phase_count: int, extra: int, rng: np.random.Generator
) -> list[tuple[complex, complex]]:
    root2 = 1.0 / math.sqrt(2.0)
    coeffs = [
        (root2, root2 * np.exp(2j * np.pi * p / phase_count)) for p in range(phase_count)
    ]
    for _ in range(extra):
        g = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        g = g / np.linalg.norm(g)
        coeffs.append((complex(g[0]), complex(g[1])))
    return coeffs


def _check_orthonormal_basis(basis: Sequence[PureState], d_s: int) -> None:
    if len(basis) != d_s:
        raise InvariantViolation(f"basis has {len(basis)} elements for dim {d_s}")
    for i in range(d_s):
        for j in range(i, d_s):
            ov = abs(basis[i].overlap(basis[j]))
            target = 1.0 if i == j else 0.0
            if abs(ov - target) > 1e-9:
                raise InvariantViolation("supplied basis is not orthonormal")


def chain_verify(
    instance: QsbInstance,
    basis: Sequence[PureState],
    eps_hat: float,
    primary_branch: str = "B",
    phase_count: int = 8,
    extra_superpositions: int = 24,
    seed: int = 0,
    allow_trivial: bool = False,
) -> EpsilonChainReport:
    """Run the whole deficit-chain argument numerically on one instance.

    Extracts near-product structure for every basis element, checks the
    pairwise-overlap ceilings, selects the closest shared-subsystem pair,
    builds the orthogonal residuals with optimised phases, and verifies the
    superposition and copy-map floors on sampled two-level inputs. The
    constants are evaluated at the larger of eps_hat and the deficit this
    run itself measures, so every floor is a genuine consequence.
    """
    basis = list(basis)
    d_s, d_a = instance.d_s, instance.d_a
    if d_s <= d_a and not allow_trivial:
        raise ChainNotApplicable(
            f"chain needs a source ({d_s}) strictly larger than the shared part ({d_a})"
        )
    if not 0.0 <= eps_hat <= 1.0:
        raise BadEpsilon(f"eps_hat = {eps_hat} outside [0, 1]")
    _check_orthonormal_basis(basis, d_s)
    rng = np.random.default_rng(seed)

    extractions = [extract_product_approx(instance, b, primary_branch) for b in basis]
    phi_as = [e.phi_a for e in extractions]
    phi_bs = [e.phi_b for e in extractions]
    phi_cs = [e.phi_c for e in extractions]

    # Pair selection on the shared subsystem happens before any deficit
    # information is used; it only needs the extracted states.
    (k1, k2), a_overlap = max_overlap_pair(phi_as)

    coeffs = _superposition_coeffs(phase_count, extra_superpositions, rng)
    sup_states = []
    for al, be in coeffs:
        amps = al * basis[k1].amplitudes + be * basis[k2].amplitudes
        sup_states.append(PureState(instance.source_layout, amps / np.linalg.norm(amps)))

    eps_run, _ = measure_eps(instance, basis + sup_states)
    eps_eff = min(max(max(eps_hat, eps_run), 1e-300), 1.0)
    consts = chain_constants(eps_eff, d_a)

    checks: list[BoundCheck] = []

    # per-element extraction floors
    floors = product_floors(eps_eff, primary_branch)
    for k, e in enumerate(extractions):
        checks.append(
            _floor_check(f"product_floor_abc[{k}]", e.fidelity_product_abc, 1.0 - 3.0 * eps_eff ** 0.125)
        )
        checks.append(_floor_check(f"product_floor_ab[{k}]", e.fidelity_ab, floors["floor_ab"]))
        checks.append(_floor_check(f"product_floor_ac[{k}]", e.fidelity_ac, floors["floor_ac"]))

    # pairwise product-overlap ceilings
    for branch, phis, cap in (
        ("b", phi_bs, consts.eps_dprime_b),
        ("c", phi_cs, consts.eps_dprime_c),
    ):
        for i in range(d_s):
            for j in range(i + 1, d_s):
                val = abs(phi_as[i].overlap(phi_as[j])) * abs(phis[i].overlap(phis[j]))
                checks.append(
                    _ceiling_check(f"pair_product_overlap_{branch}[{i},{j}]", val, cap)
                )

    # Shared-pair guarantees exist only for d_s > d_a (vector crowding);
    # everything downstream of the selected pair inherits that condition.
    guaranteed = d_s > d_a
    checks.append(
        BoundCheck.of(
            a_overlap ** 2,
            1.0 / float(d_a) ** 2 if guaranteed else 0.0,
            label="selected_pair_fidelity_floor",
            vacuous=not guaranteed,
        )
    )
    if guaranteed:
        checks.append(
            BoundCheck.of(
                a_overlap,
                overlap_lower_bound(d_s, d_a) - 1e-12,
                label="crowding_overlap_floor",
            )
        )
    checks.append(
        _floor_check(
            "shared_closeness_floor",
            a_overlap ** 2,
            1.0 - consts.shared_closeness_deficit,
            enforced=guaranteed and consts.admissible_b,
        )
    )

    # residual construction and the superposition / copy-map floors
    theta: dict[str, float] = {}
    degenerate: list[str] = []
    cloning_votes: dict[str, bool] = {}
    cap_adm = 1.0 / float(d_a) ** 2

    for branch, phis, v_rep, edp, etp, eiv, admissible in (
        ("b", phi_bs, instance.v_abs, consts.eps_dprime_b, consts.eps_tprime_b, consts.eps_iv_b, consts.admissible_b),
        ("c", phi_cs, instance.v_acs, consts.eps_dprime_c, consts.eps_tprime_c, consts.eps_iv_c, consts.admissible_c),
    ):
        cond = guaranteed and admissible
        x1, x2 = phis[k1], phis[k2]
        checks.append(
            _ceiling_check(
                f"outer_overlap_ceiling_{branch}",
                abs(x1.overlap(x2)),
                math.sqrt(edp),
                enforced=cond,
            )
        )
        try:
            resid0 = gram_schmidt_residual(x1, x2, 0.0)
        except DegenerateResidual:
            degenerate.append(branch)
            continue

        # representation targets: alpha |phi_A1 x1> + beta |phi_A2 resid>
        t1 = tensor(phi_as[k1], x1)
        t2 = tensor(phi_as[k2], resid0)
        psi_reps = [apply_isometry(v_rep, s) for s in sup_states]
        xs = np.array(
            [np.conj(al) * np.vdot(t1.amplitudes, p.amplitudes) for (al, _), p in zip(coeffs, psi_reps)]
        )
        ys = np.array(
            [np.conj(be) * np.vdot(t2.amplitudes, p.amplitudes) for (_, be), p in zip(coeffs, psi_reps)]
        )
        offsets = np.abs(xs) ** 2 + np.abs(ys) ** 2
        cross = xs * np.conj(ys)
        th, _ = _best_phase(offsets, cross)
        theta[branch] = th
        f_sup = offsets + 2.0 * np.real(cross * np.exp(1j * th))
        for i, f in enumerate(f_sup):
            checks.append(
                _floor_check(
                    f"superposition_floor_{branch}[{i}]", float(f), 1.0 - etp, enforced=cond
                )
            )

        # copy map W: span{k1, k2} -> H_X and its floors on the marginal
        resid = gram_schmidt_residual(x1, x2, th)
        out_lbl = {"b": instance.channel.output_layout.labels[1], "c": instance.channel.output_layout.labels[2]}[branch]
        rho_x = []
        for s in sup_states:
            rho_x.append(partial_trace(apply(instance.channel, s.density()), [out_lbl]))
        u_parts = np.array(
            [al * x1.amplitudes for (al, _) in coeffs]
        )
        v_parts = np.array(
            [be * resid.amplitudes for (_, be) in coeffs]
        )
        offs = np.array(
            [
                float(np.real(np.vdot(u, r.matrix @ u) + np.vdot(v, r.matrix @ v)))
                for u, v, r in zip(u_parts, v_parts, rho_x)
            ]
        )
        crs = np.array(
            [complex(np.vdot(u, r.matrix @ v)) for u, v, r in zip(u_parts, v_parts, rho_x)]
        )
        thp, _ = _best_phase(offs, crs)
        theta[branch + "_prime"] = thp
        f_copy = offs + 2.0 * np.real(crs * np.exp(1j * thp))
        for i, f in enumerate(f_copy):
            checks.append(
                _floor_check(f"copy_map_floor_{branch}[{i}]", float(f), 1.0 - eiv, enforced=cond)
            )
        cloning_votes[branch] = cond and (1.0 - eiv) > CLONING_CEILING

    return replace(
        consts,
        checks=tuple(checks),
        selected_pair=(k1, k2),
        theta=theta,
        residual_degenerate=tuple(degenerate),
        cloning_contradiction=bool(cloning_votes) and all(cloning_votes.get(x, False) for x in ("b", "c")),
    )


def perturbed_perfect_instance(
    d_s: int, d_a: int, d_b: int, d_c: int, noise: float
) -> QsbInstance:
    """Perfect construction with its channel mixed toward full depolarising.

    The representation isometries stay exact; only the channel is noisy,
    so the worst-case deficit is exactly noise * (1 - 1/(d_a * max(d_b, d_c))):
    the branch holding the larger private subsystem recovers the least.
    """
    from .channels import depolarizing_channel, mix

    base = perfect_qsb_construct(d_s, d_a, d_b, d_c)
    dep = depolarizing_channel(base.channel.input_layout, base.channel.output_layout)
    noisy = mix(base.channel, dep, noise)
    return QsbInstance(noisy, base.v_abs, base.v_acs)
