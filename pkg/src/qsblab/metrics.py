"""Distance and closeness measures between states, plus their exact inequalities.

Fidelity here is the squared-arccos-free convention F = (Tr sqrt(sqrt(rho)
sigma sqrt(rho)))^2, so F(rho, |psi><psi|) reduces to <psi|rho|psi>. Every
check_* helper returns a BoundCheck recording both sides of the inequality
it verified; nothing is silently clamped away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadPurification, LayoutMismatch
from .hilbert import (
    RANK_CUTOFF,
    TOL_NUM,
    DensityMatrix,
    PureState,
    SpaceLayout,
    eigh_desc,
    partial_trace,
    permute,
    random_density,
    random_pure,
)

_SLACK_TOL = TOL_NUM


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Hermitian square root with tiny negative eigenvalues clamped to zero."""
    w, v = eigh_desc(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _check_layouts(a, b) -> None:
    if a.layout != b.layout:
        raise LayoutMismatch(f"layouts differ: {a.layout.labels} vs {b.layout.labels}")


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Closeness of two mixed states, (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Evaluated as the squared nuclear norm of sqrt(sigma) sqrt(rho): the
    singular values of that product are the eigenvalue square roots the
    definition asks for, but SVD reaches them without the precision loss
    of rooting near-zero eigenvalues of the triple product.
    """
    _check_layouts(rho, sigma)
    b = _sqrtm_psd(sigma.matrix) @ _sqrtm_psd(rho.matrix)
    val = float(np.sum(np.linalg.svd(b, compute_uv=False)) ** 2)
    return min(max(val, 0.0), 1.0)


def fidelity_pure(rho: DensityMatrix, psi: PureState) -> float:
    """<psi|rho|psi>, the mixed-vs-pure special case."""
    if rho.layout != psi.layout:
        raise LayoutMismatch("state layouts differ")
    val = float(np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)))
    return min(max(val, 0.0), 1.0)


def fidelity_states(a: PureState, b: PureState) -> float:
    """|<a|b>|^2 for two pure states."""
    return min(abs(a.overlap(b)) ** 2, 1.0)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the trace norm of rho - sigma."""
    _check_layouts(rho, sigma)
    diff = rho.matrix - sigma.matrix
    w = np.linalg.eigvalsh((diff + diff.conj().T) / 2.0)
    return min(max(float(0.5 * np.sum(np.abs(w))), 0.0), 1.0)


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality: satisfied iff lhs >= rhs - tolerance."""

    lhs: float
    rhs: float
    slack: float
    satisfied: bool
    label: str = ""
    vacuous: bool = False

    @classmethod
    def of(
        cls,
        lhs: float,
        rhs: float,
        label: str = "",
        vacuous: bool = False,
        tol: float = _SLACK_TOL,
    ) -> "BoundCheck":
        lhs = float(lhs)
        rhs = float(rhs)
        slack = lhs - rhs
        return cls(lhs, rhs, slack, slack >= -tol, label, vacuous)

    def row(self, seed: int | None = None) -> list:
        """Flat CSV-friendly row."""
        out = [self.label, self.lhs, self.rhs, self.slack, self.satisfied, self.vacuous]
        if seed is not None:
            out.append(seed)
        return out


def _dsqrt(x: float) -> float:
    return float(np.sqrt(max(x, 0.0)))


def check_triangle(
    rho: DensityMatrix, omega: DensityMatrix, sigma: DensityMatrix
) -> BoundCheck:
    """sqrt F(rho;omega) >= 1 - sqrt(1-F(rho;sigma)) - sqrt(1-F(sigma;omega)).

    Chaining closeness through a middle state sigma; follows from the
    two-sided trace-distance sandwich.
    """
    lhs = _dsqrt(fidelity(rho, omega))
    rhs = 1.0 - _dsqrt(1.0 - fidelity(rho, sigma)) - _dsqrt(1.0 - fidelity(sigma, omega))
    return BoundCheck.of(lhs, rhs, label="triangle")


def check_triangle_pure(
    rho: DensityMatrix, sigma: DensityMatrix, psi: PureState
) -> BoundCheck:
    """F(rho;|psi>) >= 1 - sqrt(1-F(rho;sigma)) - sqrt(1-F(sigma;|psi>)).

    Sharper than the generic triangle because the target is pure: the
    fidelity itself, not its square root, obeys the chain.
    """
    lhs = fidelity_pure(rho, psi)
    rhs = (
        1.0
        - _dsqrt(1.0 - fidelity(rho, sigma))
        - _dsqrt(1.0 - fidelity_pure(sigma, psi))
    )
    return BoundCheck.of(lhs, rhs, label="triangle_pure")


def check_monotonicity(
    rho: DensityMatrix, sigma: DensityMatrix, keep: Sequence[str]
) -> BoundCheck:
    """Discarding subsystems never lowers fidelity: F(marginals) >= F(joint)."""
    lhs = fidelity(partial_trace(rho, keep), partial_trace(sigma, keep))
    rhs = fidelity(rho, sigma)
    return BoundCheck.of(lhs, rhs, label="monotonicity")


def check_fvdg(rho: DensityMatrix, sigma: DensityMatrix) -> tuple[BoundCheck, BoundCheck]:
    """Two-sided sandwich 1 - sqrt(F) <= D <= sqrt(1 - F)."""
    f = fidelity(rho, sigma)
    d = trace_distance(rho, sigma)
    lower = BoundCheck.of(d, 1.0 - _dsqrt(f), label="fvdg_lower")
    upper = BoundCheck.of(_dsqrt(1.0 - f), d, label="fvdg_upper")
    return lower, upper


def uhlmann_partner(
    rho_a: DensityMatrix, sigma_a: DensityMatrix, purification_of_rho: PureState
) -> PureState:
    """Purification of sigma_a on the same space achieving the fidelity overlap.

    Given |phi> purifying rho_a, returns |chi> purifying sigma_a with
    |<phi|chi>|^2 = F(rho_a, sigma_a). The maximiser is the polar isometry
    of the cross-overlap operator M† sqrt(sigma), completed isometrically on
    any support of sigma the overlap operator misses.
    """
    _check_layouts(rho_a, sigma_a)
    a_labels = list(rho_a.layout.labels)
    env_labels = [l for l in purification_of_rho.layout.labels if l not in set(a_labels)]
    if not env_labels:
        raise BadPurification("purification carries no environment subsystem")

    ordered = permute(purification_of_rho, a_labels + env_labels)
    d_a = rho_a.layout.total_dim
    d_e = ordered.layout.total_dim // d_a
    m = ordered.amplitudes.reshape(d_a, d_e)

    reduced = m @ m.conj().T
    if float(np.max(np.abs(reduced - rho_a.matrix))) > 1e-8:
        raise BadPurification("supplied state does not purify rho_a")

    w_sig, v_sig = eigh_desc(sigma_a.matrix)
    rank_sigma = int(np.sum(w_sig > RANK_CUTOFF))
    if d_e < rank_sigma:
        raise BadPurification(
            f"environment dim {d_e} below rank {rank_sigma} of sigma_a"
        )

    sqrt_sigma = (v_sig * np.sqrt(np.clip(w_sig, 0.0, None))) @ v_sig.conj().T
    cross = m.conj().T @ sqrt_sigma  # (d_e, d_a)
    u, s, vh = np.linalg.svd(cross, full_matrices=True)
    r = int(np.sum(s > RANK_CUTOFF))
    w_map = vh[:r].conj().T @ u[:, :r].conj().T  # (d_a, d_e), isometric on row space

    # Cover any support directions of sigma the cross operator misses.
    proj = vh[:r].conj().T @ vh[:r]
    spare_out = u[:, r:]
    extra = []
    for k in range(rank_sigma):
        resid = v_sig[:, k] - proj @ v_sig[:, k]
        for z in extra:
            resid = resid - z * np.vdot(z, v_sig[:, k])
        nrm = np.linalg.norm(resid)
        if nrm > 1e-10:
            extra.append(resid / nrm)
    for j, z in enumerate(extra):
        w_map = w_map + np.outer(z, spare_out[:, j].conj())

    partner = (sqrt_sigma @ w_map).reshape(-1)
    partner = partner / np.linalg.norm(partner)
    chi = PureState(ordered.layout, partner)
    return permute(chi, list(purification_of_rho.layout.labels))


@dataclass(frozen=True)
class ConvexityReport:
    """Both spectral upper bounds on the fidelity against a pure target.

    eigen_bound:     F(rho;psi) <= largest eigenvalue of rho.
    component_bound: F(rho;psi) <= best overlap among rho's eigenvectors
                     (the fidelity is a convex mix of those overlaps).
    When F is close to one the best-overlap eigenvector is the top one.
    """

    lambda_max: float
    top_eigenvector: PureState
    best_overlap: float
    best_eigenvalue: float
    best_eigenvector: PureState
    eigen_bound: BoundCheck
    component_bound: BoundCheck

    @property
    def tighter(self) -> BoundCheck:
        if self.component_bound.lhs <= self.eigen_bound.lhs:
            return self.component_bound
        return self.eigen_bound


def max_eig_convexity(rho: DensityMatrix, psi: PureState) -> ConvexityReport:
    if rho.layout != psi.layout:
        raise LayoutMismatch("state layouts differ")
    f = fidelity_pure(rho, psi)
    w, v = eigh_desc(rho.matrix)
    overlaps = np.abs(v.conj().T @ psi.amplitudes) ** 2
    best = int(np.argmax(overlaps))
    return ConvexityReport(
        lambda_max=float(w[0]),
        top_eigenvector=PureState(rho.layout, v[:, 0]),
        best_overlap=float(overlaps[best]),
        best_eigenvalue=float(w[best]),
        best_eigenvector=PureState(rho.layout, v[:, best]),
        eigen_bound=BoundCheck.of(float(w[0]), f, label="eigenvalue_ceiling"),
        component_bound=BoundCheck.of(float(overlaps[best]), f, label="component_ceiling"),
    )


# ---------------------------------------------------------------------------
# randomized property sweep (shared by the CLI and the acceptance suite)
# ---------------------------------------------------------------------------

PROPERTY_NAMES = (
    "triangle",
    "triangle_pure",
    "monotonicity",
    "partner_overlap",
    "component_ceiling",
    "eigenvalue_ceiling",
    "fvdg",
)


def _rand_state(rng: np.random.Generator, layout: SpaceLayout) -> DensityMatrix:
    rank = int(rng.integers(1, layout.total_dim + 1))
    return random_density(layout, rank, rng)


def property_sweep(
    samples: int, dims_cap: int, seed: int, names: Sequence[str] = PROPERTY_NAMES
) -> list[BoundCheck]:
    """Run `samples` random instances of each named inequality.

    Returns the failing checks (empty list = all good). Dimension of each
    instance is drawn from [2, dims_cap].
    """
    rng = np.random.default_rng(seed)
    failures: list[BoundCheck] = []

    def note(check: BoundCheck) -> None:
        if not check.satisfied:
            failures.append(check)

    for _ in range(samples):
        d = int(rng.integers(2, dims_cap + 1))
        lay = SpaceLayout([("Q", d)])

        if "triangle" in names:
            note(check_triangle(_rand_state(rng, lay), _rand_state(rng, lay), _rand_state(rng, lay)))
        if "triangle_pure" in names:
            note(check_triangle_pure(_rand_state(rng, lay), _rand_state(rng, lay), random_pure(lay, rng)))
        if "monotonicity" in names:
            d1 = int(rng.integers(2, max(2, int(np.sqrt(dims_cap))) + 1))
            d2 = int(rng.integers(2, max(2, dims_cap // d1) + 1))
            lay2 = SpaceLayout([("Q", d1), ("R", d2)])
            note(check_monotonicity(_rand_state(rng, lay2), _rand_state(rng, lay2), ["Q"]))
        if "partner_overlap" in names:
            dp = int(rng.integers(2, 5))
            layp = SpaceLayout([("Q", dp)])
            r1 = random_density(layp, dp, rng)
            s1 = random_density(layp, dp, rng)
            phi = None
            from .hilbert import purify

            phi = purify(r1, "E")
            chi = uhlmann_partner(r1, s1, phi)
            note(
                BoundCheck.of(
                    abs(phi.overlap(chi)) ** 2,
                    fidelity(r1, s1),
                    label="partner_overlap",
                    tol=1e-8,
                )
            )
        if "component_ceiling" in names or "eigenvalue_ceiling" in names:
            rep = max_eig_convexity(_rand_state(rng, lay), random_pure(lay, rng))
            if "component_ceiling" in names:
                note(rep.component_bound)
            if "eigenvalue_ceiling" in names:
                note(rep.eigen_bound)
        if "fvdg" in names:
            lo, hi = check_fvdg(_rand_state(rng, lay), _rand_state(rng, lay))
            note(lo)
            note(hi)

    return failures
