"""Variational search for the best broadcast instance at fixed dimensions.

The channel is parameterized by a Stinespring isometry U: S -> ABCE and the
two representations by free isometries, so every iterate is a valid instance
by construction and the search runs unconstrained on the isometry manifold.
Worst-case fidelity over a fixed probe family is maximized through a
temperature-annealed soft minimum; the reported value is always the hard
minimum re-measured on the returned instance.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channels import from_stinespring, validate_cpt
from .errors import InvariantViolation, TooLarge
from .hilbert import Isometry, PureState, SpaceLayout, haar_isometry_matrix, _as_rng
from .qsb import QsbInstance, default_probe_states, measure_eps, perfect_qsb_construct

DIM_CAP = 4096
ENV_CAP = 16


@dataclass(frozen=True)
class SampleSpec:
    """Which probe states the objective (and the final measurement) sees."""

    haar_count: int = 200
    phase_count: int = 8
    include_basis: bool = True

    def __post_init__(self):
        if self.haar_count < 0 or self.phase_count < 0:
            raise InvariantViolation("sample counts must be nonnegative")

    def states(self, layout: SpaceLayout, seed) -> list[PureState]:
        return default_probe_states(
            layout,
            seed,
            haar_count=self.haar_count,
            phase_count=self.phase_count,
            include_basis=self.include_basis,
        )


@dataclass(frozen=True)
class OptimizeConfig:
    d_s: int
    d_a: int
    d_b: int
    d_c: int
    env_dim: int | None = None
    restarts: int = 16
    max_iters: int = 2000
    step_init: float = 0.5
    objective: str = "worst_case"
    sample_spec: SampleSpec = field(default_factory=SampleSpec)
    seed: int = 42
    temp_init: float = 10.0
    temp_final: float = 1000.0

    def __post_init__(self):
        for name in ("d_s", "d_a", "d_b", "d_c"):
            if getattr(self, name) < 1:
                raise InvariantViolation(f"{name} must be >= 1")
        if self.restarts < 1 or self.max_iters < 1:
            raise InvariantViolation("restarts and max_iters must be >= 1")
        if self.step_init <= 0.0:
            raise InvariantViolation("step_init must be positive")
        if self.objective not in ("worst_case", "average"):
            raise InvariantViolation(f"unknown objective {self.objective!r}")
        # representation isometries must exist
        if self.d_s > self.d_a * self.d_b or self.d_s > self.d_a * self.d_c:
            raise InvariantViolation(
                f"no isometry embeds dim {self.d_s} into the receiver pairs "
                f"({self.d_a}x{self.d_b}, {self.d_a}x{self.d_c})"
            )
        env = self.resolved_env
        if env < 1 or env > self.d_s * self.d_a * self.d_b * self.d_c:
            raise InvariantViolation(
                f"env_dim {env} outside [1, d_s*d_a*d_b*d_c]; larger adds nothing"
            )
        if self.d_a * self.d_b * self.d_c * env > DIM_CAP:
            raise TooLarge(
                f"total dimension {self.d_a * self.d_b * self.d_c * env} exceeds {DIM_CAP}"
            )

    @property
    def resolved_env(self) -> int:
        if self.env_dim is not None:
            return self.env_dim
        return min(self.d_s * self.d_a * self.d_b * self.d_c, ENV_CAP)

    @property
    def dims4(self) -> tuple[int, int, int, int]:
        return (self.d_a, self.d_b, self.d_c, self.resolved_env)


@dataclass(frozen=True)
class FrontierPoint:
    """Best instance found at one dimension tuple, with its certificate."""

    dims: tuple[int, int, int, int]
    best_worst_fidelity: float
    best_instance: QsbInstance
    iterations_used: int
    winner_restart: int
    eps_hat: float
    restarts: int
    seed: int
    max_fidelity_seen: float
    restart_values: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.best_worst_fidelity <= 1.0:
            raise InvariantViolation(
                f"best_worst_fidelity {self.best_worst_fidelity} outside [0, 1]"
            )

    CSV_HEADER = ("d_s", "d_a", "d_b", "d_c", "best_fidelity", "restarts", "seed")

    def csv_row(self) -> list:
        return [*self.dims, repr(self.best_worst_fidelity), self.restarts, self.seed]

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "best_worst_fidelity": self.best_worst_fidelity,
            "eps_hat": self.eps_hat,
            "iterations_used": self.iterations_used,
            "winner_restart": self.winner_restart,
            "restarts": self.restarts,
            "seed": self.seed,
            "max_fidelity_seen": self.max_fidelity_seen,
            "restart_values": list(self.restart_values),
            "best_instance": self.best_instance.to_json(),
        }


# ---------------------------------------------------------------------------
# objective and gradients
# ---------------------------------------------------------------------------


def branch_values(
    u: np.ndarray,
    vab: np.ndarray,
    vac: np.ndarray,
    psi_cols: np.ndarray,
    dims4: tuple[int, int, int, int],
):
    """Both receiver fidelities and the cached contractions for gradients."""
    d_a, d_b, d_c, d_e = dims4
    n = psi_cols.shape[1]
    t = (u @ psi_cols).reshape(d_a, d_b, d_c, d_e, n)
    pab = (vab @ psi_cols).reshape(d_a, d_b, n)
    pac = (vac @ psi_cols).reshape(d_a, d_c, n)
    wb = np.einsum("abn,abcen->cen", pab.conj(), t)
    wc = np.einsum("acn,abcen->ben", pac.conj(), t)
    f_ab = np.einsum("cen,cen->n", wb, wb.conj()).real
    f_ac = np.einsum("ben,ben->n", wc, wc.conj()).real
    return f_ab, f_ac, (t, pab, pac, wb, wc)


def _soft_value_and_weights(
    f_ab: np.ndarray, f_ac: np.ndarray, temp: float, objective: str
) -> tuple[float, np.ndarray, np.ndarray]:
    n = f_ab.shape[0]
    if objective == "average":
        w = np.full(n, 0.5 / n)
        return float((f_ab.sum() + f_ac.sum()) * 0.5 / n), w, w.copy()
    f = np.concatenate([f_ab, f_ac])
    m = f.min()
    e = np.exp(-temp * (f - m))
    z = e.sum()
    value = float(m - np.log(z) / temp)
    w = e / z
    return value, w[:n], w[n:]


def objective_value_and_grads(
    u: np.ndarray,
    vab: np.ndarray,
    vac: np.ndarray,
    psi_cols: np.ndarray,
    dims4: tuple[int, int, int, int],
    temp: float,
    objective: str = "worst_case",
):
    """Smoothed objective and its conjugate-coordinate gradients.

    The gradients are with respect to conj(M), so a real perturbation of an
    entry moves the objective by 2*Re(g) per unit and an imaginary one by
    2*Im(g); that is the convention the finite-difference check uses.
    """
    d_a, d_b, d_c, d_e = dims4
    d_s = psi_cols.shape[0]
    f_ab, f_ac, (t, pab, pac, wb, wc) = branch_values(u, vab, vac, psi_cols, dims4)
    value, w_ab, w_ac = _soft_value_and_weights(f_ab, f_ac, temp, objective)
    pc = psi_cols.conj()
    g_u = np.einsum("n,abn,cen,sn->abces", w_ab, pab, wb, pc) + np.einsum(
        "n,acn,ben,sn->abces", w_ac, pac, wc, pc
    )
    g_vab = np.einsum("n,cen,abcen,sn->abs", w_ab, wb.conj(), t, pc)
    g_vac = np.einsum("n,ben,abcen,sn->acs", w_ac, wc.conj(), t, pc)
    return (
        value,
        g_u.reshape(d_a * d_b * d_c * d_e, d_s),
        g_vab.reshape(d_a * d_b, d_s),
        g_vac.reshape(d_a * d_c, d_s),
    )


def _qr_positive(m: np.ndarray) -> np.ndarray:
    """Thin orthonormal factor with the triangular diagonal made positive."""
    q, r = np.linalg.qr(m)
    d = np.diagonal(r).copy()
    small = np.abs(d) < 1e-300
    d[small] = 1.0
    return q * (d / np.abs(d))[None, :]


def _tangent(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    vg = v.conj().T @ g
    return g - v @ ((vg + vg.conj().T) * 0.5)


def riemannian_step(isometry: Isometry, euclidean_gradient: np.ndarray, step: float) -> Isometry:
    """Project the gradient to the tangent space, step, and re-orthonormalize.

    With the positive-diagonal convention the retraction of a zero step is
    the input itself up to roundoff.
    """
    v = isometry.matrix
    if euclidean_gradient.shape != v.shape:
        raise InvariantViolation(
            f"gradient shape {euclidean_gradient.shape} does not match {v.shape}"
        )
    xi = _tangent(v, np.asarray(euclidean_gradient, dtype=np.complex128))
    return Isometry(
        isometry.input_layout,
        isometry.output_layout,
        _qr_positive(v + step * xi),
    )


# ---------------------------------------------------------------------------
# the search itself
# ---------------------------------------------------------------------------


@dataclass
class _RestartOutcome:
    index: int
    best_hard: float
    params: tuple[np.ndarray, np.ndarray, np.ndarray]
    iterations: int
    max_seen: float


def _run_restart(
    config: OptimizeConfig,
    psi_cols: np.ndarray,
    init: tuple[np.ndarray, np.ndarray, np.ndarray],
    index: int,
) -> _RestartOutcome:
    dims4 = config.dims4
    u, vab, vac = (m.copy() for m in init)
    temps = np.geomspace(config.temp_init, config.temp_final, config.max_iters)
    step = config.step_init
    best_hard = -np.inf
    best_params = (u.copy(), vab.copy(), vac.copy())
    max_seen = 0.0
    iters = 0

    for it in range(config.max_iters):
        iters = it + 1
        temp = float(temps[it])
        f_ab, f_ac, (t, pab, pac, wb, wc) = branch_values(u, vab, vac, psi_cols, dims4)
        hard = float(min(f_ab.min(), f_ac.min()))
        max_seen = max(max_seen, float(f_ab.max()), float(f_ac.max()))
        if hard > best_hard:
            best_hard = hard
            best_params = (u.copy(), vab.copy(), vac.copy())
        if best_hard >= 1.0 - 1e-9:
            break

        value, w_ab, w_ac = _soft_value_and_weights(f_ab, f_ac, temp, config.objective)
        pc = psi_cols.conj()
        g_u = np.einsum("n,abn,cen,sn->abces", w_ab, pab, wb, pc) + np.einsum(
            "n,acn,ben,sn->abces", w_ac, pac, wc, pc
        )
        g_u = g_u.reshape(u.shape)
        g_vab = np.einsum("n,cen,abcen,sn->abs", w_ab, wb.conj(), t, pc).reshape(vab.shape)
        g_vac = np.einsum("n,ben,abcen,sn->acs", w_ac, wc.conj(), t, pc).reshape(vac.shape)

        xi_u = _tangent(u, g_u)
        xi_vab = _tangent(vab, g_vab)
        xi_vac = _tangent(vac, g_vac)
        gnorm2 = (
            float(np.vdot(xi_u, xi_u).real)
            + float(np.vdot(xi_vab, xi_vab).real)
            + float(np.vdot(xi_vac, xi_vac).real)
        )
        if np.sqrt(gnorm2) < 1e-10:
            break

        # Armijo backtracking on the smoothed objective; directional
        # derivative along the tangent triple is 2*gnorm2.
        step = min(step * 1.3, 10.0)
        accepted = False
        trial = step
        while trial > 1e-14:
            u2 = _qr_positive(u + trial * xi_u)
            vab2 = _qr_positive(vab + trial * xi_vab)
            vac2 = _qr_positive(vac + trial * xi_vac)
            f_ab2, f_ac2, _ = branch_values(u2, vab2, vac2, psi_cols, dims4)
            value2, _, _ = _soft_value_and_weights(f_ab2, f_ac2, temp, config.objective)
            if value2 >= value + 1e-4 * trial * 2.0 * gnorm2:
                u, vab, vac = u2, vab2, vac2
                step = trial
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break

    return _RestartOutcome(index, best_hard, best_params, iters, max_seen)


def _random_init(
    config: OptimizeConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d_a, d_b, d_c, d_e = config.dims4
    d_s = config.d_s
    return (
        haar_isometry_matrix(rng, d_a * d_b * d_c * d_e, d_s),
        haar_isometry_matrix(rng, d_a * d_b, d_s),
        haar_isometry_matrix(rng, d_a * d_c, d_s),
    )


def _perfect_init(config: OptimizeConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    inst = perfect_qsb_construct(config.d_s, config.d_a, config.d_b, config.d_c)
    d_a, d_b, d_c, d_e = config.dims4
    u = np.zeros((d_a * d_b * d_c * d_e, config.d_s), dtype=np.complex128)
    # single-Kraus channel sits in the env=0 slice; env index is last
    u[0::d_e, :] = inst.channel.kraus_ops[0]
    return (u, inst.v_abs.matrix.copy(), inst.v_acs.matrix.copy())


def _instance_from_params(
    config: OptimizeConfig, params: tuple[np.ndarray, np.ndarray, np.ndarray]
) -> QsbInstance:
    u, vab, vac = params
    lay_s = SpaceLayout([("S", config.d_s)])
    lay_abce = SpaceLayout(
        [("A", config.d_a), ("B", config.d_b), ("C", config.d_c), ("E", config.resolved_env)]
    )
    lay_ab = SpaceLayout([("A", config.d_a), ("B", config.d_b)])
    lay_ac = SpaceLayout([("A", config.d_a), ("C", config.d_c)])
    channel = from_stinespring(Isometry(lay_s, lay_abce, u), ["E"])
    return QsbInstance(
        channel,
        Isometry(lay_s, lay_ab, vab),
        Isometry(lay_s, lay_ac, vac),
    )


def optimize_qsb(
    config: OptimizeConfig,
    initial_points: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]] = (),
) -> FrontierPoint:
    """Best instance over restarts; deterministic for a fixed config.

    Restart slots are filled first by the analytic perfect construction
    (when one exists), then by supplied warm starts, then by Haar-random
    draws. Ties between restarts break toward the lower index, so thread
    scheduling never changes the winner.
    """
    lay_s = SpaceLayout([("S", config.d_s)])
    probes = config.sample_spec.states(lay_s, np.random.default_rng((config.seed, 977)))
    if not probes:
        raise InvariantViolation("sample_spec produced no probe states")
    psi_cols = np.stack([p.amplitudes for p in probes], axis=1)

    inits: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    if config.d_s <= config.d_a:
        inits.append(_perfect_init(config))
    for p in initial_points:
        u, vab, vac = p
        d_a, d_b, d_c, d_e = config.dims4
        want = (
            (d_a * d_b * d_c * d_e, config.d_s),
            (d_a * d_b, config.d_s),
            (d_a * d_c, config.d_s),
        )
        got = (u.shape, vab.shape, vac.shape)
        if got != want:
            raise InvariantViolation(f"warm start shapes {got} do not match {want}")
        inits.append((u, vab, vac))
    idx = 0
    while len(inits) < max(config.restarts, len(inits)):
        rng = np.random.default_rng((config.seed, idx))
        inits.append(_random_init(config, rng))
        idx += 1

    threads = int(os.environ.get("QSBLAB_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(
                pool.map(
                    lambda pair: _run_restart(config, psi_cols, pair[1], pair[0]),
                    enumerate(inits),
                )
            )
    else:
        outcomes = [_run_restart(config, psi_cols, p, i) for i, p in enumerate(inits)]

    winner = max(outcomes, key=lambda o: (o.best_hard, -o.index))
    instance = _instance_from_params(config, winner.params)
    eps_hat, _ = measure_eps(instance, probes)
    return FrontierPoint(
        dims=(config.d_s, config.d_a, config.d_b, config.d_c),
        best_worst_fidelity=1.0 - eps_hat,
        best_instance=instance,
        iterations_used=winner.iterations,
        winner_restart=winner.index,
        eps_hat=eps_hat,
        restarts=len(inits),
        seed=config.seed,
        max_fidelity_seen=max(o.max_seen for o in outcomes),
        restart_values=tuple(o.best_hard for o in outcomes),
    )


def _embed_params(
    params: tuple[np.ndarray, np.ndarray, np.ndarray],
    old: tuple[int, int, int, int, int],
    new: tuple[int, int, int, int, int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-pad a winner at smaller shared/env dims into a larger search space.

    The padded matrices keep orthonormal columns and reproduce the original
    instance's action exactly, so the larger search starts no worse.
    """
    d_s, a0, b0, c0, e0 = old
    _, a1, b1, c1, e1 = new
    if (b0, c0) != (b1, c1):
        raise InvariantViolation("embedding keeps the private dimensions fixed")
    u0, vab0, vac0 = params
    u1 = np.zeros((a1 * b1 * c1 * e1, d_s), dtype=np.complex128)
    t = u0.reshape(a0, b0, c0, e0, d_s)
    u1.reshape(a1, b1, c1, e1, d_s)[:a0, :, :, :e0, :] = t
    vab1 = np.zeros((a1 * b1, d_s), dtype=np.complex128)
    vab1.reshape(a1, b1, d_s)[:a0, :, :] = vab0.reshape(a0, b0, d_s)
    vac1 = np.zeros((a1 * c1, d_s), dtype=np.complex128)
    vac1.reshape(a1, c1, d_s)[:a0, :, :] = vac0.reshape(a0, c0, d_s)
    return (u1, vab1, vac1)


def frontier_sweep(
    d_s: int,
    d_a_values: Sequence[int],
    d_b: int,
    d_c: int,
    config: OptimizeConfig | None = None,
) -> list[FrontierPoint]:
    """Optimize along increasing shared dimension, warm-starting each point.

    The previous winner is zero-padded into the next search space, which
    makes the best-fidelity sequence non-decreasing by construction; a
    decrease is reported as an invariant violation rather than smoothed over.
    """
    values = sorted(set(int(v) for v in d_a_values))
    if not values:
        raise InvariantViolation("empty shared-dimension range")
    points: list[FrontierPoint] = []
    prev: tuple[FrontierPoint, OptimizeConfig] | None = None
    for d_a in values:
        if config is None:
            cfg = OptimizeConfig(d_s=d_s, d_a=d_a, d_b=d_b, d_c=d_c)
        else:
            cfg = replace(config, d_s=d_s, d_a=d_a, d_b=d_b, d_c=d_c, env_dim=None)
        warm: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        if prev is not None:
            point0, cfg0 = prev
            inst0 = point0.best_instance
            params0 = (
                _stinespring_matrix(inst0, cfg0.resolved_env),
                inst0.v_abs.matrix,
                inst0.v_acs.matrix,
            )
            warm.append(
                _embed_params(
                    params0,
                    (d_s, cfg0.d_a, d_b, d_c, cfg0.resolved_env),
                    (d_s, d_a, d_b, d_c, cfg.resolved_env),
                )
            )
        point = optimize_qsb(cfg, initial_points=warm)
        for check in (validate_cpt(point.best_instance.channel),):
            if not check.satisfied:
                raise InvariantViolation(f"swept instance failed {check.label}")
        if points and point.best_worst_fidelity < points[-1].best_worst_fidelity - 1e-9:
            raise InvariantViolation(
                "frontier decreased with growing shared dimension despite embedding"
            )
        points.append(point)
        prev = (point, cfg)
    return points


def _stinespring_matrix(instance: QsbInstance, env_dim: int) -> np.ndarray:
    """Rebuild the S -> ABCE matrix with the env axis last and padded."""
    ops = instance.channel.kraus_ops
    if len(ops) > env_dim:
        raise InvariantViolation(
            f"instance needs env dim {len(ops)}, embedding offers {env_dim}"
        )
    d_out, d_s = ops[0].shape
    u = np.zeros((d_out * env_dim, d_s), dtype=np.complex128)
    view = u.reshape(d_out, env_dim, d_s)
    for e, k in enumerate(ops):
        view[:, e, :] = k
    return u
