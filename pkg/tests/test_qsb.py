"""Shared broadcasting: constructions, deficit measurement, and the chain argument."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsblab.channels import KrausChannel, apply
from qsblab.errors import (
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
from qsblab.hilbert import (
    Isometry,
    PureState,
    SpaceLayout,
    apply_isometry,
    basis_state,
    partial_trace,
    random_pure,
    tensor,
)
from qsblab.metrics import fidelity_pure, fidelity_states
from qsblab.qsb import (
    CLONING_CEILING,
    QsbInstance,
    asymptotic_ladder,
    broadcast_fidelities,
    chain_constants,
    chain_verify,
    cloner_baseline,
    default_probe_states,
    epsilon_threshold,
    extract_product_approx,
    gram_schmidt_residual,
    lambda_max_rank2,
    max_overlap_pair,
    measure_eps,
    overlap_lower_bound,
    perfect_qsb_construct,
    perturbed_perfect_instance,
    product_floors,
)


def _haar_iso(rows, cols, rng):
    g = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _random_instance(d_s, d_a, d_b, d_c, seed):
    """Isometric-channel instance with Haar-random pieces (no optimisation)."""
    rng = np.random.default_rng(seed)
    lay_s = SpaceLayout([("S", d_s)])
    lay_abc = SpaceLayout([("A", d_a), ("B", d_b), ("C", d_c)])
    chan = KrausChannel(lay_s, lay_abc, (_haar_iso(d_a * d_b * d_c, d_s, rng),))
    vab = Isometry(lay_s, SpaceLayout([("A", d_a), ("B", d_b)]), _haar_iso(d_a * d_b, d_s, rng))
    vac = Isometry(lay_s, SpaceLayout([("A", d_a), ("C", d_c)]), _haar_iso(d_a * d_c, d_s, rng))
    return QsbInstance(chan, vab, vac)


# ---------------------------------------------------------------------------
# perfect construction
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dims", [(2, 2, 2, 2), (2, 3, 2, 1), (1, 1, 1, 1), (3, 4, 2, 3)])
def test_perfect_construction_has_no_deficit(dims):
    inst = perfect_qsb_construct(*dims)
    probes = default_probe_states(inst.source_layout, seed=0, haar_count=20)
    eps_hat, pairs = measure_eps(inst, probes)
    assert eps_hat <= 1e-12
    assert all(p.worst >= 1.0 - 1e-12 for p in pairs)


def test_perfect_construction_rejections():
    with pytest.raises(NoPerfectQsb):
        perfect_qsb_construct(3, 2, 2, 2)
    with pytest.raises(InvariantViolation):
        perfect_qsb_construct(2, 2, 0, 2)


def test_instance_validation():
    inst = perfect_qsb_construct(2, 2, 2, 2)
    lay_s = inst.source_layout
    # two-subsystem channel output is not a broadcast channel
    lay_ab = SpaceLayout([("A", 2), ("B", 2)])
    chan2 = KrausChannel(lay_s, lay_ab, (np.kron(np.eye(2), np.array([[1.0], [0.0]])),))
    with pytest.raises(InvariantViolation):
        QsbInstance(chan2, inst.v_abs, inst.v_acs)
    # representation landing on the wrong pair
    with pytest.raises(LayoutMismatch):
        QsbInstance(inst.channel, inst.v_acs, inst.v_acs)


def test_instance_json_roundtrip():
    inst = perturbed_perfect_instance(2, 2, 2, 2, 0.05)
    back = QsbInstance.from_json(inst.to_json())
    probes = default_probe_states(inst.source_layout, seed=1, haar_count=10)
    e1, _ = measure_eps(inst, probes)
    e2, _ = measure_eps(back, probes)
    assert e1 == pytest.approx(e2, abs=1e-12)
    assert back.d_s == 2 and back.d_a == 2 and back.d_b == 2 and back.d_c == 2


# ---------------------------------------------------------------------------
# deficit measurement
# ---------------------------------------------------------------------------


def test_measure_eps_guards():
    inst = perfect_qsb_construct(2, 2, 2, 2)
    with pytest.raises(EmptyInput):
        measure_eps(inst, [])
    with pytest.raises(LayoutMismatch):
        measure_eps(inst, [random_pure(SpaceLayout([("X", 2)]), 0)])


def test_measure_eps_monotone_in_probe_set():
    inst = _random_instance(2, 2, 2, 2, seed=3)
    probes = default_probe_states(inst.source_layout, seed=4, haar_count=30)
    e_small, _ = measure_eps(inst, probes[:5])
    e_full, _ = measure_eps(inst, probes)
    assert e_full >= e_small - 1e-15


def test_fidelities_match_slow_path():
    inst = _random_instance(2, 2, 2, 2, seed=5)
    rng = np.random.default_rng(6)
    for _ in range(10):
        psi = random_pure(inst.source_layout, rng)
        fast = broadcast_fidelities(inst, psi)
        rho = apply(inst.channel, psi.density())
        slow_ab = fidelity_pure(partial_trace(rho, ["A", "B"]), apply_isometry(inst.v_abs, psi))
        slow_ac = fidelity_pure(partial_trace(rho, ["A", "C"]), apply_isometry(inst.v_acs, psi))
        assert fast.f_ab == pytest.approx(slow_ab, abs=1e-10)
        assert fast.f_ac == pytest.approx(slow_ac, abs=1e-10)


def test_default_probe_states_census():
    lay = SpaceLayout([("S", 3)])
    probes = default_probe_states(lay, seed=0, haar_count=7, phase_count=4)
    assert len(probes) == 3 + 3 * 4 + 7  # basis + pairs x phases + haar
    no_basis = default_probe_states(lay, seed=0, haar_count=7, phase_count=4, include_basis=False)
    assert len(no_basis) == 3 * 4 + 7
    again = default_probe_states(lay, seed=0, haar_count=7, phase_count=4)
    assert all(
        np.array_equal(p.amplitudes, q.amplitudes) for p, q in zip(probes, again)
    )


def test_perturbed_deficit_is_exact():
    for dims, w in [((2, 2, 2, 2), 0.01), ((2, 2, 3, 2), 0.05)]:
        inst = perturbed_perfect_instance(*dims, w)
        probes = default_probe_states(inst.source_layout, seed=2, haar_count=25)
        eps_hat, _ = measure_eps(inst, probes)
        d_a, d_b, d_c = dims[1], dims[2], dims[3]
        expect = w * (1.0 - 1.0 / (d_a * max(d_b, d_c)))
        assert eps_hat == pytest.approx(expect, abs=1e-10)


# ---------------------------------------------------------------------------
# product extraction
# ---------------------------------------------------------------------------


def test_extraction_beats_floors_both_branches():
    inst = perturbed_perfect_instance(2, 2, 2, 2, 1e-6)
    probes = default_probe_states(inst.source_layout, seed=7, haar_count=10)
    eps_hat, _ = measure_eps(inst, probes)
    assert eps_hat > 0.0
    states = [basis_state(inst.source_layout, k) for k in range(2)] + [probes[3]]
    for branch in ("B", "C"):
        floors = product_floors(eps_hat, branch)
        for psi in states:
            ext = extract_product_approx(inst, psi, branch)
            assert ext.primary_branch == branch
            assert ext.fidelity_ab >= max(floors["floor_ab"], 0.0) - 1e-12
            assert ext.fidelity_ac >= max(floors["floor_ac"], 0.0) - 1e-12
            assert ext.fidelity_product_abc >= max(floors["floor_abc"], 0.0) - 1e-12


def test_extraction_guards():
    inst = perfect_qsb_construct(2, 2, 2, 2)
    psi = basis_state(inst.source_layout, 0)
    with pytest.raises(InvariantViolation):
        extract_product_approx(inst, psi, primary_branch="A")
    with pytest.raises(LayoutMismatch):
        extract_product_approx(inst, random_pure(SpaceLayout([("X", 2)]), 0))


def test_product_floor_values_and_swap():
    fb = product_floors(1e-8, "B")
    assert fb["floor_ab"] == pytest.approx(1.0 - 2e-4, abs=1e-12)
    assert fb["floor_ac"] == pytest.approx(1.0 - 3.4 * 1e-1, abs=1e-12)
    assert fb["floor_abc"] == pytest.approx(1.0 - 3.0 * 1e-1, abs=1e-12)
    fc = product_floors(1e-8, "C")
    assert fc["floor_ac"] == fb["floor_ab"] and fc["floor_ab"] == fb["floor_ac"]
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(BadEpsilon):
            product_floors(bad)


# ---------------------------------------------------------------------------
# overlap geometry
# ---------------------------------------------------------------------------


def test_overlap_lower_bound_values():
    assert overlap_lower_bound(3, 2) == pytest.approx(0.5)
    assert overlap_lower_bound(5, 2) == pytest.approx(math.sqrt(3.0 / 8.0))
    with pytest.raises(BoundVacuous):
        overlap_lower_bound(2, 2)
    with pytest.raises(InvariantViolation):
        overlap_lower_bound(0, 2)


def test_max_overlap_pair_finds_planted_pair():
    lay = SpaceLayout([("Q", 4)])
    vecs = [basis_state(lay, k) for k in range(3)]
    amps = np.zeros(4, dtype=np.complex128)
    amps[0] = math.sqrt(0.9)
    amps[1] = math.sqrt(0.1)
    vecs.append(PureState(lay, amps))
    (i, j), val = max_overlap_pair(vecs)
    assert (i, j) == (0, 3)
    assert val == pytest.approx(math.sqrt(0.9), abs=1e-12)


def test_max_overlap_pair_guards():
    lay = SpaceLayout([("Q", 2)])
    with pytest.raises(EmptyInput):
        max_overlap_pair([basis_state(lay, 0)])
    with pytest.raises(LayoutMismatch):
        max_overlap_pair([basis_state(lay, 0), basis_state(SpaceLayout([("R", 2)]), 0)])


@given(seed=st.integers(0, 10**6))
@settings(max_examples=30)
def test_crowded_vectors_always_meet_bound(seed):
    # m > d forces a close pair; the scan must find one at or above the bound
    rng = np.random.default_rng(seed)
    lay = SpaceLayout([("Q", 2)])
    vecs = [random_pure(lay, rng) for _ in range(5)]
    _, val = max_overlap_pair(vecs)  # raises internally if the bound fails
    assert val >= overlap_lower_bound(5, 2) - 1e-12


def test_gram_schmidt_residual_geometry():
    lay = SpaceLayout([("Q", 3)])
    phi1 = random_pure(lay, 8)
    phi2 = random_pure(lay, 9)
    res = gram_schmidt_residual(phi1, phi2, 0.0)
    assert abs(phi1.overlap(res)) < 1e-12
    assert np.linalg.norm(res.amplitudes) == pytest.approx(1.0)
    rot = gram_schmidt_residual(phi1, phi2, 0.7)
    assert np.allclose(rot.amplitudes, np.exp(0.7j) * res.amplitudes)
    with pytest.raises(DegenerateResidual):
        gram_schmidt_residual(phi1, phi1, 0.0)


@given(
    a=st.floats(0.05, 0.95),
    f12=st.floats(0.0, 1.0),
    phase=st.floats(0.0, 2.0 * math.pi),
)
@settings(max_examples=60)
def test_lambda_max_matches_eigensolver(a, f12, phase):
    alpha = math.sqrt(a) * np.exp(1j * phase)
    beta = math.sqrt(1.0 - a)
    # realise the overlap exactly in dim 2
    v1 = np.array([1.0, 0.0], dtype=np.complex128)
    v2 = np.array([math.sqrt(f12), math.sqrt(max(1.0 - f12, 0.0))], dtype=np.complex128)
    m = abs(alpha) ** 2 * np.outer(v1, v1.conj()) + abs(beta) ** 2 * np.outer(v2, v2.conj())
    top = float(np.linalg.eigvalsh(m)[-1])
    assert lambda_max_rank2(alpha, beta, f12) == pytest.approx(top, abs=1e-10)


def test_lambda_max_balanced_tiny_overlap_is_stable():
    # catastrophic-cancellation regime: naive 1 - 4|ab|^2(1-f) loses all digits
    val = lambda_max_rank2(1 / math.sqrt(2), 1 / math.sqrt(2), 1e-16)
    assert val == pytest.approx(0.5 * (1.0 + 1e-8), abs=1e-15)


def test_lambda_max_guards():
    with pytest.raises(BadAmplitudes):
        lambda_max_rank2(1.0, 1.0, 0.5)
    with pytest.raises(BadAmplitudes):
        lambda_max_rank2(1.0, 0.0, 1.5)


# ---------------------------------------------------------------------------
# cloning baseline
# ---------------------------------------------------------------------------


def test_cloner_hits_five_sixths_everywhere():
    lay = SpaceLayout([("Q", 2)])
    rng = np.random.default_rng(10)
    states = [basis_state(lay, 0), basis_state(lay, 1)] + [random_pure(lay, rng) for _ in range(10)]
    for psi in states:
        rho_b, rho_c = cloner_baseline(psi)
        assert fidelity_pure(rho_b, psi) == pytest.approx(CLONING_CEILING, abs=1e-12)
        assert fidelity_pure(rho_c, psi) == pytest.approx(CLONING_CEILING, abs=1e-12)
        assert np.allclose(rho_b.matrix, rho_c.matrix, atol=1e-12)


def test_cloner_rejects_non_qubits():
    with pytest.raises(BadDim):
        cloner_baseline(random_pure(SpaceLayout([("Q", 3)]), 0))


# ---------------------------------------------------------------------------
# chain constants and thresholds
# ---------------------------------------------------------------------------


def test_chain_constants_exact_values():
    rep = chain_constants(1e-16, 2)
    assert rep.eps_prime_b == 2e-8
    assert rep.eps_prime_c == pytest.approx(3.4e-2, rel=1e-12)
    assert rep.eps_dprime_b == 2.0 * math.sqrt(2e-8) + 2e-8
    assert rep.eps_tprime_b == pytest.approx(
        3.0 * math.sqrt(2e-8) + math.sqrt(rep.eps_dprime_b) + rep.eps_dprime_b, rel=1e-14
    )
    assert rep.shared_closeness_deficit == pytest.approx(
        4.0 * (math.sqrt(2e-8) + math.sqrt(rep.eps_tprime_b)), rel=1e-14
    )
    assert rep.eps_iv_b == pytest.approx(3.8 * (1e-16) ** (1 / 64), rel=1e-12)
    assert rep.eps_iv_c == pytest.approx(3.9 * (1e-16) ** (1 / 128), rel=1e-12)
    assert rep.admissible_b and not rep.admissible_c
    assert rep.eps_zero == 0.6e-175

    data = rep.to_json()
    assert data["constants"]["eps_prime_b"] == 2e-8
    assert data["all_satisfied"] is True  # no checks recorded yet
    assert rep.csv_rows() == []


def test_chain_constants_guards():
    for bad in (0.0, -1e-3, 1.1):
        with pytest.raises(BadEpsilon):
            chain_constants(bad, 2)
    with pytest.raises(InvariantViolation):
        chain_constants(1e-4, 0)


def test_asymptotic_ladder_bounds_exact_constants():
    ladder = asymptotic_ladder()
    exps = {k: e for k, (_, e) in ladder.items()}
    assert exps == {
        "eps_prime_b": 1 / 2,
        "eps_prime_c": 1 / 8,
        "eps_dprime_b": 1 / 4,
        "eps_dprime_c": 1 / 16,
        "eps_tprime_b": 1 / 8,
        "eps_tprime_c": 1 / 32,
        "shared_closeness": 1 / 16,
        "eps_iv_b": 1 / 64,
        "eps_iv_c": 1 / 128,
    }
    # collapsing onto the weakest exponent can only raise the value
    for eps in (1e-3, 1e-8, 1e-20):
        rep = chain_constants(eps, 2)
        exact = {
            "eps_prime_b": rep.eps_prime_b,
            "eps_prime_c": rep.eps_prime_c,
            "eps_dprime_b": rep.eps_dprime_b,
            "eps_dprime_c": rep.eps_dprime_c,
            "eps_tprime_b": rep.eps_tprime_b,
            "eps_tprime_c": rep.eps_tprime_c,
            "shared_closeness": rep.shared_closeness_deficit,
        }
        for key, val in exact.items():
            c, e = ladder[key]
            assert val <= c * eps ** e + 1e-12, key


def test_epsilon_threshold_regimes():
    thr, fixed, dim = epsilon_threshold(1)
    assert thr == fixed == 0.6e-175 and dim == 2.4e-14
    thr2, fixed2, dim2 = epsilon_threshold(2)
    assert thr2 == fixed2 and dim2 == pytest.approx(2.4e-14 / 256.0)
    # the dimension-dependent candidate only takes over for astronomically
    # large shared subsystems (d_a^8 beyond ~4e161)
    thr_big, _, dim_big = epsilon_threshold(10**21)
    assert thr_big == dim_big == pytest.approx(2.4e-14 / 1e168)
    with pytest.raises(InvariantViolation):
        epsilon_threshold(0)


# ---------------------------------------------------------------------------
# chain verification
# ---------------------------------------------------------------------------


def test_chain_verify_guards():
    inst = perfect_qsb_construct(2, 2, 2, 2)
    basis = [basis_state(inst.source_layout, k) for k in range(2)]
    with pytest.raises(ChainNotApplicable):
        chain_verify(inst, basis, 0.0)
    with pytest.raises(BadEpsilon):
        chain_verify(inst, basis, 1.5, allow_trivial=True)
    with pytest.raises(InvariantViolation):
        chain_verify(inst, basis[:1], 0.0, allow_trivial=True)
    with pytest.raises(InvariantViolation):
        chain_verify(inst, [basis[0], basis[0]], 0.0, allow_trivial=True)


def test_chain_verify_trivial_instance_all_clear():
    inst = perturbed_perfect_instance(2, 2, 2, 2, 1e-6)
    basis = [basis_state(inst.source_layout, k) for k in range(2)]
    report = chain_verify(inst, basis, 0.0, allow_trivial=True, seed=1)
    assert report.all_satisfied
    assert report.selected_pair is not None
    assert report.eps >= 1e-6 * (1.0 - 0.25) - 1e-12  # at least the measured deficit
    assert not report.cloning_contradiction
    # conditional floors are recorded but vacuous without the crowding premise
    labels = {c.label: c for c in report.checks}
    assert labels["shared_closeness_floor"].vacuous
    assert any(l.startswith("product_floor_ab[") and not c.vacuous for l, c in labels.items())


def test_chain_verify_enforced_on_optimized_instance():
    from qsblab.optimize import OptimizeConfig, SampleSpec, optimize_qsb

    cfg = OptimizeConfig(
        d_s=3,
        d_a=2,
        d_b=2,
        d_c=2,
        restarts=2,
        max_iters=250,
        sample_spec=SampleSpec(haar_count=40),
        seed=0,
    )
    point = optimize_qsb(cfg)
    inst = point.best_instance
    basis = [basis_state(inst.source_layout, k) for k in range(3)]
    report = chain_verify(inst, basis, point.eps_hat, seed=2)
    assert report.all_satisfied
    assert report.selected_pair is not None
    # crowding on the shared subsystem is enforced here: three copies in dim 2
    labels = {c.label: c for c in report.checks}
    crowd = labels["crowding_overlap_floor"]
    assert not crowd.vacuous and crowd.satisfied
    sel = labels["selected_pair_fidelity_floor"]
    assert not sel.vacuous and sel.lhs >= 0.25 - 1e-9
