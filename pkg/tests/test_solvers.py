import math
from dataclasses import replace

import numpy as np
import pytest

import nisac
from nisac import metrics, solvers
from nisac.channel import array_response
from nisac.metrics import BeamformerSet
from nisac.scenario import ValidationError, with_first_bss
from nisac.solvers import SolveRequest, extract_rank_one

import helpers


@pytest.fixture(scope="module")
def single_pair(desk):
    # M=1, K=1 with two TMTs keeps the FIM nonsingular
    s = replace(desk,
                bs_positions=np.array(desk.bs_positions[:1]),
                cu_positions=np.array(desk.cu_positions[:1, :1]),
                tmt_positions=np.array(desk.tmt_positions[:2]))
    return s, nisac.draw_channels(s, 21)


# -- SolveRequest validation ---------------------------------------------------

def test_request_validation():
    with pytest.raises(ValidationError):
        SolveRequest(mode="sensing")  # missing eta
    with pytest.raises(ValidationError):
        SolveRequest(mode="comm")  # missing epsilon
    with pytest.raises(ValidationError):
        SolveRequest(mode="sensing", sinr_threshold_eta=1.0, crlb_threshold_epsilon=0.1)
    with pytest.raises(ValidationError):
        SolveRequest(mode="comm", crlb_threshold_epsilon=0.1, sinr_threshold_eta=1.0)
    req = SolveRequest(mode="comm", crlb_threshold_epsilon=[0.1, 0.2])
    np.testing.assert_allclose(req.epsilons(2), [0.1, 0.2])
    with pytest.raises(ValidationError):
        req.epsilons(3)


# -- rank-one extraction ----------------------------------------------------------

def test_extract_rank_one_pure():
    F = np.zeros((3, 3), dtype=complex)
    F[0, 0] = 2.0
    f, ratio = extract_rank_one(F)
    np.testing.assert_allclose(f, [math.sqrt(2), 0, 0], atol=1e-12)
    assert ratio == 0.0


def test_extract_rank_one_identity_flagged():
    f, ratio = extract_rank_one(np.eye(2, dtype=complex))
    assert ratio == pytest.approx(1.0)


def test_extract_rank_one_reconstruction():
    rng = np.random.default_rng(4)
    for _ in range(20):
        f0 = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        f, ratio = extract_rank_one(np.outer(f0, f0.conj()))
        assert np.linalg.norm(np.abs(f) - np.abs(f0)) <= 1e-10
        assert ratio <= 1e-12
        # global phase fixed: largest-magnitude entry real nonnegative
        j = np.argmax(np.abs(f))
        assert abs(f[j].imag) <= 1e-12 and f[j].real >= 0


def test_extract_rank_one_rejects_indefinite():
    with pytest.raises(ValueError, match="PSD"):
        extract_rank_one(np.diag([1.0, -0.5]).astype(complex))


# -- sensing SDR -------------------------------------------------------------------

def test_sdr_radar_only_single_pair(single_pair):
    s, ch = single_pair
    req = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=0.0, seed=21)
    rep = nisac.solve_sensing_sdr(s, ch, req)
    assert rep.status == "solved"
    assert max(rep.rank_ratios) <= 1e-6
    p = s.params
    q = metrics.illumination_gain(rep.beamformers, 0, nisac.aod(s, 0, 0), p)
    assert q == pytest.approx(p.max_power_w * p.num_tx_antennas, rel=1e-6)
    # the optimal beam is the conjugate steering vector at full power, up to phase
    a = np.conj(array_response(p.num_tx_antennas, p.antenna_spacing_ratio, nisac.aod(s, 0, 0)))
    f = rep.beamformers.vectors[0, 0]
    cos = abs(np.vdot(a, f)) / (np.linalg.norm(a) * np.linalg.norm(f))
    assert cos == pytest.approx(1.0, abs=1e-6)


def test_sdr_infeasible_eta(desk, desk_channels):
    req = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=1e20, seed=1)
    rep = nisac.solve_sensing_sdr(desk, desk_channels, req)
    assert rep.status == "infeasible"


def test_sdr_audit_and_bound(desk, desk_channels):
    req = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=1)
    rep = nisac.solve_sensing_sdr(desk, desk_channels, req)
    assert rep.status == "solved"
    assert rep.audit["ok"]
    assert np.min(rep.sinr) >= 10.0 * (1 - 1e-6)
    assert np.max(rep.per_bs_power_w) <= desk.params.max_power_w * (1 + 1e-6)
    # relaxation bound below the extracted point's true objective
    assert rep.sdp_objective <= rep.max_crlb * (1 + 1e-6)


# -- power minimization --------------------------------------------------------------

def test_power_min_single_user_analytic(single_pair):
    s, ch = single_pair
    eta = 10.0
    r = solvers.solve_power_min(s, ch, eta, None)
    assert r.status == "optimal"
    want = eta * s.params.comm_noise_power_w / (
        s.params.max_power_w * np.linalg.norm(ch.comm[0, 0, 0]) ** 2)
    assert r.ratio == pytest.approx(want, rel=1e-5)


def test_power_min_monotone_in_epsilon(single_pair):
    s, ch = single_pair
    req0 = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=0.0, seed=21)
    cmin = nisac.solve_sensing_sdr(s, ch, req0).max_crlb
    a1 = solvers.solve_power_min(s, ch, 0.0, 2.0 * cmin).ratio
    a2 = solvers.solve_power_min(s, ch, 0.0, 4.0 * cmin).ratio
    assert a2 <= a1 * (1 + 1e-6)
    # eta = 0: power is set by the CRLB constraint alone
    assert a1 > 0


# -- bisection -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def m1(desk):
    s = with_first_bss(desk, 1)
    return s, nisac.draw_channels(s, 33)


def test_bisection_certificate(m1):
    s, ch = m1
    cmin = nisac.solve_sensing_sdr(
        s, ch, SolveRequest(mode="sensing", algorithm="sdr",
                            sinr_threshold_eta=0.0, seed=33)).max_crlb
    req = SolveRequest(mode="comm", algorithm="bisection",
                       crlb_threshold_epsilon=2.0 * cmin, seed=33)
    rep = nisac.solve_comm_bisection(s, ch, req)
    assert rep.status == "solved"
    assert 0.999 <= rep.extras["certificate_ratio"] <= 1.0001
    # the polished feasible point sits within the fixed-direction loss of eta*
    assert rep.min_sinr >= rep.extras["eta_star"] * (1 - 5e-3)
    assert np.all(rep.crlb_m2 <= 2.0 * cmin * (1 + 1e-6))
    # bracketing invariant: every accepted ratio <= 1, every rejected > 1
    for eta, a in rep.objective_trace:
        if eta <= rep.extras["eta_star"]:
            assert a <= 1.0 + 1e-9


def test_bisection_interference_free_bound(m1, desk):
    s0, _ = m1
    s = replace(s0, cu_positions=s0.cu_positions[:, :1])
    ch = nisac.draw_channels(s, 5)
    bound = s.params.max_power_w * np.linalg.norm(ch.comm[0, 0, 0]) ** 2 \
        / s.params.comm_noise_power_w
    req = SolveRequest(mode="comm", algorithm="bisection",
                       crlb_threshold_epsilon=1e12, seed=5)
    rep = nisac.solve_comm_bisection(s, ch, req)
    assert rep.objective == pytest.approx(bound, rel=1e-3)


def test_bisection_requires_single_bs(desk, desk_channels):
    req = SolveRequest(mode="comm", algorithm="bisection", crlb_threshold_epsilon=1.0, seed=1)
    with pytest.raises(ValidationError, match="M=1"):
        nisac.solve_comm_bisection(desk, desk_channels, req)


def test_bisection_epsilon_below_radar_only(m1):
    s, ch = m1
    cmin = nisac.solve_sensing_sdr(
        s, ch, SolveRequest(mode="sensing", algorithm="sdr",
                            sinr_threshold_eta=0.0, seed=33)).max_crlb
    req = SolveRequest(mode="comm", algorithm="bisection",
                       crlb_threshold_epsilon=0.5 * cmin, seed=33)
    assert nisac.solve_comm_bisection(s, ch, req).status == "infeasible"


# -- feasibility initialization ----------------------------------------------------------

def test_feasible_init_eta_zero(desk, desk_channels):
    b = nisac.feasible_init(desk, desk_channels, 0.0)
    np.testing.assert_allclose(metrics.per_bs_power(b), desk.params.max_power_w, rtol=1e-12)


def test_feasible_init_meets_threshold(desk, desk_channels):
    eta = 10.0
    b = nisac.feasible_init(desk, desk_channels, eta)
    assert np.min(metrics.all_sinrs(desk, desk_channels, b)) >= eta * (1 - 1e-8)
    assert np.max(metrics.per_bs_power(b)) <= desk.params.max_power_w * (1 + 1e-9)


def test_feasible_init_boundary(desk, desk_channels):
    # locate the feasibility boundary by bisection on the max power ratio
    lo, hi = 1.0, 1e7
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        r = solvers.solve_power_min(desk, desk_channels, mid, None,
                                    objective="power_maxratio", ratio_cap=4.0)
        if r.status == "optimal" and r.ratio <= 1.0:
            lo = mid
        else:
            hi = mid
    eta_max = lo
    with pytest.raises(nisac.InfeasibleError):
        nisac.feasible_init(desk, desk_channels, eta_max * 1.05)
    b = nisac.feasible_init(desk, desk_channels, eta_max * 0.95)
    assert np.min(metrics.all_sinrs(desk, desk_channels, b)) >= eta_max * 0.95 * (1 - 1e-8)


# -- SCA ------------------------------------------------------------------------------------

def test_sensing_sca_known_optimum(single_pair):
    s, ch = single_pair
    req = SolveRequest(mode="sensing", algorithm="sca", sinr_threshold_eta=0.0, seed=21)
    rep = nisac.solve_sensing_sca(s, ch, req)
    assert rep.status == "solved"
    # radar-only optimum: full-power conjugate steering beam
    p = s.params
    a = np.conj(array_response(p.num_tx_antennas, p.antenna_spacing_ratio, nisac.aod(s, 0, 0)))
    b_opt = BeamformerSet(vectors=(math.sqrt(p.max_power_w) * a /
                                   np.linalg.norm(a))[None, None, :])
    c_opt = nisac.crlb(s, ch, b_opt, 0).crlb_m2
    assert rep.max_crlb <= c_opt * (1 + 1e-3)


def test_sensing_sca_monotone_and_near_sdr(desk, desk_channels):
    req = SolveRequest(mode="sensing", algorithm="sca", sinr_threshold_eta=10.0, seed=1)
    rep = nisac.solve_sensing_sca(desk, desk_channels, req)
    assert rep.status == "solved"
    tr = rep.objective_trace
    assert all(tr[i + 1] <= tr[i] * (1 + 1e-6) for i in range(len(tr) - 1))
    sdr = nisac.solve_sensing_sdr(
        desk, desk_channels,
        SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=1))
    assert rep.max_crlb <= sdr.max_crlb * 1.02
    assert rep.max_crlb >= sdr.sdp_objective * (1 - 1e-6)  # relaxation ordering


def test_sensing_sca_from_sdr_optimum(desk, desk_channels):
    sdr = nisac.solve_sensing_sdr(
        desk, desk_channels,
        SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=1))
    req = SolveRequest(mode="sensing", algorithm="sca", sinr_threshold_eta=10.0, seed=1)
    rep = nisac.solve_sensing_sca(desk, desk_channels, req, init=sdr.beamformers)
    assert rep.iterations <= 3
    assert rep.max_crlb <= sdr.max_crlb * 1.005


def test_comm_sca_interference_free(m1):
    s0, _ = m1
    s = replace(s0, cu_positions=s0.cu_positions[:, :1])
    ch = nisac.draw_channels(s, 5)
    bound = s.params.max_power_w * np.linalg.norm(ch.comm[0, 0, 0]) ** 2 \
        / s.params.comm_noise_power_w
    req = SolveRequest(mode="comm", algorithm="sca", crlb_threshold_epsilon=1e12, seed=5)
    rep = nisac.solve_comm_sca(s, ch, req)
    assert rep.status == "solved"
    assert rep.objective >= bound * 0.99


def test_comm_sca_monotone_and_infeasible(m1):
    s, ch = m1
    cmin = nisac.solve_sensing_sdr(
        s, ch, SolveRequest(mode="sensing", algorithm="sdr",
                            sinr_threshold_eta=0.0, seed=33)).max_crlb
    req = SolveRequest(mode="comm", algorithm="sca",
                       crlb_threshold_epsilon=2.0 * cmin, seed=33)
    rep = nisac.solve_comm_sca(s, ch, req)
    assert rep.status == "solved"
    tr = rep.objective_trace
    assert all(tr[i + 1] >= tr[i] * (1 - 1e-6) for i in range(len(tr) - 1))
    bad = SolveRequest(mode="comm", algorithm="sca",
                       crlb_threshold_epsilon=0.5 * cmin, seed=33)
    assert nisac.solve_comm_sca(s, ch, bad).status == "infeasible"


# -- multi target -------------------------------------------------------------------------

def test_multi_target_degenerate_union(desk, desk_channels):
    req = SolveRequest(mode="sensing", algorithm="auto", sinr_threshold_eta=10.0, seed=1)
    via_router = nisac.solve_multi_target(desk, desk_channels, req)
    direct = nisac.solve_sensing_sdr(
        desk, desk_channels,
        SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=1))
    np.testing.assert_array_equal(via_router.beamformers.vectors, direct.beamformers.vectors)
    assert via_router.crlb_m2 == pytest.approx(direct.crlb_m2)


def test_multi_target_symmetric_pair(desk):
    s = helpers.mirrored_desk_scenario(desk)
    s = replace(s, target_positions=np.array([[0.0, 30.0], [0.0, -30.0]]))
    ch = helpers.mirror_symmetric_channels(s, 7, bs_map={0: 1, 1: 0},
                                           tmt_map={0: 1, 1: 0, 2: 3, 3: 2})
    req = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=7)
    rep = nisac.solve_sensing_sdr(s, ch, req)
    assert rep.status == "solved"
    c1, c2 = rep.crlb_m2
    assert abs(c1 - c2) / max(c1, c2) <= 1e-4


def test_multi_target_router_comm(desk, desk_channels, m1):
    s, ch = m1
    cmin = nisac.solve_sensing_sdr(
        s, ch, SolveRequest(mode="sensing", algorithm="sdr",
                            sinr_threshold_eta=0.0, seed=33)).max_crlb
    req = SolveRequest(mode="comm", algorithm="auto", crlb_threshold_epsilon=2 * cmin, seed=33)
    rep = nisac.solve_multi_target(s, ch, req)
    assert rep.algorithm == "bisection"
    req2 = SolveRequest(mode="comm", algorithm="auto", crlb_threshold_epsilon=1.0, seed=1)
    rep2 = nisac.solve_multi_target(desk, desk_channels, req2)
    assert rep2.algorithm == "sca"


# -- solution files ------------------------------------------------------------------------

def test_solution_file_roundtrip(tmp_path, desk, desk_channels):
    req = SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=10.0, seed=1)
    rep = nisac.solve_sensing_sdr(desk, desk_channels, req)
    path = tmp_path / "sol.json"
    solvers.save_report(path, rep, desk, req, timestamp=False)
    b, doc = solvers.load_beamformers(path)
    np.testing.assert_allclose(b.vectors, rep.beamformers.vectors)
    assert doc["meta"]["scenario_hash"] == nisac.scenario_hash(desk)
    assert doc["status"] == "solved"
    # deterministic bytes without timestamps
    path2 = tmp_path / "sol2.json"
    solvers.save_report(path2, rep, desk, req, timestamp=False)
    assert path.read_bytes() == path2.read_bytes()


def test_experimental_multi_bs_bisection(desk, desk_channels):
    cmin = nisac.solve_sensing_sdr(
        desk, desk_channels,
        SolveRequest(mode="sensing", algorithm="sdr", sinr_threshold_eta=0.0, seed=1)).max_crlb
    req = SolveRequest(mode="comm", algorithm="bisection",
                       crlb_threshold_epsilon=2 * cmin, seed=1,
                       allow_experimental_multi_bs=True)
    rep = nisac.solve_comm_bisection(desk, desk_channels, req)
    assert rep.status == "solved"
    assert np.all(rep.per_bs_power_w <= desk.params.max_power_w * (1 + 1e-6))
