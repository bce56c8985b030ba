"""Benchmark beamformers: zero-forcing, transmit-MMSE, and beampattern
matching. Once directions (or covariances) are fixed, both the sensing- and
communication-centric designs reduce to convex power allocations solved
through the conic module and audited by the metrics module.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import metrics
from .channel import ChannelRealization, array_response
from .conic import ConicProgram, ConicSettings, expr_sum, solve as conic_solve
from .metrics import BeamformerSet
from .scenario import Scenario, ValidationError, aod
from .solvers import (SolveReport, SolveRequest, _max_single_user_sinr_bound, _prepare,
                      allocate_power_for_directions, audit_solution, extract_rank_one)


@dataclass(frozen=True)
class DirectionSet:
    """Unit-norm beam directions per (BS, user) with their provenance."""

    vectors: np.ndarray  # (M, K, N_t) complex, unit columns
    provenance: str      # "zf" | "mmse"

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=2)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValidationError("direction vectors must be unit norm within 1e-10")


def zf_directions(s: Scenario, ch: ChannelRealization) -> DirectionSet:
    """Zero-forcing directions: project each user's channel onto the null
    space of every other (serving-BS, user) channel seen from the same BS."""
    M, K, Nt = s.num_bs, s.num_users, s.params.num_tx_antennas
    if Nt < M * K:
        raise ValidationError(f"zero-forcing needs N_t >= M*K (got N_t={Nt}, M*K={M * K})")
    dirs = np.zeros((M, K, Nt), dtype=complex)
    for m in range(M):
        for k in range(K):
            others = [ch.comm[m, i, j] for i in range(M) for j in range(K) if (i, j) != (m, k)]
            if others:
                H = np.array(others).T  # Nt x (MK-1)
                Ufull, _sv, _vh = np.linalg.svd(H, full_matrices=True)
                U_perp = Ufull[:, H.shape[1]:]
                f = U_perp @ (U_perp.conj().T @ ch.comm[m, m, k])
            else:
                f = np.array(ch.comm[m, m, k])  # no interferers: plain MRT
            n = np.linalg.norm(f)
            if n < 1e-15:
                raise ValidationError(f"ZF direction vanished for user ({m},{k})")
            dirs[m, k] = f / n
    return DirectionSet(vectors=dirs, provenance="zf")


def mmse_directions(s: Scenario, ch: ChannelRealization) -> DirectionSet:
    """Regularized (transmit-MMSE) directions: whiten by the sum of all
    outgoing channel outer products plus M*K*sigma^2/P times identity."""
    M, K, Nt = s.num_bs, s.num_users, s.params.num_tx_antennas
    load = M * K * s.params.comm_noise_power_w / s.params.max_power_w
    dirs = np.zeros((M, K, Nt), dtype=complex)
    for m in range(M):
        R = load * np.eye(Nt, dtype=complex)
        for i in range(M):
            for j in range(K):
                h = ch.comm[m, i, j]
                R += np.outer(h, h.conj())
        Rinv = np.linalg.inv(R)
        for k in range(K):
            f = Rinv @ ch.comm[m, m, k]
            dirs[m, k] = f / np.linalg.norm(f)
    return DirectionSet(vectors=dirs, provenance="mmse")


def allocate_power(dirs: DirectionSet, s: Scenario, ch: ChannelRealization,
                   req: SolveRequest) -> SolveReport:
    """Optimal power allocation over fixed directions for either mode."""
    t0 = time.perf_counter()
    algo = dirs.provenance
    tight = replace(req.conic, accuracy=min(req.conic.accuracy, 1e-9))
    if req.mode == "sensing":
        eta = float(req.sinr_threshold_eta)
        status, _obj, b, _p = allocate_power_for_directions(
            s, ch, dirs.vectors, eta=eta, objective="crlb", power_cap=True,
            settings=tight)
        if status == "infeasible":
            return SolveReport(status="infeasible", mode="sensing", algorithm=algo,
                               wall_time_s=time.perf_counter() - t0)
        if status not in ("optimal", "inaccurate") or b is None:
            return SolveReport(status="tolerance-not-met", mode="sensing", algorithm=algo,
                               solver_statuses=[status], wall_time_s=time.perf_counter() - t0)
        audit = audit_solution(s, ch, b, eta=eta)
        sinrs, power, crlbs = _achieved(s, ch, b)
        return SolveReport(status="solved" if audit["ok"] else "tolerance-not-met",
                           mode="sensing", algorithm=algo, beamformers=b, sinr=sinrs,
                           per_bs_power_w=power, crlb_m2=crlbs,
                           objective=float(np.max(crlbs)), audit=audit,
                           wall_time_s=time.perf_counter() - t0)
    return _allocate_comm(dirs, s, ch, req, t0)


def _allocate_comm(dirs, s, ch, req, t0):
    """Max-min SINR over powers with fixed directions: bisection over eta with
    a max-power-ratio feasibility LP (plus the CRLB epigraph)."""
    eps = req.epsilons(s.num_targets)
    algo = dirs.provenance
    trace = []

    def ratio_at(eta):
        status, obj, b, _p = allocate_power_for_directions(
            s, ch, dirs.vectors, eta=eta, epsilons=eps, objective="power_maxratio",
            power_cap=False, settings=req.conic)
        ok = status in ("optimal", "inaccurate") and b is not None
        trace.append((float(eta), float(obj) if ok else math.inf))
        return (obj if ok else math.inf), b

    a0, b0 = ratio_at(0.0)
    if not (a0 <= 1.0 + 1e-9):
        return SolveReport(status="infeasible", mode="comm", algorithm=algo,
                           objective_trace=trace,
                           extras={"reason": "CRLB threshold unattainable with fixed directions"},
                           wall_time_s=time.perf_counter() - t0)
    eta_up_init = _max_single_user_sinr_bound(_prepare(s, ch))
    eta_low, eta_up = 0.0, eta_up_init
    best = b0
    a_up, b_up = ratio_at(eta_up)
    iters = 2
    if a_up <= 1.0:
        eta_low, best = eta_up, b_up
    else:
        while iters < req.bisection_max_iters and \
                (eta_up - eta_low) > req.bisection_tol * max(eta_low, eta_up_init * 1e-10):
            mid = 0.5 * (eta_low + eta_up)
            a, b = ratio_at(mid)
            iters += 1
            if a <= 1.0:
                eta_low, best = mid, b
            else:
                eta_up = mid
    audit = audit_solution(s, ch, best, epsilons=eps)
    sinrs, power, crlbs = _achieved(s, ch, best)
    return SolveReport(status="solved" if audit["ok"] else "tolerance-not-met",
                       mode="comm", algorithm=algo, beamformers=best, sinr=sinrs,
                       per_bs_power_w=power, crlb_m2=crlbs, objective=float(np.min(sinrs)),
                       objective_trace=trace, iterations=iters, audit=audit,
                       extras={"eta_star": float(eta_low)},
                       wall_time_s=time.perf_counter() - t0)


def _achieved(s, ch, b):
    return (metrics.all_sinrs(s, ch, b), metrics.per_bs_power(b), metrics.all_crlbs(s, ch, b))


def solve_baseline(s: Scenario, ch: ChannelRealization, req: SolveRequest) -> SolveReport:
    dirs = zf_directions(s, ch) if req.algorithm == "zf" else mmse_directions(s, ch)
    return allocate_power(dirs, s, ch, req)


def beampattern_match(s: Scenario, ch: ChannelRealization,
                      settings: ConicSettings | None = None,
                      grid_step_deg: float = 0.5, lobe_halfwidth_deg: float = 5.0):
    """Least-squares beampattern matching with a dedicated sensing covariance.

    Minimizes the squared deviation from a per-BS desired pattern (a scaled
    rectangle of half-width 5 degrees around each target AoD) over relaxed
    per-user covariances W_mk and a sensing covariance R_m, under per-BS
    power *equality*. Returns (BeamformerSet with folded R, rank ratios).

    The extraction residuals W_mk - f_mk f_mk^H are folded into R_m so the
    reported metrics are exactly those of the covariance solution.
    """
    M, K, U, Nt = s.num_bs, s.num_users, s.num_targets, s.params.num_tx_antennas
    P = s.params.max_power_w
    grid = np.radians(np.arange(-90.0, 90.0 + grid_step_deg / 2, grid_step_deg))
    half = math.radians(lobe_halfwidth_deg)
    prog = ConicProgram()
    W = [[prog.hermitian_psd(f"W[{m},{k}]", Nt) for k in range(K)] for m in range(M)]
    R = [prog.hermitian_psd(f"R[{m}]", Nt) for m in range(M)]
    alphas = [prog.scalar(f"alpha[{m}]") for m in range(M)]
    tvars = [prog.scalar(f"t[{m}]") for m in range(M)]

    for m in range(M):
        prog.add_nonneg(alphas[m])
        total = expr_sum(W[m][k].trace() for k in range(K)) + R[m].trace()
        prog.add_zero(total - 1.0)  # per-BS power equality, in P units
        thetas = [aod(s, m, u) for u in range(U)]
        residuals = []
        for angle in grid:
            a = array_response(Nt, s.params.antenna_spacing_ratio, angle)
            w_conj = np.conj(a)
            gain = expr_sum(W[m][k].quad_form(w_conj) for k in range(K)) + R[m].quad_form(w_conj)
            desired = 1.0 if any(abs(angle - th) <= half for th in thetas) else 0.0
            residuals.append(alphas[m] * desired - gain)
        prog.add_rsoc(tvars[m], 0.5, residuals)  # t_m >= || residual ||^2
    prog.minimize(expr_sum(tvars))

    sol = conic_solve(prog, settings or ConicSettings())
    if sol.status not in ("optimal", "inaccurate"):
        raise RuntimeError(f"beampattern matching SDP failed: {sol.backend_status}")
    vecs = np.zeros((M, K, Nt), dtype=complex)
    covs = np.zeros((M, Nt, Nt), dtype=complex)
    ratios = []
    for m in range(M):
        Rm = P * sol.values[f"R[{m}]"]
        covs[m] = _clip_psd(Rm)
        for k in range(K):
            Wmk = P * sol.values[f"W[{m},{k}]"]
            f, ratio = extract_rank_one(Wmk, tol=1e-6 * max(1.0, P))
            vecs[m, k] = f
            ratios.append(float(ratio))
            covs[m] += _clip_psd(Wmk - np.outer(f, f.conj()))
    return BeamformerSet(vectors=vecs, sensing_cov=covs), ratios


def _clip_psd(A: np.ndarray) -> np.ndarray:
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    return (V * np.clip(w, 0.0, None)) @ V.conj().T


def solve_beampattern_matching(s: Scenario, ch: ChannelRealization,
                               req: SolveRequest) -> SolveReport:
    """Sensing-mode benchmark; no SINR constraints enter the design."""
    if req.mode != "sensing":
        raise ValidationError("beampattern matching is a sensing-mode benchmark")
    t0 = time.perf_counter()
    b, ratios = beampattern_match(s, ch, settings=req.conic)
    sinrs, power, crlbs = _achieved(s, ch, b)
    audit = audit_solution(s, ch, b)  # power only; the design has no SINR constraint
    return SolveReport(status="solved" if audit["ok"] else "tolerance-not-met",
                       mode="sensing", algorithm="beampattern", beamformers=b,
                       sinr=sinrs, per_bs_power_w=power, crlb_m2=crlbs,
                       objective=float(np.max(crlbs)), rank_ratios=ratios, audit=audit,
                       wall_time_s=time.perf_counter() - t0)
