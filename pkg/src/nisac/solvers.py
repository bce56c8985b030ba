"""Beamforming solvers: SDR for the sensing-centric problem, bisection over
power minimization for the communication-centric problem (single BS), the
unified SCA algorithm for both, and min-max multi-target variants.

All conic programs are built in normalized units: covariances and powers in
units of the per-BS budget P, channels scaled by sqrt(P)/sigma_n so SINR rows
are O(1), and each target's Fisher expression divided by the reference Fisher
scale. Reported quantities are always unscaled SI, re-evaluated from the
extracted beamformers through the metrics module.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .channel import ChannelRealization
from .conic import (ConicProgram, ConicSettings, LinExpr, expr_sum, solve as conic_solve,
                    trace_inverse_epigraph)
from .metrics import BeamformerSet
from .scenario import Scenario, ValidationError, aod, scenario_hash
from .channel import array_response

_RAND_TAG = 0x72616E64  # "rand"


class InfeasibleError(RuntimeError):
    """Raised by operations that must return a feasible point but cannot."""


@dataclass
class SolveRequest:
    """What to solve and how hard to try."""

    mode: str                      # "sensing" | "comm"
    algorithm: str = "auto"        # sdr | sca | bisection | zf | mmse | beampattern | auto
    sinr_threshold_eta: float | None = None      # linear, sensing mode
    crlb_threshold_epsilon: object = None        # m^2 scalar or per-target list, comm mode
    sca_rel_tol: float = 1e-4
    bisection_tol: float = 5e-6    # relative width of the final eta bracket
    rank_tol: float = 1e-4         # lambda2/lambda1 above which extraction is degraded
    sca_max_iters: int = 100
    bisection_max_iters: int = 60
    randomization_candidates: int = 100
    seed: int = 0
    allow_experimental_multi_bs: bool = False
    conic: ConicSettings = field(default_factory=ConicSettings)

    def __post_init__(self):
        if self.mode not in ("sensing", "comm"):
            raise ValidationError(f"unknown mode '{self.mode}'")
        if self.mode == "sensing":
            if self.sinr_threshold_eta is None:
                raise ValidationError("sensing mode requires sinr_threshold_eta")
            if self.sinr_threshold_eta < 0:
                raise ValidationError("sinr_threshold_eta must be >= 0")
            if self.crlb_threshold_epsilon is not None:
                raise ValidationError("crlb_threshold_epsilon is a comm-mode parameter")
        else:
            if self.crlb_threshold_epsilon is None:
                raise ValidationError("comm mode requires crlb_threshold_epsilon")
            if self.sinr_threshold_eta is not None:
                raise ValidationError("sinr_threshold_eta is a sensing-mode parameter")

    def epsilons(self, num_targets: int) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(self.crlb_threshold_epsilon, dtype=float))
        if eps.size == 1:
            eps = np.full(num_targets, eps[0])
        if eps.size != num_targets:
            raise ValidationError(f"need {num_targets} CRLB thresholds, got {eps.size}")
        if np.any(eps <= 0):
            raise ValidationError("CRLB thresholds must be positive")
        return eps


@dataclass
class SolveReport:
    status: str                    # solved | infeasible | tolerance-not-met
    mode: str
    algorithm: str
    beamformers: BeamformerSet | None = None
    sinr: np.ndarray | None = None           # (M, K) linear
    per_bs_power_w: np.ndarray | None = None
    crlb_m2: np.ndarray | None = None        # (U,)
    objective: float = math.nan    # max_u CRLB (sensing) or min SINR (comm)
    sdp_objective: float | None = None       # relaxation lower/upper bound when available
    objective_trace: list = field(default_factory=list)
    rank_ratios: list = field(default_factory=list)
    solver_statuses: list = field(default_factory=list)
    iterations: int = 0
    wall_time_s: float = 0.0
    audit: dict | None = None
    extras: dict = field(default_factory=dict)

    @property
    def min_sinr(self) -> float:
        return float(np.min(self.sinr)) if self.sinr is not None else math.nan

    @property
    def max_crlb(self) -> float:
        return float(np.max(self.crlb_m2)) if self.crlb_m2 is not None else math.nan


# -- shared problem data --------------------------------------------------------

@dataclass
class _Data:
    s: Scenario
    ch: ChannelRealization
    P: float
    hs: np.ndarray        # (M, M, K, dim) channels scaled by sqrt(P)/sigma_n
    a_conj: np.ndarray    # (M, U, dim) conj steering vectors at the target AoDs
    a_plain: np.ndarray   # (M, U, dim) steering vectors
    Gs: np.ndarray        # (U, M, 2, 2) Fisher coefficients scaled by P/ref_u
    refs: np.ndarray      # (U,) per-target reference Fisher scales
    dim: int = 0          # covariance dimension (N_t, or the reduced span size)


def _prepare(s: Scenario, ch: ChannelRealization) -> _Data:
    p = s.params
    P = p.max_power_w
    sigma_n = math.sqrt(p.comm_noise_power_w)
    hs = ch.comm * (math.sqrt(P) / sigma_n)
    M, U, Nt = s.num_bs, s.num_targets, p.num_tx_antennas
    a_plain = np.zeros((M, U, Nt), dtype=complex)
    for m in range(M):
        for u in range(U):
            a_plain[m, u] = array_response(Nt, p.antenna_spacing_ratio, aod(s, m, u))
    refs = np.zeros(U)
    Gs = np.zeros((U, M, 2, 2))
    for u in range(U):
        G = metrics.fim_coefficients(s, ch, u)
        refs[u] = 0.5 * P * float(np.trace(np.sum(G, axis=0)))
        Gs[u] = G * (P / refs[u])
    return _Data(s=s, ch=ch, P=P, hs=hs, a_conj=np.conj(a_plain), a_plain=a_plain,
                 Gs=Gs, refs=refs, dim=Nt)


def _reduced_data(data: _Data):
    """Project onto each BS's span of outgoing channels plus steering vectors.

    For power minimization any covariance component orthogonal to that span
    changes no constraint value and only adds power, so an optimal solution
    lives inside it; solving in the span's coordinates is exact and shrinks
    the PSD blocks from N_t to M*K + U.
    """
    s = data.s
    M, K, U, Nt = s.num_bs, s.num_users, s.num_targets, data.dim
    r = min(Nt, M * K + U)
    if r >= Nt:
        return data, None
    bases = []
    for m in range(M):
        cols = [data.hs[m, i, j] for i in range(M) for j in range(K)]
        cols += [data.a_conj[m, u] for u in range(U)]
        Q, _ = np.linalg.qr(np.array(cols).T)
        bases.append(Q[:, :r])
    hs = np.zeros((M, M, K, r), dtype=complex)
    for i in range(M):
        for m in range(M):
            for k in range(K):
                hs[i, m, k] = bases[i].conj().T @ data.hs[i, m, k]
    a_conj = np.zeros((M, U, r), dtype=complex)
    for m in range(M):
        for u in range(U):
            a_conj[m, u] = bases[m].conj().T @ data.a_conj[m, u]
    reduced = _Data(s=s, ch=data.ch, P=data.P, hs=hs, a_conj=a_conj,
                    a_plain=np.conj(a_conj), Gs=data.Gs, refs=data.refs, dim=r)
    return reduced, bases


def _fim_exprs(data: _Data, q_exprs, u: int, scale: float = 1.0):
    """2x2 affine Fisher expression for target u from per-BS q variables."""
    G = data.Gs[u] * scale
    f11 = expr_sum(q_exprs[m] * G[m, 0, 0] for m in range(data.s.num_bs))
    f12 = expr_sum(q_exprs[m] * G[m, 0, 1] for m in range(data.s.num_bs))
    f22 = expr_sum(q_exprs[m] * G[m, 1, 1] for m in range(data.s.num_bs))
    return [[f11, f12], [f12, f22]]


def _robust_solve(prog: ConicProgram, settings: ConicSettings):
    """Solve with the configured backend; on a hard failure retry once with
    the first-order backend (slower but differently conditioned)."""
    sol = conic_solve(prog, settings)
    if sol.status in ("optimal", "inaccurate", "infeasible", "unbounded"):
        return sol
    if settings.backend != "scs":
        fallback = replace(settings, backend="scs",
                           accuracy=max(settings.accuracy, 1e-9), max_iters=50000)
        retry = conic_solve(prog, fallback)
        if retry.status in ("optimal", "inaccurate", "infeasible", "unbounded"):
            return retry
    return sol


def _single_user_sinr_bound(data: _Data) -> float:
    """min over users of the interference-free bound P ||h||^2 / sigma_n^2."""
    M, K = data.s.num_bs, data.s.num_users
    return min(float(np.linalg.norm(data.hs[m, m, k]) ** 2)
               for m in range(M) for k in range(K))


def _max_single_user_sinr_bound(data: _Data) -> float:
    M, K = data.s.num_bs, data.s.num_users
    return max(float(np.linalg.norm(data.hs[m, m, k]) ** 2)
               for m in range(M) for k in range(K))


# -- rank-one extraction ----------------------------------------------------------

def _dominant_component(F: np.ndarray) -> tuple[np.ndarray, float]:
    """sqrt(lam1) * v1 with the largest-magnitude entry made real nonnegative;
    negative eigenvalues are clamped (callers audit feasibility downstream)."""
    F = 0.5 * (F + F.conj().T)
    w, V = np.linalg.eigh(F)
    lam1 = max(float(w[-1]), 0.0)
    lam2 = max(float(w[-2]), 0.0) if len(w) > 1 else 0.0
    if lam1 <= 0.0:
        return np.zeros(F.shape[0], dtype=complex), 0.0
    f = math.sqrt(lam1) * V[:, -1]
    j = int(np.argmax(np.abs(f)))
    f = f * np.exp(-1j * np.angle(f[j]))
    return f, lam2 / lam1


def extract_rank_one(F: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Dominant-eigenpair extraction f = sqrt(lam1) v1 with deterministic phase.

    Returns (f, lambda2/lambda1). The phase is fixed so the largest-magnitude
    entry of f is real nonnegative. F must be PSD within tol.
    """
    F = np.asarray(F, dtype=complex)
    w = np.linalg.eigvalsh(0.5 * (F + F.conj().T))
    scale = max(1.0, float(w[-1]))
    if w[0] < -max(tol, 1e-9 * scale):
        raise ValueError(f"matrix not PSD within tolerance (min eigenvalue {w[0]:.2e})")
    return _dominant_component(F)


# -- constraint audit --------------------------------------------------------------

def audit_solution(s: Scenario, ch: ChannelRealization, b: BeamformerSet, *,
                   eta: float | None = None, epsilons=None, rel: float = 1e-6) -> dict:
    """Independent metrics-module check of all requested constraints."""
    power = metrics.per_bs_power(b)
    P = s.params.max_power_w
    out = {"power_ok": bool(np.all(power <= P * (1.0 + rel))),
           "max_power_w": float(np.max(power))}
    ok = out["power_ok"]
    sinrs = metrics.all_sinrs(s, ch, b)
    out["min_sinr"] = float(np.min(sinrs))
    if eta is not None and eta > 0:
        out["sinr_ok"] = bool(np.min(sinrs) >= eta * (1.0 - rel))
        ok = ok and out["sinr_ok"]
    if epsilons is not None:
        crlbs = metrics.all_crlbs(s, ch, b)
        eps = np.atleast_1d(np.asarray(epsilons, dtype=float))
        out["crlb_ok"] = bool(np.all(crlbs <= eps * (1.0 + rel)))
        out["crlb_m2"] = crlbs.tolist()
        ok = ok and out["crlb_ok"]
    out["ok"] = ok
    return out


def _achieved(s, ch, b):
    return (metrics.all_sinrs(s, ch, b), metrics.per_bs_power(b), metrics.all_crlbs(s, ch, b))


# -- SDR-family builder -------------------------------------------------------------

def _build_covariance_program(data: _Data, *, eta: float, objective: str,
                              crlb_caps=None, power_cap: bool,
                              ratio_cap: float | None = None,
                              power_unit: float = 1.0):
    """Shared SDP over lifted covariances F_mk.

    objective: "crlb" (min-max over targets, plain min for U = 1),
               "power_sum" (sum of per-BS powers / P),
               "power_maxratio" (max over BSs of power / P).
    ratio_cap bounds the uncapped power objectives; it keeps the data
    well-scaled inside bisection, where cap-infeasibility already certifies
    that the minimum power exceeds the budget.
    power_unit expresses the covariances in units of P*power_unit so that a
    power-minimization whose optimum is far from O(1) can be re-solved in
    solution-sized units (power objectives are reported in F-hat units and
    must be multiplied back by power_unit).
    """
    s = data.s
    M, K, U = s.num_bs, s.num_users, s.num_targets
    Nt = data.dim
    prog = ConicProgram()
    F = [[prog.hermitian_psd(f"F[{m},{k}]", Nt) for k in range(K)] for m in range(M)]

    ratio_var = None
    if power_cap:
        for m in range(M):
            prog.add_nonneg(1.0 / power_unit - expr_sum(F[m][k].trace() for k in range(K)))
    elif objective == "power_maxratio":
        ratio_var = prog.scalar("ratio")
        for m in range(M):
            prog.add_nonneg(ratio_var - expr_sum(F[m][k].trace() for k in range(K)))
        if ratio_cap is not None:
            prog.add_nonneg(ratio_cap / power_unit - ratio_var)
    elif objective == "power_sum" and ratio_cap is not None:
        total = expr_sum(F[m][k].trace() for m in range(M) for k in range(K))
        prog.add_nonneg(float(ratio_cap) * M / power_unit - total)

    if eta > 0:
        for m in range(M):
            for k in range(K):
                own = F[m][k].quad_form(data.hs[m, m, k])
                interf = expr_sum(F[i][j].quad_form(data.hs[i, m, k])
                                  for i in range(M) for j in range(K) if (i, j) != (m, k))
                prog.add_nonneg(own - interf * eta - eta / power_unit)

    needs_fim = objective == "crlb" or crlb_caps is not None
    t_exprs = []
    if crlb_caps is not None and objective != "crlb" and M == 1:
        # Single-BS CRLB caps are linear: C(q) = C(1)/q, so C <= eps is the
        # illumination floor q >= C(1)/eps. This avoids the trace-inverse
        # epigraph entirely inside the power-minimization (bisection) path.
        for u in range(U):
            G_raw = data.Gs[u][0] * (data.refs[u] / data.P)
            c1 = float(np.trace(np.linalg.inv(G_raw)))
            q_req = c1 / float(crlb_caps[u])
            gain = expr_sum(F[0][k].quad_form(data.a_conj[0, u]) for k in range(K))
            prog.add_nonneg(gain - q_req / (data.P * power_unit))
    elif needs_fim:
        q = [[prog.scalar(f"q[{m},{u}]") for u in range(U)] for m in range(M)]
        for m in range(M):
            for u in range(U):
                prog.add_nonneg(q[m][u])
                gain = expr_sum(F[m][k].quad_form(data.a_conj[m, u]) for k in range(K))
                prog.add_nonneg(gain - q[m][u])
        for u in range(U):
            t = trace_inverse_epigraph(
                prog, _fim_exprs(data, [q[m][u] for m in range(M)], u, scale=power_unit))
            t_exprs.append(t)
        if crlb_caps is not None:
            for u in range(U):
                prog.add_nonneg(float(crlb_caps[u]) * data.refs[u] - t_exprs[u])

    if objective == "crlb":
        if U == 1:
            prog.minimize(t_exprs[0])
        else:
            w = prog.scalar("w")
            for u in range(U):
                prog.add_nonneg(w - t_exprs[u] * (1.0 / data.refs[u]))
            prog.minimize(w)
    elif objective == "power_sum":
        prog.minimize(expr_sum(F[m][k].trace() for m in range(M) for k in range(K)))
    elif objective == "power_maxratio":
        prog.minimize(ratio_var)
    else:
        raise ValueError(f"unknown objective '{objective}'")
    return prog, F, t_exprs


def _extract_all(sol, data: _Data, prog_F, power_unit: float = 1.0) -> tuple[np.ndarray, list]:
    M, K, Nt = data.s.num_bs, data.s.num_users, data.dim
    vecs = np.zeros((M, K, Nt), dtype=complex)
    ratios = []
    for m in range(M):
        for k in range(K):
            Fmk = data.P * power_unit * sol.values[f"F[{m},{k}]"]
            f, ratio = _dominant_component(Fmk)
            vecs[m, k] = f
            ratios.append(float(ratio))
    return vecs, ratios


# -- fixed-direction power allocation ------------------------------------------------

def allocate_power_for_directions(s: Scenario, ch: ChannelRealization, dirs: np.ndarray, *,
                                  eta: float = 0.0, epsilons=None, objective: str = "crlb",
                                  power_cap: bool = True,
                                  settings: ConicSettings | None = None):
    """With unit directions fixed, optimize the per-beam powers (convex).

    objective: "crlb" min-max CRLB, "power_sum", or "power_maxratio".
    Returns (status, objective value, BeamformerSet | None, powers | None).
    """
    data = _prepare(s, ch)
    M, K, U = s.num_bs, s.num_users, s.num_targets
    prog = ConicProgram()
    pw = [[prog.scalar(f"p[{m},{k}]") for k in range(K)] for m in range(M)]
    for m in range(M):
        for k in range(K):
            prog.add_nonneg(pw[m][k])

    ratio_var = None
    if power_cap:
        for m in range(M):
            prog.add_nonneg(1.0 - expr_sum(pw[m][k] for k in range(K)))
    elif objective == "power_maxratio":
        ratio_var = prog.scalar("ratio")
        for m in range(M):
            prog.add_nonneg(ratio_var - expr_sum(pw[m][k] for k in range(K)))

    if eta > 0:
        for m in range(M):
            for k in range(K):
                own = pw[m][k] * float(abs(np.vdot(data.hs[m, m, k], dirs[m, k])) ** 2)
                interf = expr_sum(
                    pw[i][j] * float(abs(np.vdot(data.hs[i, m, k], dirs[i, j])) ** 2)
                    for i in range(M) for j in range(K) if (i, j) != (m, k))
                prog.add_nonneg(own - interf * eta - eta)

    t_exprs = []
    if objective == "crlb" or epsilons is not None:
        for u in range(U):
            q_exprs = [expr_sum(pw[m][k] * float(abs(data.a_plain[m, u] @ dirs[m, k]) ** 2)
                                for k in range(K)) for m in range(M)]
            t_exprs.append(trace_inverse_epigraph(prog, _fim_exprs(data, q_exprs, u)))
        if epsilons is not None:
            for u in range(U):
                prog.add_nonneg(float(epsilons[u]) * data.refs[u] - t_exprs[u])

    if objective == "crlb":
        if U == 1:
            prog.minimize(t_exprs[0])
        else:
            w = prog.scalar("w")
            for u in range(U):
                prog.add_nonneg(w - t_exprs[u] * (1.0 / data.refs[u]))
            prog.minimize(w)
    elif objective == "power_sum":
        prog.minimize(expr_sum(pw[m][k] for m in range(M) for k in range(K)))
    elif objective == "power_maxratio":
        prog.minimize(ratio_var)
    else:
        raise ValueError(f"unknown objective '{objective}'")

    sol = conic_solve(prog, settings or ConicSettings())
    if sol.status not in ("optimal", "inaccurate"):
        return sol.status, math.nan, None, None
    powers = np.array([[max(0.0, sol.values[f"p[{m},{k}]"]) for k in range(K)] for m in range(M)])
    vecs = np.sqrt(powers[..., None] * data.P) * dirs
    return sol.status, sol.objective, BeamformerSet(vectors=vecs), powers


# -- sensing-centric SDR --------------------------------------------------------------

def solve_sensing_sdr(s: Scenario, ch: ChannelRealization, req: SolveRequest) -> SolveReport:
    """Lifted SDP for CRLB minimization under SINR and per-BS power constraints.

    Rank-one solutions are certified tight (probability one) when
    N_t > M*K; degraded extractions fall back to Gaussian randomization with a
    power re-allocation repair.
    """
    if req.mode != "sensing":
        raise ValidationError("solve_sensing_sdr requires sensing mode")
    t0 = time.perf_counter()
    eta = float(req.sinr_threshold_eta)
    data = _prepare(s, ch)

    if eta > 0 and eta > _single_user_sinr_bound(data) * (1.0 + 1e-12):
        return SolveReport(status="infeasible", mode="sensing", algorithm="sdr",
                           extras={"reason": "eta above the interference-free single-user bound"},
                           wall_time_s=time.perf_counter() - t0)

    prog, F, t_exprs = _build_covariance_program(data, eta=eta, objective="crlb",
                                                 power_cap=True)
    sol = conic_solve(prog, req.conic)
    statuses = [f"sdr:{sol.backend_status}"]
    if sol.status == "infeasible":
        return SolveReport(status="infeasible", mode="sensing", algorithm="sdr",
                           solver_statuses=statuses, wall_time_s=time.perf_counter() - t0)
    if sol.status not in ("optimal", "inaccurate"):
        return SolveReport(status="tolerance-not-met", mode="sensing", algorithm="sdr",
                           solver_statuses=statuses, wall_time_s=time.perf_counter() - t0)

    sdp_bound = sol.objective / data.refs[0] if s.num_targets == 1 else sol.objective
    vecs, ratios = _extract_all(sol, data, F)
    b = BeamformerSet(vectors=vecs)
    audit = audit_solution(s, ch, b, eta=eta)
    degraded = max(ratios) > req.rank_tol

    if degraded or not audit["ok"]:
        best = _gaussian_randomization(data, sol, req, eta)
        if best is not None:
            cand_b, cand_audit = best
            if not audit["ok"] or (cand_audit["ok"] and
                                   np.max(metrics.all_crlbs(s, ch, cand_b)) <
                                   np.max(metrics.all_crlbs(s, ch, b))):
                b, audit = cand_b, cand_audit
        statuses.append("randomization" if degraded else "repair")

    sinrs, power, crlbs = _achieved(s, ch, b)
    status = "solved" if audit["ok"] else "tolerance-not-met"
    return SolveReport(status=status, mode="sensing", algorithm="sdr", beamformers=b,
                       sinr=sinrs, per_bs_power_w=power, crlb_m2=crlbs,
                       objective=float(np.max(crlbs)), sdp_objective=float(sdp_bound),
                       objective_trace=[float(sdp_bound), float(np.max(crlbs))],
                       rank_ratios=ratios, solver_statuses=statuses,
                       iterations=sol.iterations, wall_time_s=time.perf_counter() - t0,
                       audit=audit, extras={"rank_degraded": bool(degraded)})


def _gaussian_randomization(data: _Data, sol, req: SolveRequest, eta: float):
    """Randomized rank-one recovery: draw directions from the relaxed
    covariances, re-solve the power allocation, keep the best audited point."""
    s, ch = data.s, data.ch
    M, K, Nt = s.num_bs, s.num_users, s.params.num_tx_antennas
    chols = {}
    for m in range(M):
        for k in range(K):
            Fmk = data.P * sol.values[f"F[{m},{k}]"]
            w, V = np.linalg.eigh(0.5 * (Fmk + Fmk.conj().T))
            chols[(m, k)] = V * np.sqrt(np.clip(w, 0.0, None))
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence((req.seed & (2**64 - 1), _RAND_TAG))))
    best = None
    best_obj = math.inf
    for _ in range(req.randomization_candidates):
        dirs = np.zeros((M, K, Nt), dtype=complex)
        for m in range(M):
            for k in range(K):
                z = (rng.standard_normal(Nt) + 1j * rng.standard_normal(Nt)) / math.sqrt(2)
                v = chols[(m, k)] @ z
                nv = np.linalg.norm(v)
                if nv < 1e-15:
                    v = np.ones(Nt, dtype=complex)
                    nv = math.sqrt(Nt)
                dirs[m, k] = v / nv
        status, _obj, b, _p = allocate_power_for_directions(
            s, ch, dirs, eta=eta, objective="crlb", power_cap=True,
            settings=replace(req.conic, accuracy=min(req.conic.accuracy, 1e-9)))
        if status not in ("optimal", "inaccurate") or b is None:
            continue
        audit = audit_solution(s, ch, b, eta=eta)
        if not audit["ok"]:
            continue
        obj = float(np.max(metrics.all_crlbs(s, ch, b)))
        if obj < best_obj:
            best_obj = obj
            best = (b, audit)
    return best


# -- power minimization and bisection ---------------------------------------------------

@dataclass
class PowerMinResult:
    status: str
    ratio: float                   # SDP optimum (total or max per-BS power over P)
    beamformers: BeamformerSet | None
    rank_ratios: list
    backend_status: str = ""


def solve_power_min(s: Scenario, ch: ChannelRealization, eta: float, epsilon=None, *,
                    objective: str = "power_sum",
                    settings: ConicSettings | None = None,
                    rank_tol: float = 1e-4,
                    ratio_cap: float | None = None) -> PowerMinResult:
    """Minimum-power SDP under SINR (and optional CRLB) constraints.

    No power cap: with a full-column-rank channel matrix the problem is always
    feasible, so an infeasible status signals rank deficiency (or, when
    ratio_cap is set, that the minimum power exceeds the cap). objective
    "power_maxratio" generalizes to M > 1 as the feasibility subroutine.
    """
    data, bases = _reduced_data(_prepare(s, ch))
    caps = None
    if epsilon is not None:
        caps = np.atleast_1d(np.asarray(epsilon, dtype=float))
        if caps.size == 1:
            caps = np.full(s.num_targets, caps[0])
    base = settings or ConicSettings()
    # The extracted point feeds a 1e-6-relative audit; default accuracy leaves
    # slack of the same order, so these small SDPs run tighter.
    tight = replace(base, accuracy=min(base.accuracy, 1e-9))

    def attempt(active_caps):
        unit = 1.0
        for trial in range(2):
            prog, F, _t = _build_covariance_program(
                data, eta=float(eta), objective=objective, crlb_caps=active_caps,
                power_cap=False, ratio_cap=ratio_cap, power_unit=unit)
            sol = _robust_solve(prog, tight)
            if sol.status not in ("optimal", "inaccurate"):
                return sol, None, None, unit
            true_obj = unit * sol.objective
            # Interior-point tolerances are absolute in the problem's units;
            # when the optimum lands far from O(1), re-solve in solution-sized
            # units.
            rescale = (sol.status == "inaccurate" or not 0.05 <= sol.objective <= 20.0)
            if trial == 0 and rescale and math.isfinite(true_obj) and true_obj > 0:
                unit = true_obj
                continue
            break
        vecs, ratios = _extract_all(sol, data, F, power_unit=unit)
        return sol, vecs, ratios, unit

    # Solve without the CRLB caps first: if the cheapest SINR-feasible point
    # already satisfies them, it is optimal for the capped problem too, and
    # loose caps never enter the conic data (huge thresholds would wreck the
    # scaling).
    def lift(reduced_vecs):
        if bases is None:
            return reduced_vecs
        out = np.zeros((s.num_bs, s.num_users, s.params.num_tx_antennas), dtype=complex)
        for m in range(s.num_bs):
            out[m] = reduced_vecs[m] @ bases[m].T
        return out

    sol, vecs, ratios, unit = attempt(None)
    if sol.status not in ("optimal", "inaccurate"):
        return PowerMinResult(status=sol.status, ratio=math.inf, beamformers=None,
                              rank_ratios=[], backend_status=sol.backend_status)
    vecs = lift(vecs)
    caps_active = False
    if caps is not None:
        try:
            crlbs = metrics.all_crlbs(s, ch, BeamformerSet(vectors=vecs))
            violated = bool(np.any(crlbs > caps * (1.0 - 1e-9)))
        except metrics.SingularFimError:
            violated = True  # e.g. zero illumination: CRLB effectively infinite
        if violated:
            caps_active = True
            sol, vecs, ratios, unit = attempt(caps)
            if sol.status not in ("optimal", "inaccurate"):
                return PowerMinResult(status=sol.status, ratio=math.inf, beamformers=None,
                                      rank_ratios=[], backend_status=sol.backend_status)
            vecs = lift(vecs)
    b = BeamformerSet(vectors=vecs)
    if eta > 0:
        b = _tighten_sinr(s, ch, b, float(eta), power_cap=False)

    # Extraction can shave a tight constraint by the solver tolerance; a
    # fixed-direction re-allocation restores exact feasibility.
    if max(ratios) > rank_tol or not _power_min_feasible(s, ch, b, eta, caps):
        dirs = _unit_directions(vecs)
        status2, _obj2, b2, _p = allocate_power_for_directions(
            s, ch, dirs, eta=float(eta), epsilons=caps if caps_active else None,
            objective=objective, power_cap=False, settings=tight)
        if status2 in ("optimal", "inaccurate") and b2 is not None:
            b = b2
            if eta > 0:
                b = _tighten_sinr(s, ch, b, float(eta), power_cap=False)
    if not _power_min_feasible(s, ch, b, eta, caps):
        return PowerMinResult(status="tolerance-not-met", ratio=math.inf, beamformers=b,
                              rank_ratios=ratios, backend_status=sol.backend_status)
    # The reported ratio is the SDP optimum; the returned point achieves it up
    # to the rank-one extraction slack.
    return PowerMinResult(status="optimal", ratio=float(unit * sol.objective), beamformers=b,
                          rank_ratios=ratios, backend_status=sol.backend_status)


def _unit_directions(vecs: np.ndarray) -> np.ndarray:
    dirs = np.array(vecs, dtype=complex)
    M, K, Nt = dirs.shape
    for m in range(M):
        for k in range(K):
            n = np.linalg.norm(dirs[m, k])
            dirs[m, k] = dirs[m, k] / n if n > 1e-15 else np.ones(Nt) / math.sqrt(Nt)
    return dirs


def _power_min_feasible(s, ch, b, eta, caps, rel=1e-6):
    if eta > 0 and float(np.min(metrics.all_sinrs(s, ch, b))) < eta * (1 - rel):
        return False
    if caps is not None:
        if np.any(metrics.all_crlbs(s, ch, b) > caps * (1 + rel)):
            return False
    return True


def _min_achievable_crlbs(s: Scenario, ch: ChannelRealization, dirs: np.ndarray) -> np.ndarray:
    """Lower bounds on the per-target CRLBs reachable with the given unit
    directions at full power (all of each BS's budget on its best-aligned
    beam)."""
    data = _prepare(s, ch)
    out = np.zeros(s.num_targets)
    for u in range(s.num_targets):
        q = np.array([
            data.P * max(abs(data.a_plain[m, u] @ dirs[m, k]) ** 2
                         for k in range(s.num_users))
            for m in range(s.num_bs)])
        try:
            out[u] = metrics.crlb_from_q(s, ch, q, u).crlb_m2
        except metrics.SingularFimError:
            out[u] = math.inf
    return out


def _fixed_direction_max_min_sinr(s: Scenario, ch: ChannelRealization, dirs: np.ndarray,
                                  eps: np.ndarray, eta_hi: float,
                                  req: SolveRequest) -> BeamformerSet | None:
    """Polish step: max-min SINR over powers with directions fixed (bisection
    over a max-ratio feasibility LP). The result satisfies the power budget
    and CRLB caps exactly, unlike a raw rank-one extraction of a covariance
    sitting on the power boundary."""
    tight = replace(req.conic, accuracy=min(req.conic.accuracy, 1e-9))
    c_lo = _min_achievable_crlbs(s, ch, dirs)
    caps = None if np.all(eps >= 100.0 * c_lo) else eps

    def ratio(eta):
        status, obj, b, _p = allocate_power_for_directions(
            s, ch, dirs, eta=eta, epsilons=caps, objective="power_maxratio",
            power_cap=False, settings=tight)
        ok = status in ("optimal", "inaccurate") and b is not None
        return (obj if ok else math.inf), b

    lo, hi = 0.0, eta_hi * (1.0 + 1e-3)
    best = None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        a, b = ratio(mid)
        if a <= 1.0:
            lo, best = mid, b
        else:
            hi = mid
        if hi - lo <= 1e-5 * max(lo, 1e-12):
            break
    if best is None:
        return None
    best = _tighten_sinr(s, ch, best, lo, power_cap=True)
    if np.any(metrics.all_crlbs(s, ch, best) > eps * (1 + 1e-7)):
        return None
    return best


def solve_comm_bisection(s: Scenario, ch: ChannelRealization, req: SolveRequest) -> SolveReport:
    """Globally optimal max-min SINR under a CRLB cap via bisection over the
    power-minimization problem (exact for M = 1)."""
    if req.mode != "comm":
        raise ValidationError("solve_comm_bisection requires comm mode")
    if s.num_bs != 1 and not req.allow_experimental_multi_bs:
        raise ValidationError("bisection requires M=1 "
                              "(set allow_experimental_multi_bs for the unproven general case)")
    t0 = time.perf_counter()
    objective = "power_sum" if s.num_bs == 1 else "power_maxratio"
    eps = req.epsilons(s.num_targets)
    data = _prepare(s, ch)
    trace = []
    statuses = []

    def power_ratio(eta):
        # The cap at 4x the budget only certifies a > 1 faster; it cannot bind
        # at any accepted point, so the bracketing is unchanged.
        r = solve_power_min(s, ch, eta, eps, objective=objective,
                            settings=req.conic, rank_tol=req.rank_tol, ratio_cap=4.0)
        statuses.append(f"pm({eta:.6g}):{r.backend_status}")
        trace.append((float(eta), float(r.ratio)))
        return r

    # a(0) follows from CRLB homogeneity: the cheapest point meeting the caps
    # is the radar-only shape scaled down, so a(0) = max_u C_u(P) / eps_u.
    radar = solve_sensing_sdr(s, ch, replace(req, mode="sensing", algorithm="sdr",
                                             sinr_threshold_eta=0.0,
                                             crlb_threshold_epsilon=None))
    if radar.status != "solved" or np.any(radar.crlb_m2 > eps * (1.0 + 1e-9)):
        return SolveReport(status="infeasible", mode="comm", algorithm="bisection",
                           objective_trace=trace, solver_statuses=statuses,
                           extras={"reason": "CRLB threshold below the radar-only optimum"},
                           wall_time_s=time.perf_counter() - t0)
    r0 = PowerMinResult(status="optimal", ratio=float(np.max(radar.crlb_m2 / eps)),
                        beamformers=radar.beamformers, rank_ratios=radar.rank_ratios)
    trace.append((0.0, r0.ratio))

    eta_up_init = _max_single_user_sinr_bound(data)
    eta_low, eta_up = 0.0, eta_up_init
    best = r0
    r_up = power_ratio(eta_up)
    iters = 2
    if r_up.status == "optimal" and r_up.ratio <= 1.0:
        eta_low = eta_up
        best = r_up
    else:
        while iters < req.bisection_max_iters and \
                (eta_up - eta_low) > req.bisection_tol * max(eta_low, eta_up_init * 1e-10):
            mid = 0.5 * (eta_low + eta_up)
            r = power_ratio(mid)
            iters += 1
            if r.status == "optimal" and r.ratio <= 1.0:
                eta_low, best = mid, r
            else:
                eta_up = mid

    cert = power_ratio(eta_low) if eta_low > 0 else r0
    if cert.status == "optimal" and cert.ratio <= 1.0 + 1e-6 and cert.beamformers is not None:
        best = cert
    b = best.beamformers
    if not audit_solution(s, ch, b, epsilons=eps)["ok"]:
        # The SDP point at eta* sits exactly on the power boundary; re-optimizing
        # the powers along its directions restores strict budget/CRLB feasibility.
        polished = _fixed_direction_max_min_sinr(
            s, ch, _unit_directions(b.vectors), eps, eta_hi=max(eta_low, 1e-12), req=req)
        if polished is not None:
            b = polished
    sinrs, power, crlbs = _achieved(s, ch, b)
    audit = audit_solution(s, ch, b, epsilons=eps)
    status = "solved" if audit["ok"] else "tolerance-not-met"
    return SolveReport(status=status, mode="comm", algorithm="bisection", beamformers=b,
                       sinr=sinrs, per_bs_power_w=power, crlb_m2=crlbs,
                       objective=float(np.min(sinrs)), objective_trace=trace,
                       rank_ratios=best.rank_ratios, solver_statuses=statuses,
                       iterations=iters, wall_time_s=time.perf_counter() - t0, audit=audit,
                       extras={"eta_star": float(eta_low),
                               "certificate_ratio": float(cert.ratio)})


# -- feasibility initialization -----------------------------------------------------------

def _tighten_sinr(s: Scenario, ch: ChannelRealization, b: BeamformerSet,
                  eta: float, power_cap: bool = True) -> BeamformerSet:
    """Rescale all beams by a common factor >= 1 so every SINR reaches eta
    exactly (solver-tolerance slack removal). SINR is increasing in a common
    scale since only the noise term stays fixed."""
    sigma2 = s.params.comm_noise_power_w
    M, K = b.num_bs, b.num_users
    need = 1.0
    for m in range(M):
        for k in range(K):
            num = abs(np.vdot(ch.comm[m, m, k], b.vectors[m, k])) ** 2
            interf = 0.0
            for i in range(M):
                for j in range(K):
                    if (i, j) != (m, k):
                        interf += abs(np.vdot(ch.comm[i, m, k], b.vectors[i, j])) ** 2
            margin = num - eta * interf
            if margin <= 0:
                return b  # interference-limited below eta; a common scale cannot fix it
            need = max(need, eta * sigma2 / margin)
    if need <= 1.0:
        return b
    gamma = math.sqrt(need) * (1.0 + 1e-12)
    scaled = gamma * b.vectors
    if power_cap:
        power = np.sum(np.abs(scaled) ** 2, axis=(1, 2))
        if np.max(power) > s.params.max_power_w * (1.0 + 1e-9):
            return b
    return BeamformerSet(vectors=scaled)


def feasible_init(s: Scenario, ch: ChannelRealization, eta: float, *,
                  settings: ConicSettings | None = None) -> BeamformerSet:
    """A point satisfying the SINR thresholds and per-BS power budgets.

    Solves the max-power-ratio feasibility SDP; raises InfeasibleError when the
    minimum achievable ratio exceeds 1.
    """
    if eta <= 0:
        return metrics.uniform_mrt(s, ch)
    r = solve_power_min(s, ch, eta, None, objective="power_maxratio",
                        settings=settings or ConicSettings())
    if r.status != "optimal" or r.beamformers is None:
        raise InfeasibleError(f"SINR feasibility subproblem returned {r.status}")
    if r.ratio > 1.0 + 1e-9:
        raise InfeasibleError(
            f"eta unattainable under per-BS power: min max-ratio {r.ratio:.4f} > 1")
    b = _tighten_sinr(s, ch, r.beamformers, eta)
    if float(np.min(metrics.all_sinrs(s, ch, b))) < eta * (1 - 1e-8):
        raise InfeasibleError("feasible_init extraction degraded beyond tolerance")
    return b


# -- SCA ------------------------------------------------------------------------------------

def _exact_aux(data: _Data, f_scaled: np.ndarray):
    """Exact (rho, u) auxiliaries at a beamformer iterate, in scaled units."""
    M, K = data.s.num_bs, data.s.num_users
    rho = np.zeros((M, K))
    uu = np.zeros((M, K))
    for m in range(M):
        for k in range(K):
            rho[m, k] = abs(np.vdot(data.hs[m, m, k], f_scaled[m, k]))
            acc = 1.0
            for i in range(M):
                for j in range(K):
                    if (i, j) != (m, k):
                        acc += abs(np.vdot(data.hs[i, m, k], f_scaled[i, j])) ** 2
            uu[m, k] = acc
    return rho, uu


def _build_sca_subproblem(data: _Data, f_r: np.ndarray, rho_r: np.ndarray, u_r: np.ndarray, *,
                          mode: str, eta: float = 0.0, crlb_caps=None):
    s = data.s
    M, K, U = s.num_bs, s.num_users, s.num_targets
    Nt = data.dim
    prog = ConicProgram()
    fv = [[prog.complex_vector(f"f[{m},{k}]", Nt) for k in range(K)] for m in range(M)]
    rho = [[prog.scalar(f"rho[{m},{k}]") for k in range(K)] for m in range(M)]
    uvar = [[prog.scalar(f"u[{m},{k}]") for k in range(K)] for m in range(M)]
    qv = [[prog.scalar(f"q[{m},{u}]") for u in range(U)] for m in range(M)]
    varpi = prog.scalar("varpi") if mode == "comm" else None

    for m in range(M):
        coords = []
        for k in range(K):
            coords.extend(fv[m][k].coords())
        prog.add_soc([1.0] + coords)  # sum_k ||f_mk||^2 <= P in scaled units

    needs_fim = mode == "sensing" or crlb_caps is not None
    if needs_fim:
        for m in range(M):
            for u in range(U):
                prog.add_nonneg(qv[m][u])
                # linearized illumination: 2 Re(f^H D f_r) - f_r^H D f_r >= q
                const = 0.0
                expr = LinExpr()
                for k in range(K):
                    proj = data.a_plain[m, u] @ f_r[m, k]
                    c = data.a_conj[m, u] * proj
                    expr = expr + fv[m][k].inner_re(c) * 2.0
                    const += abs(proj) ** 2
                prog.add_nonneg(expr - const - qv[m][u])

    for m in range(M):
        for k in range(K):
            # rho is carried relative to its iterate value (rho = rs * rho_hat)
            # so the cone blocks stay O(1) even at very high SINR
            rs = max(rho_r[m, k], 1e-12)
            prog.add_nonneg(rho[m][k])
            h = data.hs[m, m, k]
            proj = np.vdot(h, f_r[m, k])
            c = h * proj
            lin = fv[m][k].inner_re(c) * 2.0 - abs(proj) ** 2
            # linearized |h^H f|^2 >= rho^2, divided through by rs^2
            prog.add_rsoc(lin * (1.0 / rs**2), 0.5, [rho[m][k]])
            zs = []
            for i in range(M):
                for j in range(K):
                    if (i, j) == (m, k):
                        continue
                    re, im = fv[i][j].inner_parts(data.hs[i, m, k])
                    zs.extend([re, im])
            prog.add_rsoc(uvar[m][k] - 1.0, 0.5, zs)  # noise + interference <= u
            c1 = 2.0 * rho_r[m, k] * rs / u_r[m, k]
            c2 = (rho_r[m, k] / u_r[m, k]) ** 2
            surrogate = rho[m][k] * c1 - uvar[m][k] * c2
            if mode == "sensing":
                # slight over-targeting absorbs the solver slack accumulated
                # through the surrogate chain, keeping the exact SINR >= eta
                prog.add_nonneg(surrogate - eta * (1.0 + 1e-5))
            else:
                prog.add_nonneg(surrogate - varpi)

    t_exprs = []
    if needs_fim:
        t_exprs = [trace_inverse_epigraph(prog,
                                          _fim_exprs(data, [qv[m][u] for m in range(M)], u))
                   for u in range(U)]
    if mode == "sensing":
        if U == 1:
            prog.minimize(t_exprs[0])
        else:
            w = prog.scalar("w")
            for u in range(U):
                prog.add_nonneg(w - t_exprs[u] * (1.0 / data.refs[u]))
            prog.minimize(w)
    else:
        if crlb_caps is not None:
            for u in range(U):
                prog.add_nonneg(float(crlb_caps[u]) * data.refs[u] - t_exprs[u])
        prog.maximize(varpi)
    return prog, fv


def _run_sca(s, ch, data, f0: np.ndarray, *, mode: str, eta: float = 0.0, crlb_caps=None,
             req: SolveRequest):
    """Iterate convex subproblems from a feasible point; the exact objective
    sequence is monotone by construction (auxiliaries re-substituted exactly
    at every round).

    Subproblems are solved in each BS's channel/steering span (exact: any
    orthogonal beam component changes no constraint functional and only
    spends power), then lifted back to the full array dimension.
    """
    M, K = s.num_bs, s.num_users
    data, bases = _reduced_data(data)
    rho_floor = 1e-6 * math.sqrt(max(eta, 1.0))

    def project(full):
        if bases is None:
            return full
        out = np.zeros((M, K, data.dim), dtype=complex)
        for m in range(M):
            out[m] = full[m] @ np.conj(bases[m])
        return out

    def lift(reduced):
        if bases is None:
            return reduced
        out = np.zeros((M, K, s.params.num_tx_antennas), dtype=complex)
        for m in range(M):
            out[m] = reduced[m] @ bases[m].T
        return out

    f_scaled = project(f0 / math.sqrt(data.P))
    rho_r, u_r = _exact_aux(data, f_scaled)
    rho_r = np.maximum(rho_r, rho_floor)

    def exact_objective(fs):
        b = BeamformerSet(vectors=lift(fs) * math.sqrt(data.P))
        if mode == "sensing":
            return float(np.max(metrics.all_crlbs(s, ch, b)))
        return float(np.min(metrics.all_sinrs(s, ch, b)))

    trace = [exact_objective(f_scaled)]
    statuses = []
    best = f_scaled
    best_obj = trace[0]
    iters = 0
    for _ in range(req.sca_max_iters):
        prog, fv = _build_sca_subproblem(data, f_scaled, rho_r, u_r, mode=mode,
                                         eta=eta, crlb_caps=crlb_caps)
        sol = _robust_solve(prog, req.conic)
        statuses.append(f"sca:{sol.backend_status}")
        if sol.status not in ("optimal", "inaccurate"):
            break
        iters += 1
        f_new = np.array([[sol.values[f"f[{m},{k}]"] for k in range(K)] for m in range(M)])
        obj = exact_objective(f_new)
        trace.append(obj)
        improved = obj < best_obj if mode == "sensing" else obj > best_obj
        if improved:
            best, best_obj = f_new, obj
        rel_change = abs(trace[-1] - trace[-2]) / max(abs(trace[-1]), 1e-30)
        f_scaled = f_new
        rho_r, u_r = _exact_aux(data, f_scaled)
        rho_r = np.maximum(rho_r, rho_floor)
        if rel_change <= req.sca_rel_tol:
            break
    return lift(best) * math.sqrt(data.P), trace, statuses, iters


def solve_sensing_sca(s: Scenario, ch: ChannelRealization, req: SolveRequest,
                      init: BeamformerSet | None = None) -> SolveReport:
    """Unified SCA algorithm for the sensing-centric problem (any N_t, M, K)."""
    if req.mode != "sensing":
        raise ValidationError("solve_sensing_sca requires sensing mode")
    t0 = time.perf_counter()
    eta = float(req.sinr_threshold_eta)
    data = _prepare(s, ch)
    if init is None:
        try:
            init = feasible_init(s, ch, eta, settings=req.conic)
        except InfeasibleError as e:
            return SolveReport(status="infeasible", mode="sensing", algorithm="sca",
                               extras={"reason": str(e)},
                               wall_time_s=time.perf_counter() - t0)
    vecs, trace, statuses, iters = _run_sca(s, ch, data, np.array(init.vectors),
                                            mode="sensing", eta=eta, req=req)
    b = BeamformerSet(vectors=vecs)
    sinrs, power, crlbs = _achieved(s, ch, b)
    audit = audit_solution(s, ch, b, eta=eta)
    status = "solved" if audit["ok"] else "tolerance-not-met"
    return SolveReport(status=status, mode="sensing", algorithm="sca", beamformers=b,
                       sinr=sinrs, per_bs_power_w=power, crlb_m2=crlbs,
                       objective=float(np.max(crlbs)), objective_trace=trace,
                       solver_statuses=statuses, iterations=iters,
                       wall_time_s=time.perf_counter() - t0, audit=audit)


def _comm_sca_init(s, ch, eps, req) -> BeamformerSet | None:
    """Radar-only solution mixed with per-user MRT until every user has a
    nonzero direct-link gain while the CRLB caps still hold strictly."""
    radar_req = replace(req, mode="sensing", algorithm="sdr",
                        sinr_threshold_eta=0.0, crlb_threshold_epsilon=None)
    radar = solve_sensing_sdr(s, ch, radar_req)
    if radar.status != "solved":
        return None
    if np.any(radar.crlb_m2 > eps * (1.0 + 1e-9)):
        return None
    mrt = metrics.uniform_mrt(s, ch)
    P = s.params.max_power_w
    for delta in [0.25 * 0.5**t for t in range(14)] + [0.0]:
        vecs = math.sqrt(1.0 - delta) * radar.beamformers.vectors + \
            math.sqrt(delta) * mrt.vectors
        power = np.sum(np.abs(vecs) ** 2, axis=(1, 2))
        scale = np.minimum(1.0, np.sqrt(P / np.maximum(power, 1e-300)))
        vecs = vecs * scale[:, None, None]
        b = BeamformerSet(vectors=vecs)
        crlbs = metrics.all_crlbs(s, ch, b)
        margin = 1.0 - 1e-9 if delta > 0 else 1.0 + 1e-9
        if np.all(crlbs <= eps * margin):
            return b
    return None


def solve_comm_sca(s: Scenario, ch: ChannelRealization, req: SolveRequest,
                   init: BeamformerSet | None = None) -> SolveReport:
    """Unified SCA algorithm for the communication-centric problem.

    Runs without the CRLB caps first; if the unconstrained optimum already
    meets them the caps are vacuous (and loose thresholds stay out of the
    conic data). Otherwise restarts from a CRLB-feasible point with the caps
    in place.
    """
    if req.mode != "comm":
        raise ValidationError("solve_comm_sca requires comm mode")
    t0 = time.perf_counter()
    eps = req.epsilons(s.num_targets)
    data = _prepare(s, ch)
    trace, statuses, iters = [], [], 0
    capped = False
    b = None
    if init is None:
        free = metrics.uniform_mrt(s, ch)
        vecs, trace, statuses, iters = _run_sca(s, ch, data, np.array(free.vectors),
                                                mode="comm", crlb_caps=None, req=req)
        b = BeamformerSet(vectors=vecs)
        try:
            caps_violated = bool(np.any(metrics.all_crlbs(s, ch, b) > eps * (1.0 - 1e-9)))
        except metrics.SingularFimError:
            caps_violated = True
        if caps_violated:
            b = None  # caps bind; rerun from a CRLB-feasible point
            init = _comm_sca_init(s, ch, eps, req)
            if init is None:
                return SolveReport(status="infeasible", mode="comm", algorithm="sca",
                                   extras={"reason": "CRLB threshold below the radar-only optimum"},
                                   wall_time_s=time.perf_counter() - t0)
    if b is None:
        capped = True
        vecs, trace, statuses, iters = _run_sca(s, ch, data, np.array(init.vectors),
                                                mode="comm", crlb_caps=eps, req=req)
        b = BeamformerSet(vectors=vecs)
    sinrs, power, crlbs = _achieved(s, ch, b)
    audit = audit_solution(s, ch, b, epsilons=eps)
    status = "solved" if audit["ok"] else "tolerance-not-met"
    return SolveReport(status=status, mode="comm", algorithm="sca", beamformers=b,
                       sinr=sinrs, per_bs_power_w=power, crlb_m2=crlbs,
                       objective=float(np.min(sinrs)), objective_trace=trace,
                       solver_statuses=statuses, iterations=iters,
                       wall_time_s=time.perf_counter() - t0, audit=audit,
                       extras={"crlb_caps_active": capped})


# -- routing --------------------------------------------------------------------------------

def solve_multi_target(s: Scenario, ch: ChannelRealization, req: SolveRequest) -> SolveReport:
    """Route a (possibly multi-target) request to the appropriate algorithm.

    Sensing: SDR inside its proven-tight regime (N_t > M*K), SCA otherwise.
    Comm: bisection for M = 1, SCA otherwise. All solvers natively carry the
    per-target min-max epigraphs, so U = 1 produces the identical program.
    """
    if req.mode == "sensing":
        if s.params.num_tx_antennas > s.num_bs * s.num_users:
            return solve_sensing_sdr(s, ch, req)
        return solve_sensing_sca(s, ch, req)
    if s.num_bs == 1:
        return solve_comm_bisection(s, ch, req)
    return solve_comm_sca(s, ch, req)


def run_request(s: Scenario, ch: ChannelRealization, req: SolveRequest) -> SolveReport:
    """Dispatch on the request's algorithm name (the CLI entry point)."""
    from . import baselines  # deferred: baselines imports this module

    algo = req.algorithm
    if algo == "auto":
        return solve_multi_target(s, ch, req)
    if algo == "sdr":
        if req.mode != "sensing":
            raise ValidationError("algorithm 'sdr' is sensing-mode only; comm uses 'bisection'")
        return solve_sensing_sdr(s, ch, req)
    if algo == "sca":
        return solve_sensing_sca(s, ch, req) if req.mode == "sensing" else solve_comm_sca(s, ch, req)
    if algo == "bisection":
        return solve_comm_bisection(s, ch, req)
    if algo in ("zf", "mmse"):
        return baselines.solve_baseline(s, ch, req)
    if algo == "beampattern":
        return baselines.solve_beampattern_matching(s, ch, req)
    raise ValidationError(f"unknown algorithm '{algo}'")


# -- solution files ----------------------------------------------------------------------------

def _pairs(a: np.ndarray):
    return np.stack([np.real(a), np.imag(a)], axis=-1).tolist()


def save_report(path, report: SolveReport, s: Scenario, req: SolveRequest, *,
                timestamp: bool = True):
    """Write a solution file (JSON, complex numbers as [re, im] pairs)."""
    from . import __version__

    b = report.beamformers
    doc = {
        "format": "nisac-solution-v1",
        "meta": {
            "version": __version__,
            "scenario_hash": scenario_hash(s),
            "seed": req.seed,
            "tolerances": {"sca_rel_tol": req.sca_rel_tol, "bisection_tol": req.bisection_tol,
                           "rank_tol": req.rank_tol, "conic_accuracy": req.conic.accuracy},
            "array": {"num_tx_antennas": s.params.num_tx_antennas,
                      "antenna_spacing_ratio": s.params.antenna_spacing_ratio},
        },
        "request": {"mode": req.mode, "algorithm": req.algorithm,
                    "sinr_threshold_eta": req.sinr_threshold_eta,
                    "crlb_threshold_epsilon": req.crlb_threshold_epsilon},
        "status": report.status,
        "objective": None if math.isnan(report.objective) else report.objective,
        "beamformers": _pairs(b.vectors) if b is not None else None,
        "sensing_cov": _pairs(b.sensing_cov) if b is not None and b.sensing_cov is not None else None,
        "achieved": {
            "sinr_linear": report.sinr.tolist() if report.sinr is not None else None,
            "per_bs_power_w": report.per_bs_power_w.tolist() if report.per_bs_power_w is not None else None,
            "crlb_m2": report.crlb_m2.tolist() if report.crlb_m2 is not None else None,
        },
        "diagnostics": {
            "iterations": report.iterations,
            "rank_ratios": report.rank_ratios,
            "solver_statuses": report.solver_statuses,
            "objective_trace": _jsonable(report.objective_trace),
            "wall_time_s": report.wall_time_s,
            "extras": _jsonable(report.extras),
        },
    }
    if timestamp:
        import datetime
        doc["meta"]["created_utc"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def load_beamformers(path) -> tuple[BeamformerSet, dict]:
    """Read back a solution file's beamformers and metadata."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "nisac-solution-v1":
        raise ValidationError("not a solution file")
    if doc.get("beamformers") is None:
        raise ValidationError("solution file carries no beamformers")
    arr = np.asarray(doc["beamformers"], dtype=float)
    vecs = arr[..., 0] + 1j * arr[..., 1]
    cov = None
    if doc.get("sensing_cov") is not None:
        c = np.asarray(doc["sensing_cov"], dtype=float)
        cov = c[..., 0] + 1j * c[..., 1]
    return BeamformerSet(vectors=vecs, sensing_cov=cov), doc
