"""Self-contained property suite behind `nisac validate`.

Each check is a quick, deterministic version of the repository's core
invariants: analytic derivatives against finite differences, the complex
embedding's eigenvalue duplication, trace-inverse epigraph exactness, and the
conic solve contract on tiny reference problems.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import channel, conic, metrics, scenario


def _random_scenario(rng: np.random.Generator) -> scenario.Scenario:
    base = scenario.load_scenario_file(scenario.builtin_scenario_path("desk"))
    M = int(rng.integers(1, 4))
    N = int(rng.integers(1, 5))
    if M * N < 2:
        N = 2
    bs = rng.uniform(-200, 200, size=(M, 2))
    bs += np.sign(bs) * 20.0 + np.where(bs == 0, 20.0, 0.0)  # keep BSs away from the origin
    tmt = rng.uniform(-80, 80, size=(N, 2))
    users = rng.uniform(-150, 150, size=(M, 2, 2))
    target = rng.uniform(-30, 30, size=(1, 2))
    while min(np.linalg.norm(tmt - target, axis=1)) < 1.0:
        tmt = rng.uniform(-80, 80, size=(N, 2))
    return replace(base, bs_positions=bs, tmt_positions=tmt, cu_positions=users,
                   target_positions=target)


def fd_jacobian(s: scenario.Scenario, u: int, step: float = 1e-3) -> np.ndarray:
    """Central finite differences of delay() wrt the target position."""
    M, N = s.num_bs, s.num_tmt
    out = np.zeros((2, M * N))
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = step
        tp = np.array(s.target_positions)
        sp = replace(s, target_positions=tp + dp)
        sm = replace(s, target_positions=tp - dp)
        for m in range(M):
            for n in range(N):
                out[axis, m * N + n] = (scenario.delay(sp, m, n, u) -
                                        scenario.delay(sm, m, n, u)) / (2 * step)
    return out


def check_jacobian(trials: int = 20, rtol: float = 1e-6) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(trials):
        s = _random_scenario(rng)
        ana = scenario.jacobian(s, 0).entries
        num = fd_jacobian(s, 0)
        scale = np.max(np.abs(ana))
        worst = max(worst, float(np.max(np.abs(ana - num)) / scale))
    return worst <= rtol, f"max relative error {worst:.2e}"


def random_conditioned_case(rng, seed, max_cond: float = 1e4):
    """Random (scenario, channels, q) whose FIM is well enough conditioned for
    the fixed-step finite-difference oracle to resolve 1e-6 relative error.

    A 2x2 FIM with condition number c evaluates to ~c*eps relative accuracy,
    which the central difference divides by the 1e-5 step; capping c at 1e4
    keeps the oracle noise near 2e-7.
    """
    for attempt in range(200):
        s = _random_scenario(rng)
        ch = channel.draw_channels(s, seed=seed + 1000 * attempt)
        q = rng.uniform(0.2, 2.0, size=s.num_bs) * s.params.max_power_w
        try:
            entry = metrics.crlb_from_q(s, ch, q, 0)
        except metrics.SingularFimError:
            continue
        if np.linalg.cond(entry.fim) <= max_cond:
            return s, ch, q, entry
    raise RuntimeError("could not draw a well-conditioned random case")


def check_crlb_gradient(trials: int = 20, rtol: float = 1e-6) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0
    signs_ok = True
    for t in range(trials):
        s, ch, q, entry = random_conditioned_case(rng, seed=t)
        signs_ok = signs_ok and bool(np.all(entry.gradient_wrt_q <= 0.0))
        for m in range(s.num_bs):
            h = 1e-5 * q[m]
            qp, qm = q.copy(), q.copy()
            qp[m] += h
            qm[m] -= h
            fd = (metrics.crlb_from_q(s, ch, qp, 0).crlb_m2 -
                  metrics.crlb_from_q(s, ch, qm, 0).crlb_m2) / (2 * h)
            denom = max(abs(entry.gradient_wrt_q[m]), 1e-30)
            worst = max(worst, abs(fd - entry.gradient_wrt_q[m]) / denom)
    ok = worst <= rtol and signs_ok
    return ok, f"max relative error {worst:.2e}, all entries <= 0: {signs_ok}"


def check_crlb_homogeneity() -> tuple[bool, str]:
    s = scenario.load_scenario_file(scenario.builtin_scenario_path("desk"))
    ch = channel.draw_channels(s, seed=3)
    b = metrics.uniform_mrt(s, ch)
    c0 = metrics.crlb(s, ch, b, 0).crlb_m2
    worst = 0.0
    for alpha in (0.5, 2.0, 10.0):
        scaled = metrics.BeamformerSet(vectors=alpha * b.vectors)
        c = metrics.crlb(s, ch, scaled, 0).crlb_m2
        worst = max(worst, abs(c - c0 / alpha**2) / (c0 / alpha**2))
    return worst <= 1e-10, f"max relative deviation {worst:.2e}"


def check_embedding(trials: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    for _ in range(trials):
        n = int(rng.integers(1, 6))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        H = A + A.conj().T
        E = conic.embed_hermitian(H)
        ev_h = np.repeat(np.sort(np.linalg.eigvalsh(H)), 2)
        ev_e = np.sort(np.linalg.eigvalsh(E))
        if np.max(np.abs(ev_h - ev_e)) > 1e-9 * max(1.0, np.max(np.abs(ev_h))):
            return False, "eigenvalue duplication violated"
        if abs(np.trace(E) - 2 * np.trace(H).real) > 1e-9:
            return False, "trace doubling violated"
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        vt = np.concatenate([v.real, v.imag])
        lhs = (v.conj() @ H @ v).real
        rhs = vt @ E @ vt
        if abs(lhs - rhs) > 1e-12 * max(1.0, np.linalg.norm(H) * np.linalg.norm(v) ** 2):
            return False, "quadratic form mismatch"
    return True, f"{trials} random Hermitian matrices"


def check_epigraph() -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    cases = [np.eye(2), np.diag([2.0, 4.0])]
    for _ in range(5):
        A = rng.standard_normal((2, 2))
        cases.append(A @ A.T + 0.5 * np.eye(2))
    worst = 0.0
    for S in cases:
        p = conic.ConicProgram()
        t = conic.trace_inverse_epigraph(p, [[S[0, 0], S[0, 1]], [S[0, 1], S[1, 1]]])
        p.minimize(t)
        sol = conic.solve(p)
        want = float(np.trace(np.linalg.inv(S)))
        worst = max(worst, abs(sol.objective - want) / want)
    return worst <= 1e-6, f"max relative error {worst:.2e}"


def check_conic_contract() -> tuple[bool, str]:
    p = conic.ConicProgram()
    x = p.scalar("x")
    p.add_nonneg(x - 3.0)
    p.minimize(x)
    lp = conic.solve(p)

    p = conic.ConicProgram()
    t = p.scalar("t")
    p.add_soc([t, 3.0, 4.0])
    p.minimize(t)
    socp = conic.solve(p)

    p = conic.ConicProgram()
    X = p.hermitian_psd("X", 2)
    p.add_nonneg(X.quad_form(np.array([1.0, 0.0])) - 1.0)
    p.add_nonneg(X.quad_form(np.array([0.0, 1.0])) - 2.0)
    p.minimize(X.trace())
    sdp = conic.solve(p)

    ok = (abs(lp.objective - 3.0) < 1e-6 and abs(socp.objective - 5.0) < 1e-6
          and abs(sdp.objective - 3.0) < 1e-6
          and all(s.status == "optimal" for s in (lp, socp, sdp)))
    return ok, f"LP {lp.objective:.8f}, SOCP {socp.objective:.8f}, SDP {sdp.objective:.8f}"


def check_scaling_transparency() -> tuple[bool, str]:
    def build():
        p = conic.ConicProgram()
        x = p.scalar("x")
        y = p.scalar("y")
        p.add_nonneg(x - 1.5)
        p.add_nonneg(y - 0.5)
        p.add_soc([x + y, x - y, 1.0])
        p.minimize(2.0 * x + y)
        return p

    a = conic.solve(build(), conic.ConicSettings(scale=True))
    b = conic.solve(build(), conic.ConicSettings(scale=False))
    rel = abs(a.objective - b.objective) / max(abs(b.objective), 1e-30)
    return rel <= 1e-6, f"scaled vs unscaled relative gap {rel:.2e}"


def check_channel_determinism() -> tuple[bool, str]:
    s = scenario.load_scenario_file(scenario.builtin_scenario_path("desk"))
    a = channel.draw_channels(s, seed=42)
    b = channel.draw_channels(s, seed=42)
    same = np.array_equal(a.comm, b.comm) and np.array_equal(a.sensing, b.sensing)
    mods = np.abs(channel.array_response(16, 0.5, 0.3))
    unit = np.max(np.abs(mods - 1.0)) < 1e-12
    return same and unit, "bit-identical redraw, unit-modulus steering entries"


ALL_CHECKS = [
    ("jacobian-vs-finite-differences", check_jacobian),
    ("crlb-gradient-vs-finite-differences", check_crlb_gradient),
    ("crlb-homogeneity", check_crlb_homogeneity),
    ("hermitian-embedding", check_embedding),
    ("trace-inverse-epigraph", check_epigraph),
    ("conic-solve-contract", check_conic_contract),
    ("scaling-transparency", check_scaling_transparency),
    ("channel-determinism", check_channel_determinism),
]


def run_validation(out=print) -> bool:
    all_ok = True
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        all_ok = all_ok and ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
