"""Independent oracles shared by the unit and acceptance tests.

These deliberately re-derive quantities from first principles (explicit loops,
finite differences) rather than calling the code paths they are used to check.
"""

from dataclasses import replace

import numpy as np

from nisac import channel, delay


def fd_jacobian(s, u, step=1e-3):
    """Central finite differences of the delay map wrt the target position."""
    M, N = s.num_bs, s.num_tmt
    out = np.zeros((2, M * N))
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = step
        tp = np.array(s.target_positions)
        shifted = np.zeros((2, s.num_targets, 2))
        shifted[0] = tp + dp
        shifted[1] = tp - dp
        sp = replace(s, target_positions=shifted[0])
        sm = replace(s, target_positions=shifted[1])
        for m in range(M):
            for n in range(N):
                out[axis, m * N + n] = (delay(sp, m, n, u) - delay(sm, m, n, u)) / (2 * step)
    return out


def loop_sinr(s, ch, b, m, k):
    """Eq.-by-eq SINR: explicit loops over every interfering (i, j) pair."""
    h_own = ch.comm[m, m, k]
    num = abs(np.sum(np.conj(h_own) * b.vectors[m, k])) ** 2
    den = s.params.comm_noise_power_w
    for i in range(s.num_bs):
        h = ch.comm[i, m, k]
        for j in range(s.num_users):
            if (i, j) == (m, k):
                continue
            den += abs(np.sum(np.conj(h) * b.vectors[i, j])) ** 2
        if b.sensing_cov is not None:
            den += np.real(np.conj(h) @ b.sensing_cov[i] @ h)
    return num / den


def loop_power(b):
    """Elementwise power sum, one scalar at a time."""
    M, K, Nt = b.vectors.shape
    out = np.zeros(M)
    for m in range(M):
        acc = 0.0
        for k in range(K):
            for t in range(Nt):
                v = b.vectors[m, k, t]
                acc += v.real * v.real + v.imag * v.imag
        if b.sensing_cov is not None:
            for t in range(Nt):
                acc += b.sensing_cov[m, t, t].real
        out[m] = acc
    return out


def mirrored_desk_scenario(desk):
    """Desk geometry with users mirrored across the x-axis, so the whole
    layout is symmetric under y -> -y with BS0 <-> BS1, TMT0 <-> TMT1,
    TMT2 <-> TMT3."""
    users0 = desk.cu_positions[0]
    users1 = users0 * np.array([1.0, -1.0])
    return replace(desk, cu_positions=np.stack([users0, users1]))


def mirror_symmetric_channels(s, seed, bs_map, tmt_map):
    """A realization that is exactly symmetric under the y -> -y mirror.

    The upper-half draws are copied onto their mirror images, so the mirrored
    problem instance coincides with the original one.
    """
    ch = channel.draw_channels(s, seed)
    comm = np.array(ch.comm)
    sens = np.array(ch.sensing)
    M, K = s.num_bs, s.num_users
    for i in range(M):
        for m in range(M):
            for k in range(K):
                comm[bs_map[i], bs_map[m], k] = comm[i, m, k]
    U = s.num_targets
    tgt_map = _target_mirror_map(s)
    for m in range(M):
        for n in range(s.num_tmt):
            for u in range(U):
                sens[bs_map[m], tmt_map[n], tgt_map[u]] = sens[m, n, u]
    return channel.ChannelRealization(comm=comm, sensing=sens, seed=seed)


def _target_mirror_map(s):
    mapping = {}
    for u, t in enumerate(s.target_positions):
        mirrored = t * np.array([1.0, -1.0])
        for v, t2 in enumerate(s.target_positions):
            if np.allclose(mirrored, t2):
                mapping[u] = v
                break
        else:
            raise AssertionError("target set is not mirror symmetric")
    return mapping


def beam_scenario(desk):
    """Desk variant whose target sits at +60 / -60 degrees from the two BS
    broadsides (target moved to (160, 0), TMTs rearranged around it)."""
    return replace(
        desk,
        target_positions=np.array([[160.0, 0.0]]),
        tmt_positions=np.array([[110.0, 50.0], [110.0, -50.0], [210.0, 50.0], [210.0, -50.0]]),
    )
