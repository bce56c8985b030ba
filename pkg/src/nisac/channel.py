"""Random channel generation under reproducible, order-independent seeding.

Every (transmitter, receiver) pair gets its own Philox substream keyed by
(master_seed, purpose tag, indices), so draws do not depend on loop order and
distinct pairs are statistically independent. The same (Scenario, seed) always
produces bit-identical realizations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, user_aod

_SEED_MASK = (1 << 64) - 1
_TAG_COMM = 0x636F6D6D  # "comm"
_TAG_SENS = 0x73656E73  # "sens"


class ChannelGenerationError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelRealization:
    """One random draw of all communication and sensing channels.

    comm[i, m, k] is the length-N_t channel from BS i to user k of BS m;
    sensing[m, n, u] is the compound BS m -> target u -> TMT n coefficient
    (large-scale fading times random RCS).
    """

    comm: np.ndarray     # (M, M, K, N_t) complex
    sensing: np.ndarray  # (M, N, U) complex
    seed: int

    def __post_init__(self):
        for name, arr in (("comm", self.comm), ("sensing", self.sensing)):
            if not np.all(np.isfinite(arr)):
                raise ChannelGenerationError(f"non-finite entries in {name} channels")
            arr.flags.writeable = False


def array_response(n_t: int, spacing_ratio: float, phi: float) -> np.ndarray:
    """ULA steering vector a(phi); element p is exp(j*2*pi*(d/lambda)*p*sin(phi))."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    p = np.arange(n_t)
    return np.exp(2j * np.pi * spacing_ratio * p * np.sin(phi))


def _stream(seed: int, tag: int, *idx: int) -> np.random.Generator:
    key = np.random.SeedSequence((int(seed) & _SEED_MASK, tag) + tuple(int(i) for i in idx))
    return np.random.Generator(np.random.Philox(key))


def _complex_normal(rng: np.random.Generator, size=None) -> np.ndarray:
    # standard circularly-symmetric complex Gaussian, E|z|^2 = 1
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return (re + 1j * im) / np.sqrt(2.0)


def comm_pathloss(s: Scenario, i: int, m: int, k: int) -> float:
    """Free-space one-way power gain c^2 / (f_c^2 (4 pi)^2 d^2)."""
    p = s.params
    d = s.bs_user_distance(i, m, k)
    if d < 1e-9:
        raise ChannelGenerationError(f"user ({m},{k}) collocated with BS {i}")
    return p.speed_of_light_m_s**2 / (p.carrier_freq_hz**2 * (4.0 * np.pi) ** 2 * d**2)


def sensing_pathloss(s: Scenario, m: int, n: int, u: int) -> float:
    """Two-hop power gain c^2 / (f_c^2 (4 pi)^3 d_m^2 d_n'^2)."""
    p = s.params
    d_bs = s.bs_target_distance(m, u)
    d_tmt = s.tmt_target_distance(n, u)
    return p.speed_of_light_m_s**2 / (p.carrier_freq_hz**2 * (4.0 * np.pi) ** 3 * d_bs**2 * d_tmt**2)


def draw_comm_channels(s: Scenario, seed: int) -> np.ndarray:
    """Rician multipath channels h[i, m, k] for every BS/user pair.

    The LoS component points along the geometric AoD with a random complex
    coefficient; NLoS AoDs are uniform within +/- nlos_spread of the LoS angle.
    """
    p = s.params
    M, K, Nt = s.num_bs, s.num_users, p.num_tx_antennas
    kappa, V = p.rician_factor, p.num_nlos_paths
    los_w = np.sqrt(kappa / (1.0 + kappa))
    nlos_w = np.sqrt(1.0 / (1.0 + kappa)) * (np.sqrt(1.0 / V) if V > 0 else 0.0)
    h = np.zeros((M, M, K, Nt), dtype=complex)
    for i in range(M):
        for m in range(M):
            for k in range(K):
                gain = np.sqrt(comm_pathloss(s, i, m, k))
                phi0 = user_aod(s, i, m, k)
                rng = _stream(seed, _TAG_COMM, i, m, k)
                zeta0 = _complex_normal(rng)
                vec = los_w * gain * zeta0 * np.conj(array_response(Nt, p.antenna_spacing_ratio, phi0))
                if V > 0:
                    phis = phi0 + p.nlos_spread_rad * (2.0 * rng.random(V) - 1.0)
                    zetas = _complex_normal(rng, V)
                    for v in range(V):
                        vec = vec + nlos_w * gain * zetas[v] * np.conj(
                            array_response(Nt, p.antenna_spacing_ratio, phis[v]))
                h[i, m, k] = vec
    return h


def draw_sensing_coeffs(s: Scenario, seed: int) -> np.ndarray:
    """Sensing coefficients eps[m, n, u] = sqrt(pathloss) * unit-variance RCS."""
    M, N, U = s.num_bs, s.num_tmt, s.num_targets
    eps = np.zeros((M, N, U), dtype=complex)
    for m in range(M):
        for n in range(N):
            for u in range(U):
                rng = _stream(seed, _TAG_SENS, m, n, u)
                eps[m, n, u] = np.sqrt(sensing_pathloss(s, m, n, u)) * _complex_normal(rng)
    return eps


def draw_channels(s: Scenario, seed: int) -> ChannelRealization:
    return ChannelRealization(
        comm=draw_comm_channels(s, seed),
        sensing=draw_sensing_coeffs(s, seed),
        seed=int(seed),
    )


# -- dump / replay -------------------------------------------------------------

def _cplx_to_pairs(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _pairs_to_cplx(lst) -> np.ndarray:
    arr = np.asarray(lst, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def dump_realization(ch: ChannelRealization) -> str:
    """Serialize a realization with complex numbers as [re, im] pairs."""
    doc = {
        "format": "nisac-channels-v1",
        "seed": ch.seed,
        "comm": _cplx_to_pairs(ch.comm),
        "sensing": _cplx_to_pairs(ch.sensing),
    }
    return json.dumps(doc)


def load_realization(text: str) -> ChannelRealization:
    doc = json.loads(text)
    if doc.get("format") != "nisac-channels-v1":
        raise ChannelGenerationError("not a channel dump file")
    return ChannelRealization(
        comm=_pairs_to_cplx(doc["comm"]),
        sensing=_pairs_to_cplx(doc["sensing"]),
        seed=int(doc["seed"]),
    )
