"""Performance metrics for a beamformer set: SINR, powers, Fisher matrix,
closed-form localization CRLB with its analytic gradient, and beampatterns.

The position Fisher matrix for one target factorizes as
    FIM = sum_m q_m * G_m,      G_m = Lam_m @ Zhat_m @ Lam_m.T,
where q_m is the illumination gain BS m directs at the target, Lam_m is that
BS's block of delay Jacobian columns, and Zhat_m carries the per-TMT delay
information coefficient (8 pi^2 T beta^2 / sigma_s^2) * |eps_mn|^2. The CRLB
is tr(FIM^-1) in m^2. In SI units Zhat is O(1e17) while the Jacobian is
O(1e-9); the product is O(1), so all public results are plain SI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, array_response
from .scenario import JacobianMatrix, Scenario, aod, jacobian


class SingularFimError(ArithmeticError):
    """The 2x2 position FIM is numerically singular (degenerate geometry or
    zero illumination)."""

    def __init__(self, message, condition_number=np.inf):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Per-(BS, user) beamforming vectors plus optional dedicated sensing
    covariances (zero unless a covariance-level design produced them)."""

    vectors: np.ndarray                 # (M, K, N_t) complex
    sensing_cov: np.ndarray | None = None  # (M, N_t, N_t) Hermitian PSD

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 3:
            raise ValueError("vectors must have shape (M, K, N_t)")
        if not np.all(np.isfinite(v.view(float))):
            raise ValueError("non-finite beamformer entries")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        if self.sensing_cov is not None:
            r = np.asarray(self.sensing_cov, dtype=complex)
            if r.shape != (v.shape[0], v.shape[2], v.shape[2]):
                raise ValueError("sensing_cov must have shape (M, N_t, N_t)")
            herm_gap = np.max(np.abs(r - r.conj().transpose(0, 2, 1)))
            scale = max(1.0, float(np.max(np.abs(r))))
            if herm_gap > 1e-9 * scale:
                raise ValueError(f"sensing_cov not Hermitian within tolerance ({herm_gap:.2e})")
            r = 0.5 * (r + r.conj().transpose(0, 2, 1))
            for m in range(r.shape[0]):
                lam_min = float(np.linalg.eigvalsh(r[m])[0])
                if lam_min < -1e-9 * scale:
                    raise ValueError(f"sensing_cov[{m}] not PSD (min eigenvalue {lam_min:.2e})")
            r.flags.writeable = False
            object.__setattr__(self, "sensing_cov", r)

    @property
    def num_bs(self) -> int:
        return self.vectors.shape[0]

    @property
    def num_users(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class FisherBlocks:
    """Per-BS pieces of the delay Fisher matrix for one target."""

    q: np.ndarray          # (M,) illumination gains
    zhat_diag: np.ndarray  # (M, N) diagonal entries of Zhat_m, >= 0
    jacobian: JacobianMatrix


@dataclass(frozen=True)
class CrlbEntry:
    """CRLB report for one target."""

    crlb_m2: float
    fim: np.ndarray            # 2x2 position FIM
    gradient_wrt_q: np.ndarray  # (M,) dC/dq_m, all <= 0
    q: np.ndarray              # (M,) illumination gains used


def uniform_mrt(s: Scenario, ch: ChannelRealization) -> BeamformerSet:
    """Max-power MRT with equal power split: f_mk = sqrt(P/K) h_mmk / ||h_mmk||."""
    M, K, Nt = s.num_bs, s.num_users, s.params.num_tx_antennas
    f = np.zeros((M, K, Nt), dtype=complex)
    amp = np.sqrt(s.params.max_power_w / K)
    for m in range(M):
        for k in range(K):
            h = ch.comm[m, m, k]
            f[m, k] = amp * h / np.linalg.norm(h)
    return BeamformerSet(vectors=f)


def sinr(s: Scenario, ch: ChannelRealization, b: BeamformerSet, m: int, k: int) -> float:
    """SINR of user k served by BS m (linear). Dedicated sensing covariances,
    when present, count as interference."""
    sigma2 = s.params.comm_noise_power_w
    h_own = ch.comm[m, m, k]
    num = abs(np.vdot(h_own, b.vectors[m, k])) ** 2
    den = sigma2
    for i in range(b.num_bs):
        h = ch.comm[i, m, k]
        for j in range(b.num_users):
            if (i, j) == (m, k):
                continue
            den += abs(np.vdot(h, b.vectors[i, j])) ** 2
        if b.sensing_cov is not None:
            den += float(np.real(h.conj() @ b.sensing_cov[i] @ h))
    return num / den


def all_sinrs(s: Scenario, ch: ChannelRealization, b: BeamformerSet) -> np.ndarray:
    """(M, K) matrix of linear SINRs."""
    return np.array([[sinr(s, ch, b, m, k) for k in range(b.num_users)]
                     for m in range(b.num_bs)])


def illumination_gain(b: BeamformerSet, m: int, theta: float, params) -> float:
    """Beampattern power BS m radiates toward angle theta:
    sum_k |a(theta)^T f_mk|^2 + a^T R_m a*."""
    a = array_response(params.num_tx_antennas, params.antenna_spacing_ratio, theta)
    q = sum(abs(a @ b.vectors[m, k]) ** 2 for k in range(b.num_users))
    if b.sensing_cov is not None:
        q += float(np.real(a @ b.sensing_cov[m] @ np.conj(a)))
    return float(q)


def per_bs_power(b: BeamformerSet) -> np.ndarray:
    """Transmit power per BS: sum_k ||f_mk||^2 + tr(R_m), in watts."""
    p = np.sum(np.abs(b.vectors) ** 2, axis=(1, 2))
    if b.sensing_cov is not None:
        p = p + np.real(np.trace(b.sensing_cov, axis1=1, axis2=2))
    return p


def delay_info_coefficient(s: Scenario) -> float:
    """8 pi^2 T beta^2 / sigma_s^2, the per-unit-|eps|^2 delay information."""
    p = s.params
    return 8.0 * np.pi**2 * p.observation_time_s * p.effective_bandwidth_hz**2 \
        / p.sensing_noise_psd_w_per_hz


def fisher_blocks(s: Scenario, ch: ChannelRealization, b: BeamformerSet, u: int) -> FisherBlocks:
    coeff = delay_info_coefficient(s)
    q = np.array([illumination_gain(b, m, aod(s, m, u), s.params) for m in range(s.num_bs)])
    zhat = coeff * np.abs(ch.sensing[:, :, u]) ** 2
    return FisherBlocks(q=q, zhat_diag=zhat, jacobian=jacobian(s, u))


def fim_coefficients(s: Scenario, ch: ChannelRealization, u: int) -> np.ndarray:
    """(M, 2, 2) array G with G[m] = Lam_m Zhat_m Lam_m^T, so that the position
    FIM is sum_m q_m G[m]. Each G[m] is PSD."""
    coeff = delay_info_coefficient(s)
    jac = jacobian(s, u)
    G = np.zeros((s.num_bs, 2, 2))
    for m in range(s.num_bs):
        lam = jac.columns_for_bs(m)
        z = coeff * np.abs(ch.sensing[m, :, u]) ** 2
        G[m] = (lam * z) @ lam.T
    return G


def fisher_scale(s: Scenario, ch: ChannelRealization, u: int) -> float:
    """Reference Fisher magnitude: half-trace of the FIM under isotropic
    full-power transmission (q_m = P for all m). Used to scale conic data."""
    G = fim_coefficients(s, ch, u)
    return 0.5 * s.params.max_power_w * float(np.trace(np.sum(G, axis=0)))


def crlb_from_q(s: Scenario, ch: ChannelRealization, q, u: int,
                G: np.ndarray | None = None) -> CrlbEntry:
    """CRLB, FIM, and gradient for given illumination gains q (length M)."""
    q = np.asarray(q, dtype=float)
    if G is None:
        G = fim_coefficients(s, ch, u)
    fim = np.tensordot(q, G, axes=1)
    a, b_, d = fim[0, 0], fim[0, 1], fim[1, 1]
    det = a * d - b_ * b_
    scale = max(abs(a), abs(b_), abs(d))
    if not (det > 1e-30 * scale * scale) or scale == 0.0:
        ev = np.linalg.eigvalsh(fim)
        cond = np.inf if ev[0] <= 0 else ev[1] / ev[0]
        raise SingularFimError(f"singular FIM for target {u}", cond)
    inv = np.array([[d, -b_], [-b_, a]]) / det
    crlb = (a + d) / det
    grad = np.array([-float(np.trace(inv @ G[m] @ inv)) for m in range(len(q))])
    return CrlbEntry(crlb_m2=float(crlb), fim=fim, gradient_wrt_q=grad, q=q)


def crlb(s: Scenario, ch: ChannelRealization, b: BeamformerSet, u: int) -> CrlbEntry:
    """Closed-form localization CRLB for target u under beamformers b."""
    q = np.array([illumination_gain(b, m, aod(s, m, u), s.params) for m in range(s.num_bs)])
    return crlb_from_q(s, ch, q, u)


def all_crlbs(s: Scenario, ch: ChannelRealization, b: BeamformerSet) -> np.ndarray:
    """(U,) vector of per-target CRLBs in m^2."""
    return np.array([crlb(s, ch, b, u).crlb_m2 for u in range(s.num_targets)])


def beampattern(b: BeamformerSet, m: int, angle_grid, params) -> tuple[np.ndarray, np.ndarray]:
    """Transmit beampattern of BS m over a grid of angles (radians).

    Returns (linear gains, gains in dB normalized to the grid maximum). A zero
    pattern normalizes to NaN dB.
    """
    gains = np.array([illumination_gain(b, m, theta, params) for theta in np.asarray(angle_grid)])
    peak = gains.max() if gains.size else 0.0
    if peak > 0:
        with np.errstate(divide="ignore"):
            norm_db = 10.0 * np.log10(gains / peak)
    else:
        norm_db = np.full_like(gains, np.nan)
    return gains, norm_db
