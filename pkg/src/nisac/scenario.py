"""Network geometry, system parameters, and deterministic geometric quantities.

Positions are 2-D ground-plane coordinates in meters. Base stations sit at a
common height ``H``; monitoring terminals (TMTs), users, and targets are on
the ground plane. Internally everything is SI (watts, Hz, seconds, radians);
config files use dBm / dB / degrees where conventional.

ULA convention: each BS's array broadside points from the BS toward the scene
origin. Angles of departure are measured from broadside, positive
counterclockwise, and folded into (-pi/2, pi/2] (a ULA cannot distinguish
front from back).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class ValidationError(ValueError):
    """A config, scenario, or request violates one of its invariants."""


class SingularGeometryError(ValidationError):
    """A geometry that makes the 2x2 position FIM structurally singular."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0) * 1e-3


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w * 1e3)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SystemParams:
    """Physical-layer parameters shared by every node in the network.

    ``symbol_duration_s`` defaults to 1/bandwidth when loaded from config;
    the observation time T = num_snapshots * symbol_duration_s is always
    derived, never stored.
    """

    carrier_freq_hz: float
    num_tx_antennas: int
    antenna_spacing_ratio: float
    effective_bandwidth_hz: float
    comm_noise_power_w: float
    sensing_noise_psd_w_per_hz: float
    num_snapshots: int
    symbol_duration_s: float
    max_power_w: float
    rician_factor: float
    num_nlos_paths: int
    nlos_spread_rad: float = math.radians(30.0)
    speed_of_light_m_s: float = SPEED_OF_LIGHT

    def __post_init__(self):
        positive = {
            "carrier_freq_hz": self.carrier_freq_hz,
            "antenna_spacing_ratio": self.antenna_spacing_ratio,
            "effective_bandwidth_hz": self.effective_bandwidth_hz,
            "comm_noise_power_w": self.comm_noise_power_w,
            "sensing_noise_psd_w_per_hz": self.sensing_noise_psd_w_per_hz,
            "symbol_duration_s": self.symbol_duration_s,
            "max_power_w": self.max_power_w,
            "rician_factor": self.rician_factor,
            "speed_of_light_m_s": self.speed_of_light_m_s,
        }
        for name, value in positive.items():
            if not (value > 0.0) or not math.isfinite(value):
                raise ValidationError(f"{name} must be strictly positive, got {value}")
        if int(self.num_tx_antennas) != self.num_tx_antennas or self.num_tx_antennas < 1:
            raise ValidationError("num_tx_antennas must be an integer >= 1")
        if int(self.num_snapshots) != self.num_snapshots or self.num_snapshots < 1:
            raise ValidationError("num_snapshots must be an integer >= 1")
        if int(self.num_nlos_paths) != self.num_nlos_paths or self.num_nlos_paths < 0:
            raise ValidationError("num_nlos_paths must be an integer >= 0")
        if self.nlos_spread_rad < 0:
            raise ValidationError("nlos_spread_rad must be >= 0")

    @property
    def observation_time_s(self) -> float:
        return self.num_snapshots * self.symbol_duration_s

    @property
    def wavelength_m(self) -> float:
        return self.speed_of_light_m_s / self.carrier_freq_hz


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated network layout: BSs, TMTs, users per BS, and targets."""

    params: SystemParams
    bs_positions: np.ndarray      # (M, 2)
    bs_height_m: float
    tmt_positions: np.ndarray     # (N, 2)
    cu_positions: np.ndarray      # (M, K, 2)
    target_positions: np.ndarray  # (U, 2)

    def __post_init__(self):
        object.__setattr__(self, "bs_positions", _readonly(np.atleast_2d(self.bs_positions)))
        object.__setattr__(self, "tmt_positions", _readonly(np.atleast_2d(self.tmt_positions)))
        object.__setattr__(self, "cu_positions", _readonly(np.asarray(self.cu_positions, dtype=float)))
        object.__setattr__(self, "target_positions", _readonly(np.atleast_2d(self.target_positions)))
        self._validate()

    def _validate(self):
        if self.bs_positions.ndim != 2 or self.bs_positions.shape[1] != 2 or self.num_bs < 1:
            raise ValidationError("M >= 1 BS positions of shape (M, 2) required")
        if self.tmt_positions.ndim != 2 or self.tmt_positions.shape[1] != 2 or self.num_tmt < 1:
            raise ValidationError("N >= 1: at least one TMT is required")
        if self.cu_positions.ndim != 3 or self.cu_positions.shape[2] != 2:
            raise ValidationError("cu_positions must have shape (M, K, 2) with K uniform across BSs")
        if self.cu_positions.shape[0] != self.num_bs:
            raise ValidationError("cu_positions outer length must equal the number of BSs")
        if self.num_users < 1:
            raise ValidationError("K >= 1 user per BS required")
        if self.target_positions.ndim != 2 or self.target_positions.shape[1] != 2 or self.num_targets < 1:
            raise ValidationError("U >= 1 target required")
        if not (self.bs_height_m > 0):
            raise ValidationError("bs_height_m must be strictly positive")
        if self.num_bs * self.num_tmt < 2:
            raise SingularGeometryError(
                "M*N >= 2 required: a single BS-TMT pair gives a rank-1 position FIM")
        for m in range(self.num_bs):
            if np.linalg.norm(self.bs_positions[m]) < 1e-9:
                raise ValidationError("BS at the scene origin has an undefined broadside direction")
        for u, t in enumerate(self.target_positions):
            for n, p in enumerate(self.tmt_positions):
                if np.linalg.norm(p - t) < 1e-9:
                    raise ValidationError(f"TMT {n} coincides with target {u} (zero distance)")
        # BS-target ground distance can be zero (the 3-D distance stays >= H),
        # but reject NaN/inf coordinates everywhere.
        for name, arr in (("bs", self.bs_positions), ("tmt", self.tmt_positions),
                          ("users", self.cu_positions), ("targets", self.target_positions)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite coordinate in {name}")

    # -- sizes ---------------------------------------------------------------

    @property
    def num_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def num_tmt(self) -> int:
        return self.tmt_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.cu_positions.shape[1]

    @property
    def num_targets(self) -> int:
        return self.target_positions.shape[0]

    # -- distances -----------------------------------------------------------

    def bs_target_distance(self, m: int, u: int) -> float:
        """3-D distance from BS m (at height H) to target u (on the ground)."""
        d2 = self.bs_positions[m] - self.target_positions[u]
        return math.hypot(math.hypot(d2[0], d2[1]), self.bs_height_m)

    def tmt_target_distance(self, n: int, u: int) -> float:
        """2-D ground distance from TMT n to target u."""
        d = self.tmt_positions[n] - self.target_positions[u]
        return math.hypot(d[0], d[1])

    def bs_user_distance(self, i: int, m: int, k: int) -> float:
        """3-D distance from BS i to user k served by BS m."""
        d2 = self.bs_positions[i] - self.cu_positions[m, k]
        return math.hypot(math.hypot(d2[0], d2[1]), self.bs_height_m)

    # -- angles --------------------------------------------------------------

    def broadside(self, m: int) -> np.ndarray:
        """Unit vector from BS m toward the scene origin (array broadside)."""
        v = -self.bs_positions[m]
        return v / np.linalg.norm(v)

    def aod_to_point(self, m: int, point) -> float:
        direction = np.asarray(point, dtype=float) - self.bs_positions[m]
        return signed_angle_from_broadside(self.broadside(m), direction)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.params == other.params
                and self.bs_height_m == other.bs_height_m
                and np.array_equal(self.bs_positions, other.bs_positions)
                and np.array_equal(self.tmt_positions, other.tmt_positions)
                and np.array_equal(self.cu_positions, other.cu_positions)
                and np.array_equal(self.target_positions, other.target_positions))


@dataclass(frozen=True)
class JacobianMatrix:
    """Partials of the BS->target->TMT delays wrt the target position.

    ``entries`` is 2 x (M*N) in s/m; row 0 is d(tau)/dx, row 1 is d(tau)/dy;
    columns are ordered lexicographically by (m, n), i.e. column m*N + n.
    """

    entries: np.ndarray
    num_bs: int
    num_tmt: int

    def columns_for_bs(self, m: int) -> np.ndarray:
        """The 2 x N block of columns belonging to BS m."""
        return self.entries[:, m * self.num_tmt:(m + 1) * self.num_tmt]


def signed_angle_from_broadside(broadside, direction) -> float:
    """Angle of ``direction`` measured from ``broadside``, CCW positive.

    Folded into (-pi/2, pi/2] via asin(sin(.)) since a ULA only resolves
    sin(angle).
    """
    u = np.asarray(broadside, dtype=float)
    v = np.asarray(direction, dtype=float)
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return 0.0
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    raw = math.atan2(cross, dot)
    folded = math.asin(math.sin(raw))
    if folded == -math.pi / 2:
        folded = math.pi / 2
    return folded


def aod(s: Scenario, m: int, u: int) -> float:
    """AoD from BS m to target u under the origin-facing broadside convention."""
    return s.aod_to_point(m, s.target_positions[u])


def user_aod(s: Scenario, i: int, m: int, k: int) -> float:
    """LoS AoD from BS i to the k-th user served by BS m."""
    return s.aod_to_point(i, s.cu_positions[m, k])


def delay(s: Scenario, m: int, n: int, u: int) -> float:
    """Propagation delay of the BS m -> target u -> TMT n path, in seconds."""
    return (s.bs_target_distance(m, u) + s.tmt_target_distance(n, u)) / s.params.speed_of_light_m_s


def jacobian(s: Scenario, u: int) -> JacobianMatrix:
    """Analytic 2 x (M*N) Jacobian of the delays wrt the target position."""
    M, N = s.num_bs, s.num_tmt
    c = s.params.speed_of_light_m_s
    t = s.target_positions[u]
    entries = np.zeros((2, M * N))
    for m in range(M):
        d3 = s.bs_target_distance(m, u)
        gx_bs = (t[0] - s.bs_positions[m, 0]) / d3
        gy_bs = (t[1] - s.bs_positions[m, 1]) / d3
        for n in range(N):
            d2 = s.tmt_target_distance(n, u)
            col = m * N + n
            entries[0, col] = (gx_bs + (t[0] - s.tmt_positions[n, 0]) / d2) / c
            entries[1, col] = (gy_bs + (t[1] - s.tmt_positions[n, 1]) / d2) / c
    return JacobianMatrix(entries=_readonly(entries), num_bs=M, num_tmt=N)


# -- config I/O ---------------------------------------------------------------

_SYSTEM_KEYS = {
    "carrier_freq_hz", "num_tx_antennas", "antenna_spacing_ratio",
    "effective_bandwidth_hz", "comm_noise_power_dbm", "sensing_noise_psd_dbm_per_hz",
    "num_snapshots", "symbol_duration_s", "max_power_dbm", "rician_factor_db",
    "num_nlos_paths", "nlos_spread_deg", "speed_of_light_m_s",
}


def _xy(obj, where: str) -> tuple:
    try:
        return (float(obj["x"]), float(obj["y"]))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"expected an {{x, y}} object in {where}") from e


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a Scenario from the JSON-compatible config object model."""
    if not isinstance(cfg, dict):
        raise ValidationError("config root must be an object")
    for key in ("system", "bs", "tmt", "users", "targets"):
        if key not in cfg:
            raise ValidationError(f"missing config key '{key}'")
    sys_cfg = dict(cfg["system"])
    unknown = set(sys_cfg) - _SYSTEM_KEYS
    if unknown:
        raise ValidationError(f"unknown system keys: {sorted(unknown)}")
    for key in ("carrier_freq_hz", "num_tx_antennas", "antenna_spacing_ratio",
                "effective_bandwidth_hz", "comm_noise_power_dbm",
                "sensing_noise_psd_dbm_per_hz", "num_snapshots", "max_power_dbm",
                "rician_factor_db", "num_nlos_paths"):
        if key not in sys_cfg:
            raise ValidationError(f"missing system key '{key}'")
    beta = float(sys_cfg["effective_bandwidth_hz"])
    if not beta > 0:
        raise ValidationError("effective_bandwidth_hz must be strictly positive")
    params = SystemParams(
        carrier_freq_hz=float(sys_cfg["carrier_freq_hz"]),
        num_tx_antennas=int(sys_cfg["num_tx_antennas"]),
        antenna_spacing_ratio=float(sys_cfg["antenna_spacing_ratio"]),
        effective_bandwidth_hz=beta,
        comm_noise_power_w=dbm_to_watts(float(sys_cfg["comm_noise_power_dbm"])),
        sensing_noise_psd_w_per_hz=dbm_to_watts(float(sys_cfg["sensing_noise_psd_dbm_per_hz"])),
        num_snapshots=int(sys_cfg["num_snapshots"]),
        symbol_duration_s=float(sys_cfg.get("symbol_duration_s", 1.0 / beta)),
        max_power_w=dbm_to_watts(float(sys_cfg["max_power_dbm"])),
        rician_factor=db_to_linear(float(sys_cfg["rician_factor_db"])),
        num_nlos_paths=int(sys_cfg["num_nlos_paths"]),
        nlos_spread_rad=math.radians(float(sys_cfg.get("nlos_spread_deg", 30.0))),
        speed_of_light_m_s=float(sys_cfg.get("speed_of_light_m_s", SPEED_OF_LIGHT)),
    )
    bs_cfg = cfg["bs"]
    if not isinstance(bs_cfg, dict) or "positions" not in bs_cfg or "height_m" not in bs_cfg:
        raise ValidationError("'bs' must be an object with 'positions' and 'height_m'")
    bs = [_xy(p, "bs.positions") for p in bs_cfg["positions"]]
    tmt = [_xy(p, "tmt") for p in cfg["tmt"]]
    users = cfg["users"]
    if not isinstance(users, list) or len(users) != len(bs):
        raise ValidationError("'users' must be a list of per-BS user lists (outer index = serving BS)")
    k_counts = {len(group) for group in users}
    if len(k_counts) > 1:
        raise ValidationError("K must be uniform across BSs")
    cu = [[_xy(p, "users") for p in group] for group in users]
    targets = [_xy(p, "targets") for p in cfg["targets"]]
    if len(tmt) == 0:
        raise ValidationError("N >= 1: at least one TMT is required")
    if len(targets) == 0:
        raise ValidationError("U >= 1 target required")
    if not cu or not cu[0]:
        raise ValidationError("K >= 1 user per BS required")
    return Scenario(
        params=params,
        bs_positions=np.array(bs),
        bs_height_m=float(bs_cfg["height_m"]),
        tmt_positions=np.array(tmt),
        cu_positions=np.array(cu),
        target_positions=np.array(targets),
    )


def scenario_to_config(s: Scenario) -> dict:
    """Inverse of scenario_from_config (canonical key order, config units)."""
    p = s.params
    return {
        "system": {
            "carrier_freq_hz": p.carrier_freq_hz,
            "num_tx_antennas": p.num_tx_antennas,
            "antenna_spacing_ratio": p.antenna_spacing_ratio,
            "effective_bandwidth_hz": p.effective_bandwidth_hz,
            "comm_noise_power_dbm": watts_to_dbm(p.comm_noise_power_w),
            "sensing_noise_psd_dbm_per_hz": watts_to_dbm(p.sensing_noise_psd_w_per_hz),
            "num_snapshots": p.num_snapshots,
            "symbol_duration_s": p.symbol_duration_s,
            "max_power_dbm": watts_to_dbm(p.max_power_w),
            "rician_factor_db": linear_to_db(p.rician_factor),
            "num_nlos_paths": p.num_nlos_paths,
            "nlos_spread_deg": math.degrees(p.nlos_spread_rad),
            "speed_of_light_m_s": p.speed_of_light_m_s,
        },
        "bs": {
            "height_m": s.bs_height_m,
            "positions": [{"x": float(x), "y": float(y)} for x, y in s.bs_positions],
        },
        "tmt": [{"x": float(x), "y": float(y)} for x, y in s.tmt_positions],
        "users": [[{"x": float(x), "y": float(y)} for x, y in group] for group in s.cu_positions],
        "targets": [{"x": float(x), "y": float(y)} for x, y in s.target_positions],
    }


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario config document (JSON object model)."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"scenario config does not parse: {e}") from e
    return scenario_from_config(cfg)


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_config(s), indent=2)


def scenario_hash(s: Scenario) -> str:
    """Stable hash of the physical content (independent of file formatting)."""
    import hashlib
    blob = json.dumps(scenario_to_config(s), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def with_first_tmts(s: Scenario, n: int) -> Scenario:
    """Scenario restricted to the first n TMTs (used by sweeps)."""
    if not (1 <= n <= s.num_tmt):
        raise ValidationError(f"num_tmts value {n} outside [1, {s.num_tmt}]")
    return replace(s, tmt_positions=np.array(s.tmt_positions[:n]))


def with_first_bss(s: Scenario, m: int) -> Scenario:
    """Scenario restricted to the first m BSs and their users."""
    if not (1 <= m <= s.num_bs):
        raise ValidationError(f"num_bs value {m} outside [1, {s.num_bs}]")
    return replace(s, bs_positions=np.array(s.bs_positions[:m]),
                   cu_positions=np.array(s.cu_positions[:m]))


def with_first_targets(s: Scenario, u: int) -> Scenario:
    """Scenario restricted to the first u targets."""
    if not (1 <= u <= s.num_targets):
        raise ValidationError(f"num_targets value {u} outside [1, {s.num_targets}]")
    return replace(s, target_positions=np.array(s.target_positions[:u]))


def builtin_scenario_path(name: str):
    """Path of a scenario file shipped with the package ('desk', 'paper-scale')."""
    from importlib import resources
    fname = {"desk": "desk.json", "paper-scale": "paper_scale.json"}.get(name)
    if fname is None:
        raise ValidationError(f"unknown builtin scenario '{name}'")
    return resources.files("nisac.data") / fname
