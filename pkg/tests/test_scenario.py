import math
from dataclasses import replace

import numpy as np
import pytest

import nisac
from nisac import scenario
from nisac.scenario import (SingularGeometryError, ValidationError,
                            signed_angle_from_broadside)

import helpers

C = 299792458.0


def _config(desk, **overrides):
    cfg = scenario.scenario_to_config(desk)
    cfg.update(overrides)
    return cfg


def test_load_default_config(desk):
    assert desk.num_bs == 2
    assert desk.num_tmt == 4
    assert desk.num_targets == 1
    assert desk.num_users == 2
    assert desk.bs_height_m == 20.0
    np.testing.assert_allclose(desk.bs_positions[0], [80.0, 80.0 * math.sqrt(3)])
    assert desk.params.observation_time_s == pytest.approx(2.56e-6)


def test_zero_tmts_rejected(desk):
    cfg = _config(desk, tmt=[])
    with pytest.raises(ValidationError, match="N >= 1"):
        scenario.scenario_from_config(cfg)


def test_single_bs_single_tmt_rejected(desk):
    cfg = _config(desk)
    cfg["bs"]["positions"] = cfg["bs"]["positions"][:1]
    cfg["users"] = cfg["users"][:1]
    cfg["tmt"] = cfg["tmt"][:1]
    with pytest.raises(SingularGeometryError, match="M\\*N >= 2"):
        scenario.scenario_from_config(cfg)


def test_malformed_text_rejected():
    with pytest.raises(ValidationError, match="parse"):
        scenario.load_scenario("{not json")


def test_nonuniform_k_rejected(desk):
    cfg = _config(desk)
    cfg["users"][1] = cfg["users"][1][:1]
    with pytest.raises(ValidationError, match="uniform"):
        scenario.scenario_from_config(cfg)


def test_tmt_on_target_rejected(desk):
    cfg = _config(desk)
    cfg["tmt"][0] = {"x": 0.0, "y": 0.0}
    with pytest.raises(ValidationError, match="coincides"):
        scenario.scenario_from_config(cfg)


def test_aod_boresight():
    # BS at (0, 100) with broadside along -y sees a target at the origin head on
    assert signed_angle_from_broadside((0.0, -1.0), (0.0, -100.0)) == 0.0


def test_aod_45_degrees():
    # same -y broadside, BS at (100, 100), target at the origin
    angle = signed_angle_from_broadside((0.0, -1.0), (-100.0, -100.0))
    assert abs(angle) == pytest.approx(math.pi / 4, abs=1e-12)
    assert angle < 0  # clockwise from broadside under the CCW-positive convention


def test_aod_symmetric_targets(desk):
    s = replace(desk, bs_positions=np.array([[0.0, 100.0], [0.0, -100.0]]),
                target_positions=np.array([[30.0, 0.0], [-30.0, 0.0]]))
    a1 = nisac.aod(s, 0, 0)
    a2 = nisac.aod(s, 0, 1)
    assert a1 == pytest.approx(-a2, rel=1e-12)
    assert a1 != 0.0


def test_aod_origin_target_is_broadside(desk):
    assert nisac.aod(desk, 0, 0) == pytest.approx(0.0, abs=1e-14)
    assert nisac.aod(desk, 1, 0) == pytest.approx(0.0, abs=1e-14)


def test_delay_reference_value(desk):
    want = (math.sqrt(26000.0) + math.sqrt(5000.0)) / C
    assert nisac.delay(desk, 0, 0, 0) == pytest.approx(want, rel=1e-14)
    assert nisac.delay(desk, 0, 0, 0) == pytest.approx(7.7372e-7, rel=1e-4)


def test_delay_degenerate_tmt_leg(desk):
    # target essentially on top of the TMT: the TMT leg vanishes
    s = replace(desk, target_positions=np.array([[50.0, 50.0 + 1e-6]]))
    want = math.sqrt(30.0**2 + (80 * math.sqrt(3) - 50.0) ** 2 + 400.0) / C
    assert nisac.delay(s, 0, 0, 0) == pytest.approx(want, rel=1e-8)


def test_delay_mirrored_tmts(desk):
    delays = sorted(nisac.delay(desk, m, n, 0) for m in range(2) for n in range(4))
    swapped = replace(desk, tmt_positions=np.array(desk.tmt_positions)[[1, 0, 3, 2]])
    delays2 = sorted(nisac.delay(swapped, m, n, 0) for m in range(2) for n in range(4))
    np.testing.assert_allclose(delays, delays2, rtol=1e-15)


def test_delay_translation_invariance(desk):
    shift = np.array([123.4, -55.5])
    moved = replace(desk,
                    bs_positions=desk.bs_positions + shift,
                    tmt_positions=desk.tmt_positions + shift,
                    cu_positions=desk.cu_positions + shift,
                    target_positions=desk.target_positions + shift)
    for m in range(desk.num_bs):
        for n in range(desk.num_tmt):
            assert nisac.delay(moved, m, n, 0) == pytest.approx(
                nisac.delay(desk, m, n, 0), rel=1e-12)


def test_jacobian_reference_entry(desk):
    jac = nisac.jacobian(desk, 0)
    want = (-80.0 / math.sqrt(26000.0) - 50.0 / math.sqrt(5000.0)) / C
    assert jac.entries[0, 0] == pytest.approx(want, rel=1e-12)
    assert jac.entries[0, 0] == pytest.approx(-4.0136e-9, rel=1e-4)


def test_jacobian_matches_finite_differences(desk):
    ana = nisac.jacobian(desk, 0).entries
    num = helpers.fd_jacobian(desk, 0)
    scale = np.max(np.abs(ana))
    assert np.max(np.abs(ana - num)) / scale <= 1e-6


def test_jacobian_mirror_symmetry(desk):
    # target on the perpendicular bisector of two TMTs, BS on the same axis
    s = replace(desk,
                bs_positions=np.array([[0.0, 100.0], [0.0, 150.0]]),
                tmt_positions=np.array([[30.0, 40.0], [-30.0, 40.0]]),
                target_positions=np.array([[0.0, 0.0]]))
    jac = nisac.jacobian(s, 0)
    block = jac.columns_for_bs(0)
    assert block[0, 0] == pytest.approx(-block[0, 1], rel=1e-12)


def test_roundtrip(desk):
    text = nisac.dump_scenario(desk)
    again = nisac.load_scenario(text)
    assert again == desk
    assert nisac.dump_scenario(again) == text


def test_scenario_hash_stable(desk):
    h1 = nisac.scenario_hash(desk)
    h2 = nisac.scenario_hash(nisac.load_scenario(nisac.dump_scenario(desk)))
    assert h1 == h2
    trimmed = scenario.with_first_tmts(desk, 2)
    assert nisac.scenario_hash(trimmed) != h1


def test_unknown_system_key_rejected(desk):
    cfg = _config(desk)
    cfg["system"]["bandwidth_ghz"] = 1
    with pytest.raises(ValidationError, match="unknown system keys"):
        scenario.scenario_from_config(cfg)


def test_symbol_duration_defaults_to_inverse_bandwidth(desk):
    cfg = _config(desk)
    del cfg["system"]["symbol_duration_s"]
    s = scenario.scenario_from_config(cfg)
    assert s.params.symbol_duration_s == pytest.approx(1e-8)


def test_negative_power_rejected(desk):
    with pytest.raises(ValidationError, match="strictly positive"):
        replace(desk.params, max_power_w=-1.0)


def test_truncation_helpers(desk):
    assert scenario.with_first_tmts(desk, 2).num_tmt == 2
    assert scenario.with_first_bss(desk, 1).num_bs == 1
    assert scenario.with_first_targets(desk, 1).num_targets == 1
    with pytest.raises(ValidationError):
        scenario.with_first_tmts(desk, 9)
