import json

import numpy as np
import pytest

from treecolor.certify import (
    DEFAULT_THRESHOLD,
    Certificate,
    IntegrationControl,
    Trajectory,
    certificate_roundtrip,
    certificate_to_json,
    certify,
    euler_ode_compare,
    find_stop_time,
    integrate,
    load_certificate,
    save_certificate,
    verify_certificate,
)
from treecolor.dynamics import (
    PaletteConfig,
    TuningParams,
    TypeDistribution,
    cascade_growth,
    default_tuning,
    remainder_growth,
    type_space,
)
from treecolor.errors import (
    CertificateParseError,
    CertificateVerificationError,
    ConfigurationError,
)

CFG43 = PaletteConfig(4, 3)
TUNING43 = default_tuning(CFG43)


@pytest.fixture(scope="module")
def cert43():
    # small but real certification run shared by the roundtrip tests
    return certify(CFG43, TUNING43, control=IntegrationControl(step=2e-3, halvings=1))


def test_integration_control_validation():
    with pytest.raises(ConfigurationError):
        IntegrationControl(method="rk5")
    with pytest.raises(ConfigurationError):
        IntegrationControl(step=0.0)
    with pytest.raises(ConfigurationError):
        IntegrationControl(step=0.2)
    with pytest.raises(ConfigurationError):
        IntegrationControl(max_time=-1.0)
    with pytest.raises(ConfigurationError):
        IntegrationControl(sample_stride=0)
    with pytest.raises(ConfigurationError):
        IntegrationControl(halvings=-1)


def test_integrate_rejects_mismatched_tuning():
    with pytest.raises(ConfigurationError):
        integrate(PaletteConfig(6, 4), TUNING43, IntegrationControl(max_time=0.01))


def test_first_euler_step_matches_drift():
    # one explicit Euler step from the fresh state: z + h * F(z)
    h = 1e-3
    traj = integrate(CFG43, TUNING43, IntegrationControl(method="euler", step=h, max_time=h))
    assert len(traj.times) == 2
    state = traj.state_at(1)
    assert abs(state[(4, 3)] - (1.0 - h * 0.078125)) < 1e-15
    assert abs(state[(3, 2)] - h * 0.0625) < 1e-15


def test_zero_weights_constant_trajectory():
    space = type_space(CFG43)
    zero = TuningParams(CFG43, {t: 0.0 for t in space.types})
    traj = integrate(CFG43, zero, IntegrationControl(step=5e-3, max_time=0.05))
    initial = TypeDistribution.initial(CFG43).vec
    assert np.array_equal(traj.states, np.tile(initial, (len(traj.times), 1)))
    assert np.all(traj.g_values == 0.0)
    assert np.all(traj.remainder_values == 3.0)


def test_trajectory_samples_recomputable():
    traj = integrate(CFG43, TUNING43, IntegrationControl(step=1e-3, max_time=2.0, sample_stride=5))
    assert traj.times[0] == 0.0
    assert np.all(np.diff(traj.times) > 0)
    assert np.array_equal(traj.states[0], TypeDistribution.initial(CFG43).vec)
    for i in range(len(traj.times)):
        state = traj.state_at(i)
        assert traj.g_values[i] == cascade_growth(state)
        assert traj.remainder_values[i] == remainder_growth(state)
    # per-interval step maxima dominate the sampled values
    assert np.all(traj.step_g_max >= traj.g_values - 1e-15)


def test_monotone_mass_along_trajectory():
    traj = integrate(CFG43, TUNING43, IntegrationControl(step=1e-3, max_time=3.0))
    masses = traj.states.sum(axis=1)
    assert np.all(np.diff(masses) <= 1e-9)
    assert traj.states.min() >= 0.0


def test_sample_stride_and_final_point():
    traj = integrate(CFG43, TUNING43, IntegrationControl(step=1e-3, max_time=0.05, sample_stride=7))
    # samples at multiples of the stride plus the final step
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(0.050)
    assert len(traj.times) == 9  # 0, 7, ..., 49 thousandths, then 50


def test_rk4_halved_step_richardson():
    h, T = 0.1, 8.0
    ref = integrate(CFG43, TUNING43, IntegrationControl(step=h / 32, max_time=T, sample_stride=32))
    coarse = integrate(CFG43, TUNING43, IntegrationControl(step=h, max_time=T, sample_stride=1))
    fine = integrate(CFG43, TUNING43, IntegrationControl(step=h / 2, max_time=T, sample_stride=2))
    n = min(len(ref.times), len(coarse.times), len(fine.times))
    assert np.allclose(ref.times[:n], coarse.times[:n])
    err_coarse = np.abs(coarse.states[:n] - ref.states[:n]).max()
    err_fine = np.abs(fine.states[:n] - ref.states[:n]).max()
    assert err_coarse / err_fine >= 8.0


def test_supercritical_tuning_reports_abort():
    # weights favoring high uncolored degree drive the cascade growth past 1
    space = type_space(CFG43)
    tuning = TuningParams(CFG43, {t: 2.0 ** (2 * t.d) for t in space.types})
    traj = integrate(CFG43, tuning, IntegrationControl(step=1e-3, max_time=30.0))
    assert traj.aborted
    assert traj.abort_reason == "supercritical"
    result = find_stop_time(traj)
    assert not result.found
    assert "supercritical" in result.reason


def _synthetic_trajectory(remainder, g):
    n = len(remainder)
    times = np.arange(n, dtype=np.float64)
    states = np.tile(TypeDistribution.initial(CFG43).vec, (n, 1))
    g = np.asarray(g, dtype=np.float64)
    return Trajectory(
        cfg=CFG43,
        times=times,
        states=states,
        g_values=g,
        remainder_values=np.asarray(remainder, dtype=np.float64),
        step_g_max=g.copy(),
    )


def test_find_stop_time_first_crossing():
    traj = _synthetic_trajectory([3.0, 2.0, 0.5], [0.0, 0.0, 0.0])
    result = find_stop_time(traj, DEFAULT_THRESHOLD)
    assert result.found
    assert result.time == 2.0
    assert result.index == 2


def test_find_stop_time_growth_violation():
    traj = _synthetic_trajectory([3.0, 2.0, 0.5], [0.0, 0.99999, 0.0])
    result = find_stop_time(traj, DEFAULT_THRESHOLD)
    assert not result.found
    assert result.violation_time == 1.0
    assert "growth" in result.reason


def test_find_stop_time_no_crossing():
    traj = _synthetic_trajectory([3.0, 3.0, 3.0], [0.0, 0.0, 0.0])
    result = find_stop_time(traj, DEFAULT_THRESHOLD)
    assert not result.found
    assert "no remainder crossing" in result.reason


def test_find_stop_time_threshold_validation():
    traj = _synthetic_trajectory([3.0, 0.5], [0.0, 0.0])
    with pytest.raises(ConfigurationError):
        find_stop_time(traj, 0.0)
    with pytest.raises(ConfigurationError):
        find_stop_time(traj, 1.5)
    assert find_stop_time(traj, 1.0).found


def test_certify_low_threshold_fails_with_diagnostics():
    cert = certify(
        CFG43,
        TUNING43,
        threshold=0.01,
        control=IntegrationControl(step=1e-3, max_time=1.0, halvings=0),
    )
    assert cert.status == "failed"
    assert not cert.certified
    assert cert.r is None
    assert cert.margin_g is None
    assert "crossing" in cert.diagnostics["failure"] or "growth" in cert.diagnostics["failure"]


def test_certify_43_small_run(cert43):
    assert cert43.status == "certified"
    assert 8.0 < cert43.r < 12.0
    assert cert43.margin_g > 0.0
    assert cert43.margin_remainder > 0.0
    assert len(cert43.refinements) == 2
    r_values = [e["r"] for e in cert43.refinements]
    for prev, cur in zip(r_values, r_values[1:]):
        assert abs(cur - prev) <= 0.01 * prev
    # the crossing sample is stored even after decimation
    assert cert43.r in cert43.samples["times"]
    assert len(cert43.samples["times"]) <= 2049


def test_certify_threshold_sensitivity_recorded(capsys):
    # diagnostic property: outcome at the looser threshold is recorded, not required
    cert = certify(
        CFG43, TUNING43, threshold=0.9999,
        control=IntegrationControl(step=1e-3, halvings=0),
    )
    assert cert.status in ("certified", "failed")
    if cert.status == "failed":
        assert cert.diagnostics["failure"]
    print(f"threshold 0.9999 for (4,3): {cert.status}")


def test_certificate_roundtrip_verifies(cert43, tmp_path):
    path = str(tmp_path / "cert.json")
    loaded = certificate_roundtrip(cert43, path)
    assert loaded.status == cert43.status
    assert loaded.r == cert43.r
    assert loaded.max_g_on_0_r == cert43.max_g_on_0_r
    assert loaded.tuning == cert43.tuning
    assert loaded.samples["times"] == cert43.samples["times"]
    assert loaded.samples["states"] == cert43.samples["states"]


def test_certificate_bytes_stable(cert43, tmp_path):
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_certificate(cert43, str(p1))
    save_certificate(cert43, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_certificate_field_order_and_float_format(cert43):
    text = certificate_to_json(cert43)
    assert list(json.loads(text).keys()) == [
        "schema_version", "status", "cfg", "tuning", "control",
        "threshold", "r", "max_g_on_0_r", "remainder_growth_at_r",
        "margin_g", "margin_remainder", "samples", "refinements",
        "diagnostics", "metadata",
    ]
    # floats carry 17 significant digits
    assert format(0.99999, ".16e") in text
    assert f'"step":{format(2e-3, ".16e")}' in text


def test_certificate_tampered_summary_rejected(cert43, tmp_path):
    path = tmp_path / "cert.json"
    save_certificate(cert43, str(path))
    raw = json.loads(path.read_text())
    raw["max_g_on_0_r"] = 0.5
    path.write_text(json.dumps(raw))
    loaded = load_certificate(str(path))
    with pytest.raises(CertificateVerificationError):
        verify_certificate(loaded)


def test_certificate_tampered_sample_rejected(cert43, tmp_path):
    path = tmp_path / "cert.json"
    save_certificate(cert43, str(path))
    raw = json.loads(path.read_text())
    raw["samples"]["g"][3] += 1e-6
    path.write_text(json.dumps(raw))
    loaded = load_certificate(str(path))
    with pytest.raises(CertificateVerificationError, match="sample 3"):
        verify_certificate(loaded)


def test_certificate_truncated_file_parse_error(cert43, tmp_path):
    path = tmp_path / "cert.json"
    save_certificate(cert43, str(path))
    path.write_text(path.read_text()[:100])
    with pytest.raises(CertificateParseError):
        load_certificate(str(path))


def test_certificate_missing_field_named(cert43, tmp_path):
    path = tmp_path / "cert.json"
    save_certificate(cert43, str(path))
    raw = json.loads(path.read_text())
    del raw["threshold"]
    path.write_text(json.dumps(raw))
    with pytest.raises(CertificateParseError, match="threshold"):
        load_certificate(str(path))


def test_certificate_bad_type_key_named(cert43, tmp_path):
    path = tmp_path / "cert.json"
    save_certificate(cert43, str(path))
    raw = json.loads(path.read_text())
    raw["tuning"]["banana"] = 1.0
    path.write_text(json.dumps(raw))
    with pytest.raises(CertificateParseError, match="banana"):
        load_certificate(str(path))


def test_euler_ode_compare_first_order_ratio():
    d_coarse = euler_ode_compare(CFG43, TUNING43, 0.02)
    d_fine = euler_ode_compare(CFG43, TUNING43, 0.01)
    assert d_coarse > 0.0
    assert 1.7 <= d_coarse / d_fine <= 2.3


def test_euler_ode_compare_zero_weights():
    space = type_space(CFG43)
    zero = TuningParams(CFG43, {t: 0.0 for t in space.types})
    control = IntegrationControl(step=5e-3, max_time=0.3)
    assert euler_ode_compare(CFG43, zero, 0.05, control) == 0.0


def test_euler_ode_compare_epsilon_validation():
    with pytest.raises(ConfigurationError):
        euler_ode_compare(CFG43, TUNING43, 0.25)
    with pytest.raises(ConfigurationError):
        euler_ode_compare(CFG43, TUNING43, 0.0)
