"""Trajectory integration and subcriticality certification.

The certifier integrates dz/dx = drift(z) from the fresh state, watches the
cascade growth rate along the way, and looks for the first time the remainder
growth rate drops below the certification threshold.  A certificate records
that time, the margins, and enough trajectory samples to recheck everything.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__ as _version
from .dynamics import (
    PaletteConfig,
    TuningParams,
    TypeDistribution,
    TypeSpace,
    VertexType,
    type_space,
    _drift_kernel,
    _growth_from_q,
    _q_kernel,
    _remainder_from_q,
)
from .errors import (
    CertificateParseError,
    CertificateVerificationError,
    ComparisonFailureError,
    ConfigurationError,
    DegenerateDistributionError,
    SupercriticalError,
)

DEFAULT_THRESHOLD = 0.99999
GROWTH_ABORT = 1.0 - 1e-6
MAX_STORED_SAMPLES = 2048


@dataclass(frozen=True)
class IntegrationControl:
    """Fixed-step integration settings."""

    method: str = "rk4"
    step: float = 1e-3
    max_time: float = 500.0
    sample_stride: int = 1
    halvings: int = 2

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "euler"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not (0.0 < self.step <= 0.1):
            raise ConfigurationError(f"step must be in (0, 0.1], got {self.step}")
        if self.max_time <= 0.0:
            raise ConfigurationError("max_time must be positive")
        if not isinstance(self.sample_stride, int) or self.sample_stride < 1:
            raise ConfigurationError("sample_stride must be a positive integer")
        if not isinstance(self.halvings, int) or self.halvings < 0:
            raise ConfigurationError("halvings must be a nonnegative integer")


@dataclass
class Trajectory:
    """Sampled solution of the drift ODE.

    `step_g_max[i]` is the largest growth value seen at any integration step in
    the interval since the previous sample (inclusive), so threshold checks
    cover every step even when sample_stride > 1.
    """

    cfg: PaletteConfig
    times: np.ndarray
    states: np.ndarray  # shape (n_samples, |T|), canonical type order
    g_values: np.ndarray
    remainder_values: np.ndarray
    step_g_max: np.ndarray
    aborted: bool = False
    abort_reason: str | None = None
    clamp_events: int = 0
    stopped_at_remainder: bool = False

    def state_at(self, i: int) -> TypeDistribution:
        return TypeDistribution(self.cfg, self.states[i].copy())


@dataclass
class StopTimeResult:
    found: bool
    time: float | None = None
    index: int | None = None
    violation_time: float | None = None
    reason: str | None = None


def _rhs(space: TypeSpace, wvec: np.ndarray, z: np.ndarray) -> np.ndarray:
    # Stage inputs may dip microscopically below zero; evaluate on the clip.
    return _drift_kernel(space, np.maximum(z, 0.0), wvec)


def integrate(
    cfg: PaletteConfig,
    tuning: TuningParams,
    control: IntegrationControl,
    stop_at_remainder_below: float | None = None,
) -> Trajectory:
    """Integrate the drift ODE from the fresh state with a fixed step.

    Runs until max_time, until growth reaches 1 - 1e-6 (recorded as an abort,
    not raised), until the positive-degree mass is exhausted, or, when
    stop_at_remainder_below is given, until the first sample whose remainder
    growth is below that value.
    """
    if tuning.cfg != cfg:
        raise ConfigurationError("tuning and palette configs differ")
    space = type_space(cfg)
    wvec = tuning.vector()
    h = control.step
    n_steps = int(math.floor(control.max_time / h + 1e-9))

    z = TypeDistribution.initial(cfg).vec.copy()
    times = [0.0]
    states = [z.copy()]
    q = _q_kernel(space, z)
    g = _growth_from_q(space, q)
    g_values = [g]
    remainder_values = [_remainder_from_q(space, q)]
    step_g_max = [g]
    clamp_events = 0
    aborted = False
    abort_reason = None
    stopped = False

    interval_g = g
    for i in range(1, n_steps + 1):
        try:
            if control.method == "rk4":
                k1 = _rhs(space, wvec, z)
                k2 = _rhs(space, wvec, z + 0.5 * h * k1)
                k3 = _rhs(space, wvec, z + 0.5 * h * k2)
                k4 = _rhs(space, wvec, z + h * k3)
                z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                z = z + h * _rhs(space, wvec, z)
        except (DegenerateDistributionError, SupercriticalError) as exc:
            # a stage evaluation blew up; report, don't crash
            aborted = True
            abort_reason = (
                "supercritical" if isinstance(exc, SupercriticalError)
                else "mass_exhausted"
            )
            if times[-1] != (i - 1) * h:
                times.append((i - 1) * h)
                states.append(z.copy())
                g_values.append(g)
                remainder_values.append(_remainder_from_q(space, q))
                step_g_max.append(interval_g)
            break
        if (z < -1e-9).any():
            clamp_events += 1
        np.clip(z, 0.0, None, out=z)
        try:
            q = _q_kernel(space, z)
        except DegenerateDistributionError:
            aborted = True
            abort_reason = "mass_exhausted"
            break
        g = _growth_from_q(space, q)
        interval_g = max(interval_g, g)
        if g >= GROWTH_ABORT:
            aborted = True
            abort_reason = "supercritical"
            # record the offending point so diagnostics can show it
            times.append(i * h)
            states.append(z.copy())
            g_values.append(g)
            remainder_values.append(_remainder_from_q(space, q))
            step_g_max.append(interval_g)
            break
        if i % control.sample_stride == 0 or i == n_steps:
            times.append(i * h)
            states.append(z.copy())
            g_values.append(g)
            rem = _remainder_from_q(space, q)
            remainder_values.append(rem)
            step_g_max.append(interval_g)
            interval_g = g
            if stop_at_remainder_below is not None and rem < stop_at_remainder_below:
                stopped = True
                break

    return Trajectory(
        cfg=cfg,
        times=np.array(times),
        states=np.array(states),
        g_values=np.array(g_values),
        remainder_values=np.array(remainder_values),
        step_g_max=np.array(step_g_max),
        aborted=aborted,
        abort_reason=abort_reason,
        clamp_events=clamp_events,
        stopped_at_remainder=stopped,
    )


def find_stop_time(traj: Trajectory, threshold: float = DEFAULT_THRESHOLD) -> StopTimeResult:
    """First sample time where remainder growth is below the threshold, valid
    only if cascade growth stayed below the threshold at every step up to it."""
    if not (0.0 < threshold <= 1.0):
        raise ConfigurationError(f"threshold must be in (0, 1], got {threshold}")
    below = np.nonzero(traj.remainder_values < threshold)[0]
    if below.size == 0:
        reason = "no remainder crossing" + (
            f" (aborted: {traj.abort_reason})" if traj.aborted else ""
        )
        return StopTimeResult(found=False, reason=reason)
    idx = int(below[0])
    g_violations = np.nonzero(traj.step_g_max[: idx + 1] >= threshold)[0]
    if g_violations.size > 0:
        bad = int(g_violations[0])
        return StopTimeResult(
            found=False,
            violation_time=float(traj.times[bad]),
            reason="growth reached threshold before remainder crossing",
        )
    return StopTimeResult(found=True, time=float(traj.times[idx]), index=idx)


@dataclass
class Certificate:
    """Self-contained record of a certification run.  Field names mirror the
    JSON serialization; `r` is the certified stopping time (the cfg's `r` is
    the graph degree)."""

    schema_version: str
    status: str
    cfg: PaletteConfig
    tuning: dict[VertexType, float]
    control: IntegrationControl
    threshold: float
    r: float | None
    max_g_on_0_r: float | None
    remainder_growth_at_r: float | None
    margin_g: float | None
    margin_remainder: float | None
    samples: dict[str, Any]
    refinements: list[dict[str, Any]]
    diagnostics: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def _decimate_indices(n: int, limit: int) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    idx = np.unique(np.linspace(0, n - 1, limit).round().astype(int))
    return idx


def certify(
    cfg: PaletteConfig,
    tuning: TuningParams,
    threshold: float = DEFAULT_THRESHOLD,
    control: IntegrationControl = IntegrationControl(),
) -> Certificate:
    """Run the integration at the configured step and at each halved step,
    and certify if every run finds a stable stopping time with margins.

    Certified means: every refinement found a finite stopping time, growth and
    remainder margins are positive, and consecutive stopping times agree to 1%.
    """
    if not (0.0 < threshold <= 1.0):
        raise ConfigurationError(f"threshold must be in (0, 1], got {threshold}")
    runs = []
    for k in range(control.halvings + 1):
        refined = IntegrationControl(
            method=control.method,
            step=control.step / (2 ** k),
            max_time=control.max_time,
            # keep samples on the base grid so stopping times are comparable
            sample_stride=control.sample_stride * (2 ** k),
            halvings=control.halvings,
        )
        traj = integrate(cfg, tuning, refined, stop_at_remainder_below=threshold)
        result = find_stop_time(traj, threshold)
        runs.append((refined, traj, result))

    refinements = []
    for refined, traj, result in runs:
        entry: dict[str, Any] = {"step": refined.step, "found": result.found}
        if result.found:
            idx = result.index
            entry["r"] = result.time
            entry["max_g_on_0_r"] = float(traj.step_g_max[: idx + 1].max())
            entry["remainder_growth_at_r"] = float(traj.remainder_values[idx])
        else:
            entry["reason"] = result.reason
            if result.violation_time is not None:
                entry["violation_time"] = result.violation_time
        refinements.append(entry)

    failure = None
    if not all(res.found for _, _, res in runs):
        failure = "no stable stopping time: " + "; ".join(
            str(e.get("reason")) for e in refinements if not e["found"]
        )
    else:
        r_values = [e["r"] for e in refinements]
        for prev, cur in zip(r_values, r_values[1:]):
            if abs(cur - prev) > 0.01 * abs(prev):
                failure = (
                    f"stopping time unstable under step halving: {r_values}"
                )
                break

    _, traj, result = runs[-1]
    keep = _decimate_indices(len(traj.times), MAX_STORED_SAMPLES)
    if result.found and result.index not in keep:
        keep = np.unique(np.append(keep, result.index))
    samples = {
        "times": traj.times[keep].tolist(),
        "g": traj.g_values[keep].tolist(),
        "remainder": traj.remainder_values[keep].tolist(),
        "states": traj.states[keep].tolist(),
    }

    if failure is None:
        fin = refinements[-1]
        r_time = fin["r"]
        max_g = fin["max_g_on_0_r"]
        rem_at_r = fin["remainder_growth_at_r"]
        margin_g = threshold - max_g
        margin_rem = threshold - rem_at_r
        status = "certified" if margin_g > 0.0 and margin_rem > 0.0 else "failed"
        if status == "failed":
            failure = "nonpositive margin"
    else:
        r_time = max_g = rem_at_r = margin_g = margin_rem = None
        status = "failed"

    space = type_space(cfg)
    return Certificate(
        schema_version="1",
        status=status,
        cfg=cfg,
        tuning=dict(tuning.weights),
        control=control,
        threshold=threshold,
        r=r_time,
        max_g_on_0_r=max_g,
        remainder_growth_at_r=rem_at_r,
        margin_g=margin_g,
        margin_remainder=margin_rem,
        samples=samples,
        refinements=refinements,
        diagnostics={
            "failure": failure,
            "clamp_events": int(traj.clamp_events),
            "aborted": bool(traj.aborted),
            "abort_reason": traj.abort_reason,
        },
        metadata={
            "generator": f"treecolor {_version}",
            "type_order": [f"{t.d},{t.c}" for t in space.types],
        },
    )


# ---------------------------------------------------------------------------
# Certificate serialization: deterministic field order, floats with 17
# significant digits so values round-trip exactly.
# ---------------------------------------------------------------------------

def _dump_json(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, float):
        return format(value, ".16e")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_dump_json(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + _dump_json(v) for k, v in value.items()
        ) + "}"
    raise TypeError(f"cannot serialize {type(value)}")


def certificate_to_json(cert: Certificate) -> str:
    payload = {
        "schema_version": cert.schema_version,
        "status": cert.status,
        "cfg": {"r": cert.cfg.r, "p": cert.cfg.p},
        "tuning": {f"{t.d},{t.c}": float(w) for t, w in sorted(cert.tuning.items())},
        "control": {
            "method": cert.control.method,
            "step": cert.control.step,
            "max_time": cert.control.max_time,
            "sample_stride": cert.control.sample_stride,
            "halvings": cert.control.halvings,
        },
        "threshold": cert.threshold,
        "r": cert.r,
        "max_g_on_0_r": cert.max_g_on_0_r,
        "remainder_growth_at_r": cert.remainder_growth_at_r,
        "margin_g": cert.margin_g,
        "margin_remainder": cert.margin_remainder,
        "samples": cert.samples,
        "refinements": cert.refinements,
        "diagnostics": cert.diagnostics,
        "metadata": cert.metadata,
    }
    return _dump_json(payload) + "\n"


def save_certificate(cert: Certificate, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(certificate_to_json(cert))


_TOP_FIELDS = {
    "schema_version": str,
    "status": str,
    "cfg": dict,
    "tuning": dict,
    "control": dict,
    "threshold": float,
    "samples": dict,
    "refinements": list,
}


def _parse_type_key(key: str) -> VertexType:
    parts = key.split(",")
    if len(parts) != 2:
        raise CertificateParseError(f"tuning: bad type key {key!r}")
    try:
        return VertexType(int(parts[0]), int(parts[1]))
    except ValueError:
        raise CertificateParseError(f"tuning: bad type key {key!r}") from None


def load_certificate(path: str) -> Certificate:
    """Parse a certificate file; malformed content raises CertificateParseError
    naming the offending field.  No recomputation happens here."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CertificateParseError(f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise CertificateParseError("top level: expected an object")
    for name, typ in _TOP_FIELDS.items():
        if name not in raw:
            raise CertificateParseError(f"missing field {name!r}")
        value = raw[name]
        if typ is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, typ):
            raise CertificateParseError(f"field {name!r} has wrong type")
    for name in ("r", "max_g_on_0_r", "remainder_growth_at_r", "margin_g",
                 "margin_remainder"):
        if name not in raw:
            raise CertificateParseError(f"missing field {name!r}")
        if raw[name] is not None and not isinstance(raw[name], (int, float)):
            raise CertificateParseError(f"field {name!r} has wrong type")
    cfg_raw = raw["cfg"]
    if "r" not in cfg_raw or "p" not in cfg_raw:
        raise CertificateParseError("cfg: missing r or p")
    try:
        cfg = PaletteConfig(int(cfg_raw["r"]), int(cfg_raw["p"]))
    except ConfigurationError as exc:
        raise CertificateParseError(f"cfg: {exc}") from None
    ctl_raw = raw["control"]
    try:
        control = IntegrationControl(
            method=str(ctl_raw["method"]),
            step=float(ctl_raw["step"]),
            max_time=float(ctl_raw["max_time"]),
            sample_stride=int(ctl_raw["sample_stride"]),
            halvings=int(ctl_raw["halvings"]),
        )
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise CertificateParseError(f"control: {exc}") from None
    tuning = {_parse_type_key(k): float(v) for k, v in raw["tuning"].items()}
    samples = raw["samples"]
    for name in ("times", "g", "remainder", "states"):
        if name not in samples or not isinstance(samples[name], list):
            raise CertificateParseError(f"samples.{name}: missing or wrong type")
    n = len(samples["times"])
    if any(len(samples[k]) != n for k in ("g", "remainder", "states")):
        raise CertificateParseError("samples: arrays have mismatched lengths")
    space = type_space(cfg)
    for i, row in enumerate(samples["states"]):
        if not isinstance(row, list) or len(row) != space.size:
            raise CertificateParseError(f"samples.states[{i}]: wrong length")
    if raw["status"] not in ("certified", "failed"):
        raise CertificateParseError(f"status: unknown value {raw['status']!r}")
    return Certificate(
        schema_version=str(raw["schema_version"]),
        status=raw["status"],
        cfg=cfg,
        tuning=tuning,
        control=control,
        threshold=float(raw["threshold"]),
        r=None if raw["r"] is None else float(raw["r"]),
        max_g_on_0_r=None if raw["max_g_on_0_r"] is None else float(raw["max_g_on_0_r"]),
        remainder_growth_at_r=(
            None if raw["remainder_growth_at_r"] is None
            else float(raw["remainder_growth_at_r"])
        ),
        margin_g=None if raw["margin_g"] is None else float(raw["margin_g"]),
        margin_remainder=(
            None if raw["margin_remainder"] is None else float(raw["margin_remainder"])
        ),
        samples=samples,
        refinements=raw["refinements"],
        diagnostics=raw.get("diagnostics", {}),
        metadata=raw.get("metadata", {}),
    )


def verify_certificate(cert: Certificate) -> None:
    """Recompute growth and remainder at every stored sample and recheck the
    certified claims.  Raises CertificateVerificationError on any mismatch."""
    space = type_space(cert.cfg)
    times = np.asarray(cert.samples["times"], dtype=np.float64)
    states = np.asarray(cert.samples["states"], dtype=np.float64)
    g_stored = np.asarray(cert.samples["g"], dtype=np.float64)
    rem_stored = np.asarray(cert.samples["remainder"], dtype=np.float64)
    for i in range(len(times)):
        try:
            q = _q_kernel(space, states[i])
        except DegenerateDistributionError:
            raise CertificateVerificationError(
                f"sample {i}: state has no positive-degree mass"
            ) from None
        g = _growth_from_q(space, q)
        rem = _remainder_from_q(space, q)
        if abs(g - g_stored[i]) > 1e-9:
            raise CertificateVerificationError(
                f"sample {i}: stored growth {g_stored[i]!r} does not recompute ({g!r})"
            )
        if abs(rem - rem_stored[i]) > 1e-9:
            raise CertificateVerificationError(
                f"sample {i}: stored remainder {rem_stored[i]!r} does not recompute ({rem!r})"
            )
    if (np.diff(times) <= 0).any():
        raise CertificateVerificationError("sample times are not increasing")
    if cert.status == "certified":
        for name in ("r", "max_g_on_0_r", "remainder_growth_at_r", "margin_g",
                     "margin_remainder"):
            if getattr(cert, name) is None:
                raise CertificateVerificationError(f"certified but {name} is null")
        if not (cert.margin_g > 0.0 and cert.margin_remainder > 0.0):
            raise CertificateVerificationError("certified but margins not positive")
        if abs(cert.threshold - cert.max_g_on_0_r - cert.margin_g) > 1e-12:
            raise CertificateVerificationError("margin_g inconsistent")
        if abs(cert.threshold - cert.remainder_growth_at_r - cert.margin_remainder) > 1e-12:
            raise CertificateVerificationError("margin_remainder inconsistent")
        upto = times <= cert.r + 1e-12
        if not upto.any():
            raise CertificateVerificationError("no stored samples at or before r")
        if float(g_stored[upto].max()) > cert.max_g_on_0_r + 1e-9:
            raise CertificateVerificationError(
                "stored growth exceeds max_g_on_0_r before r"
            )
        # the crossing sample itself must be stored and match
        at_r = np.isclose(times, cert.r, rtol=0.0, atol=1e-12)
        if not at_r.any():
            raise CertificateVerificationError("crossing sample for r not stored")
        idx = int(np.nonzero(at_r)[0][0])
        if abs(rem_stored[idx] - cert.remainder_growth_at_r) > 1e-9:
            raise CertificateVerificationError(
                "stored remainder at r does not match remainder_growth_at_r"
            )
        if not rem_stored[idx] < cert.threshold:
            raise CertificateVerificationError("remainder at r not below threshold")


def certificate_roundtrip(cert: Certificate, path: str) -> Certificate:
    """Save, reload, and verify; returns the reloaded certificate."""
    save_certificate(cert, path)
    loaded = load_certificate(path)
    verify_certificate(loaded)
    return loaded


def euler_ode_compare(
    cfg: PaletteConfig,
    tuning: TuningParams,
    epsilon: float,
    control: IntegrationControl = IntegrationControl(),
) -> float:
    """Sup max-norm distance, over all Euler points n*eps up to the stopping
    time, between the Euler sequence with step eps and an rk4 reference whose
    step is at most eps/10."""
    if not (0.0 < epsilon <= 0.2):
        raise ConfigurationError(f"epsilon must be in (0, 0.2], got {epsilon}")
    if tuning.cfg != cfg:
        raise ConfigurationError("tuning and palette configs differ")
    # reference step divides eps exactly so sample times align by index
    substeps = max(10, int(math.ceil(epsilon / control.step - 1e-12)))
    ref_step = epsilon / substeps
    ref_control = IntegrationControl(
        method="rk4",
        step=ref_step,
        max_time=control.max_time,
        sample_stride=1,
        halvings=control.halvings,
    )
    ref = integrate(cfg, tuning, ref_control, stop_at_remainder_below=DEFAULT_THRESHOLD)
    if ref.aborted and ref.abort_reason == "supercritical":
        raise ComparisonFailureError("reference trajectory went supercritical")
    result = find_stop_time(ref, DEFAULT_THRESHOLD)
    # no crossing (e.g. zero weights) is not an error: compare over what ran
    stop_time = result.time if result.found else float(ref.times[-1])

    space = type_space(cfg)
    wvec = tuning.vector()
    z = TypeDistribution.initial(cfg).vec.copy()
    sup = 0.0
    n = 0
    while n * epsilon <= stop_time + 1e-12:
        ref_idx = n * substeps
        if ref_idx >= len(ref.times):
            break
        sup = max(sup, float(np.abs(z - ref.states[ref_idx]).max()))
        q = _q_kernel(space, z)
        if _growth_from_q(space, q) >= GROWTH_ABORT:
            raise ComparisonFailureError("euler sequence went supercritical")
        z = np.clip(z + epsilon * _drift_kernel(space, z, wvec), 0.0, None)
        n += 1
    return sup
