"""Synthetic three-phase fault waveforms for the Double Line topology.

The network has three buses and two pairs of parallel lines::

    ext grid ── Bus 1 ══ lines 1, 2 ══ Bus 2 ══ lines 3, 4 ══ Bus 3 ── load

Each line carries one protection relay at either end, and every relay records
three phase currents and three phase voltages, so a record holds 48 channels.

The waveform model is a piecewise phasor model: steady state before the fault
instant, new phasors afterwards, plus a decaying DC component that keeps every
current continuous across the fault instant.  It is not an electromagnetic
transient simulation; it reproduces the signatures a classifier can use (the
current surge on the faulted line, near-equal infeed through the parallel
path, bus voltages sagging towards the fault and an extra dip at the relays of
the faulted line that fades with distance).  Bus 1 hangs on a stiff external
grid, so it sags least.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterator, Literal

import numpy as np

N_RELAYS = 8
N_CHANNELS = 48
PHASES = ("A", "B", "C")
QUANTITIES = ("current", "voltage")

NOMINAL_KV = 110.0
BASE_MVA = 100.0
# phase-to-ground peak voltage and peak current of a 1 p.u. load
V_PEAK = NOMINAL_KV * 1e3 * math.sqrt(2.0 / 3.0)
I_PEAK_PU = BASE_MVA * 1e6 / (math.sqrt(3.0) * NOMINAL_KV * 1e3) * math.sqrt(2.0)

SAG_FLOOR = 0.01
MIN_FS = 100.0
# Bus 2 takes this share of the total load, Bus 3 the rest.
BUS2_LOAD_SHARE = 0.4


class ConfigError(ValueError):
    """Raised for malformed generation settings."""


# --------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Line:
    line_id: int
    from_bus: int
    to_bus: int
    length_km: float


@dataclass(frozen=True)
class Relay:
    relay_id: int
    line_id: int
    attached_bus: int


@dataclass(frozen=True)
class Topology:
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    relays: tuple[Relay, ...]

    def relays_at_bus(self, bus: int) -> tuple[int, ...]:
        return tuple(r.relay_id for r in self.relays if r.attached_bus == bus)

    def relays_on_line(self, line: int) -> tuple[int, ...]:
        return tuple(r.relay_id for r in self.relays if r.line_id == line)

    def line(self, line_id: int) -> Line:
        return self.lines[line_id - 1]

    def relay(self, relay_id: int) -> Relay:
        return self.relays[relay_id - 1]


def double_line_topology(line_lengths_km=(50.0, 50.0, 50.0, 50.0)) -> Topology:
    """Build the Double Line network.

    Relay ``2k-1`` sits at the sending (source side) end of line ``k`` and
    relay ``2k`` at its receiving end, which puts relays 1, 3 at Bus 1,
    relays 2, 4, 5, 7 at Bus 2 and relays 6, 8 at Bus 3.
    """
    ends = {1: (1, 2), 2: (1, 2), 3: (2, 3), 4: (2, 3)}
    lines = tuple(
        Line(k, ends[k][0], ends[k][1], float(line_lengths_km[k - 1])) for k in range(1, 5)
    )
    relays = []
    for ln in lines:
        relays.append(Relay(2 * ln.line_id - 1, ln.line_id, ln.from_bus))
        relays.append(Relay(2 * ln.line_id, ln.line_id, ln.to_bus))
    return Topology(buses=(1, 2, 3), lines=lines, relays=tuple(relays))


TOPOLOGY = double_line_topology()
PARALLEL_LINE = {1: 2, 2: 1, 3: 4, 4: 3}


# --------------------------------------------------------------------------
# channels


@dataclass(frozen=True, order=True)
class ChannelId:
    relay_id: int
    quantity: Literal["current", "voltage"]
    phase: Literal["A", "B", "C"]

    def __post_init__(self):
        if not 1 <= self.relay_id <= N_RELAYS:
            raise ValueError(f"relay_id must be in 1..8, got {self.relay_id}")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")


def channel_index(c: ChannelId) -> int:
    """Flat index 0..47 of a channel: relay-major, currents before voltages."""
    return (c.relay_id - 1) * 6 + (3 if c.quantity == "voltage" else 0) + PHASES.index(c.phase)


def channel_from_index(index: int) -> ChannelId:
    if not 0 <= index < N_CHANNELS:
        raise ValueError(f"channel index out of range: {index}")
    relay, rest = divmod(index, 6)
    quantity, phase = divmod(rest, 3)
    return ChannelId(relay + 1, QUANTITIES[quantity], PHASES[phase])


def channels(
    relays=None, quantities=QUANTITIES, phases=PHASES
) -> np.ndarray:
    """Sorted flat indices of every channel matching the given selectors."""
    relays = range(1, N_RELAYS + 1) if relays is None else relays
    idx = [
        channel_index(ChannelId(r, q, p)) for r in relays for q in quantities for p in phases
    ]
    return np.array(sorted(idx), dtype=np.intp)


# --------------------------------------------------------------------------
# domain randomization


@dataclass(frozen=True)
class ParamRanges:
    """Uniform sampling ranges for the randomized scenario parameters.

    Defaults are generic 110 kV transmission values, not measured data.
    """

    fault_current_ratio_min: float = 4.0
    fault_current_ratio_max: float = 12.0
    dc_offset_tau_min: float = 0.02
    dc_offset_tau_max: float = 0.08
    load_magnitude_min: float = 0.5
    load_magnitude_max: float = 1.0
    load_angle_min: float = 0.1
    load_angle_max: float = 0.45
    line_length_min_km: float = 20.0
    line_length_max_km: float = 80.0
    fault_position_min: float = 0.05
    fault_position_max: float = 0.95
    fault_start_min: float = 0.3
    fault_start_max: float = 0.7
    # fault instants are drawn on this grid so they coincide with a sample at
    # every rate used by the downsampling scenarios
    fault_start_grid: float = 0.005
    # external grid source impedance expressed as equivalent line km
    source_impedance_min: float = 0.5
    source_impedance_max: float = 3.0
    fault_residual_min: float = 0.0
    fault_residual_max: float = 0.1
    parallel_infeed_min: float = 0.85
    parallel_infeed_max: float = 0.98
    fault_fraction: float = 0.5

    def __post_init__(self):
        for name in _RANGED:
            lo = getattr(self, f"{name}_min")
            hi = getattr(self, f"{name}_max")
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{name}: min {lo} > max {hi}")
        if self.line_length_min_km > self.line_length_max_km:
            raise ConfigError(
                f"line_length: min {self.line_length_min_km} > max {self.line_length_max_km}"
            )
        if self.line_length_min_km <= 0:
            raise ConfigError("line lengths must be positive")
        if not 0.0 <= self.fault_fraction <= 1.0:
            raise ConfigError(f"fault_fraction must lie in [0, 1], got {self.fault_fraction}")
        if self.fault_start_grid < 0:
            raise ConfigError("fault_start_grid must be >= 0")
        if self.fault_current_ratio_min <= 1.0:
            raise ConfigError("fault_current_ratio_min must exceed 1")
        if self.dc_offset_tau_min <= 0:
            raise ConfigError("dc_offset_tau_min must be positive")
        if not (0.0 <= self.fault_position_min and self.fault_position_max <= 1.0):
            raise ConfigError("fault positions must lie in [0, 1]")
        if not 0.0 < self.parallel_infeed_max < 1.0:
            raise ConfigError("parallel_infeed must lie in (0, 1)")

    @classmethod
    def from_mapping(cls, values: dict) -> "ParamRanges":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown generation keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items()})


_RANGED = (
    "fault_current_ratio",
    "dc_offset_tau",
    "load_magnitude",
    "load_angle",
    "fault_position",
    "fault_start",
    "source_impedance",
    "fault_residual",
    "parallel_infeed",
)


@dataclass(frozen=True)
class ScenarioParams:
    seed: int
    fault_line: int | None
    fault_position: float
    fault_start: float
    load_angle: float
    load_magnitude: float
    line_lengths: tuple[float, float, float, float]
    fault_current_ratio: float
    dc_offset_tau: float
    fault_inception_angle: float
    source_impedance_km: float
    fault_residual: float
    parallel_infeed: float
    system_frequency: float = 50.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["line_lengths"] = list(self.line_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioParams":
        d = dict(d)
        d["line_lengths"] = tuple(float(x) for x in d["line_lengths"])
        return cls(**d)

    def without_fault(self) -> "ScenarioParams":
        return replace(self, fault_line=None)


def randomize_params(
    seed: int, ranges: ParamRanges | None = None, faulted: bool = True
) -> ScenarioParams:
    """Draw one scenario; the result depends only on ``(seed, ranges, faulted)``."""
    ranges = ranges or ParamRanges()
    rng = np.random.default_rng(seed)

    def u(name):
        return float(rng.uniform(getattr(ranges, f"{name}_min"), getattr(ranges, f"{name}_max")))

    # the draw order is fixed so that fault and no-fault variants of a seed
    # share every other parameter
    fault_line = int(rng.integers(1, 5))
    lengths = tuple(
        float(x)
        for x in rng.uniform(ranges.line_length_min_km, ranges.line_length_max_km, size=4)
    )
    start = u("fault_start")
    if ranges.fault_start_grid > 0:
        g = ranges.fault_start_grid
        lo = math.ceil(round(ranges.fault_start_min / g, 9))
        hi = math.floor(round(ranges.fault_start_max / g, 9))
        if lo <= hi:
            start = round(min(max(round(start / g), lo), hi) * g, 9)
    return ScenarioParams(
        seed=int(seed),
        fault_line=fault_line if faulted else None,
        fault_position=u("fault_position"),
        fault_start=start,
        load_angle=u("load_angle"),
        load_magnitude=u("load_magnitude"),
        line_lengths=lengths,
        fault_current_ratio=u("fault_current_ratio"),
        dc_offset_tau=u("dc_offset_tau"),
        fault_inception_angle=float(rng.uniform(0.0, 2.0 * math.pi)),
        source_impedance_km=u("source_impedance"),
        fault_residual=u("fault_residual"),
        parallel_infeed=u("parallel_infeed"),
    )


# --------------------------------------------------------------------------
# waveform model


@dataclass
class WaveformRecord:
    """One simulated case: ``samples[channel, n]`` at ``fs``.

    ``t0`` is the time of sample 0 on the original 1 s record clock, so trimmed
    and decimated views keep absolute timing.
    """

    fs: float
    samples: np.ndarray
    meta: ScenarioParams
    record_id: int
    t0: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.fs

    @property
    def is_fault(self) -> bool:
        return self.meta.fault_line is not None

    def fault_index(self) -> int:
        """Index of the first sample at or after the fault instant."""
        k = math.ceil(round((self.meta.fault_start - self.t0) * self.fs, 6))
        return min(max(k, 0), self.n_samples)

    def with_samples(self, samples: np.ndarray, **changes) -> "WaveformRecord":
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class _Phasor:
    amp: float
    angle: float


def _parallel(a: float, b: float) -> float:
    return a * b / (a + b)


def _bus_sags(p: ScenarioParams) -> dict:
    """Residual bus voltages (p.u.) during the fault.

    Radial divider fed from the external grid at Bus 1: every bus on the path
    to the fault sits between the source and the fault point; a bus beyond the
    faulted section only carries load and follows its upstream neighbour.
    """
    L = p.line_lengths
    f = p.fault_line
    g = PARALLEL_LINE[f]
    a = p.fault_position * L[f - 1]
    b = (1.0 - p.fault_position) * L[f - 1]
    res = p.fault_residual
    z_near = _parallel(a, L[g - 1] + b)  # upstream bus of the section to the fault
    if f in (1, 2):
        z1 = z_near
    else:
        z1 = _parallel(L[0], L[1]) + z_near
    s = {1: res + (1.0 - res) * z1 / (p.source_impedance_km + z1)}
    if f in (1, 2):
        s[2] = res + (s[1] - res) * b / (L[g - 1] + b)
        s[3] = s[2]
    else:
        s[2] = res + (s[1] - res) * z_near / z1
        s[3] = res + (s[2] - res) * b / (L[g - 1] + b)
    return s


# Extra dip at a relay of the faulted line, d km from the fault on a line of
# length L: weight 1 / (1 + (d / reach)^DIP_ROLLOFF) with
# reach = (DIP_REACH + REACH_GAIN * (1 - bus sag)) * L, so a collapsed bus sees
# further along the line.  The dip is gated in as the bus sags below
# SAG_GATE_HI and pulls towards DIP_FLOOR_SCALE * fault residual.
DIP_REACH = 0.35
REACH_GAIN = 0.6
DIP_ROLLOFF = 6.0
SAG_GATE_HI = 1.0
SAG_GATE_SPAN = 0.2
DIP_FLOOR_SCALE = 0.2


def _phasors(p: ScenarioParams) -> tuple[dict, dict, dict, dict]:
    """Pre- and post-fault phasors per relay (voltage p.u., current p.u. load)."""
    L = p.line_lengths
    load = p.load_magnitude
    sec1 = _parallel(L[0], L[1])
    sec2 = _parallel(L[2], L[3])
    # steady-state bus voltages: small drop and lag along the feeder
    u = {1: 1.0}
    u[2] = u[1] - 0.02 * load * sec1 / 50.0
    u[3] = u[2] - 0.02 * (1 - BUS2_LOAD_SHARE) * load * sec2 / 50.0
    delta = {1: 0.0}
    delta[2] = -0.04 * load * sec1 / 50.0
    delta[3] = delta[2] - 0.04 * (1 - BUS2_LOAD_SHARE) * load * sec2 / 50.0

    line_current = {}
    for k, (a, b), total in ((1, (0, 1), load), (3, (2, 3), load * (1 - BUS2_LOAD_SHARE))):
        line_current[k] = total * L[b] / (L[a] + L[b])
        line_current[k + 1] = total * L[a] / (L[a] + L[b])

    v_pre, i_pre = {}, {}
    for relay in TOPOLOGY.relays:
        bus = relay.attached_bus
        sign_angle = 0.0 if relay.relay_id % 2 else math.pi
        v_pre[relay.relay_id] = _Phasor(u[bus], delta[bus])
        i_pre[relay.relay_id] = _Phasor(
            line_current[relay.line_id], delta[bus] - p.load_angle + sign_angle
        )
    if p.fault_line is None:
        return v_pre, i_pre, v_pre, i_pre

    f = p.fault_line
    g = PARALLEL_LINE[f]
    faulted_section = (1, 2) if f in (1, 2) else (3, 4)
    # fault current lags the source voltage by the loop impedance angle,
    # which also sets the DC decay: X/R = omega * tau
    omega = 2 * math.pi * p.system_frequency
    fault_angle = math.atan(omega * p.dc_offset_tau)
    m_fault = p.fault_current_ratio * line_current[f]
    m_par = p.parallel_infeed * m_fault

    s_bus = _bus_sags(p)
    res = p.fault_residual

    v_post, i_post = {}, {}
    line = TOPOLOGY.line(f)
    Lf = L[f - 1]
    for relay in TOPOLOGY.relays:
        r = relay.relay_id
        bus = relay.attached_bus
        s = s_bus[bus]
        if relay.line_id == f:
            # line-side transformer sits a bay closer to the fault
            d = p.fault_position * Lf if bus == line.from_bus else (1 - p.fault_position) * Lf
            reach = (DIP_REACH + REACH_GAIN * (1.0 - s)) * Lf
            w = 1.0 / (1.0 + (d / reach) ** DIP_ROLLOFF)
            gate = min(max((SAG_GATE_HI - s) / SAG_GATE_SPAN, 0.0), 1.0)
            floor = res * DIP_FLOOR_SCALE
            s = floor + (s - floor) * (1.0 - w * gate)
        s = min(max(s, SAG_FLOOR), 1.0)
        v_post[r] = _Phasor(u[bus] * s, delta[bus] - 0.3 * (1.0 - s))

        sending = r % 2 == 1
        if relay.line_id == f:
            # both ends feed the fault
            i_post[r] = _Phasor(m_fault, -fault_angle)
        elif relay.line_id == g:
            i_post[r] = _Phasor(m_par, -fault_angle)
        elif faulted_section == (3, 4):
            # upstream pair shares the total infeed to Bus 2
            m_up = 0.5 * (1.0 + p.parallel_infeed) * m_fault
            i_post[r] = _Phasor(m_up, -fault_angle + (0.0 if sending else math.pi))
        else:
            # downstream load follows the local voltage
            pre = i_pre[r]
            i_post[r] = _Phasor(pre.amp * s, pre.angle - 0.3 * (1.0 - s))
    return v_pre, i_pre, v_post, i_post


def simulate(params: ScenarioParams, fs: float, duration: float = 1.0, record_id: int = 0) -> WaveformRecord:
    """Render the 48-channel record for one scenario.

    Samples before the fault instant are identical to the no-fault rendering of
    the same parameters.
    """
    f0 = params.system_frequency
    if fs < MIN_FS or fs < 2.0 * f0:
        raise ConfigError(f"sampling rate {fs} Hz too low (need >= {max(MIN_FS, 2 * f0)} Hz)")
    n = int(round(fs * duration))
    t = np.arange(n) / fs
    omega = 2.0 * math.pi * f0
    theta = omega * (t - params.fault_start) + params.fault_inception_angle
    v_pre, i_pre, v_post, i_post = _phasors(params)

    out = np.empty((N_CHANNELS, n), dtype=np.float64)
    k = math.ceil(round(params.fault_start * fs, 6)) if params.fault_line is not None else n
    k = min(max(k, 0), n)
    tau_axis = t[k:] - params.fault_start
    decay = np.exp(-tau_axis / params.dc_offset_tau)
    theta_f = params.fault_inception_angle
    for relay in TOPOLOGY.relays:
        r = relay.relay_id
        for ph in range(3):
            shift = -2.0 * math.pi * ph / 3.0
            ci = (r - 1) * 6 + ph
            vi = ci + 3
            iv = i_pre[r]
            vv = v_pre[r]
            out[ci] = I_PEAK_PU * iv.amp * np.cos(theta + iv.angle + shift)
            out[vi] = V_PEAK * vv.amp * np.cos(theta + vv.angle + shift)
            if k < n:
                ip = i_post[r]
                vp = v_post[r]
                # continuity of the current at the fault instant
                offset = I_PEAK_PU * (
                    iv.amp * math.cos(theta_f + iv.angle + shift)
                    - ip.amp * math.cos(theta_f + ip.angle + shift)
                )
                out[ci, k:] = (
                    I_PEAK_PU * ip.amp * np.cos(theta[k:] + ip.angle + shift) + offset * decay
                )
                out[vi, k:] = V_PEAK * vp.amp * np.cos(theta[k:] + vp.angle + shift)
    return WaveformRecord(fs=float(fs), samples=out, meta=params, record_id=int(record_id))


def record_seed(seed: int, record_id: int) -> int:
    return (int(seed) ^ int(record_id)) & 0xFFFFFFFFFFFFFFFF


def fault_flags(n: int, seed: int, fault_fraction: float) -> np.ndarray:
    """Which of ``n`` records carry a fault: exactly ``round(n * fraction)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    n_fault = int(round(n * fault_fraction))
    order = np.random.default_rng([int(seed), 0x5EED]).permutation(n)
    flags = np.zeros(n, dtype=bool)
    flags[order[:n_fault]] = True
    return flags


def iter_records(
    n: int, seed: int, fs: float, ranges: ParamRanges | None = None
) -> Iterator[WaveformRecord]:
    """Yield the ``n`` records of a dataset in ascending ``record_id`` order."""
    ranges = ranges or ParamRanges()
    flags = fault_flags(n, seed, ranges.fault_fraction)
    for rid in range(n):
        params = randomize_params(record_seed(seed, rid), ranges, faulted=bool(flags[rid]))
        yield simulate(params, fs, record_id=rid)


def generate_dataset(
    path, n: int, seed: int, fs: float, fault_fraction: float | None = None,
    ranges: ParamRanges | None = None,
) -> int:
    """Simulate ``n`` records and write them to ``path``; returns bytes written."""
    from .dataset import write_dataset

    ranges = ranges or ParamRanges()
    if fault_fraction is not None:
        ranges = replace(ranges, fault_fraction=fault_fraction)
    if n < 1:
        raise ValueError("n must be >= 1")
    return write_dataset(path, iter_records(n, seed, fs, ranges), fs=fs, n_records=n)
