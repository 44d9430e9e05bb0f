"""Data-sparsity scenarios and the experiment grid.

Scenario spellings used in configuration files and on the command line::

    none  missing_v  missing_i  downsample:<hz>  bus:<1-3>  relay:<1-8>
    phase:<A|B|C>  commloss:<ms>

Channel-type scenarios zero the affected channels over the whole record, so
the feature layout never changes.  Downsampling discards samples and shrinks
every window.  Communication loss blanks one contiguous interval of each
window on all 48 channels at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .gridsim import N_CHANNELS, PHASES, TOPOLOGY, WaveformRecord, channels
from .preprocess import WINDOW_LENGTHS_MS, LabeledWindow, WindowSet

KINDS = (
    "none",
    "missing_voltage",
    "missing_current",
    "downsample",
    "bus_failure",
    "relay_failure",
    "phase_failure",
    "comm_loss",
)
ZEROING_KINDS = ("missing_voltage", "missing_current", "bus_failure", "relay_failure", "phase_failure")

DOWNSAMPLE_TARGETS_HZ = (10_000, 4_000, 2_000, 800, 400)
COMM_LOSS_MS = tuple(range(5, 50, 5))
TASKS = ("FD", "FLI")

_SPELLING = {
    "none": "none",
    "missing_v": "missing_voltage",
    "missing_i": "missing_current",
    "downsample": "downsample",
    "bus": "bus_failure",
    "relay": "relay_failure",
    "phase": "phase_failure",
    "commloss": "comm_loss",
}
_PREFIX = {v: k for k, v in _SPELLING.items()}


class ScenarioError(ValueError):
    """Unknown scenario kind or out-of-range parameter."""


class NotApplicable(ValueError):
    """Scenario cannot be applied to the requested window length."""


@dataclass(frozen=True)
class SparsityScenario:
    kind: str = "none"
    parameter: int | str | None = None
    loss_seed: int = 0

    def __post_init__(self):
        k, p = self.kind, self.parameter
        if k not in KINDS:
            raise ScenarioError(f"unknown scenario kind {k!r}")
        needs = k in ("downsample", "bus_failure", "relay_failure", "phase_failure", "comm_loss")
        if needs == (p is None):
            raise ScenarioError(f"{k}: parameter {'required' if needs else 'not allowed'}")
        if k == "bus_failure" and p not in TOPOLOGY.buses:
            raise ScenarioError(f"unknown bus {p!r}")
        if k == "relay_failure" and p not in range(1, 9):
            raise ScenarioError(f"unknown relay {p!r}")
        if k == "phase_failure" and p not in PHASES:
            raise ScenarioError(f"unknown phase {p!r}")
        if k == "downsample" and not (isinstance(p, int) and p > 0):
            raise ScenarioError(f"downsample target must be a positive integer Hz, got {p!r}")
        if k == "comm_loss" and not (isinstance(p, (int, float)) and p > 0):
            raise ScenarioError(f"comm-loss duration must be positive ms, got {p!r}")

    @classmethod
    def parse(cls, text: str, loss_seed: int = 0) -> "SparsityScenario":
        head, _, arg = text.strip().partition(":")
        if head not in _SPELLING:
            raise ScenarioError(f"unknown scenario {text!r}")
        kind = _SPELLING[head]
        if not arg:
            return cls(kind, None, loss_seed)
        if kind == "phase_failure":
            param: int | str = arg.strip().upper()
        else:
            try:
                param = int(arg)
            except ValueError:
                raise ScenarioError(f"bad parameter in {text!r}") from None
        return cls(kind, param, loss_seed)

    @property
    def spelling(self) -> str:
        head = _PREFIX[self.kind]
        return head if self.parameter is None else f"{head}:{self.parameter}"

    def __str__(self):
        return self.spelling


def selected_channels(kind: str, parameter=None) -> np.ndarray:
    """Flat indices of the channels a zeroing scenario removes."""
    if kind == "missing_voltage":
        return channels(quantities=("voltage",))
    if kind == "missing_current":
        return channels(quantities=("current",))
    if kind == "bus_failure":
        if parameter not in TOPOLOGY.buses:
            raise ScenarioError(f"unknown bus {parameter!r}")
        return channels(relays=TOPOLOGY.relays_at_bus(parameter))
    if kind == "relay_failure":
        if parameter not in range(1, 9):
            raise ScenarioError(f"unknown relay {parameter!r}")
        return channels(relays=(parameter,))
    if kind == "phase_failure":
        if parameter not in PHASES:
            raise ScenarioError(f"unknown phase {parameter!r}")
        return channels(phases=(parameter,))
    raise ScenarioError(f"{kind!r} is not a channel-zeroing scenario")


def _zero_rows(samples: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = samples.copy()
    out[..., idx, :] = 0
    return out


def apply_channel_zeroing(obj, kind: str, parameter=None):
    """Copy of ``obj`` with the scenario's channels set to zero.

    Accepts a :class:`WaveformRecord`, a :class:`LabeledWindow`, a
    :class:`WindowSet` or a bare array whose second-to-last axis is the
    48-channel axis.
    """
    idx = selected_channels(kind, parameter)
    if isinstance(obj, WaveformRecord):
        return obj.with_samples(_zero_rows(obj.samples, idx))
    if isinstance(obj, LabeledWindow):
        return replace(obj, features=_zero_rows(obj.features, idx))
    if isinstance(obj, WindowSet):
        X = _zero_rows(obj.features3d(), idx).reshape(len(obj), -1)
        return replace(obj, X=X)
    arr = np.asarray(obj)
    if arr.ndim < 2 or arr.shape[-2] != N_CHANNELS:
        raise ValueError("expected an array with a 48-channel axis")
    return _zero_rows(arr, idx)


def decimation_factor(base_fs: float, target_fs: float) -> int:
    """Largest whole factor that keeps the rate at or above ``target_fs``."""
    if target_fs <= 0:
        raise ScenarioError("target rate must be positive")
    if target_fs > base_fs:
        raise ScenarioError(f"target rate {target_fs} Hz above base rate {base_fs} Hz")
    return max(1, int(math.floor(base_fs / target_fs + 1e-9)))


def apply_downsample(record: WaveformRecord, target_fs: float) -> WaveformRecord:
    """Keep every k-th sample starting at index 0."""
    k = decimation_factor(record.fs, target_fs)
    if k == 1:
        return record
    return record.with_samples(record.samples[:, ::k].copy(), fs=record.fs / k)


def effective_target(base_fs: float, target_fs: float) -> float:
    """Grid targets above the dataset rate leave the data unchanged."""
    return min(float(target_fs), float(base_fs))


# ---- communication loss ----------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + np.uint64(0x9E3779B97F4A7C15)) & _M64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
        return z ^ (z >> np.uint64(31))


def loss_offsets(loss_seed: int, record_ids, window_indices, n_offsets: int) -> np.ndarray:
    """Start offset of the blanked interval for each window.

    Drawn uniformly from ``range(n_offsets)`` by hashing the
    ``(loss_seed, record_id, window_index)`` triple, so placement never depends
    on processing order.
    """
    rid = np.asarray(record_ids, dtype=np.uint64)
    widx = np.asarray(window_indices, dtype=np.uint64)
    h = _splitmix64(np.full(rid.shape, np.uint64(loss_seed & 0xFFFFFFFFFFFFFFFF)))
    h = _splitmix64(h ^ rid)
    h = _splitmix64(h ^ widx)
    return (h % np.uint64(n_offsets)).astype(np.int64)


def loss_samples(duration_ms: float, fs: float) -> int:
    return int(round(duration_ms / 1000.0 * fs))


def _check_loss(duration_ms: float, window_ms: float):
    if duration_ms >= window_ms:
        raise NotApplicable(
            f"communication loss of {duration_ms} ms needs a window longer than the "
            f"outage (window is {window_ms} ms)"
        )


def apply_comm_loss(window: LabeledWindow, duration_ms: float, loss_seed: int, fs: float) -> LabeledWindow:
    W = window.features.shape[1]
    _check_loss(duration_ms, W / fs * 1000.0)
    L = loss_samples(duration_ms, fs)
    start = int(loss_offsets(loss_seed, [window.source_record_id], [window.window_index], W - L + 1)[0])
    feats = window.features.copy()
    feats[:, start:start + L] = 0
    return replace(window, features=feats)


def apply_comm_loss_set(ws: WindowSet, duration_ms: float, loss_seed: int) -> WindowSet:
    """:func:`apply_comm_loss` over every window of a set."""
    W = ws.window_samples
    _check_loss(duration_ms, W / ws.fs * 1000.0)
    L = loss_samples(duration_ms, ws.fs)
    starts = loss_offsets(loss_seed, ws.record_id, ws.window_index, W - L + 1)
    mask = (np.arange(W)[None, :] >= starts[:, None]) & (np.arange(W)[None, :] < starts[:, None] + L)
    X = ws.features3d().copy()
    X[np.broadcast_to(mask[:, None, :], X.shape)] = 0
    return replace(ws, X=X.reshape(len(ws), -1))


def applicability(scenario: SparsityScenario, window_length_ms: float) -> bool:
    if scenario.kind == "comm_loss":
        return scenario.parameter < window_length_ms
    return True


# ---- experiment grid ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    task: str
    window_length_ms: int
    scenario: SparsityScenario
    mode: str = "retrain"  # or "clean-train"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.mode not in ("retrain", "clean-train"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not applicability(self.scenario, self.window_length_ms):
            raise NotApplicable(
                f"{self.scenario} with a {self.window_length_ms} ms window: the outage must "
                "be shorter than the window length"
            )

    @property
    def key(self) -> tuple:
        return (self.task, self.window_length_ms, self.scenario.spelling)


def scenario_list(loss_seed: int = 0) -> list[SparsityScenario]:
    """Every scenario of the benchmark, baseline first."""
    S = SparsityScenario
    out = [S("none"), S("missing_voltage"), S("missing_current")]
    out += [S("downsample", hz) for hz in DOWNSAMPLE_TARGETS_HZ]
    out += [S("bus_failure", b) for b in (1, 2, 3)]
    out += [S("relay_failure", r) for r in range(1, 9)]
    out += [S("phase_failure", p) for p in PHASES]
    out += [S("comm_loss", ms, loss_seed) for ms in COMM_LOSS_MS]
    return out


def enumerate_grid(
    tasks=TASKS, windows=WINDOW_LENGTHS_MS, loss_seed: int = 0, scenarios=None, mode: str = "retrain"
) -> list[ExperimentSpec]:
    """All applicable (task, window, scenario) cells in a fixed order.

    ``scenarios`` optionally restricts the grid to the given spellings; the
    baseline is always kept because relative changes are measured against it.
    """
    pool = scenario_list(loss_seed)
    if scenarios:
        wanted = {SparsityScenario.parse(s).spelling for s in scenarios} | {"none"}
        pool = [s for s in pool if s.spelling in wanted]
    return [
        ExperimentSpec(t, int(w), s, mode)
        for t in tasks
        for w in windows
        for s in pool
        if applicability(s, w)
    ]
