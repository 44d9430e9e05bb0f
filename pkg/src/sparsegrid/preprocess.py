"""Trimming around the fault instant, sliding windows and window labels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .gridsim import N_CHANNELS, ScenarioParams, WaveformRecord

WINDOW_LENGTHS_MS = (10, 20, 30, 40, 50)

# slack for comparing sample times that come out of float arithmetic
_TIME_EPS = 1e-9


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class WindowingConfig:
    window_length_ms: float = 20.0
    step_ms: float = 5.0
    trim_margin_ms: float = 80.0

    def __post_init__(self):
        if self.step_ms <= 0:
            raise ValueError("step_ms must be positive")
        if self.window_length_ms <= 0:
            raise ValueError("window_length_ms must be positive")
        if self.window_length_ms > 2 * self.trim_margin_ms:
            raise ValueError("window longer than the trimmed span")
        ratio = self.window_length_ms / self.step_ms
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("window_length_ms must be a multiple of step_ms")

    def samples(self, ms: float, fs: float) -> int:
        return int(round(ms / 1000.0 * fs))

    def window_samples(self, fs: float) -> int:
        return self.samples(self.window_length_ms, fs)

    def step_samples(self, fs: float) -> int:
        return self.samples(self.step_ms, fs)

    def span_samples(self, fs: float) -> int:
        return self.samples(2 * self.trim_margin_ms, fs)

    def expected_count(self) -> int:
        return int(math.floor((2 * self.trim_margin_ms - self.window_length_ms) / self.step_ms + 1e-9)) + 1


@dataclass
class LabeledWindow:
    features: np.ndarray  # (48, W)
    fd_label: bool
    fli_label: int | None
    source_record_id: int
    window_start: float
    window_index: int = 0

    def __post_init__(self):
        if self.fd_label != (self.fli_label is not None):
            raise ValueError("fd_label must be true exactly when fli_label is set")


def trim(record: WaveformRecord, cfg: WindowingConfig) -> WaveformRecord:
    """Cut ``±trim_margin`` around the fault instant (record centre if no fault).

    The result keeps ``meta`` untouched; its ``t0`` is the absolute time of the
    first kept sample, so ``meta.fault_start - t0 == trim_margin``.
    """
    fs = record.fs
    half = cfg.samples(cfg.trim_margin_ms, fs)
    span = cfg.span_samples(fs)
    if record.is_fault:
        start = record.fault_index() - half
    else:
        start = (record.n_samples - span) // 2
    if start < 0 or start + span > record.n_samples:
        raise PreconditionError(
            f"record {record.record_id}: trim span [{start}, {start + span}) outside "
            f"[0, {record.n_samples})"
        )
    return record.with_samples(
        record.samples[:, start:start + span], t0=record.t0 + start / fs
    )


def label(window_start: float, window_end: float, fs: float, meta: ScenarioParams):
    """FD/FLI labels of the half-open window ``[start, end)`` sampled at ``fs``.

    A window is fault-positive when at least one of its samples lies at or
    after the fault instant.
    """
    if meta.fault_line is None:
        return False, None
    last_sample = window_end - 1.0 / fs
    if last_sample >= meta.fault_start - _TIME_EPS:
        return True, meta.fault_line
    return False, None


def _starts(record: WaveformRecord, cfg: WindowingConfig) -> np.ndarray:
    W = cfg.window_samples(record.fs)
    S = cfg.step_samples(record.fs)
    if W < 1 or S < 1:
        raise PreconditionError(f"window or step shorter than one sample at {record.fs} Hz")
    if W > record.n_samples:
        raise PreconditionError("window longer than record")
    return np.arange(0, record.n_samples - W + 1, S)


def slide_windows(record: WaveformRecord, cfg: WindowingConfig) -> list[LabeledWindow]:
    W = cfg.window_samples(record.fs)
    out = []
    for j, s in enumerate(_starts(record, cfg)):
        t_start = record.t0 + s / record.fs
        fd, fli = label(t_start, t_start + W / record.fs, record.fs, record.meta)
        out.append(
            LabeledWindow(
                features=record.samples[:, s:s + W].copy(),
                fd_label=fd,
                fli_label=fli,
                source_record_id=record.record_id,
                window_start=t_start,
                window_index=j,
            )
        )
    return out


def flatten(window: LabeledWindow) -> np.ndarray:
    """Channel-major feature vector: ``position = channel_index * W + sample``."""
    return np.ascontiguousarray(window.features).reshape(-1)


@dataclass
class WindowSet:
    """All windows of a set of records as flat feature rows."""

    X: np.ndarray  # (n, 48 * W) float32
    fd: np.ndarray  # bool
    fli: np.ndarray  # int8, 0 when no fault
    record_id: np.ndarray  # int64
    window_index: np.ndarray  # int32, position within its record
    window_samples: int
    fs: float

    def __len__(self):
        return len(self.fd)

    def subset(self, mask) -> "WindowSet":
        return WindowSet(
            self.X[mask], self.fd[mask], self.fli[mask], self.record_id[mask],
            self.window_index[mask], self.window_samples, self.fs,
        )

    def features3d(self) -> np.ndarray:
        return self.X.reshape(len(self), N_CHANNELS, self.window_samples)


def record_windows(record: WaveformRecord, cfg: WindowingConfig):
    """Vectorized :func:`slide_windows` for one trimmed record."""
    W = cfg.window_samples(record.fs)
    starts = _starts(record, cfg)
    view = sliding_window_view(record.samples, W, axis=1)[:, starts]  # (48, n, W)
    X = np.ascontiguousarray(view.transpose(1, 0, 2), dtype=np.float32).reshape(len(starts), -1)
    last = starts + W - 1
    if record.is_fault:
        fd = last >= record.fault_index()
    else:
        fd = np.zeros(len(starts), dtype=bool)
    fli = np.where(fd, record.meta.fault_line or 0, 0).astype(np.int8)
    return X, fd, fli, starts


def build_windows(trimmed: list[WaveformRecord], cfg: WindowingConfig) -> WindowSet:
    if not trimmed:
        raise PreconditionError("no records to window")
    fs = trimmed[0].fs
    parts = [record_windows(r, cfg) for r in trimmed]
    if any(r.fs != fs for r in trimmed):
        raise PreconditionError("records with mixed sampling rates")
    X = np.concatenate([p[0] for p in parts])
    fd = np.concatenate([p[1] for p in parts])
    fli = np.concatenate([p[2] for p in parts])
    rid = np.concatenate([np.full(len(p[3]), r.record_id, dtype=np.int64) for p, r in zip(parts, trimmed)])
    widx = np.concatenate([np.arange(len(p[3]), dtype=np.int32) for p in parts])
    return WindowSet(X, fd, fli, rid, widx, cfg.window_samples(fs), fs)
