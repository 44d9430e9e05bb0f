"""Randomized algebraic properties of the sparsity injectors."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sparsegrid import gridsim
from sparsegrid.preprocess import LabeledWindow, WindowingConfig, slide_windows, trim
from sparsegrid.sparsity import (
    DOWNSAMPLE_TARGETS_HZ,
    apply_channel_zeroing,
    apply_comm_loss,
    apply_downsample,
    selected_channels,
)

EXAMPLES = 250
CASES = {"n": 0}

_zeroing = st.one_of(
    st.just(("missing_voltage", None)),
    st.just(("missing_current", None)),
    st.tuples(st.just("bus_failure"), st.integers(1, 3)),
    st.tuples(st.just("relay_failure"), st.integers(1, 8)),
    st.tuples(st.just("phase_failure"), st.sampled_from("ABC")),
)

_arrays = st.integers(0, 2**32 - 1).map(
    lambda s: np.random.default_rng(s).normal(size=(48, 24)).astype(np.float32)
)


def _window(seed: int, W: int = 40) -> LabeledWindow:
    rng = np.random.default_rng(seed)
    fault = bool(rng.integers(0, 2))
    return LabeledWindow(
        rng.normal(size=(48, W)), fault, int(rng.integers(1, 5)) if fault else None,
        int(rng.integers(0, 1000)), 0.0, int(rng.integers(0, 31)),
    )


_cfg = settings(max_examples=EXAMPLES, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@_cfg
@given(_arrays, _zeroing)
def test_zeroing_idempotent(x, sc):
    CASES["n"] += 1
    once = apply_channel_zeroing(x, *sc)
    assert np.array_equal(apply_channel_zeroing(once, *sc), once)
    others = np.setdiff1d(np.arange(48), selected_channels(*sc))
    assert np.array_equal(once[others], x[others])


@_cfg
@given(_arrays, _zeroing, _zeroing)
def test_zeroing_commutes(x, a, b):
    CASES["n"] += 1
    ab = apply_channel_zeroing(apply_channel_zeroing(x, *a), *b)
    ba = apply_channel_zeroing(apply_channel_zeroing(x, *b), *a)
    assert np.array_equal(ab, ba)
    if not np.intersect1d(selected_channels(*a), selected_channels(*b)).size:
        # disjoint sets: the union is zeroed and nothing else changes
        keep = np.setdiff1d(np.arange(48), np.union1d(selected_channels(*a), selected_channels(*b)))
        assert np.array_equal(ab[keep], x[keep])


@_cfg
@given(st.integers(0, 2**32 - 1), st.sampled_from([1000, 2000, 4000, 20000]), st.integers(1, 5), st.integers(1, 5))
def test_downsample_identity_and_composition(seed, fs, k1, k2):
    CASES["n"] += 1
    n = k1 * k2 * int(np.random.default_rng(seed).integers(2, 20))
    rec = gridsim.WaveformRecord(
        float(fs), np.random.default_rng(seed).normal(size=(48, n)),
        gridsim.randomize_params(seed, faulted=False), 0,
    )
    assert apply_downsample(rec, fs) is rec
    one = apply_downsample(apply_downsample(rec, fs / k1), fs / (k1 * k2))
    direct = apply_downsample(rec, fs / (k1 * k2))
    assert abs(one.fs - direct.fs) <= 1e-9 * direct.fs
    assert np.array_equal(one.samples, direct.samples)


@_cfg
@given(st.integers(0, 2**32 - 1), st.sampled_from([5, 10, 15]), st.integers(0, 2**63 - 1))
def test_comm_loss_idempotent(seed, ms, loss_seed):
    CASES["n"] += 1
    w = _window(seed)
    once = apply_comm_loss(w, ms, loss_seed, 2000)
    twice = apply_comm_loss(once, ms, loss_seed, 2000)
    assert np.array_equal(once.features, twice.features)
    assert (~once.features.any(axis=0)).sum() == ms * 2


@_cfg
@given(st.integers(0, 2**32 - 1), _zeroing, st.sampled_from([5, 10, 15]))
def test_labels_preserved(seed, sc, ms):
    CASES["n"] += 1
    w = _window(seed)
    for out in (apply_channel_zeroing(w, *sc), apply_comm_loss(w, ms, seed, 2000)):
        assert (out.fd_label, out.fli_label, out.source_record_id, out.window_index) == (
            w.fd_label, w.fli_label, w.source_record_id, w.window_index,
        )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(DOWNSAMPLE_TARGETS_HZ[2:]))
def test_downsample_preserves_labels(seed, target):
    CASES["n"] += 1
    rec = gridsim.simulate(gridsim.randomize_params(seed), 2000, record_id=seed)
    cfg = WindowingConfig(window_length_ms=20)
    before = [(w.fd_label, w.fli_label) for w in slide_windows(trim(rec, cfg), cfg)]
    low = apply_downsample(rec, min(target, 2000))
    after = [(w.fd_label, w.fli_label) for w in slide_windows(trim(low, cfg), cfg)]
    assert before == after
