import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physiort import dsp
from physiort.synth import (BAD, BIN_SECONDS, GOOD, ArtifactKind, ArtifactSpec,
                            Burst, EdaSpec, OverlapViolation, PpgSpec, RspSpec,
                            SpecViolation, StreamingEda, StreamingPpg,
                            StreamingRsp, corpus, counts_to_units, generate_eda,
                            generate_ppg, generate_rsp, inject_artifacts,
                            to_adc_counts)


def spec(**kw):
    base = dict(fs=64.0, duration=8.0, hr_bpm=72.0, ibi_jitter_ms=20.0,
                snr_db=30.0, seed=0)
    base.update(kw)
    return PpgSpec(**base)


def test_deterministic_per_seed():
    a = generate_ppg(spec())
    b = generate_ppg(spec())
    assert np.array_equal(a.samples.data, b.samples.data)
    assert np.array_equal(a.truth_peaks, b.truth_peaks)
    c = generate_ppg(spec(seed=1))
    assert not np.array_equal(a.samples.data, c.samples.data)


def test_shapes_and_labels():
    seg = generate_ppg(spec())
    assert seg.samples.data.size == 512
    assert seg.quality_bins.size == 16
    assert np.all(seg.quality_bins == GOOD)
    assert seg.truth_ibis_ms.size == seg.truth_peaks.size - 1


def test_spec_validation():
    with pytest.raises(SpecViolation):
        generate_ppg(spec(hr_bpm=0.0))
    with pytest.raises(SpecViolation):
        generate_ppg(spec(duration=-1.0))
    with pytest.raises(SpecViolation):
        generate_ppg(spec(fs=0.0))


def test_truth_peaks_near_beat_grid():
    seg = generate_ppg(spec(ibi_jitter_ms=0.0, snr_db=60.0, duration=30.0))
    ibis = np.diff(seg.truth_peaks) / 64.0 * 1000.0
    want = 60000.0 / 72.0
    assert np.all(np.abs(ibis - want) <= 2 * 1000.0 / 64.0)  # within 2 samples


def test_detected_peaks_match_truth():
    """The detector recovers nearly all ground-truth peaks within 3 samples."""
    seg = generate_ppg(spec(duration=30.0, snr_db=35.0, seed=4))
    filt = dsp.filter_zero_phase(dsp.design_bandpass(64.0), seg.samples)
    ib = dsp.detect_peaks(filt)
    det = np.round(ib.peak_times * 64.0).astype(int)
    hits = sum(1 for p in seg.truth_peaks if np.any(np.abs(det - p) <= 3))
    assert hits / seg.truth_peaks.size >= 0.98


def test_artifact_bins_exact_overlap_rule():
    seg = generate_ppg(spec())
    art = ArtifactSpec(bursts=(Burst(start=2.0, length=1.0,
                                     kind=ArtifactKind.DROPOUT),))
    out = inject_artifacts(seg, art)
    # burst [2.0, 3.0) covers bins 4 and 5 only
    want = np.full(16, GOOD)
    want[4:6] = BAD
    assert np.array_equal(out.quality_bins, want)
    # original untouched
    assert np.all(seg.quality_bins == GOOD)


def test_artifact_bin_boundary_touch_does_not_mark():
    seg = generate_ppg(spec())
    # ends exactly at a bin edge: bin 6 (starting at 3.0 s) stays good
    art = ArtifactSpec(bursts=(Burst(start=2.5, length=0.5,
                                     kind=ArtifactKind.SATURATION),))
    out = inject_artifacts(seg, art)
    assert out.quality_bins[5] == BAD
    assert out.quality_bins[6] == GOOD


def test_artifact_kinds_change_waveform():
    seg = generate_ppg(spec())
    i0, i1 = int(2.0 * 64), int(3.0 * 64)
    sat = inject_artifacts(seg, ArtifactSpec(
        bursts=(Burst(2.0, 1.0, ArtifactKind.SATURATION, amplitude=3.0),)))
    assert np.all(sat.samples.data[i0:i1] == 3.0)
    drop = inject_artifacts(seg, ArtifactSpec(
        bursts=(Burst(2.0, 1.0, ArtifactKind.DROPOUT),)))
    assert np.all(drop.samples.data[i0:i1] == 0.0)
    wander = inject_artifacts(seg, ArtifactSpec(
        bursts=(Burst(2.0, 1.0, ArtifactKind.MOTION_WANDER, amplitude=2.0),)))
    assert not np.array_equal(wander.samples.data[i0:i1], seg.samples.data[i0:i1])
    # outside the burst all three agree with the original
    for out in (sat, drop, wander):
        assert np.array_equal(out.samples.data[:i0], seg.samples.data[:i0])
        assert np.array_equal(out.samples.data[i1:], seg.samples.data[i1:])


def test_burst_validation():
    with pytest.raises(SpecViolation):
        Burst(start=-0.1, length=1.0, kind=ArtifactKind.DROPOUT)
    with pytest.raises(SpecViolation):
        Burst(start=0.0, length=0.0, kind=ArtifactKind.DROPOUT)
    with pytest.raises(OverlapViolation):
        ArtifactSpec(bursts=(Burst(0.0, 2.0, ArtifactKind.DROPOUT),
                             Burst(1.0, 2.0, ArtifactKind.MOTION_WANDER)))
    seg = generate_ppg(spec())
    with pytest.raises(SpecViolation):
        inject_artifacts(seg, ArtifactSpec(
            bursts=(Burst(7.0, 2.0, ArtifactKind.DROPOUT),)))


@given(st.floats(0.0, 6.9), st.floats(0.1, 1.0))
@settings(max_examples=60, deadline=None)
def test_artifact_label_soundness(start, length):
    """Every bin overlapping the burst is bad; every other bin is good."""
    seg = generate_ppg(spec())
    out = inject_artifacts(seg, ArtifactSpec(
        bursts=(Burst(start, length, ArtifactKind.MOTION_WANDER),)))
    for k in range(out.quality_bins.size):
        overlaps = start < (k + 1) * BIN_SECONDS and start + length > k * BIN_SECONDS
        assert out.quality_bins[k] == (BAD if overlaps else GOOD)


def test_adc_round_trip():
    seg = generate_ppg(spec())
    counts = to_adc_counts(seg.samples.data)
    assert counts.dtype == np.int64
    assert counts.min() >= 0 and counts.max() <= 4095
    back = counts_to_units(counts)
    assert np.max(np.abs(back - seg.samples.data)) <= 8.0 / 4095 + 1e-12


def test_adc_clips_rails():
    assert to_adc_counts(np.array([-10.0]))[0] == 0
    assert to_adc_counts(np.array([10.0]))[0] == 4095
    assert to_adc_counts(np.array([10.0]), adc_bits=10)[0] == 1023


def test_corpus_composition():
    segs = corpus(20, 0.5, seed=0)
    assert len(segs) == 20
    n_bad = sum(1 for s in segs if np.any(s.quality_bins == BAD))
    assert n_bad == 10
    assert {s.group for s in segs} == set(range(10))
    # deterministic
    again = corpus(20, 0.5, seed=0)
    for a, b in zip(segs, again):
        assert np.array_equal(a.samples.data, b.samples.data)
        assert np.array_equal(a.quality_bins, b.quality_bins)


def test_corpus_fraction_rounding():
    assert sum(np.any(s.quality_bins == BAD) for s in corpus(10, 0.25, seed=1)) == 2
    assert sum(np.any(s.quality_bins == BAD) for s in corpus(10, 0.0, seed=1)) == 0
    assert sum(np.any(s.quality_bins == BAD) for s in corpus(10, 1.0, seed=1)) == 10
    with pytest.raises(SpecViolation):
        corpus(10, 1.5)


def test_eda_generator():
    x = generate_eda(EdaSpec(fs=64.0, duration=60.0, tonic_us=4.0,
                             drift_us_per_min=0.6, n_phasic=0, seed=0))
    assert x.data.size == 3840
    assert x.data[0] == pytest.approx(4.0, abs=1e-9)
    # drift: one minute adds drift_us_per_min
    assert x.data[-1] == pytest.approx(4.0 + 0.6, rel=0.05)
    with_events = generate_eda(EdaSpec(fs=64.0, duration=60.0, n_phasic=3, seed=0))
    assert np.max(with_events.data) > np.max(x.data)


def test_rsp_generator():
    x = generate_rsp(RspSpec(fs=64.0, duration=60.0, rate_hz=0.25, seed=0))
    mw = dsp.resp_rate_from_window(x)
    assert mw.value == pytest.approx(15.0, abs=1.0)


def test_streaming_ppg_beats_match_batch():
    """Chunked streaming renders the same beat train as the batch generator."""
    s = spec(duration=12.0, snr_db=200.0, seed=9)  # negligible noise
    batch = generate_ppg(s).samples.data
    stream = StreamingPpg(s)
    got = np.concatenate([stream.produce(n) for n in (100, 1, 37, 250, 252)])
    # compare clear of the batch generator's end-of-signal beat cutoff
    assert got.size == 640
    assert np.max(np.abs(got - batch[:640])) < 1e-6


def test_streaming_eda_rsp_produce():
    eda = StreamingEda(EdaSpec(fs=64.0, duration=1.0, tonic_us=1.5, seed=0))
    x = eda.produce(640)
    assert x.shape == (640,)
    assert abs(float(np.mean(x)) - 1.5) < 0.1
    rsp = StreamingRsp(RspSpec(fs=64.0, duration=1.0, seed=0))
    assert rsp.produce(64).shape == (64,)
