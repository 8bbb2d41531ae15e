"""Acceptance checklist: one test per shipped guarantee, one verdict line each.

Every test measures first and judges once at the end, so a full run prints
a readable PASS/FAIL line per criterion (bypassing pytest's capture) with
the observed margins and elapsed time.
"""

import csv
import json
import os
import socket
import threading
import time

import numpy as np

from physiort import dsp, store, synth, sync
from physiort.analysis import agreement, bland_altman_points, paired_exclusion, \
    select_best_channel
from physiort.cli import main
from physiort.config import ChannelKind, load_acq_config, load_experiment_config
from physiort.dsp import SampleSeries, design_bandpass, hr_from_window, pnn50, psqi, windows
from physiort.runtime import SessionRuntime, build_source
from physiort.sqa.model import LABEL_BAD, backward, build_model, forward, \
    forward_batch, loss, znorm
from physiort.sqa.train import train
from physiort.store import EventMark, RecordingHeader, open_writer, read_recording
from physiort.wire import FrameDecoder, SampleFrame, encode_frame

from conftest import acq_doc, experiment_doc
from test_sqa import fd_grad, rel_err
from test_sync import _accept_and_ack, _expected_final_phase, _random_line


def _report(capfd, cid, ok, detail):
    with capfd.disabled():
        print(f"{cid} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    assert ok, f"{cid}: {detail}"


# -- A1: filter magnitude vs the analytic Butterworth formula ----------------------

def _cascade_mag(sos, f, fs):
    """|H| of a biquad product, evaluated directly on the unit circle."""
    z = np.exp(-2j * np.pi * np.asarray(f, dtype=float) / fs)
    h = np.ones_like(z, dtype=complex)
    for b0, b1, b2, a0, a1, a2 in np.asarray(sos):
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return np.abs(h)


def test_a1_filter_matches_analytic_bandpass(capfd):
    t0 = time.perf_counter()
    lo, hi = 0.7, 4.0
    sos = design_bandpass(64.0).sos()
    f = np.logspace(np.log10(lo), np.log10(hi), 50)
    # 3rd-order Butterworth band-pass: lowpass prototype |H|^2 = 1/(1+w^6)
    # under the standard transform w = (f^2 - lo*hi) / ((hi-lo) f).
    w = (f ** 2 - lo * hi) / ((hi - lo) * f)
    analytic = 1.0 / np.sqrt(1.0 + w ** 6)
    dev = np.max(np.abs(_cascade_mag(sos, f, 64.0) - analytic) / analytic)
    stop_db = 20.0 * np.log10(_cascade_mag(sos, [0.07], 64.0)[0])
    el = time.perf_counter() - t0
    ok = dev < 0.02 and stop_db <= -55.0 and el < 1.0
    _report(capfd, "A1", ok,
            f"50 log-spaced points dev {dev * 100:.3f}% (tol 2%), "
            f"0.07 Hz at {stop_db:.1f} dB (<= -55); {el:.2f}s")


# -- A2: metric implementations vs brute-force oracles ------------------------------

def _hr_oracle(ibis):
    return 60000.0 / (sum(ibis) / len(ibis))


def _pnn50_oracle(ibis):
    diffs = [abs(ibis[i + 1] - ibis[i]) for i in range(len(ibis) - 1)]
    return 100.0 * sum(1 for d in diffs if d > 50.0) / len(diffs)


def _psqi_oracle(x, fs):
    """Explicit O(n^2) DFT power ratio, no FFT anywhere."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    k = np.arange(n // 2 + 1)
    ang = 2.0 * np.pi * np.outer(k, np.arange(n)) / n
    power = (np.cos(ang) @ x) ** 2 + (np.sin(ang) @ x) ** 2
    freqs = k * fs / n
    num = power[(freqs >= 1.0) & (freqs <= 2.25)].sum()
    den = power[(freqs >= 0.0) & (freqs <= 8.0)].sum()
    return 100.0 * num / den


def _rmse_oracle(a, b):
    return (sum((x - y) ** 2 for x, y in zip(a, b)) / len(a)) ** 0.5


def _mae_oracle(a, b):
    return sum(abs(x - y) for x, y in zip(a, b)) / len(a)


def _sd_oracle(d):
    m = sum(d) / len(d)
    return (sum((x - m) ** 2 for x in d) / (len(d) - 1)) ** 0.5


def _pearson_oracle(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / (va ** 0.5 * vb ** 0.5)


def test_a2_metrics_match_brute_force_oracles(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        ibis = rng.uniform(300.0, 1500.0, size=int(rng.integers(4, 40))).tolist()
        worst = max(worst, abs(hr_from_window(ibis, 0, 30).value - _hr_oracle(ibis)))
        worst = max(worst, abs(pnn50(ibis, 0, 120).value - _pnn50_oracle(ibis)))
        x = rng.normal(size=int(rng.integers(64, 513)))
        worst = max(worst, abs(psqi(SampleSeries(data=x, fs=64.0)).value
                               - _psqi_oracle(x, 64.0)))
        n = int(rng.integers(2, 40))
        a = rng.normal(size=n) * 10.0
        b = a + rng.normal(size=n)
        stats = agreement(a, b)
        d = (a - b).tolist()
        worst = max(worst, abs(stats.rmse - _rmse_oracle(a, b)))
        worst = max(worst, abs(stats.mae - _mae_oracle(a, b)))
        worst = max(worst, abs(stats.sd_error - _sd_oracle(d)))
        worst = max(worst, abs(stats.pearson_r - _pearson_oracle(a, b)))
        sd = _sd_oracle(d)
        md = sum(d) / len(d)
        worst = max(worst, abs(stats.bland_altman.mean_diff - md))
        worst = max(worst, abs(stats.bland_altman.loa_low - (md - 1.96 * sd)))
        worst = max(worst, abs(stats.bland_altman.loa_high - (md + 1.96 * sd)))
        pts = bland_altman_points(a, b)
        worst = max(worst, float(np.max(np.abs(pts[:, 0] - (a + b) / 2.0))))
        worst = max(worst, float(np.max(np.abs(pts[:, 1] - (a - b)))))

    hand_bad = []
    if hr_from_window([1000.0] * 5, 0, 30).value != 60.0:
        hand_bad.append("hr 1000ms")
    if hr_from_window([800.0] * 6, 0, 30).value != 75.0:
        hand_bad.append("hr 800ms")
    if hr_from_window([800.0] * 3, 0, 30).value is not None:
        hand_bad.append("hr 3 beats")
    if pnn50([800.0] * 4, 0, 120).value != 0.0:
        hand_bad.append("pnn50 flat")
    if pnn50([800.0, 860.0, 800.0, 860.0], 0, 120).value != 100.0:
        hand_bad.append("pnn50 all-over")
    if pnn50([800.0, 840.0, 800.0, 860.0, 800.0], 0, 120).value != 50.0:
        hand_bad.append("pnn50 half")
    t = np.arange(512) / 64.0
    if psqi(SampleSeries(data=np.sin(2 * np.pi * 1.5 * t), fs=64.0)).value < 99.0:
        hand_bad.append("psqi tone")
    ident = agreement([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    if not (ident.rmse == 0.0 and ident.mae == 0.0 and ident.pearson_r == 1.0):
        hand_bad.append("agreement identity")
    off = agreement([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    if not (off.rmse == 1.0 and off.mae == 1.0
            and off.bland_altman.mean_diff == -1.0):
        hand_bad.append("agreement offset")
    r = agreement([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]).pearson_r
    if abs(r - 0.9820) > 5e-4 or abs(r - _pearson_oracle([1, 2, 3], [1, 2, 4])) > 1e-12:
        hand_bad.append("agreement r")
    ba = agreement([10.0, 12.0], [11.0, 11.0]).bland_altman
    if not (ba.mean_diff == 0.0
            and abs(ba.loa_high - 1.96 * np.sqrt(2.0)) < 1e-12
            and ba.loa_low == -ba.loa_high):
        hand_bad.append("agreement loa")
    if bland_altman_points([10.0], [12.0]).tolist() != [[11.0, -2.0]]:
        hand_bad.append("bland-altman point")

    el = time.perf_counter() - t0
    ok = worst < 1e-9 and not hand_bad and el < 10.0
    _report(capfd, "A2", ok,
            f"100 randomized inputs, worst |dev| {worst:.2e} (tol 1e-9), "
            f"hand examples {'all exact' if not hand_bad else 'BAD: ' + ', '.join(hand_bad)}; "
            f"{el:.1f}s")


# -- A3: simulate -> acquire -> store -> analyze recovers the generator truth -------

def test_a3_pipeline_recovers_simulated_truth(tmp_path, capfd):
    t0 = time.perf_counter()
    results = []
    for hr in (50, 72, 110):
        d = tmp_path / f"hr{hr}"
        os.makedirs(d)
        sim = str(d / "sim.csv")
        assert main(["simulate", "--hr", str(hr), "--duration", "240",
                     "--jitter", "30", "--snr", "20", "--seed", "3",
                     "--out", sim]) == 0
        truth = json.loads(open(sim + ".truth.json").read())
        exp = d / "experiment.json"
        acq = d / "acquisition.json"
        exp.write_text(experiment_doc(conditions=[
            {"name": "baseline", "max_time_seconds": 240.0}]))
        acq.write_text(acq_doc(transport="replay"))
        data = str(d / "data")
        assert main(["acquire", "--experiment", str(exp), "--acquisition", str(acq),
                     "--participant", "p01", "--data-dir", data,
                     "--replay", sim, "--unpaced"]) == 0
        out = str(d / "out")
        assert main(["analyze", "--data-dir", data, "--out-dir", out]) == 0
        rows = list(csv.DictReader(open(os.path.join(out, "metrics.csv"))))
        hrs = [float(r["value"]) for r in rows
               if r["metric"] == "HR_BPM" and r["value"]]
        pnn = [float(r["value"]) for r in rows
               if r["metric"] == "PNN50" and r["value"]]
        hr_err = abs(sum(hrs) / len(hrs) - truth["hr_bpm"])
        pnn_err = abs(sum(pnn) / len(pnn) - truth["pnn50"])
        results.append((hr, hr_err, pnn_err))
    el = time.perf_counter() - t0
    worst_hr = max(r[1] for r in results)
    worst_pnn = max(r[2] for r in results)
    ok = worst_hr < 1.0 and worst_pnn < 5.0 and el < 30.0
    _report(capfd, "A3", ok,
            "hr errs " + " ".join(f"{r[0]}bpm:{r[1]:.3f}" for r in results)
            + " (tol 1 bpm); pnn50 errs "
            + " ".join(f"{r[0]}bpm:{r[2]:.2f}" for r in results)
            + f" (tol 5 points); {el:.1f}s")


# -- A4: quality model reaches desk-scale accuracy and localizes artifacts ----------

def test_a4_sqa_training_at_desk_scale(capfd):
    t0 = time.perf_counter()
    corp = synth.corpus(2000, 0.5, seed=11)
    model, metrics = train(corp, epochs=15, seed=0)
    acc = metrics["final_val_bin_accuracy"]

    kinds = list(synth.ArtifactKind)
    rng = np.random.default_rng(99)
    hits = 0
    n_eval = 100
    for i in range(n_eval):
        seg = synth.generate_ppg(synth.PpgSpec(
            fs=64.0, duration=8.0, hr_bpm=float(rng.uniform(48, 120)),
            ibi_jitter_ms=float(rng.uniform(10, 60)),
            snr_db=float(rng.uniform(25, 40)), seed=1_000_000 + i))
        seg = synth.inject_artifacts(seg, synth.ArtifactSpec(bursts=(
            synth.Burst(start=2.0, length=2.0, kind=kinds[i % len(kinds)]),)))
        qv, _ = forward(model, znorm(seg.samples.data))
        if np.all(qv.labels[4:8] == LABEL_BAD):
            hits += 1
    el = time.perf_counter() - t0
    ok = acc >= 0.90 and hits >= 0.95 * n_eval and el <= 300.0
    _report(capfd, "A4", ok,
            f"held-out bin accuracy {acc:.4f} (>= 0.90), 2-4 s burst flags "
            f"bins 4..7 on {hits}/{n_eval} (>= 95); {el:.0f}s")


# -- A5: finite-difference gradient check on the reduced model ----------------------

def test_a5_gradcheck_reduced_model(capfd):
    t0 = time.perf_counter()
    model = build_model(seed=5, input_len=32, encoder_channels=(1, 2, 2),
                        decoder_mid=2)
    rng = np.random.default_rng(11)
    # Generic parameter point: zero biases leave dead rectifier fields at
    # exactly 0.0, where one-sided finite differences are meaningless.
    for layer in model.layers:
        p = layer.params()
        if p:
            p["b"][...] = rng.normal(scale=0.1, size=p["b"].shape)
    x = rng.normal(size=(3, 32))
    y = rng.integers(0, 2, size=(3, model.n_bins))

    def current_loss():
        logits, _ = forward_batch(model, x)
        return loss(logits, y)

    logits, caches = forward_batch(model, x)
    _, grads = backward(model, (logits, caches), y)
    worst = 0.0
    for layer, g in zip(model.layers, grads):
        if g is None:
            continue
        for name, analytic in g.items():
            worst = max(worst, rel_err(analytic,
                                       fd_grad(current_loss, layer.params()[name])))
    el = time.perf_counter() - t0
    ok = worst < 1e-5 and el < 30.0
    _report(capfd, "A5", ok,
            f"max relative gradient error {worst:.2e} (tol 1e-5); {el:.1f}s")


# -- A6: synchronized multi-node recording --------------------------------------

def _node_runtime(base, pid, exp, acq, seed):
    return SessionRuntime(
        exp, acq, pid, data_dir=str(base / pid),
        source_factory=lambda: build_source(exp, acq, paced=True, seed=seed))


def test_a6_sync_protocol(tmp_path, capfd):
    t0 = time.perf_counter()
    exp = load_experiment_config(experiment_doc(conditions=[
        {"name": "baseline", "max_time_seconds": 5.0}]))
    acq = load_acq_config(acq_doc())
    server = sync.SyncServer(listen_port=0)
    paths: dict[str, str] = {}
    receipts: dict[str, int] = {}

    def client_node(pid, seed):
        rt = _node_runtime(tmp_path, pid, exp, acq, seed)
        got = threading.Event()
        triggers = []

        def on_start(msg):
            triggers.append(msg)
            got.set()

        cl = sync.SyncClient(("127.0.0.1", server.port), node_id=pid,
                             on_start=on_start)
        try:
            cl.ready()
            assert got.wait(timeout=15.0)
            msg = triggers[0]
            receipts[pid] = cl.receipt_ns
            paths[pid] = rt.run_condition(msg.condition, msg.duration_s,
                                          session_id=msg.session_id)
            cl.finish()
        finally:
            cl.close()

    threads = [threading.Thread(target=client_node, args=(f"c{i}", i))
               for i in (1, 2, 3)]
    try:
        for t in threads:
            t.start()
        deadline = time.monotonic() + 15.0
        while time.monotonic() < deadline:
            armed = sum(1 for _, ph, ok in server.peers()
                        if ok and ph is sync.Phase.ARMED)
            if armed == 3:
                break
            time.sleep(0.01)
        msg = server.start_session("a6-session", "baseline", duration_s=5.0,
                                   force=False)
        receipts["srv"] = server.local_receipt_ns
        srv_rt = _node_runtime(tmp_path, "srv", exp, acq, 9)
        paths["srv"] = srv_rt.run_condition("baseline", 5.0,
                                            session_id=msg.session_id)
        for t in threads:
            t.join(timeout=30.0)
        server.stop_session()
    finally:
        server.close()

    lengths = {pid: read_recording(p).n_samples for pid, p in paths.items()}
    spread = max(lengths.values()) - min(lengths.values())
    skew_ms = (max(receipts.values()) - min(receipts.values())) / 1e6

    # state-machine property: 1000 scripted wire sessions, a client may
    # only end up recording when a decoded start arrived while armed
    rng = np.random.default_rng(6)
    violations = 0
    lsock = socket.create_server(("127.0.0.1", 0))
    port = lsock.getsockname()[1]
    try:
        for _ in range(1000):
            holder = []
            t = threading.Thread(target=_accept_and_ack, args=(lsock, holder))
            t.start()
            client = sync.SyncClient(("127.0.0.1", port), node_id="n1",
                                     heartbeat_s=60.0)
            t.join(timeout=5.0)
            conn = holder[0]
            ready_called = bool(rng.integers(2))
            if ready_called:
                client.ready()
            lines, events = [], []
            for _ in range(int(rng.integers(0, 13))):
                line, ev = _random_line(rng)
                lines.append(line)
                if ev:
                    events.append(ev)
            if lines:
                conn.sendall(b"".join(lines))
            conn.shutdown(socket.SHUT_RDWR)
            conn.close()
            client._reader_thread.join(timeout=5.0)
            want = _expected_final_phase(ready_called, events)
            if client.phase is not want:
                violations += 1
            if client.phase is sync.Phase.RECORDING and (
                    not ready_called or "start" not in events):
                violations += 1
    finally:
        lsock.close()

    el = time.perf_counter() - t0
    ok = (len(lengths) == 4 and spread <= 1 and skew_ms < 10.0
          and violations == 0 and el < 30.0)
    _report(capfd, "A6", ok,
            f"4 recordings, length spread {spread} samples (<= 1), trigger "
            f"skew {skew_ms:.2f} ms (< 10), 1000 scripted sequences "
            f"{violations} violations; {el:.1f}s")


# -- A7: wire parser fuzzing ---------------------------------------------------

def _is_subsequence(needle, haystack):
    it = iter(haystack)
    return all(x in it for x in needle)


def test_a7_parser_fuzz(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    stream = bytearray()
    expected = []
    garbage = 0
    while garbage < 1_000_000:
        blob = rng.integers(0, 256, size=int(rng.integers(500, 4000))).astype(
            np.uint8).tobytes()
        stream += blob
        garbage += len(blob)
        stream += b"\n"  # terminate whatever the garbage started
        for _ in range(int(rng.integers(1, 8))):
            vals = (int(rng.integers(0, 4096)), int(rng.integers(0, 4096)))
            expected.append(vals)
            stream += encode_frame(SampleFrame(values=vals))
    stream = bytes(stream)

    def run(chunks):
        dec = FrameDecoder(expected_channels=2)
        frames = []
        for c in chunks:
            frames.extend(f.values for f in dec.feed(c))
        return frames, dec.frames_ok, dec.frames_dropped

    whole = run([stream])
    bounds = [0] + sorted(int(c) for c in rng.integers(0, len(stream), size=2000)) \
        + [len(stream)]
    random_chunks = run([stream[a:b] for a, b in zip(bounds, bounds[1:])])
    tiny = run([stream[i:i + 3] for i in range(0, len(stream), 3)])

    recovered = _is_subsequence(expected, whole[0])
    invariant = whole == random_chunks == tiny
    el = time.perf_counter() - t0
    ok = recovered and invariant and el < 30.0
    _report(capfd, "A7", ok,
            f"{garbage} fuzz bytes + {len(expected)} valid frames: "
            f"all recovered={recovered}, chunking invariant={invariant}, "
            f"ok/dropped {whole[1]}/{whole[2]}; {el:.1f}s")


# -- A8: storage round trip ------------------------------------------------------

def _random_session(rng, path, i):
    n_ch = int(rng.integers(1, 5))
    header = RecordingHeader(
        session_id=f"s{i}", participant_id=f"p{int(rng.integers(1, 8)):02d}",
        condition=str(rng.choice(["baseline", "task", "recovery"])),
        fs=float(rng.choice([32.0, 64.0, 128.0])),
        channels=tuple(f"ch{j}" for j in range(n_ch)),
        started_utc="2026-08-14T10:00:00+00:00",
        started_mono_ns=int(rng.integers(1, 2 ** 60)),
        config_digest=f"{int(rng.integers(0, 2 ** 32)):08x}")
    n = int(rng.integers(0, 400))
    values = rng.integers(0, 4096, size=(n, n_ch))
    sqi = rng.choice([-1, 0, 1], size=n)
    event = np.zeros(n, dtype=int)
    marks = []
    if n >= 10:
        for code in (3, 5)[:int(rng.integers(0, 3))]:
            a = int(rng.integers(0, n - 5))
            b = int(rng.integers(a, min(n - 1, a + 50)))
            if event[a:b + 1].any():
                continue
            event[a:b + 1] = code
            marks.append(EventMark(code=code, start_sample=a, end_sample=b))
    w = open_writer(path, header)
    for r in range(n):
        w.append(values[r].tolist(), sqi=int(sqi[r]), event_code=int(event[r]))
    w.finalize()
    return header, values, sqi, event, sorted(marks, key=lambda m: m.start_sample)


def test_a8_storage_round_trip(tmp_path, capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    bad = []
    for i in range(200):
        path = str(tmp_path / f"s{i}.csv")
        header, values, sqi, event, marks = _random_session(rng, path, i)
        rec = read_recording(path)
        if not (rec.header == header
                and np.array_equal(rec.values, values)
                and np.array_equal(rec.sqi, sqi)
                and np.array_equal(rec.event_code, event)
                and sorted(rec.marks, key=lambda m: m.start_sample) == marks):
            bad.append(f"round trip s{i}")

    # random truncation points inside the data region yield valid prefixes
    trunc_checked = 0
    for i in (3, 17, 42, 77, 123, 160, 199):
        path = str(tmp_path / f"s{i}.csv")
        blob = open(path, "rb").read()
        data_start = blob.index(b"sample_idx")
        data_start = blob.index(b"\n", data_start) + 1
        if data_start >= len(blob):
            continue
        cut = int(rng.integers(data_start, len(blob)))
        tp = str(tmp_path / f"t{i}.csv")
        open(tp, "wb").write(blob[:cut])
        try:
            partial = read_recording(tp)
        except store.CorruptFile as err:
            partial = err.partial
        if partial is None:
            continue  # cut so early no full row survived
        full = read_recording(path)
        k = partial.n_samples
        if not (k <= full.n_samples
                and np.array_equal(partial.values, full.values[:k])
                and np.array_equal(partial.event_code, full.event_code[:k])):
            bad.append(f"truncation s{i}")
        trunc_checked += 1

    el = time.perf_counter() - t0
    ok = not bad and trunc_checked >= 5 and el < 30.0
    _report(capfd, "A8", ok,
            f"200 randomized write/read identities, {trunc_checked} truncations "
            f"to valid prefixes{'; BAD: ' + ', '.join(bad) if bad else ''}; {el:.1f}s")


# -- A9: redundant-channel selection and paired exclusion ----------------------------

def test_a9_channel_selection_and_exclusion(capfd):
    t0 = time.perf_counter()
    clean = synth.generate_ppg(synth.PpgSpec(fs=64.0, duration=120.0, hr_bpm=72.0,
                                             ibi_jitter_ms=30.0, snr_db=30.0,
                                             seed=21))
    kinds = list(synth.ArtifactKind)
    dirty = synth.inject_artifacts(clean, synth.ArtifactSpec(bursts=tuple(
        synth.Burst(start=s, length=3.0, kind=kinds[j % len(kinds)])
        for j, s in enumerate((10.0, 60.0, 110.0)))))
    spans = windows(clean.samples.data.size, 64.0, 30.0, 10.0)

    def q(seg, s, e):
        return psqi(SampleSeries(data=seg.samples.data[s:e], fs=64.0,
                                 t0=s / 64.0)).value

    finger = [q(clean, s, e) for s, e in spans]
    ear = [q(dirty, s, e) for s, e in spans]
    choice = select_best_channel([("ppg_finger", ChannelKind.PPG, finger),
                                  ("ppg_ear", ChannelKind.PPG, ear)])
    separated = [i for i in range(len(spans)) if finger[i] - ear[i] >= 10.0]
    picked_clean = all(choice[i] == "ppg_finger" for i in separated)

    a = np.arange(float(len(spans)))
    b = a + 100.0
    kept_a, kept_b = paired_exclusion(ear, a, b)
    keep_mask = np.asarray(ear) >= 40.0
    exclusion_exact = (np.array_equal(kept_a, a[keep_mask])
                       and np.array_equal(kept_b, b[keep_mask]))
    n_dropped = int(np.count_nonzero(~keep_mask))

    el = time.perf_counter() - t0
    ok = (len(separated) >= 3 and picked_clean and exclusion_exact
          and 0 < n_dropped < len(spans) and el < 10.0)
    _report(capfd, "A9", ok,
            f"{len(separated)} windows with >= 10-point separation, clean channel "
            f"picked in all={picked_clean}; paired exclusion dropped exactly the "
            f"{n_dropped} below-threshold windows={exclusion_exact}; {el:.1f}s")
