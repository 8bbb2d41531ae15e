"""Command-line entry points.

    physiort acquire     record a session per experiment + acquisition configs
    physiort serve       acquisition plus the WebSocket gateway for the console
    physiort analyze     batch-process recorded sessions into metrics.csv
    physiort train-sqa   train the quality model on synthetic segments
    physiort simulate    write a synthetic session file (replayable, with truth)
    physiort sync-server broadcast a start trigger to armed peers
    physiort sync-client arm and follow a remote trigger

PHYSIORT_DATA_DIR overrides the experiment config's data_dir; an explicit
--data-dir flag beats both. Errors exit with the code of their class:
2 configuration/usage, 3 transport, 4 data/storage, 5 network, 7 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
import time

import numpy as np

from . import analysis, dsp, store, synth, sync
from .config import Role, condition_schedule, load_acq_config, load_experiment_config
from .errors import PhysiortError
from .gateway import Gateway
from .runtime import SessionRuntime, build_source
from .sqa import load_model, save_model, train as train_sqa


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise store.IoFailure(f"cannot read {path}: {exc}") from exc


def _resolve_data_dir(flag: str | None, config_dir: str | None = None) -> str:
    if flag:
        return flag
    env = os.environ.get("PHYSIORT_DATA_DIR")
    if env:
        return env
    if config_dir:
        return config_dir
    raise store.IoFailure("no data directory: pass --data-dir or set PHYSIORT_DATA_DIR")


def _load_runtime(args) -> SessionRuntime:
    exp = load_experiment_config(_read(args.experiment))
    acq = load_acq_config(_read(args.acquisition))
    data_dir = _resolve_data_dir(args.data_dir, exp.data_dir)
    model = load_model(args.model) if args.model else None
    paced = not getattr(args, "unpaced", False)

    def factory():
        return build_source(exp, acq, paced=paced, serial_port=args.serial_port,
                            replay_path=args.replay, hr_bpm=args.hr,
                            ibi_jitter_ms=args.jitter, snr_db=args.snr,
                            seed=args.seed)

    return SessionRuntime(exp, acq, args.participant, data_dir=data_dir,
                          sqa_model=model, source_factory=factory)


def _add_runtime_args(p: argparse.ArgumentParser):
    p.add_argument("--experiment", required=True, help="experiment.json path")
    p.add_argument("--acquisition", required=True, help="acquisition.json path")
    p.add_argument("--participant", required=True, help="participant id")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--model", default=None, help="trained .sqa model file")
    p.add_argument("--serial-port", default=None)
    p.add_argument("--replay", default=None, help="session file for replay transport")
    p.add_argument("--unpaced", action="store_true",
                   help="run the source at full speed (offline tests)")
    p.add_argument("--hr", type=float, default=72.0, help="simulator heart rate")
    p.add_argument("--jitter", type=float, default=30.0, help="simulator IBI jitter ms")
    p.add_argument("--snr", type=float, default=20.0, help="simulator SNR dB")
    p.add_argument("--seed", type=int, default=0)


def cmd_acquire(args) -> int:
    rt = _load_runtime(args)
    schedule = condition_schedule(rt.exp)
    if rt.acq.role is Role.STANDALONE:
        for entry in schedule:
            path = rt.run_condition(entry.name, entry.duration_s)
            print(f"recorded {entry.name}: {path}")
        return 0
    if rt.acq.role is Role.SERVER:
        server = sync.SyncServer(listen_port=rt.acq.listen_port)
        try:
            for entry in schedule:
                deadline = time.monotonic() + args.wait_peers_s
                while time.monotonic() < deadline:
                    armed = sum(1 for _, ph, ok in server.peers()
                                if ok and ph is sync.Phase.ARMED)
                    if armed >= args.min_peers:
                        break
                    time.sleep(0.05)
                msg = server.start_session(f"{rt.participant_id}-{entry.name}",
                                           entry.name, duration_s=entry.duration_s,
                                           force=True)
                path = rt.run_condition(entry.name, entry.duration_s,
                                        session_id=msg.session_id)
                server.stop_session()
                print(f"recorded {entry.name}: {path}")
        finally:
            server.close()
        return 0
    # client: follow the server's triggers
    host, _, port = rt.acq.server_address.partition(":")
    triggers: list[sync.SyncMessage] = []
    got = threading.Event()

    def on_start(msg):
        triggers.append(msg)
        got.set()

    client = sync.SyncClient((host, int(port or sync.DEFAULT_PORT)),
                             node_id=args.participant, on_start=on_start)
    try:
        for _ in schedule:
            client.ready()
            got.wait()
            got.clear()
            msg = triggers[-1]
            path = rt.run_condition(msg.condition, msg.duration_s,
                                    session_id=msg.session_id)
            client.finish()
            print(f"recorded {msg.condition}: {path}")
    finally:
        client.close()
    return 0


def cmd_serve(args) -> int:
    rt = _load_runtime(args)
    gw = Gateway(rt, host=args.host, port=args.ws_port)
    print(f"gateway listening on ws://{args.host}:{gw.port}")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        gw.close()
        return 0


def cmd_analyze(args) -> int:
    cfg = (analysis.load_analysis_config(_read(args.config))
           if args.config else analysis.AnalysisConfig())
    data_dir = _resolve_data_dir(args.data_dir)
    table, manifest = analysis.batch_process(cfg, data_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    analysis.write_table(table, os.path.join(args.out_dir, "metrics.csv"))
    analysis.write_manifest(manifest, os.path.join(args.out_dir, "manifest.json"))
    print(f"{manifest['n_rows']} rows ({manifest['n_excluded']} excluded) "
          f"from {len(manifest['files'])} sessions -> {args.out_dir}/metrics.csv")
    for err in manifest["errors"]:
        print(f"skipped {err['file']}: {err['error']}", file=sys.stderr)
    return 0


def cmd_train_sqa(args) -> int:
    segments = synth.corpus(args.segments, args.artifact_fraction, seed=args.seed)
    model, metrics = train_sqa(segments, epochs=args.epochs, seed=args.seed)
    save_model(args.out, model)
    for i, (loss_v, acc) in enumerate(zip(metrics["train_loss"],
                                          metrics["val_bin_accuracy"]), 1):
        print(f"epoch {i:3d}  loss {loss_v:.4f}  val_bin_accuracy {acc:.4f}")
    print(f"final val_bin_accuracy {metrics['final_val_bin_accuracy']:.4f} "
          f"({metrics['n_train']} train / {metrics['n_val']} val segments)")
    print(f"saved {args.out}")
    return 0


def cmd_simulate(args) -> int:
    spec = synth.PpgSpec(fs=args.fs, duration=args.duration, hr_bpm=args.hr,
                         ibi_jitter_ms=args.jitter, snr_db=args.snr, seed=args.seed)
    seg = synth.generate_ppg(spec)
    counts = synth.to_adc_counts(seg.samples.data, args.adc_bits)
    header = store.RecordingHeader(
        session_id=f"sim-{args.hr:g}bpm-{args.seed}", participant_id="sim",
        condition="simulated", fs=args.fs, channels=("ppg_sim",),
        started_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        started_mono_ns=time.monotonic_ns(), config_digest="simulate")
    writer = store.open_writer(args.out, header)
    for v in counts:
        writer.append([int(v)])
    writer.finalize()
    truth_ibis = seg.truth_ibis_ms
    truth = {
        "hr_bpm": 60000.0 / float(np.mean(truth_ibis)) if truth_ibis.size else None,
        "pnn50": dsp.pnn50(truth_ibis, 0.0, args.duration).value,
        "n_beats": int(seg.truth_peaks.size),
        "truth_ibis_ms": [float(x) for x in truth_ibis],
    }
    with open(args.out + ".truth.json", "w", encoding="ascii") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out} ({counts.size} samples, "
          f"truth HR {truth['hr_bpm']:.2f} bpm, pNN50 {truth['pnn50']:.1f})")
    return 0


def cmd_sync_server(args) -> int:
    server = sync.SyncServer(listen_port=args.port)
    print(f"sync server on port {server.port}")
    try:
        deadline = time.monotonic() + args.wait_peers_s
        while time.monotonic() < deadline:
            armed = sum(1 for _, ph, ok in server.peers()
                        if ok and ph is sync.Phase.ARMED)
            if armed >= args.min_peers:
                break
            time.sleep(0.05)
        server.start_session(args.session, args.condition,
                             duration_s=args.duration, force=True)
        print("start broadcast sent")
        if args.duration:
            time.sleep(args.duration)
            server.stop_session()
            print("stop broadcast sent")
        else:
            while True:
                time.sleep(1.0)
    except KeyboardInterrupt:
        server.stop_session()
    finally:
        server.close()
    return 0


def cmd_sync_client(args) -> int:
    done = threading.Event()

    def on_start(msg):
        print(f"start: session {msg.session_id} condition {msg.condition} "
              f"duration {msg.duration_s}")

    def on_stop(msg):
        print("stop received")
        done.set()

    host, _, port = args.server.partition(":")
    client = sync.SyncClient((host, int(port or sync.DEFAULT_PORT)),
                             node_id=args.node_id, on_start=on_start,
                             on_stop=on_stop)
    client.ready()
    print("armed; waiting for trigger")
    try:
        done.wait()
    except KeyboardInterrupt:
        pass
    finally:
        client.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physiort",
                                     description="physiological signal toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("acquire", help="record sessions per the experiment schedule")
    _add_runtime_args(p)
    p.add_argument("--min-peers", type=int, default=0)
    p.add_argument("--wait-peers-s", type=float, default=30.0)
    p.set_defaults(fn=cmd_acquire)

    p = sub.add_parser("serve", help="acquisition plus WebSocket gateway")
    _add_runtime_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ws-port", type=int, default=8765)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("analyze", help="batch-process recorded sessions")
    p.add_argument("--config", default=None, help="analysis config JSON")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("train-sqa", help="train the quality model on synthetic data")
    p.add_argument("--segments", type=int, default=2000)
    p.add_argument("--artifact-fraction", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .sqa path")
    p.set_defaults(fn=cmd_train_sqa)

    p = sub.add_parser("simulate", help="write a synthetic session with truth sidecar")
    p.add_argument("--hr", type=float, default=72.0)
    p.add_argument("--duration", type=float, default=180.0)
    p.add_argument("--jitter", type=float, default=30.0)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--fs", type=float, default=64.0)
    p.add_argument("--adc-bits", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sync-server", help="broadcast a start trigger")
    p.add_argument("--port", type=int, default=sync.DEFAULT_PORT)
    p.add_argument("--session", default="session")
    p.add_argument("--condition", default="baseline")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--min-peers", type=int, default=1)
    p.add_argument("--wait-peers-s", type=float, default=60.0)
    p.set_defaults(fn=cmd_sync_server)

    p = sub.add_parser("sync-client", help="arm and follow a remote trigger")
    p.add_argument("--server", required=True, help="host:port")
    p.add_argument("--node-id", required=True)
    p.set_defaults(fn=cmd_sync_client)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PhysiortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
