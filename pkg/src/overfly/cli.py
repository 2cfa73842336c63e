"""Command-line entry point.

Subcommands: run, replay, export-dataset, bench, validate-manifest, serve.
Exit codes are a stable contract for harnesses: 0 success, 1 configuration
error, 2 runtime abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import gateway, scenario, session
from .config import ConfigError, SessionConfig, apply_overrides, load_config
from .serialize import canon_dumps

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="session config JSON")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable, dotted paths)")
    p.add_argument("--seed", type=int, help="master seed; omitted: random, printed")
    p.add_argument("--endpoint", help="gateway endpoint host:port")
    p.add_argument("--realtime", action="store_true", help="wall-clock paced session")
    p.add_argument("--ticks", type=int, help="tick limit override")
    p.add_argument("--vac", metavar="WxH", help="virtual camera output dimensions")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overfly",
                                description="fly an emulated multirotor inside recorded aerial video")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a session to completion")
    _add_common(run)

    serve = sub.add_parser("serve", help="run a session driven by a network controller")
    _add_common(serve)
    serve.add_argument("--static", help="directory of cockpit assets to serve over HTTP")
    serve.add_argument("--overview", action="store_true",
                       help="stream the reduced-resolution scene overview")

    rep = sub.add_parser("replay", help="re-execute a log and verify bit-exactness")
    rep.add_argument("log", help="session log path")
    rep.add_argument("--manifest", help="override the manifest path in the log")

    exp = sub.add_parser("export-dataset", help="render a log into images + metadata")
    exp.add_argument("log", help="session log path")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--stride", type=int, default=1)
    exp.add_argument("--manifest", help="override the manifest path in the log")

    bench = sub.add_parser("bench", help="measure per-tick pipeline throughput")
    bench.add_argument("--src", default="7680x4320", metavar="WxH",
                       help="synthetic source dimensions")
    bench.add_argument("--vac", default="1280x720", metavar="WxH")
    bench.add_argument("--ticks", type=int, default=300)
    bench.add_argument("--fov", type=float, default=82.1)
    bench.add_argument("--altitude", type=float, default=110.0)

    val = sub.add_parser("validate-manifest", help="check a scenario manifest")
    val.add_argument("manifest", help="manifest path")
    return p


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ConfigError(f"dimensions must look like WxH, got {text!r}") from exc


def _resolve_config(args) -> SessionConfig:
    config = load_config(args.config) if args.config else SessionConfig()
    if args.set:
        config = apply_overrides(config, args.set)
    updates = {}
    if args.endpoint:
        updates["gateway"] = {**config.to_doc()["gateway"], "endpoint": args.endpoint}
    if args.realtime:
        updates["realtime"] = True
    if args.ticks is not None:
        updates["termination"] = {**config.to_doc()["termination"], "max_ticks": args.ticks}
    if args.vac:
        w, h = _parse_dims(args.vac)
        updates["vac"] = {**config.to_doc()["vac"], "width": w, "height": h}
    if updates:
        config = config.with_values(**updates)
    return session.resolve_seed(config, args.seed)


def _log_path(args, config: SessionConfig) -> Path:
    if config.log_path:
        return Path(config.log_path)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return out / "session.jsonl"
    return Path("session.jsonl")


def cmd_run(args) -> int:
    config = _resolve_config(args)
    print(f"seed: {config.seed}")
    if config.command_source == "gateway":
        print("config error: command_source 'gateway' needs the serve subcommand",
              file=sys.stderr)
        return EXIT_CONFIG
    log_out = session.run_session(config)
    return _finish_run(args, config, log_out)


def cmd_serve(args) -> int:
    config = _resolve_config(args)
    config = config.with_values(command_source="gateway")
    if args.overview:
        config = config.with_values(gateway={**config.to_doc()["gateway"], "overview": True})
    print(f"seed: {config.seed}")
    server = gateway.GatewayServer(config, static_dir=args.static)
    print(f"listening on {server.endpoint}")
    try:
        log_out = server.run()
    finally:
        server.close()
    return _finish_run(args, config, log_out)


def _finish_run(args, config: SessionConfig, log_out: session.SessionLog) -> int:
    path = _log_path(args, config)
    log_out.save(path)
    print(f"status: {log_out.status}")
    print(f"log: {path}")
    return EXIT_ABORT if log_out.status == session.ABORTED else EXIT_OK


def cmd_replay(args) -> int:
    try:
        logdoc = session.SessionLog.load(args.log)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load log: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        session.replay(logdoc, manifest_path=args.manifest)
    except session.ReplayDivergence as exc:
        print(f"replay diverged at tick {exc.tick}")
        return EXIT_ABORT
    except (session.ReplayHashMismatch, scenario.ManifestError, ConfigError) as exc:
        print(f"replay precondition failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"replay verified: {len(logdoc.records)} ticks bit-exact")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        logdoc = session.SessionLog.load(args.log)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load log: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = session.export_dataset(logdoc, args.out, stride=args.stride,
                                     manifest_path=args.manifest)
    print(canon_dumps(summary))
    return EXIT_OK


class SyntheticSource(scenario.FrameSource):
    """Procedural checkerboard frames; every index maps to one prebuilt raster."""

    random_access = True

    def __init__(self, manifest: scenario.ScenarioManifest, count: int = 1 << 30):
        super().__init__(manifest)
        self._count = count
        yy, xx = np.mgrid[0:manifest.height, 0:manifest.width]
        cells = ((xx // 32) + (yy // 32)) % 2
        frame = np.empty((manifest.height, manifest.width, 3), dtype=np.uint8)
        frame[..., 0] = np.where(cells, 230, 25)
        frame[..., 1] = (xx % 256).astype(np.uint8)
        frame[..., 2] = (yy % 256).astype(np.uint8)
        self._frame = frame

    @property
    def frame_count(self) -> int:
        return self._count

    def _fetch(self, index: int) -> np.ndarray:
        return self._frame


def _synthetic_manifest(width: int, height: int, fov: float, altitude: float,
                        tmp_dir: str) -> str:
    doc = {"width": width, "height": height, "fps": 30, "altitude_m": altitude,
           "fov_h_deg": fov, "frame_source": ".", "end_policy": "clamp-last"}
    path = Path(tmp_dir) / "bench_manifest.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def cmd_bench(args) -> int:
    src_w, src_h = _parse_dims(args.src)
    vac_w, vac_h = _parse_dims(args.vac)
    with tempfile.TemporaryDirectory() as tmp:
        manifest_path = _synthetic_manifest(src_w, src_h, args.fov, args.altitude, tmp)
        config = SessionConfig().with_values(
            manifest=manifest_path, seed=0,
            vac={"width": vac_w, "height": vac_h},
            initial={"kind": "fixed", "pos": [0.0, 0.0, args.altitude * 0.45], "yaw": 0.0},
            termination={"max_ticks": args.ticks, "out_of_bounds": "clamp"},
            command_source="hover",
        )
        manifest = scenario.load_manifest(manifest_path)
        source = SyntheticSource(manifest)

        # Warm the JIT kernels outside the timed region.
        warm = SessionConfig().with_values(
            manifest=manifest_path, seed=0, vac={"width": 64, "height": 36},
            initial={"kind": "fixed", "pos": [0.0, 0.0, args.altitude * 0.45], "yaw": 0.0},
            termination={"max_ticks": 1}, command_source="hover")
        session.run_session(warm, frame_source=SyntheticSource(manifest))

        stamps = []
        start = time.perf_counter()
        session.run_session(config, frame_source=source,
                            on_tick=lambda rec, vac: stamps.append(time.perf_counter()))
    if not stamps:
        print(canon_dumps({"ticks": 0, "fps_mean": 0.0, "p99_ms": 0.0}))
        return EXIT_OK
    durations = np.diff(np.array([start] + stamps))
    total = stamps[-1] - start
    report = {
        "ticks": len(stamps),
        "seconds": total,
        "fps_mean": len(stamps) / total,
        "mean_ms": float(durations.mean() * 1e3),
        "p99_ms": float(np.quantile(durations, 0.99) * 1e3),
        "src": f"{src_w}x{src_h}", "vac": f"{vac_w}x{vac_h}",
    }
    print(canon_dumps(report))
    return EXIT_OK


def cmd_validate_manifest(args) -> int:
    try:
        manifest = scenario.load_manifest(args.manifest)
    except scenario.ManifestError as exc:
        print(f"invalid manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"manifest ok: {manifest.width}x{manifest.height} @ {manifest.fps} fps, "
          f"altitude {manifest.altitude_m} m, fov {manifest.fov_h_deg} deg "
          f"(vertical {manifest.fov_v_deg:.6g} deg)")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": cmd_run,
        "serve": cmd_serve,
        "replay": cmd_replay,
        "export-dataset": cmd_export,
        "bench": cmd_bench,
        "validate-manifest": cmd_validate_manifest,
    }
    try:
        return handlers[args.cmd](args)
    except (ConfigError, scenario.ManifestError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except session.SessionAborted as exc:
        print(f"session aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
