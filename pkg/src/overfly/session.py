"""Deterministic fixed-timestep session loop, logging, replay, and export.

Each tick: fetch the source frame, render the virtual camera view at the
current pose, obtain a command (blocking rendezvous in lockstep, latest
wins in realtime), sample the disturbance, integrate the dynamics, then
check termination. (config, seed, command stream) fully determines the log;
logs serialize with bit-faithful floats so a replay reproduces every byte.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dynamics, geometry, render, scenario, wire
from .config import ConfigError, SessionConfig, from_doc
from .serialize import canon_dumps, canon_hash

__all__ = [
    "SessionLog", "SessionAborted", "ReplayDivergence", "run_session",
    "check_termination", "randomize_initial", "replay", "export_dataset",
    "CommandSource", "HoverSource", "ScriptedSource",
]

LOG_VERSION = 1

RUNNING = "running"
LANDED = "landed"
OUT_OF_BOUNDS = "out-of-bounds"
MAX_TICKS = "max-ticks"
ABORTED = "aborted"


class SessionAborted(RuntimeError):
    """Command source failed mid-session; the run ends with status aborted."""


class ReplayDivergence(RuntimeError):
    def __init__(self, tick: int, detail: str = ""):
        self.tick = tick
        super().__init__(f"replay diverged at tick {tick}" + (f": {detail}" if detail else ""))


class ReplayHashMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Session log


@dataclass
class SessionLog:
    header: dict
    records: list
    terminal: dict

    def lines(self) -> list[str]:
        out = [canon_dumps(self.header)]
        out.extend(canon_dumps(r) for r in self.records)
        out.append(canon_dumps(self.terminal))
        return out

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="")

    @property
    def status(self) -> str:
        return self.terminal["status"]

    @staticmethod
    def load(path: str | Path) -> "SessionLog":
        import json
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if len(lines) < 2:
            raise ValueError(f"log too short: {path}")
        header = json.loads(lines[0])
        terminal = json.loads(lines[-1])
        records = [json.loads(line) for line in lines[1:-1]]
        if header.get("type") != "header" or terminal.get("type") != "end":
            raise ValueError(f"malformed session log: {path}")
        return SessionLog(header=header, records=records, terminal=terminal)


# ---------------------------------------------------------------------------
# Command sources


class CommandSource:
    """Supplies one command per tick. Lockstep sources may block."""

    def begin(self, session_info: dict) -> None:
        pass

    def get_command(self, tick: int, state_view: dict, vac: render.VacFrame,
                    src_frame: scenario.Frame | None = None) -> wire.CommandMessage:
        raise NotImplementedError

    def finish(self, status: str, final_pos) -> None:
        pass


class HoverSource(CommandSource):
    """Zero stick every tick: level attitude, hover thrust, yaw held."""

    def get_command(self, tick, state_view, vac, src_frame=None):
        return wire.CommandMessage(stick=(0.0, 0.0, 0.0, 0.0))


class ScriptedSource(CommandSource):
    """Commands from a JSONL file, line k driving tick k; the last line holds."""

    def __init__(self, path: str | Path):
        import json
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"scripted command file not found: {path}")
        self.commands: list[wire.CommandMessage] = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            doc.setdefault("type", "command")
            try:
                self.commands.append(wire.decode_command(wire.WireMessage(header=doc)))
            except wire.ProtocolError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if not self.commands:
            raise ConfigError(f"scripted command file is empty: {path}")

    def get_command(self, tick, state_view, vac, src_frame=None):
        return self.commands[min(tick, len(self.commands) - 1)]


class _ReplaySource(CommandSource):
    """Feeds the exact command sequence recorded in a log."""

    def __init__(self, records: list):
        self.records = records

    def get_command(self, tick, state_view, vac, src_frame=None):
        if tick >= len(self.records):
            raise SessionAborted(f"log ends at tick {len(self.records) - 1}")
        cmd = self.records[tick]["cmd"]
        return wire.CommandMessage(attitude={
            "roll": cmd["roll"], "pitch": cmd["pitch"],
            "yaw": cmd["yaw"], "thrust": cmd["thrust"],
        })


def make_command_source(spec: str) -> CommandSource:
    if spec == "hover":
        return HoverSource()
    if spec.startswith("scripted:"):
        return ScriptedSource(spec.split(":", 1)[1])
    if spec.startswith("replay:"):
        return _ReplaySource(SessionLog.load(spec.split(":", 1)[1]).records)
    if spec == "gateway":
        raise ConfigError("gateway command source needs a bound endpoint; "
                          "use the serve entry point")
    raise ConfigError(f"unknown command source {spec!r}")


# ---------------------------------------------------------------------------
# Initial-state randomization


def randomize_initial(seed: int, xy_bounds, altitude_range, yaw_range,
                      frame_count: int = 1):
    """Draw (state at rest, start frame, yaw) uniformly from one seeded generator.

    Draw order is fixed (x, y, z, yaw, frame); degenerate bounds pass their
    single point through regardless of seed.
    """
    (x0, x1), (y0, y1) = xy_bounds
    z0, z1 = altitude_range
    a0, a1 = yaw_range
    for name, lo, hi in (("xy_bounds[0]", x0, x1), ("xy_bounds[1]", y0, y1),
                         ("altitude_range", z0, z1), ("yaw_range", a0, a1)):
        if lo > hi:
            raise ConfigError(f"empty {name}: [{lo}, {hi}]")
    if frame_count < 1:
        raise ConfigError(f"frame_count must be >= 1, got {frame_count}")
    rng = np.random.default_rng(seed)
    x = float(rng.uniform(x0, x1))
    y = float(rng.uniform(y0, y1))
    z = float(rng.uniform(z0, z1))
    yaw = float(rng.uniform(a0, a1))
    frame = int(rng.integers(0, frame_count))
    return dynamics.EavState.at_rest((x, y, z)), frame, yaw


def _derive_disturbance_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 1]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Termination


def check_termination(state: dynamics.EavState, termination, scene_bounds,
                      footprint_ground=None) -> str:
    """Session status after a step: landed, out-of-bounds, max-ticks, or running."""
    if state.pos[2] <= termination.landing_altitude_m:
        return LANDED
    if termination.out_of_bounds == "terminate" and footprint_ground is not None:
        (xmin, xmax), (ymin, ymax) = scene_bounds
        gx, gy = footprint_ground[:, 0], footprint_ground[:, 1]
        if gx.min() < xmin or gx.max() > xmax or gy.min() < ymin or gy.max() > ymax:
            return OUT_OF_BOUNDS
    if state.tick >= termination.max_ticks:
        return MAX_TICKS
    return RUNNING


# ---------------------------------------------------------------------------
# The loop


@dataclass
class _Runtime:
    """Everything resolved once before tick 0."""
    config: SessionConfig
    manifest: scenario.ScenarioManifest
    source: scenario.FrameSource
    src_cam: geometry.CameraIntrinsics
    vac_cam: geometry.CameraIntrinsics
    mount: geometry.RigidTransform
    params: dynamics.EavParams
    limits: dynamics.StickLimits
    render_cfg: render.RenderConfig
    scene_bounds: tuple
    ceiling: float
    seed: int
    initial_pos: tuple
    initial_yaw: float
    start_frame: int


def _build_mount(cfg) -> geometry.RigidTransform:
    extra = dynamics.rotation_from_euler(*cfg.rpy_rad)
    return geometry.RigidTransform(
        rotation=extra @ geometry.NADIR_MOUNT_ROTATION,
        translation=np.asarray(cfg.translation, dtype=np.float64),
    )


def _upscaler_spec(rs) -> render.UpscalerSpec:
    if rs.upscaler.startswith("external:"):
        return render.UpscalerSpec(kind="external", external=rs.upscaler.split(":", 1)[1],
                                   timeout_s=rs.upscaler_timeout_s)
    return render.UpscalerSpec(kind=rs.upscaler, timeout_s=rs.upscaler_timeout_s)


def _prepare(config: SessionConfig, frame_source=None, seed=None) -> _Runtime:
    manifest = scenario.load_manifest(config.manifest)
    source = frame_source if frame_source is not None else scenario.open_frame_source(manifest)
    src_cam = geometry.intrinsics_from_manifest(manifest)
    vac_fov = config.vac.fov_h_deg if config.vac.fov_h_deg is not None else manifest.fov_h_deg
    vac_cam = geometry.intrinsics_from_fov(config.vac.width, config.vac.height,
                                           vac_fov, config.vac.fov_v_deg)
    try:
        params = dynamics.EavParams(mass_kg=config.eav.mass_kg, gravity=config.eav.gravity,
                                    drag_coeff=config.eav.drag_coeff, dt_s=config.eav.dt_s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    limits = dynamics.StickLimits.for_params(
        params, attitude_max_rad=config.eav.attitude_max_rad,
        thrust_headroom=config.eav.thrust_headroom, yaw_rate_max=config.eav.yaw_rate_max)
    render_cfg = render.RenderConfig(
        sampling=config.render.sampling, fill=tuple(config.render.fill),
        upscaler=_upscaler_spec(config.render),
        engage_threshold=config.render.engage_threshold,
        sr_enabled=config.render.sr_enabled)

    w_o, h_o = geometry.footprint(manifest.altitude_m,
                                  math.radians(manifest.fov_h_deg),
                                  math.radians(manifest.fov_v_deg))
    scene_bounds = ((-w_o / 2.0, w_o / 2.0), (-h_o / 2.0, h_o / 2.0))
    ceiling = 0.95 * manifest.altitude_m

    if seed is None:
        seed = config.seed
    if seed is None:
        raise ConfigError("seed must be resolved before running (see resolve_seed)")

    init = config.initial
    if init.kind == "fixed" and config.start_frame.kind == "fixed":
        initial_pos = tuple(float(v) for v in init.pos)
        initial_yaw = float(init.yaw)
        start_frame = int(config.start_frame.index)
    else:
        if config.start_frame.kind == "randomized":
            count = source.frame_count
            if count is None:
                raise ConfigError("randomized start frame requires a random-access frame source")
        else:
            count = 1
        if init.kind == "randomized":
            xy, alt, yaw_rng = init.xy_bounds, init.altitude_range, init.yaw_range
            if not (0.0 < alt[0] and alt[1] < manifest.altitude_m):
                raise ConfigError(f"altitude_range {alt} must lie within (0, {manifest.altitude_m})")
            (xb, yb) = scene_bounds
            if xy[0][0] < xb[0] or xy[0][1] > xb[1] or xy[1][0] < yb[0] or xy[1][1] > yb[1]:
                raise ConfigError(f"xy_bounds {xy} exceed the scene footprint {scene_bounds}")
        else:
            p = init.pos
            xy, alt, yaw_rng = ((p[0], p[0]), (p[1], p[1])), (p[2], p[2]), (init.yaw, init.yaw)
        state, frame, yaw = randomize_initial(seed, xy, alt, yaw_rng, frame_count=count)
        initial_pos = tuple(float(v) for v in state.pos)
        initial_yaw = yaw
        start_frame = frame if config.start_frame.kind == "randomized" else int(config.start_frame.index)

    return _Runtime(
        config=config, manifest=manifest, source=source, src_cam=src_cam,
        vac_cam=vac_cam, mount=_build_mount(config.mount), params=params,
        limits=limits, render_cfg=render_cfg, scene_bounds=scene_bounds,
        ceiling=ceiling, seed=int(seed), initial_pos=initial_pos,
        initial_yaw=initial_yaw, start_frame=start_frame,
    )


def _lag_blend(prev: float, target: float, beta: float, angular: bool) -> float:
    if angular:
        return dynamics.wrap_angle(prev + beta * dynamics.wrap_angle(target - prev))
    return prev + beta * (target - prev)


def _clamp_to_scene(pos: np.ndarray, attitude, rt: _Runtime) -> tuple[np.ndarray, bool]:
    """Ceiling and footprint clamping; returns (possibly shifted pos, clamped?)."""
    clamped = False
    pos = pos.copy()
    if pos[2] > rt.ceiling:
        pos[2] = rt.ceiling
        clamped = True
    if rt.config.termination.out_of_bounds != "clamp" or pos[2] <= 0:
        return pos, clamped
    corners = _ground_corners_at(pos, attitude, rt)
    (xmin, xmax), (ymin, ymax) = rt.scene_bounds
    for axis, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
        cmin, cmax = corners[:, axis].min(), corners[:, axis].max()
        span = cmax - cmin
        if span > hi - lo:
            shift = (lo + hi) / 2.0 - (cmin + cmax) / 2.0
        elif cmin < lo:
            shift = lo - cmin
        elif cmax > hi:
            shift = hi - cmax
        else:
            continue
        pos[axis] += shift
        clamped = True
    return pos, clamped


def _ground_corners_at(pos, attitude, rt: _Runtime) -> np.ndarray:
    roll, pitch, yaw = attitude
    cam_yaw = yaw if rt.config.vac.yaw_follows_eav else 0.0
    body = geometry.RigidTransform(dynamics.rotation_from_euler(roll, pitch, cam_yaw), pos)
    return geometry.vac_ground_corners(rt.vac_cam, geometry.camera_pose(body, rt.mount))


def _session_info(rt: _Runtime) -> dict:
    m = rt.manifest
    return {
        "manifest": {"width": m.width, "height": m.height, "fps": m.fps,
                     "altitude_m": m.altitude_m, "fov_h_deg": m.fov_h_deg},
        "vac": (rt.vac_cam.width, rt.vac_cam.height),
        "mode": "realtime" if rt.config.realtime else "lockstep",
    }


def run_session(config: SessionConfig, command_source: CommandSource | None = None,
                frame_source: scenario.FrameSource | None = None,
                disturbance_values=None, seed=None,
                on_tick=None) -> SessionLog:
    """Run a session to completion and return its log.

    disturbance_values, when given, replaces the seeded sampler with an
    explicit per-tick sequence (used by replay).
    """
    rt = _prepare(config, frame_source=frame_source, seed=seed)
    if command_source is None:
        command_source = make_command_source(config.command_source)

    header = {
        "type": "header",
        "version": LOG_VERSION,
        "seed": rt.seed,
        "config_hash": config.config_hash(),
        "manifest_hash": rt.manifest.content_hash(),
        "config": config.to_doc(),
        "initial": {"pos": list(rt.initial_pos), "yaw": rt.initial_yaw,
                    "start_frame": rt.start_frame},
    }

    if disturbance_values is None:
        model = dynamics.DisturbanceModel(
            kind=config.disturbance.kind, force=tuple(config.disturbance.force),
            std_n=config.disturbance.std_n, corr_time_s=config.disturbance.corr_time_s,
            dt_s=config.eav.dt_s, seed=_derive_disturbance_seed(rt.seed),
            horizontal_only=config.disturbance.horizontal_only)
        sampler = model.sampler()
        sample = sampler.sample
    else:
        def sample(tick: int) -> np.ndarray:
            if tick >= len(disturbance_values):
                raise SessionAborted(f"disturbance sequence ends at tick {len(disturbance_values) - 1}")
            return np.asarray(disturbance_values[tick], dtype=np.float64)

    dt = rt.params.dt_s
    fps = rt.manifest.fps
    external = (render.ExternalUpscaler(rt.render_cfg.upscaler)
                if rt.render_cfg.upscaler.kind == "external" else None)

    state = dynamics.EavState.at_rest(rt.initial_pos)
    attitude = (0.0, 0.0, rt.initial_yaw)
    thrust = dynamics.hover_thrust(rt.params)
    lag = config.eav.attitude_lag_s
    beta = 1.0 if lag <= 0 else 1.0 - math.exp(-dt / lag)

    records: list[dict] = []
    status = ABORTED if config.termination.max_ticks > 0 else MAX_TICKS
    abort_reason = ""
    command_source.begin(_session_info(rt))
    wall_start = time.monotonic()

    try:
        k = 0
        while config.termination.max_ticks > 0:
            sim_t = k * dt
            try:
                frame = scenario.frame_at_index(
                    rt.source, rt.start_frame + int(math.floor(sim_t * fps)))
            except scenario.SourceExhausted:
                status = MAX_TICKS
                break

            roll, pitch, yaw = attitude
            cam_yaw = yaw if config.vac.yaw_follows_eav else 0.0
            body_pose = geometry.RigidTransform(
                dynamics.rotation_from_euler(roll, pitch, cam_yaw), state.pos)
            cam_pose = geometry.camera_pose(body_pose, rt.mount)
            m = geometry.vac_homography(rt.src_cam, rt.manifest.altitude_m, rt.vac_cam, cam_pose)
            vac = render.render_vac_frame(frame, m, rt.vac_cam, rt.render_cfg, external)
            vac = replace(vac, tick=k, sim_time_s=sim_t, eav_pose=body_pose)

            vel = dynamics.velocity(state, rt.params)
            state_view = {
                "tick": k, "sim_time_s": sim_t,
                "pos": [float(v) for v in state.pos],
                "vel": [float(v) for v in vel],
                "roll": roll, "pitch": pitch, "yaw": yaw, "thrust": thrust,
                "frame_id": frame.index,
            }
            try:
                msg = command_source.get_command(k, state_view, vac, frame)
            except SessionAborted as exc:
                abort_reason = str(exc)
                status = ABORTED
                break

            if msg.stick is not None:
                cmd = dynamics.map_stick(msg.stick, rt.limits, prev_yaw=yaw, dt_s=dt)
            else:
                att = msg.attitude
                cmd = dynamics.AttitudeCommand(roll_rad=att["roll"], pitch_rad=att["pitch"],
                                               yaw_rad=att["yaw"], thrust_n=att["thrust"])

            xi = sample(k)
            applied = dynamics.AttitudeCommand(
                roll_rad=_lag_blend(roll, cmd.roll_rad, beta, angular=False),
                pitch_rad=_lag_blend(pitch, cmd.pitch_rad, beta, angular=False),
                yaw_rad=_lag_blend(yaw, cmd.yaw_rad, beta, angular=True),
                thrust_n=cmd.thrust_n,
            )
            try:
                new_state = dynamics.step(state, rt.params, applied, xi)
            except dynamics.NonFiniteStateError as exc:
                abort_reason = str(exc)
                status = ABORTED
                break

            new_attitude = (applied.roll_rad, applied.pitch_rad, applied.yaw_rad)
            new_pos, clamped = _clamp_to_scene(new_state.pos, new_attitude, rt)
            new_state = dynamics.EavState(pos=new_pos, pos_prev=new_state.pos_prev,
                                          tick=new_state.tick)

            records.append({
                "type": "tick", "tick": k, "sim_time_s": sim_t,
                "frame_index": frame.index,
                "pos": [float(v) for v in state.pos],
                "vel": [float(v) for v in vel],
                "cmd": {"roll": cmd.roll_rad, "pitch": cmd.pitch_rad,
                        "yaw": cmd.yaw_rad, "thrust": cmd.thrust_n},
                "dist": [float(v) for v in xi],
                "footprint_corners_src": [[float(u), float(v)]
                                          for u, v in vac.footprint_corners_src],
                "scale_factor": float(vac.scale_factor),
                "coverage": float(vac.coverage),
                "clamped": clamped,
            })
            if on_tick is not None:
                on_tick(records[-1], vac)

            state = new_state
            attitude = new_attitude
            thrust = applied.thrust_n

            footprint_ground = None
            if config.termination.out_of_bounds == "terminate" and state.pos[2] > 0:
                footprint_ground = _ground_corners_at(state.pos, attitude, rt)
            status = check_termination(state, config.termination, rt.scene_bounds,
                                       footprint_ground)
            if status != RUNNING:
                break

            if config.realtime:
                target = wall_start + (k + 1) * dt
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            k += 1
    finally:
        rt.source.close()
        if external is not None:
            external.close()

    terminal = {"type": "end", "status": status,
                "final_pos": [float(v) for v in state.pos], "ticks": len(records)}
    if abort_reason:
        terminal["reason"] = abort_reason
    command_source.finish(status, state.pos)
    return SessionLog(header=header, records=records, terminal=terminal)


def resolve_seed(config: SessionConfig, cli_seed: int | None = None) -> SessionConfig:
    """Pin the seed: CLI flag wins, then config, then a fresh random value."""
    if cli_seed is not None:
        return config.with_values(seed=int(cli_seed))
    if config.seed is not None:
        return config
    import secrets
    return config.with_values(seed=secrets.randbits(63))


# ---------------------------------------------------------------------------
# Replay


def replay(log: SessionLog, manifest_path: str | None = None) -> SessionLog:
    """Re-execute a log's commands and disturbances; any byte difference is an error.

    Raises ReplayHashMismatch when the header hashes do not cover the
    config/manifest being replayed, ReplayDivergence at the first tick whose
    re-simulated record differs.
    """
    config = from_doc(log.header["config"])
    if config.config_hash() != log.header["config_hash"]:
        raise ReplayHashMismatch("config hash in header does not match embedded config")
    if manifest_path is not None:
        config = config.with_values(manifest=str(manifest_path))
    manifest = scenario.load_manifest(config.manifest)
    if manifest.content_hash() != log.header["manifest_hash"]:
        raise ReplayHashMismatch("manifest hash does not match the log header")

    initial = log.header["initial"]
    fixed = config.with_values(
        initial={"kind": "fixed", "pos": initial["pos"], "yaw": initial["yaw"],
                 "altitude_range": config.initial.altitude_range,
                 "xy_bounds": config.initial.xy_bounds,
                 "yaw_range": config.initial.yaw_range},
        start_frame={"kind": "fixed", "index": initial["start_frame"]},
        command_source="hover",  # placeholder; source injected below
    )
    new_log = run_session(
        fixed,
        command_source=_ReplaySource(log.records),
        disturbance_values=[r["dist"] for r in log.records],
        seed=log.header["seed"],
    )

    # Compare tick records and terminal byte by byte; headers differ by design
    # (the replay pins the initial state rather than re-drawing it).
    for i, (orig, new) in enumerate(zip(log.records, new_log.records)):
        if canon_dumps(orig) != canon_dumps(new):
            raise ReplayDivergence(i)
    if len(new_log.records) != len(log.records):
        raise ReplayDivergence(min(len(new_log.records), len(log.records)))
    if canon_dumps(new_log.terminal) != canon_dumps(log.terminal):
        raise ReplayDivergence(len(log.records), "terminal record differs")
    return new_log


# ---------------------------------------------------------------------------
# Dataset export


def render_attitudes(log: SessionLog) -> list:
    """Reconstruct the attitude under which each tick's image was rendered.

    Tick 0 renders at level attitude with the initial yaw; afterwards the
    attitude follows the logged commands through the optional lag filter.
    """
    config = from_doc(log.header["config"])
    dt = config.eav.dt_s
    lag = config.eav.attitude_lag_s
    beta = 1.0 if lag <= 0 else 1.0 - math.exp(-dt / lag)
    att = (0.0, 0.0, float(log.header["initial"]["yaw"]))
    out = [att]
    for rec in log.records[:-1]:
        cmd = rec["cmd"]
        att = (
            _lag_blend(att[0], cmd["roll"], beta, angular=False),
            _lag_blend(att[1], cmd["pitch"], beta, angular=False),
            _lag_blend(att[2], cmd["yaw"], beta, angular=True),
        )
        out.append(att)
    return out


def export_dataset(log: SessionLog, out_dir: str | Path, stride: int = 1,
                   manifest_path: str | None = None) -> dict:
    """Re-render a completed log into numbered images plus JSONL metadata.

    Every emitted image is reproduced from its tick's pose exactly as the
    session rendered it, so the metadata homography is a faithful recipe.
    """
    from PIL import Image

    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    config = from_doc(log.header["config"])
    if manifest_path is not None:
        config = config.with_values(manifest=str(manifest_path))
    manifest = scenario.load_manifest(config.manifest)
    source = scenario.open_frame_source(manifest)
    if not source.random_access:
        raise ValueError("dataset export requires a random-access frame source")
    rt = _prepare(config, frame_source=source, seed=log.header["seed"])

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    external = (render.ExternalUpscaler(rt.render_cfg.upscaler)
                if rt.render_cfg.upscaler.kind == "external" else None)
    attitudes = render_attitudes(log)
    meta_lines = []
    count = 0
    try:
        for rec in log.records[::stride]:
            k = rec["tick"]
            roll, pitch, yaw = attitudes[k]
            pos = np.asarray(rec["pos"], dtype=np.float64)
            cam_yaw = yaw if config.vac.yaw_follows_eav else 0.0
            body_pose = geometry.RigidTransform(
                dynamics.rotation_from_euler(roll, pitch, cam_yaw), pos)
            cam_pose = geometry.camera_pose(body_pose, rt.mount)
            m = geometry.vac_homography(rt.src_cam, manifest.altitude_m, rt.vac_cam, cam_pose)
            frame = scenario.frame_at_index(source, rec["frame_index"])
            vac = render.render_vac_frame(frame, m, rt.vac_cam, rt.render_cfg, external)
            name = f"images/{k:06d}.png"
            Image.fromarray(vac.pixels, mode="RGB").save(out_dir / name)
            meta_lines.append({
                "image": name, "tick": k, "sim_time_s": rec["sim_time_s"],
                "pos": rec["pos"], "rpy": [roll, pitch, yaw], "yaw": yaw,
                "altitude": rec["pos"][2],
                "homography": [float(v) for v in m.matrix.reshape(-1)],
                "footprint_corners_src": rec["footprint_corners_src"],
                "source_frame_index": rec["frame_index"],
                "scale_factor": rec["scale_factor"], "coverage": rec["coverage"],
                "seed": log.header["seed"],
            })
            count += 1
    finally:
        source.close()
        if external is not None:
            external.close()

    with open(out_dir / "meta.jsonl", "w", encoding="utf-8", newline="") as fh:
        for line in meta_lines:
            fh.write(canon_dumps(line) + "\n")
    summary = {
        "samples": count, "stride": stride,
        "vac": {"width": rt.vac_cam.width, "height": rt.vac_cam.height},
        "seed": log.header["seed"],
        "config_hash": log.header["config_hash"],
        "manifest_hash": log.header["manifest_hash"],
    }
    (out_dir / "dataset.json").write_text(canon_dumps(summary) + "\n", encoding="utf-8")
    return summary
