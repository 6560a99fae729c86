"""Command-line pipeline: simulate -> (ets) -> voxelize/density -> metrics.

Every subcommand is deterministic given its flags plus the scene seed, so
reruns produce byte-identical outputs.  ``pipeline`` chains stages from a
JSON config and writes a manifest with the parameters, file formats, and
SHA-256 content hashes of everything read or written — no timestamps, so
replaying a config yields an identical manifest.

Exit codes: 0 success, 2 usage or validation error, 3 I/O or file-format
error.

The environment variable EVLUME_THREADS (default 0 = auto) caps internal
parallelism; all current operations are single-threaded vector code, so
any cap is honored trivially.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from .events import density_map
from .ets import EtsConfig, suppress_with_summary
from .evio import (
    FormatError,
    read_config,
    read_events,
    read_pgm,
    read_weights,
    write_events,
    write_pgm,
    write_voxel,
)
from .metrics import GrayImage, loe, mse, ssim
from .sensor import (
    LightSource,
    PhotoreceptorParams,
    SceneSpec,
    generate_events,
)
from .events import SensorGeometry
from .voxel import voxelize_bilinear, voxelize_weighted

_DEFAULT_THRESHOLD = PhotoreceptorParams().contrast_threshold
_METRIC_NAMES = ("mse", "ssim", "loe")

_FORMAT_BY_SUFFIX = {
    ".evt1": "EVT1",
    ".vox1": "VOX1",
    ".wgt1": "WGT1",
    ".pgm": "PGM/P5",
    ".cfg": "config",
    ".txt": "text",
}


def _file_format(path) -> str:
    return _FORMAT_BY_SUFFIX.get(Path(path).suffix.lower(), "opaque")


# --- scene files ----------------------------------------------------------

_SCENE_REQUIRED = ("width", "height", "pattern", "duration_us")

_SCENE_INT_KEYS = {
    "duration_us", "grid_us", "step_t_us", "bar_width_px", "square_px", "seed",
}
_SCENE_FLOAT_KEYS = {
    "frame_rate_hz", "velocity_px_s", "ambient_lux", "pixel_pitch_m",
    "step_log", "bar_log", "check_log", "reflectance_floor", "noise_rate_hz",
}


def _scene_help() -> str:
    lines = [
        "scene file keys (key = value, one per line, # comments):",
        "  width, height, pattern, duration_us   (required)",
    ]
    skip = {"geometry", "pattern", "duration_us"}
    for f in dataclasses.fields(SceneSpec):
        if f.name in skip:
            continue
        default = f.default
        if f.name == "sources":
            lines.append("  sources = x,y,z_m,flux_lm[; x,y,z_m,flux_lm ...]   (default none)")
        elif f.name == "step_rect":
            lines.append("  step_rect = x0,y0,x1,y1   (default whole frame)")
        elif f.name == "frame_paths":
            lines.append("  frame_paths = a.pgm,b.pgm,...   (custom pattern; relative to the scene file)")
        else:
            lines.append(f"  {f.name} = {default}")
    return "\n".join(lines)


def _scene_value(key: str, text: str, base: Path):
    if key in _SCENE_INT_KEYS:
        return int(text)
    if key in _SCENE_FLOAT_KEYS:
        return float(text)
    if key == "step_rect":
        parts = [int(v) for v in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"step_rect needs x0,y0,x1,y1, got {text!r}")
        return tuple(parts)
    if key == "frame_paths":
        return tuple(str(base / p.strip()) for p in text.split(",") if p.strip())
    if key == "sources":
        out = []
        for chunk in text.split(";"):
            parts = [float(v) for v in chunk.split(",")]
            if len(parts) != 4:
                raise ValueError(f"each source needs x,y,z_m,flux_lm, got {chunk.strip()!r}")
            out.append(LightSource(*parts))
        return tuple(out)
    raise ValueError(f"unknown scene key {key!r}")


def load_scene(path, *, grid_us: int | None = None, seed: int | None = None) -> SceneSpec:
    """Build a SceneSpec from a key=value scene file."""
    raw = read_config(path)
    base = Path(path).resolve().parent
    missing = [k for k in _SCENE_REQUIRED if k not in raw]
    if missing:
        raise ValueError(f"{path}: missing scene keys: {', '.join(missing)}")

    kwargs = {
        "geometry": SensorGeometry(int(raw.pop("width")), int(raw.pop("height"))),
        "pattern": raw.pop("pattern"),
    }
    for key, text in raw.items():
        try:
            kwargs[key] = _scene_value(key, text, base)
        except ValueError as e:
            raise ValueError(f"{path}: {e}") from None
    if grid_us is not None:
        kwargs["grid_us"] = grid_us
    if seed is not None:
        kwargs["seed"] = seed
    return SceneSpec(**kwargs)


# --- stage cores (shared by subcommands and the pipeline runner) ----------

def run_simulate(scene_path, out_path, *, threshold: float = _DEFAULT_THRESHOLD,
                 grid_us: int | None = None, seed: int | None = None) -> dict:
    scene = load_scene(scene_path, grid_us=grid_us, seed=seed)
    params = PhotoreceptorParams(contrast_threshold=threshold)
    stream = generate_events(scene, params)
    write_events(out_path, stream)
    return {"events": len(stream)}


def run_ets(in_path, out_path, *, max_interval_us: int = 1000, min_chain: int = 3,
            realign_us: int = 1, report=None) -> dict:
    stream = read_events(in_path)
    config = EtsConfig(max_interval_us=max_interval_us, min_chain_len=min_chain,
                       realign_interval_us=realign_us)
    corrected, summary = suppress_with_summary(stream, config)
    write_events(out_path, corrected)
    if report is not None:
        Path(report).write_text(summary.format(), encoding="utf-8")
    return {
        "events": len(corrected),
        "chains": summary.chains,
        "realigned_events": summary.realigned_events,
        "bumped_events": summary.bumped_events,
    }


def run_voxelize(in_path, out_path, *, t0: int, t1: int, bins: int | None = None,
                 weights=None, span_norm: bool = False) -> dict:
    stream = read_events(in_path)
    if weights is not None:
        if span_norm:
            raise ValueError("--span-norm applies only to the two-nearest-bins kernel")
        table = read_weights(weights)
        if bins is not None and bins != table.bins:
            raise ValueError(
                f"--bins {bins} conflicts with weight table ({table.bins} bins)"
            )
        grid = voxelize_weighted(stream, t0, t1, table)
    else:
        grid = voxelize_bilinear(stream, t0, t1, 5 if bins is None else bins,
                                 event_span_norm=span_norm)
    write_voxel(out_path, grid)
    return {"bins": grid.bins, "excluded_events": grid.excluded_events}


def run_density(in_path, out_path, *, t0: int, t1: int) -> dict:
    stream = read_events(in_path)
    dmap = density_map(stream, t0, t1)
    write_pgm(out_path, dmap.normalized)
    return {"events": int(dmap.counts.sum())}


def run_metrics(a_path, b_path, *, which=_METRIC_NAMES, loe_grid: int = 100,
                out=None) -> dict:
    a = GrayImage.from_array(read_pgm(a_path))
    b = GrayImage.from_array(read_pgm(b_path))
    values: dict = {}
    if "mse" in which:
        values["mse"] = mse(a, b)
    if "ssim" in which:
        values["ssim"] = ssim(a, b)
    if "loe" in which:
        values["loe"] = loe(a, b, sample_grid=loe_grid)
    if out is not None:
        text = "".join(f"{k} = {v!r}\n" for k, v in values.items())
        Path(out).write_text(text, encoding="utf-8")
    return values


# --- pipeline -------------------------------------------------------------

_STAGE_INPUT_SLOTS = {
    # slot -> required file format for chain compatibility (None = any)
    "simulate": {"scene": "config"},
    "ets": {"in": "EVT1"},
    "voxelize": {"in": "EVT1", "weights": "WGT1"},
    "density": {"in": "EVT1"},
    "metrics": {"a": "PGM/P5", "b": "PGM/P5"},
}
_STAGE_OUTPUT_SLOTS = {
    "simulate": {"out": "EVT1"},
    "ets": {"out": "EVT1", "report": "text"},
    "voxelize": {"out": "VOX1"},
    "density": {"out": "PGM/P5"},
    "metrics": {"out": "text"},
}
_STAGE_REQUIRED = {
    "simulate": {"scene", "out"},
    "ets": {"in", "out"},
    "voxelize": {"in", "out", "t0", "t1"},
    "density": {"in", "out", "t0", "t1"},
    "metrics": {"a", "b"},
}
_STAGE_OPTIONAL = {
    "simulate": {"threshold", "grid_us", "seed"},
    "ets": {"max_interval_us", "min_chain", "realign_us", "report"},
    "voxelize": {"bins", "weights", "span_norm"},
    "density": set(),
    "metrics": {"which", "loe_grid", "out"},
}


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _check_stage(index: int, stage, produced: dict) -> None:
    """Static chain validation; raises ValueError naming the stage."""
    tag = f"stage {index + 1}"
    if not isinstance(stage, dict):
        raise ValueError(f"{tag}: expected an object with a 'stage' key")
    name = stage.get("stage")
    if name not in _STAGE_REQUIRED:
        raise ValueError(f"{tag}: unknown stage {name!r}")
    tag = f"{tag} ({name})"
    keys = set(stage) - {"stage"}
    missing = _STAGE_REQUIRED[name] - keys
    if missing:
        raise ValueError(f"{tag}: missing keys: {', '.join(sorted(missing))}")
    unknown = keys - _STAGE_REQUIRED[name] - _STAGE_OPTIONAL[name]
    if unknown:
        raise ValueError(f"{tag}: unknown keys: {', '.join(sorted(unknown))}")
    for slot, want in _STAGE_INPUT_SLOTS[name].items():
        if slot not in stage:
            continue
        path = str(stage[slot])
        have = produced.get(path, _file_format(path))
        if want is not None and have != want:
            raise ValueError(
                f"{tag}: input '{slot}' is {have}, expected {want}: {path}"
            )
    for slot, fmt in _STAGE_OUTPUT_SLOTS[name].items():
        if slot in stage:
            produced[str(stage[slot])] = fmt


def _run_stage(name: str, params: dict, base: Path, seed) -> dict:
    resolve = lambda p: str(base / p)  # noqa: E731 - tiny local alias
    if name == "simulate":
        stage_seed = params.get("seed", seed)
        return run_simulate(
            resolve(params["scene"]), resolve(params["out"]),
            threshold=params.get("threshold", _DEFAULT_THRESHOLD),
            grid_us=params.get("grid_us"),
            seed=int(stage_seed) if stage_seed is not None else None,
        )
    if name == "ets":
        report = params.get("report")
        return run_ets(
            resolve(params["in"]), resolve(params["out"]),
            max_interval_us=int(params.get("max_interval_us", 1000)),
            min_chain=int(params.get("min_chain", 3)),
            realign_us=int(params.get("realign_us", 1)),
            report=resolve(report) if report is not None else None,
        )
    if name == "voxelize":
        weights = params.get("weights")
        bins = params.get("bins")
        return run_voxelize(
            resolve(params["in"]), resolve(params["out"]),
            t0=int(params["t0"]), t1=int(params["t1"]),
            bins=int(bins) if bins is not None else None,
            weights=resolve(weights) if weights is not None else None,
            span_norm=bool(params.get("span_norm", False)),
        )
    if name == "density":
        return run_density(resolve(params["in"]), resolve(params["out"]),
                           t0=int(params["t0"]), t1=int(params["t1"]))
    out = params.get("out")
    return run_metrics(
        resolve(params["a"]), resolve(params["b"]),
        which=tuple(params.get("which", _METRIC_NAMES)),
        loe_grid=int(params.get("loe_grid", 100)),
        out=resolve(out) if out is not None else None,
    )


def run_pipeline(config_path) -> dict:
    config_path = Path(config_path)
    text = config_path.read_text(encoding="utf-8")
    try:
        config = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{config_path}: not valid JSON: {e}") from None
    if not isinstance(config, dict) or not isinstance(config.get("stages"), list):
        raise ValueError(f"{config_path}: expected an object with a 'stages' list")
    stages = config["stages"]
    if not stages:
        raise ValueError(f"{config_path}: 'stages' is empty")
    seed = config.get("seed")
    base = config_path.resolve().parent

    produced: dict[str, str] = {}
    for i, stage in enumerate(stages):
        _check_stage(i, stage, produced)

    manifest_stages = []
    for stage in stages:
        name = stage["stage"]
        params = {k: v for k, v in stage.items() if k != "stage"}
        inputs = {
            str(stage[slot]): None
            for slot in _STAGE_INPUT_SLOTS[name]
            if slot in stage
        }
        for path in inputs:
            inputs[path] = {"format": _file_format(path),
                            "sha256": _sha256(base / path)}
        stats = _run_stage(name, params, base, seed)
        outputs = {}
        for slot, fmt in _STAGE_OUTPUT_SLOTS[name].items():
            if slot in stage:
                path = str(stage[slot])
                outputs[path] = {"format": fmt, "sha256": _sha256(base / path)}
        manifest_stages.append({
            "stage": name,
            "params": params,
            "inputs": inputs,
            "outputs": outputs,
            "stats": stats,
        })

    manifest = {
        "config": config_path.name,
        "config_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "seed": seed,
        "stages": manifest_stages,
    }
    manifest_path = base / config.get("manifest", config_path.stem + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"stages": len(stages), "manifest": str(manifest_path)}


# --- argument parsing -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evlume",
        description="Event-camera simulation, trail suppression, "
                    "voxelization, and image metrics.",
        epilog="Environment: EVLUME_THREADS caps internal parallelism (0 = auto).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "simulate", help="generate an event stream from a scene file",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=_scene_help(),
    )
    p.add_argument("--scene", required=True, help="scene file (key = value lines)")
    p.add_argument("--out", required=True, help="output EVT1 stream")
    p.add_argument("--threshold", type=float, default=_DEFAULT_THRESHOLD,
                   help="log-intensity contrast threshold (default %(default)s)")
    p.add_argument("--grid-us", type=int, default=None,
                   help="override the scene's simulation grid, µs")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scene's noise seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ets", help="suppress event trails by realigning timestamps")
    p.add_argument("--in", dest="infile", required=True, help="input EVT1 stream")
    p.add_argument("--out", required=True, help="output EVT1 stream")
    p.add_argument("--max-interval-us", type=int, default=1000,
                   help="intervals at or above this break a chain (default %(default)s)")
    p.add_argument("--min-chain", type=int, default=3,
                   help="shortest run treated as a trail (default %(default)s)")
    p.add_argument("--realign-us", type=int, default=1,
                   help="spacing of realigned timestamps (default %(default)s)")
    p.add_argument("--report", default=None, help="write a text summary here")
    p.set_defaults(func=_cmd_ets)

    p = sub.add_parser("voxelize", help="accumulate events into a time-binned grid")
    p.add_argument("--in", dest="infile", required=True, help="input EVT1 stream")
    p.add_argument("--out", required=True, help="output VOX1 grid")
    p.add_argument("--t0", type=int, required=True, help="window start, µs (inclusive)")
    p.add_argument("--t1", type=int, required=True, help="window end, µs (inclusive)")
    p.add_argument("--bins", type=int, default=None,
                   help="number of time bins (default 5; with --weights, the table decides)")
    p.add_argument("--weights", default=None,
                   help="WGT1 weight table replacing the two-nearest-bins kernel")
    p.add_argument("--span-norm", action="store_true",
                   help="normalize timestamps by the first-to-last event span "
                        "instead of the window")
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("density", help="write a per-pixel event-count image")
    p.add_argument("--in", dest="infile", required=True, help="input EVT1 stream")
    p.add_argument("--out", required=True, help="output PGM image")
    p.add_argument("--t0", type=int, required=True, help="window start, µs (inclusive)")
    p.add_argument("--t1", type=int, required=True, help="window end, µs (exclusive)")
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("metrics", help="compare two grayscale images")
    p.add_argument("--a", required=True, help="first PGM image")
    p.add_argument("--b", required=True, help="second PGM image")
    p.add_argument("--mse", action="store_true", help="mean squared error")
    p.add_argument("--ssim", action="store_true",
                   help="structural similarity (8x8 non-overlapping windows)")
    p.add_argument("--loe", action="store_true", help="lightness-order error")
    p.add_argument("--loe-grid", type=int, default=100,
                   help="max sampled positions per axis for --loe (default %(default)s)")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("pipeline", help="run a JSON stage chain and write a manifest")
    p.add_argument("--config", required=True, help="JSON pipeline config")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def _print_stats(stats: dict) -> None:
    for key, value in stats.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")


def _cmd_simulate(args) -> int:
    _print_stats(run_simulate(args.scene, args.out, threshold=args.threshold,
                              grid_us=args.grid_us, seed=args.seed))
    return 0


def _cmd_ets(args) -> int:
    _print_stats(run_ets(args.infile, args.out,
                         max_interval_us=args.max_interval_us,
                         min_chain=args.min_chain,
                         realign_us=args.realign_us,
                         report=args.report))
    return 0


def _cmd_voxelize(args) -> int:
    _print_stats(run_voxelize(args.infile, args.out, t0=args.t0, t1=args.t1,
                              bins=args.bins, weights=args.weights,
                              span_norm=args.span_norm))
    return 0


def _cmd_density(args) -> int:
    _print_stats(run_density(args.infile, args.out, t0=args.t0, t1=args.t1))
    return 0


def _cmd_metrics(args) -> int:
    which = tuple(n for n in _METRIC_NAMES if getattr(args, n)) or _METRIC_NAMES
    _print_stats(run_metrics(args.a, args.b, which=which, loe_grid=args.loe_grid))
    return 0


def _cmd_pipeline(args) -> int:
    _print_stats(run_pipeline(args.config))
    return 0


def _thread_cap() -> int:
    raw = os.environ.get("EVLUME_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"EVLUME_THREADS must be an integer, got {raw!r}") from None
    if cap < 0:
        raise ValueError(f"EVLUME_THREADS must be >= 0, got {cap}")
    return cap


def main(argv=None) -> int:
    try:
        _thread_cap()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
