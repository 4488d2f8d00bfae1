"""Command-line interface.

Subcommands cover the whole pipeline: synthesizing validation data,
preprocessing raw frames, fitting displacement models (single pair,
warm-started sequence, or multi-seed ensemble), evaluating against ground
truth, and computing turbulence statistics from field streams.

Exit codes: 0 success, 1 training divergence, 2 usage or input error.
Every run that produces files also writes a ``manifest.json`` describing
inputs, configuration, seeds, and outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .fields import (
    FieldGrid,
    load_field,
    load_flo,
    pixel_grid_coords,
    rmse_at_points,
    rmse_dense,
    sample_grid,
    save_field,
    to_velocity,
    vorticity,
)
from .images import (
    SequenceMeta,
    clahe,
    gaussian_filter_3x3,
    load_image,
    save_image,
    subtract_background,
)
from .model import (
    ModelConfig,
    init_model,
    load_model,
    param_count,
    save_model,
)
from .stats import accumulate_stats, psd
from .synth import (
    JetShearFlow,
    RigidRotation,
    ShearFlow,
    UniformFlow,
    generate_sequence,
    make_truth_grid,
    single_particle_pair,
)
from .training import TrainConfig, ensemble_train, train_pair, train_sequence


class UsageError(Exception):
    """Bad arguments or unreadable/malformed inputs; maps to exit code 2."""


# --- configuration resolution ------------------------------------------------

_MODEL_KEYS = {"beta": float, "n_embed": int, "n_layers": int, "layer_size": int}
_TRAIN_KEYS = {"lr": float, "batch_size": int, "epochs": int, "seed": int}
_CONFIG_KEYS = {**_MODEL_KEYS, **_TRAIN_KEYS}


def parse_config_file(path) -> dict:
    """Read a ``key = value`` config file; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](text.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {text.strip()!r}")
    return values


def resolve_configs(args) -> tuple[ModelConfig, TrainConfig]:
    """Merge defaults < config file < explicit flags."""
    merged = {
        "beta": 100.0,
        "n_embed": 200,
        "n_layers": 1,
        "layer_size": 100,
        "lr": 1e-3,
        "batch_size": 10000,
        "epochs": 100,
        "seed": 0,
    }
    if getattr(args, "config", None):
        merged.update(parse_config_file(args.config))
    flag_names = {
        "beta": "beta",
        "n_embed": "n_embed",
        "n_layers": "layers",
        "layer_size": "layer_size",
        "lr": "lr",
        "batch_size": "batch_size",
        "epochs": "epochs",
        "seed": "seed",
    }
    for key, attr in flag_names.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value
    try:
        model_cfg = ModelConfig(
            beta=merged["beta"],
            n_embed=merged["n_embed"],
            n_layers=merged["n_layers"],
            layer_size=merged["layer_size"],
        )
        train_cfg = TrainConfig(
            lr=merged["lr"],
            batch_size=merged["batch_size"],
            epochs=merged["epochs"],
            seed=merged["seed"],
            deterministic=bool(getattr(args, "deterministic", False)),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    return model_cfg, train_cfg


def _coord_scale(args, shape) -> tuple[float, float] | None:
    if not getattr(args, "normalize_coords", False):
        return None
    height, width = shape
    return (max(width - 1, 1), max(height - 1, 1))


def _config_dict(model_cfg: ModelConfig, train_cfg: TrainConfig) -> dict:
    return {
        "beta": model_cfg.beta,
        "n_embed": model_cfg.n_embed,
        "n_layers": model_cfg.n_layers,
        "layer_size": model_cfg.layer_size,
        "lr": train_cfg.lr,
        "batch_size": train_cfg.batch_size,
        "epochs": train_cfg.epochs,
        "seed": train_cfg.seed,
    }


# --- manifest and small output helpers ---------------------------------------


def _report_dict(report, deterministic: bool) -> dict:
    out = {
        "epochs_run": len(report.loss_per_epoch),
        "final_loss": report.final_loss,
        "diverged": report.diverged,
    }
    if not deterministic:
        # Wall time varies run to run; dropping it keeps deterministic
        # reruns byte-identical, manifest included.
        out["wall_time_s"] = report.wall_time
    return out


def write_manifest(out_dir: Path, payload: dict) -> Path:
    payload = {"tool": "flowfit", "version": __version__, **payload}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_loss_csv(path: Path, reports) -> None:
    lines = ["pair,epoch,loss"]
    for pair_idx, report in enumerate(reports):
        for epoch, loss in enumerate(report.loss_per_epoch):
            lines.append(f"{pair_idx},{epoch},{loss:.9e}")
    path.write_text("\n".join(lines) + "\n")


def _require_files(paths) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if not p.is_file():
            raise UsageError(f"input file not found: {p}")
        out.append(p)
    return out


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _minmax_to_image(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-30:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def _write_heatmaps(out_dir: Path, grid: FieldGrid, prefix: str = "") -> list[str]:
    mag_path = out_dir / f"{prefix}magnitude.pgm"
    vort_path = out_dir / f"{prefix}vorticity.pgm"
    save_image(_minmax_to_image(grid.magnitude()), mag_path)
    save_image(_minmax_to_image(vorticity(grid)), vort_path)
    return [str(mag_path), str(vort_path)]


def _load_truth(path: Path):
    """Truth is a dense grid (.nvf/.flo) or a points text file."""
    suffix = path.suffix.lower()
    if suffix == ".nvf":
        return "grid", load_field(path)
    if suffix == ".flo":
        return "grid", load_flo(path)
    return "points", load_points_text(path)


def load_points_text(path) -> tuple[np.ndarray, np.ndarray]:
    """Read 'x y dx dy' rows; '#' comments and blank lines allowed."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise UsageError(f"{path}:{lineno}: expected 'x y dx dy', got {raw!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise UsageError(f"{path}:{lineno}: non-numeric entry in {raw!r}")
    if not rows:
        raise UsageError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, :2], arr[:, 2:]


def save_points_text(path, points: np.ndarray, disps: np.ndarray) -> None:
    lines = ["# x y dx dy"]
    for (x, y), (dx, dy) in zip(points, disps):
        lines.append(f"{x:.6f} {y:.6f} {dx:.6f} {dy:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


# --- flow-spec parsing --------------------------------------------------------


def parse_flow_spec(spec: str, shape: tuple[int, int]):
    """Turn a 'name:arg,arg' string into an analytic flow.

    Supported: uniform:U,V | rotation:ANGLE[,CX,CY] | shear:RATE |
    jet:PEAK[,CENTER_Y[,WIDTH]] | zero | single_particle[:DX,DY].
    """
    height, width = shape
    name, _, argtext = spec.partition(":")
    name = name.strip().lower()
    try:
        fargs = [float(a) for a in argtext.split(",")] if argtext else []
    except ValueError:
        raise UsageError(f"bad flow spec arguments: {spec!r}")

    if name == "uniform":
        if len(fargs) != 2:
            raise UsageError("uniform flow needs exactly two arguments: uniform:U,V")
        return UniformFlow(*fargs)
    if name == "zero":
        if fargs:
            raise UsageError("zero flow takes no arguments")
        return UniformFlow(0.0, 0.0)
    if name == "rotation":
        if len(fargs) == 1:
            return RigidRotation(fargs[0], (width - 1) / 2.0, (height - 1) / 2.0)
        if len(fargs) == 3:
            return RigidRotation(*fargs)
        raise UsageError("rotation flow: rotation:ANGLE or rotation:ANGLE,CX,CY")
    if name == "shear":
        if len(fargs) != 1:
            raise UsageError("shear flow needs one argument: shear:RATE")
        return ShearFlow(fargs[0])
    if name == "jet":
        if not 1 <= len(fargs) <= 3:
            raise UsageError("jet flow: jet:PEAK[,CENTER_Y[,WIDTH]]")
        peak = fargs[0]
        center_y = fargs[1] if len(fargs) > 1 else (height - 1) / 2.0
        jet_width = fargs[2] if len(fargs) > 2 else height / 8.0
        return JetShearFlow(peak, center_y, jet_width)
    if name == "single_particle":
        if len(fargs) == 0:
            return UniformFlow(10.0, 10.0)
        if len(fargs) == 2:
            return UniformFlow(*fargs)
        raise UsageError("single_particle: no arguments or single_particle:DX,DY")
    raise UsageError(f"unknown flow spec {name!r}")


# --- subcommands --------------------------------------------------------------


def cmd_estimate(args) -> int:
    img1_path, img2_path = _require_files([args.image1, args.image2])
    img1 = load_image(img1_path)
    img2 = load_image(img2_path)
    if img1.shape != img2.shape:
        raise UsageError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    model_cfg, train_cfg = resolve_configs(args)
    out = _out_dir(args)

    model = init_model(model_cfg, train_cfg.seed, coord_scale=_coord_scale(args, img1.shape))
    report = train_pair(model, img1, img2, train_cfg)

    model_path = out / "model.nvm"
    field_path = out / "field.nvf"
    loss_path = out / "loss.csv"
    save_model(model, model_path)
    xs, ys = pixel_grid_coords(img1.shape)
    grid = sample_grid(model, xs, ys)
    save_field(grid, field_path)
    _write_loss_csv(loss_path, [report])
    outputs = [str(model_path), str(field_path), str(loss_path)]
    if args.heatmap:
        outputs += _write_heatmaps(out, grid)

    write_manifest(
        out,
        {
            "command": "estimate",
            "inputs": [str(img1_path), str(img2_path)],
            "config": _config_dict(model_cfg, train_cfg),
            "seeds": [train_cfg.seed],
            "deterministic": train_cfg.deterministic,
            "normalize_coords": bool(args.normalize_coords),
            "reports": [_report_dict(report, train_cfg.deterministic)],
            "outputs": outputs,
        },
    )
    if report.diverged:
        print("training diverged; model left at last finite state", file=sys.stderr)
        return 1
    print(f"final_loss: {report.final_loss:.6e}")
    return 0


def cmd_sequence(args) -> int:
    frame_paths = _require_files(args.frames)
    if len(frame_paths) < 2:
        raise UsageError(f"need at least 2 frames, got {len(frame_paths)}")
    frames = [load_image(p) for p in frame_paths]
    model_cfg, train_cfg = resolve_configs(args)
    epochs_first = args.epochs_first if args.epochs_first is not None else train_cfg.epochs
    cfg_first = replace(train_cfg, epochs=epochs_first)
    cfg_rest = replace(train_cfg, epochs=args.epochs_rest)
    out = _out_dir(args)

    model = init_model(model_cfg, train_cfg.seed, coord_scale=_coord_scale(args, frames[0].shape))
    results = train_sequence(frames, cfg_first, cfg_rest, model)

    outputs = []
    reports = []
    xs, ys = pixel_grid_coords(frames[0].shape)
    for i, (snapshot, report) in enumerate(results):
        model_path = out / f"model_{i:03d}.nvm"
        field_path = out / f"field_{i:03d}.nvf"
        save_model(snapshot, model_path)
        save_field(sample_grid(snapshot, xs, ys), field_path)
        outputs += [str(model_path), str(field_path)]
        reports.append(report)
    loss_path = out / "loss.csv"
    _write_loss_csv(loss_path, reports)
    outputs.append(str(loss_path))

    write_manifest(
        out,
        {
            "command": "sequence",
            "inputs": [str(p) for p in frame_paths],
            "config": _config_dict(model_cfg, train_cfg),
            "epochs_first": epochs_first,
            "epochs_rest": args.epochs_rest,
            "seeds": [train_cfg.seed + i for i in range(len(results))],
            "deterministic": train_cfg.deterministic,
            "normalize_coords": bool(args.normalize_coords),
            "reports": [_report_dict(r, train_cfg.deterministic) for r in reports],
            "outputs": outputs,
        },
    )
    diverged = [i for i, r in enumerate(reports) if r.diverged]
    if diverged:
        print(f"pairs diverged: {diverged}", file=sys.stderr)
        return 1
    print(f"trained {len(results)} pairs")
    return 0


def cmd_ensemble(args) -> int:
    img1_path, img2_path = _require_files([args.image1, args.image2])
    if args.members < 2:
        raise UsageError(f"ensemble needs at least 2 members, got {args.members}")
    img1 = load_image(img1_path)
    img2 = load_image(img2_path)
    if img1.shape != img2.shape:
        raise UsageError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    model_cfg, train_cfg = resolve_configs(args)
    out = _out_dir(args)
    jobs = 1 if train_cfg.deterministic else max(1, args.jobs)

    xs, ys = pixel_grid_coords(img1.shape)
    result = ensemble_train(
        img1,
        img2,
        model_cfg,
        train_cfg,
        args.members,
        xs,
        ys,
        divergence_factor=args.divergence_factor,
        coord_scale=_coord_scale(args, img1.shape),
        jobs=jobs,
    )

    mean_path = out / "mean.nvf"
    std_path = out / "std.nvf"
    save_field(result.mean, mean_path)
    save_field(result.std, std_path)

    report_path = out / "ensemble_report.txt"
    lines = [
        f"members: {args.members}",
        f"converged: {int(result.converged.sum())}",
        "seed final_loss status",
    ]
    for seed, report, ok in zip(result.seeds, result.reports, result.converged):
        status = "converged" if ok else "excluded"
        lines.append(f"{seed} {report.final_loss:.6e} {status}")
    report_path.write_text("\n".join(lines) + "\n")

    outputs = [str(mean_path), str(std_path), str(report_path)]
    if args.heatmap:
        outputs += _write_heatmaps(out, result.mean, prefix="mean_")
        outputs += _write_heatmaps(out, result.std, prefix="std_")

    write_manifest(
        out,
        {
            "command": "ensemble",
            "inputs": [str(img1_path), str(img2_path)],
            "config": _config_dict(model_cfg, train_cfg),
            "members": args.members,
            "divergence_factor": args.divergence_factor,
            "seeds": result.seeds,
            "converged": [bool(c) for c in result.converged],
            "deterministic": train_cfg.deterministic,
            "normalize_coords": bool(args.normalize_coords),
            "reports": [
                _report_dict(r, train_cfg.deterministic) for r in result.reports
            ],
            "outputs": outputs,
        },
    )
    excluded = int((~result.converged).sum())
    print(f"converged {args.members - excluded}/{args.members} members")
    return 0


def _load_pred(path: Path):
    suffix = path.suffix.lower()
    if suffix == ".nvm":
        return "model", load_model(path)
    if suffix == ".nvf":
        return "field", load_field(path)
    raise UsageError(f"prediction must be .nvm or .nvf, got {path}")


def cmd_eval(args) -> int:
    pred_path, truth_path = _require_files([args.prediction, args.truth])
    try:
        pred_kind, pred = _load_pred(pred_path)
        truth_kind, truth = _load_truth(truth_path)
    except ValueError as exc:
        raise UsageError(str(exc))

    if args.mode == "points" or (args.mode == "auto" and truth_kind == "points"):
        if truth_kind != "points":
            raise UsageError("points mode needs an 'x y dx dy' truth text file")
        if pred_kind != "model":
            raise UsageError("points mode evaluates a model (.nvm), not a field file")
        points, disps = truth
        value = rmse_at_points(pred, points, disps)
        count = len(points)
    else:
        if truth_kind != "grid":
            raise UsageError("dense mode needs a .nvf or .flo truth grid")
        if pred_kind == "model":
            pred = sample_grid(pred, truth.xs, truth.ys)
        elif pred.u.shape != truth.u.shape or not (
            np.allclose(pred.xs, truth.xs) and np.allclose(pred.ys, truth.ys)
        ):
            raise UsageError("prediction and truth grids do not match")
        value = rmse_dense(pred, truth)
        count = truth.u.size

    print(f"rmse_px: {value:.6f}")
    if args.out_dir:
        out = _out_dir(args)
        report_path = out / "eval.csv"
        report_path.write_text(f"rmse_px,samples\n{value:.9e},{count}\n")
        write_manifest(
            out,
            {
                "command": "eval",
                "inputs": [str(pred_path), str(truth_path)],
                "mode": args.mode,
                "rmse_px": value,
                "samples": count,
                "outputs": [str(report_path)],
            },
        )
    return 0


def _save_grid_csv(path: Path, values: np.ndarray) -> None:
    np.savetxt(path, values, delimiter=",", fmt="%.9e")


def cmd_stats(args) -> int:
    field_paths = _require_files(args.fields)
    if len(field_paths) < 2:
        raise UsageError(f"need at least 2 fields for statistics, got {len(field_paths)}")
    if (args.frame_interval is None) != (args.magnification is None):
        raise UsageError("--frame-interval and --magnification must be given together")

    meta = None
    if args.frame_interval is not None:
        try:
            meta = SequenceMeta(args.frame_interval, args.magnification)
        except ValueError as exc:
            raise UsageError(str(exc))

    def load_one(path: Path) -> FieldGrid:
        suffix = path.suffix.lower()
        if suffix == ".nvf":
            grid = load_field(path)
        elif suffix == ".nvm":
            if args.grid is None:
                raise UsageError("--grid WIDTHxHEIGHT is required for model inputs")
            width, height = args.grid
            xs, ys = np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
            grid = sample_grid(load_model(path), xs, ys)
        else:
            raise UsageError(f"stats inputs must be .nvf or .nvm, got {path}")
        return to_velocity(grid, meta) if meta else grid

    try:
        grids = [load_one(p) for p in field_paths]
        stats = accumulate_stats(grids)
    except ValueError as exc:
        raise UsageError(str(exc))

    out = _out_dir(args)
    outputs = []
    for stem, values in [
        ("mean_u", stats.mean_u),
        ("mean_v", stats.mean_v),
        ("reynolds_uv", stats.reynolds_uv),
        ("tke", stats.tke),
    ]:
        path = out / f"{stem}.csv"
        _save_grid_csv(path, values)
        outputs.append(str(path))

    sample_rate = args.sample_rate
    if sample_rate is None:
        sample_rate = 1.0 / meta.frame_interval if meta else 1.0
    band = tuple(args.band) if args.band else None

    psd_slopes = {}
    ref = grids[0]
    for i, (px, py) in enumerate(args.point or []):
        col = int(np.argmin(np.abs(ref.xs - px)))
        row = int(np.argmin(np.abs(ref.ys - py)))
        for comp in ("u", "v"):
            series = np.array([getattr(g, comp)[row, col] for g in grids])
            try:
                spectrum = psd(series, sample_rate, band=band)
            except ValueError as exc:
                raise UsageError(str(exc))
            path = out / f"psd_{comp}_p{i:03d}.csv"
            np.savetxt(
                path,
                np.column_stack([spectrum.frequencies, spectrum.power]),
                delimiter=",",
                fmt="%.9e",
            )
            outputs.append(str(path))
            if spectrum.slope is not None:
                psd_slopes[f"{comp}_p{i:03d}"] = spectrum.slope
                print(f"psd_slope[{comp} @ ({px},{py})]: {spectrum.slope:.4f}")

    write_manifest(
        out,
        {
            "command": "stats",
            "inputs": [str(p) for p in field_paths],
            "fields": len(grids),
            "velocity_scaled": meta is not None,
            "sample_rate_hz": sample_rate,
            "psd_slopes": psd_slopes,
            "outputs": outputs,
        },
    )
    print(f"stats over {len(grids)} fields -> {out}")
    return 0


def cmd_synth(args) -> int:
    try:
        width, height = args.shape
    except (TypeError, ValueError):
        raise UsageError(f"bad --shape {args.shape!r}")
    shape = (height, width)
    flow = parse_flow_spec(args.flow, shape)
    if args.frames < 2:
        raise UsageError(f"need at least 2 frames, got {args.frames}")
    out = _out_dir(args)

    is_single = args.flow.strip().lower().startswith("single_particle")
    if is_single:
        diameter = args.diameter if args.diameter is not None else 24.0
        pair = single_particle_pair(
            (flow.u, flow.v), shape=shape, diameter=diameter, peak=args.peak
        )
        frames = [pair.frame1, pair.frame2]
        sets = [pair.particles, pair.particles.advected(flow)]
        flows = [flow]
        if args.frames != 2:
            raise UsageError("single_particle generates exactly 2 frames")
    else:
        diameter = args.diameter if args.diameter is not None else 3.0
        seq = generate_sequence(
            flow,
            args.frames,
            shape=shape,
            density=args.density,
            diameter=diameter,
            peak=args.peak,
            seed=args.seed if args.seed is not None else 0,
            noise=args.noise,
        )
        frames, sets, flows = seq.frames, seq.particle_sets, seq.flows

    outputs = []
    for i, frame in enumerate(frames):
        path = out / f"frame_{i:03d}.pgm"
        save_image(frame, path)
        outputs.append(str(path))
    xs, ys = pixel_grid_coords(shape)
    for i, step_flow in enumerate(flows):
        truth_path = out / f"truth_{i:03d}.nvf"
        save_field(make_truth_grid(step_flow, xs, ys), truth_path)
        points = sets[i].positions
        dx, dy = step_flow.displacement(points[:, 0], points[:, 1])
        points_path = out / f"particles_{i:03d}.txt"
        save_points_text(points_path, points, np.column_stack([dx, dy]))
        outputs += [str(truth_path), str(points_path)]

    write_manifest(
        out,
        {
            "command": "synth",
            "flow": args.flow,
            "shape": [width, height],
            "frames": len(frames),
            "density": args.density,
            "diameter": diameter,
            "peak": args.peak,
            "noise": args.noise,
            "seeds": [args.seed if args.seed is not None else 0],
            "outputs": outputs,
        },
    )
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_preprocess(args) -> int:
    frame_paths = _require_files(args.frames)
    frames = [load_image(p) for p in frame_paths]
    if not args.skip_background and len(frames) < 2:
        raise UsageError("background subtraction needs at least 2 frames (or --skip-background)")
    out = _out_dir(args)

    try:
        if not args.skip_background:
            frames = subtract_background(frames)
        if not args.skip_blur:
            frames = [gaussian_filter_3x3(f) for f in frames]
        if not args.skip_clahe:
            frames = [clahe(f, tiles=args.tiles, clip_limit=args.clip_limit) for f in frames]
    except ValueError as exc:
        raise UsageError(str(exc))

    outputs = []
    for i, frame in enumerate(frames):
        path = out / f"prep_{i:03d}.pgm"
        save_image(frame, path)
        outputs.append(str(path))

    write_manifest(
        out,
        {
            "command": "preprocess",
            "inputs": [str(p) for p in frame_paths],
            "background": not args.skip_background,
            "blur": not args.skip_blur,
            "clahe": not args.skip_clahe,
            "tiles": args.tiles,
            "clip_limit": args.clip_limit,
            "outputs": outputs,
        },
    )
    print(f"preprocessed {len(frames)} frames -> {out}")
    return 0


def cmd_model_info(args) -> int:
    (path,) = _require_files([args.model])
    try:
        model = load_model(path)
    except ValueError as exc:
        raise UsageError(str(exc))
    cfg = model.config
    print("format: NVM1")
    print(f"beta: {cfg.beta}")
    print(f"n_embed: {cfg.n_embed}")
    print(f"n_layers: {cfg.n_layers}")
    print(f"layer_size: {cfg.layer_size}")
    print(f"param_count: {param_count(cfg)}")
    print(f"file_bytes: {path.stat().st_size}")
    return 0


# --- parser -------------------------------------------------------------------


def _pair_of(type_, sep=","):
    def parse(text):
        parts = text.split(sep)
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected two {sep}-separated values: {text!r}")
        return tuple(type_(p) for p in parts)

    return parse


def _shape_type(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    width, height = (int(p) for p in parts)
    if width < 2 or height < 2:
        raise argparse.ArgumentTypeError(f"shape must be at least 2x2, got {text!r}")
    return (width, height)


def _add_model_train_flags(sub):
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--beta", type=float, help="embedding frequency scale")
    sub.add_argument("--n-embed", dest="n_embed", type=int, help="embedding rows")
    sub.add_argument("--layers", type=int, help="hidden layer count")
    sub.add_argument("--layer-size", dest="layer_size", type=int, help="hidden layer width")
    sub.add_argument("--lr", type=float, help="Adam learning rate")
    sub.add_argument("--batch-size", dest="batch_size", type=int, help="pixels per batch")
    sub.add_argument("--epochs", type=int, help="training epochs")
    sub.add_argument("--seed", type=int, help="base RNG seed")
    sub.add_argument("--jobs", type=int, default=1, help="parallel workers (ensemble)")
    sub.add_argument(
        "--deterministic",
        action="store_true",
        help="bit-reproducible outputs (drops wall times, serializes work)",
    )
    sub.add_argument(
        "--normalize-coords",
        action="store_true",
        help="scale input coordinates to [0,1] inside the embedding",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowfit",
        description="Continuous displacement-field estimation from particle image pairs.",
    )
    parser.add_argument("--version", action="version", version=f"flowfit {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("estimate", help="fit one image pair")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--heatmap", action="store_true", help="also write PGM magnitude/vorticity")
    _add_model_train_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = subs.add_parser("sequence", help="fit consecutive pairs with warm starts")
    p.add_argument("frames", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs-first", type=int, help="epochs for the first pair (default: --epochs)")
    p.add_argument("--epochs-rest", type=int, default=20, help="epochs for warm-started pairs")
    _add_model_train_flags(p)
    p.set_defaults(func=cmd_sequence)

    p = subs.add_parser("ensemble", help="train independently seeded members")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--members", type=int, required=True)
    p.add_argument(
        "--divergence-factor",
        type=float,
        default=10.0,
        help="exclude members with final loss above this multiple of the median",
    )
    p.add_argument("--heatmap", action="store_true", help="also write PGM magnitude/vorticity")
    _add_model_train_flags(p)
    p.set_defaults(func=cmd_ensemble)

    p = subs.add_parser("eval", help="RMSE of a prediction against ground truth")
    p.add_argument("prediction", help=".nvm model or .nvf field")
    p.add_argument("truth", help=".nvf/.flo grid or 'x y dx dy' text")
    p.add_argument("--mode", choices=["auto", "dense", "points"], default="auto")
    p.add_argument("--out-dir", help="also write eval.csv and a manifest")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("stats", help="turbulence statistics over a field stream")
    p.add_argument("fields", nargs="+", help=".nvf fields (or .nvm models with --grid)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", type=_shape_type, help="WIDTHxHEIGHT sampling grid for model inputs")
    p.add_argument("--frame-interval", type=float, help="seconds between fields")
    p.add_argument("--magnification", type=float, help="physical length per pixel")
    p.add_argument("--sample-rate", type=float, help="PSD sampling rate in Hz")
    p.add_argument(
        "--point",
        type=_pair_of(float),
        action="append",
        help="X,Y grid point for PSD output (repeatable)",
    )
    p.add_argument("--band", type=_pair_of(float), help="LO,HI frequency band for the slope fit")
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("synth", help="generate synthetic frames with exact truth")
    p.add_argument(
        "flow",
        help="uniform:U,V | rotation:ANGLE[,CX,CY] | shear:RATE | "
        "jet:PEAK[,CY[,W]] | zero | single_particle[:DX,DY]",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--shape", type=_shape_type, default=(256, 256), help="WIDTHxHEIGHT")
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--density", type=float, default=0.03, help="particles per pixel")
    p.add_argument("--diameter", type=float, help="particle image diameter in px")
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0, help="additive Gaussian sigma")
    p.add_argument("--seed", type=int, help="particle placement seed")
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("preprocess", help="background removal, blur, CLAHE")
    p.add_argument("frames", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tiles", type=int, default=8)
    p.add_argument("--clip-limit", type=float, default=2.0)
    p.add_argument("--skip-background", action="store_true")
    p.add_argument("--skip-blur", action="store_true")
    p.add_argument("--skip-clahe", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("model-info", help="print a model file's header")
    p.add_argument("model")
    p.set_defaults(func=cmd_model_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
