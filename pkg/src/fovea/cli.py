"""Command-line entry points: gen, train, finetune, infer, eval, ablate.

Every command validates its configuration before touching data, echoes
the effective flat config into the output directory, and exits nonzero
exactly when an error was reported. File writes go through temp names,
so a crashed run never leaves a half-written artifact behind.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import checkpoint, config, data, detect, formats, metrics, model, pipeline, synth
from .errors import ConfigError, FoveaError


def load_sequence(path: str) -> data.FrameSequence:
    """A directory of PGM frames (sorted by name) or one .raw sequence."""
    if os.path.isdir(path):
        names = sorted(glob.glob(os.path.join(path, "*.pgm")))
        if not names:
            raise ConfigError(f"no .pgm frames under {path}")
        return data.FrameSequence(np.stack([formats.read_pgm(n) for n in names]))
    if path.endswith(".raw"):
        return data.FrameSequence(formats.read_raw_sequence(path))
    raise ConfigError(f"frames must be a directory of PGMs or a .raw file: {path}")


def _echo_config(cfg: config.RunConfig, out: str):
    os.makedirs(out, exist_ok=True)
    formats.write_manifest(os.path.join(out, "config.txt"), config.to_mapping(cfg))


def _write_scene(root: str, seq: data.FrameSequence, annotations):
    frame_dir = os.path.join(root, "frames")
    os.makedirs(frame_dir, exist_ok=True)
    for t in range(len(seq.frames)):
        formats.write_pgm(os.path.join(frame_dir, f"{t:04d}.pgm"), seq.frames[t])
    formats.write_annotations_csv(os.path.join(root, "annotations.csv"), annotations)


def _scene_mapping(prefix: str, scene: synth.SceneSpec) -> dict:
    out = {}
    for f in fields(synth.SceneSpec):
        v = getattr(scene, f.name)
        if isinstance(v, tuple):
            v = "x".join(str(part) for part in v)
        out[f"{prefix}.{f.name}"] = str(v)
    return out


def cmd_gen(cfg: config.RunConfig, given: frozenset) -> int:
    config.require(given, "gen", "profile", "out", "seed")
    bench = synth.make_benchmark(cfg.profile, cfg.seed,
                                 train_frames=cfg.train_frames or None,
                                 eval_frames=cfg.eval_frames or None)
    _echo_config(cfg, cfg.out)
    manifest = {"profile": cfg.profile, "seed": str(cfg.seed),
                "theta": str(bench.theta), "alpha": str(bench.alpha)}
    for f in fields(data.DataParams):
        manifest[f"params.{f.name}"] = str(getattr(bench.params, f.name))
    manifest.update(_scene_mapping("train", bench.train_scene))
    manifest.update(_scene_mapping("eval", bench.eval_scene))
    formats.write_manifest(os.path.join(cfg.out, "manifest.txt"), manifest)
    _write_scene(os.path.join(cfg.out, "train"), bench.train_seq, bench.train_annotations)
    _write_scene(os.path.join(cfg.out, "eval"), bench.eval_seq, bench.eval_annotations)
    print(f"gen: wrote {cfg.profile} scenes "
          f"({len(bench.train_seq.frames)} train / {len(bench.eval_seq.frames)} eval frames) "
          f"to {cfg.out}")
    return 0


def _network_config(cfg: config.RunConfig) -> model.ModelConfig:
    if cfg.filter_config not in model.FILTER_SIZE_CONFIGS:
        raise ConfigError(
            f"filter_config must be in {sorted(model.FILTER_SIZE_CONFIGS)}, "
            f"got {cfg.filter_config}")
    return model.ModelConfig(
        filter_sizes=model.FILTER_SIZE_CONFIGS[cfg.filter_config],
        in_channels=cfg.c,
        activation=cfg.activation,
        dropout_rate=cfg.dropout,
    )


def _data_params(cfg: config.RunConfig) -> data.DataParams:
    return data.DataParams(tile=cfg.N, channels=cfg.c, stride=cfg.s,
                           sigma=cfg.sigma, omega=cfg.omega, sf=cfg.sf)


def _train_common(cfg: config.RunConfig, given: frozenset, finetune: bool) -> int:
    name = "finetune" if finetune else "train"
    needed = ["frames", "annotations", "out"]
    if finetune:
        needed.append("checkpoint")
    else:
        needed.append("seed")
    config.require(given, name, *needed)

    if finetune:
        loaded = checkpoint.load_checkpoint(cfg.checkpoint)
        net = loaded.model
        if net.config.in_channels != cfg.c:
            raise ConfigError(
                f"finetune: config c={cfg.c} but checkpoint expects "
                f"c={net.config.in_channels}")
        prior_steps = loaded.steps
    else:
        net = model.build_model(_network_config(cfg), cfg.seed)
        prior_steps = 0

    params = _data_params(cfg)
    spec = model.TrainSpec(lr=cfg.lr, batch_size=cfg.batch, max_steps=cfg.steps,
                           seed=cfg.seed, heatmap_sigma=cfg.sigma)
    _echo_config(cfg, cfg.out)

    seq = load_sequence(cfg.frames)
    annotations = formats.read_annotations_csv(cfg.annotations)
    dataset = data.build_dataset(seq, annotations, params)
    net, losses = model.train(net, dataset, spec)

    checkpoint.save_checkpoint(os.path.join(cfg.out, "model.ckpt"), net,
                               steps=prior_steps + len(losses), seed=cfg.seed)
    formats.write_text(
        os.path.join(cfg.out, "loss.csv"),
        "step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(losses)))
    final = losses[-1] if losses else float("nan")
    print(f"{name}: {len(losses)} steps on {len(dataset)} tiles, "
          f"final loss {final:.6g}, checkpoint in {cfg.out}")
    return 0


def cmd_train(cfg, given):
    return _train_common(cfg, given, finetune=False)


def cmd_finetune(cfg, given):
    return _train_common(cfg, given, finetune=True)


def cmd_infer(cfg: config.RunConfig, given: frozenset) -> int:
    config.require(given, "infer", "frames", "checkpoint", "out")
    loaded = checkpoint.load_checkpoint(cfg.checkpoint)
    net = loaded.model
    if "c" in given and cfg.c != net.config.in_channels:
        raise ConfigError(
            f"infer: config c={cfg.c} but checkpoint expects "
            f"c={net.config.in_channels}")
    cfg = replace(cfg, c=net.config.in_channels)
    params = _data_params(cfg)
    _echo_config(cfg, cfg.out)

    seq = load_sequence(cfg.frames)
    seq, _ = data.downscale(seq, [], params.sf)
    params = replace(params, sf=1.0)
    predict = pipeline.predictor(net)
    centers = pipeline.infer_centers(len(seq.frames), params)[::cfg.frame_step]

    all_dets, stitched = [], []
    render_dir = os.path.join(cfg.out, "renders")
    if cfg.renders:
        os.makedirs(render_dir, exist_ok=True)
    for center in centers:
        frame_heat = pipeline.frame_heatmap(predict, seq, center, params)
        all_dets.extend(pipeline.detections_from_heat(
            center, frame_heat, params, cfg.alpha, cfg.theta / 2.0))
        stitched.append(frame_heat)
        if cfg.renders:
            top = float(frame_heat.max())
            scaled = frame_heat / top if top > 0 else np.zeros_like(frame_heat)
            formats.write_pgm(os.path.join(render_dir, f"heat_{center:04d}.pgm"),
                              scaled, maxval=255)
            mask = detect.segment(frame_heat).mask.astype(np.float32)
            formats.write_pgm(os.path.join(render_dir, f"mask_{center:04d}.pgm"),
                              mask, maxval=255)

    formats.write_detections_csv(os.path.join(cfg.out, "detections.csv"), all_dets)
    h, w = seq.dims
    heatstack = (np.stack(stitched) if stitched
                 else np.zeros((0, h // 2, w // 2), dtype=np.float32))
    formats.write_raw_sequence(os.path.join(cfg.out, "heatmaps.raw"), heatstack)
    print(f"infer: {len(all_dets)} detections over {len(centers)} frames "
          f"-> {cfg.out}")
    return 0


def cmd_eval(cfg: config.RunConfig, given: frozenset) -> int:
    config.require(given, "eval", "detections", "annotations", "out")
    detections = formats.read_detections_csv(cfg.detections)
    annotations = formats.read_annotations_csv(cfg.annotations)
    moving, _ = data.moving_filter(annotations, cfg.omega)
    _echo_config(cfg, cfg.out)

    dets_by_frame: dict[int, list] = {}
    for d in detections:
        dets_by_frame.setdefault(d.frame_id, []).append(d)
    truth_by_frame: dict[int, list] = {}
    for a in moving:
        truth_by_frame.setdefault(a.frame_id, []).append(a)

    scoped, reports = [], []
    for fid in sorted(set(dets_by_frame) | set(truth_by_frame)):
        found = sorted(dets_by_frame.get(fid, []),
                       key=lambda d: (-d.score, -d.area, d.y, d.x))
        truths = sorted(((a.x, a.y) for a in truth_by_frame.get(fid, [])),
                        key=lambda p: (p[1], p[0]))
        report = metrics.match(found, truths, cfg.theta)
        reports.append(report)
        scoped.append((f"frame_{fid}", report))
    scoped.append(("aggregate", metrics.aggregate(reports)))

    formats.write_report_csv(os.path.join(cfg.out, "report.csv"), scoped)
    table = formats.format_report_table(scoped)
    formats.write_text(os.path.join(cfg.out, "report.txt"), table)
    print(table, end="")
    return 0


def _scale_arm(params: data.DataParams, theta: float, alpha: float, sf: float):
    """Per-scale operating point: geometry shrinks with sf, blob scale
    and area threshold only drop at the most aggressive factor."""
    if sf == 1.0:
        return params, theta, alpha
    tile = max(2, int(round(params.tile * sf / 2.0)) * 2)
    sigma = params.sigma if sf >= 0.4 else max(1.0, params.sigma * 0.5)
    area = alpha if sf >= 0.4 else alpha * (3.5 / 15.0)
    new = replace(params, tile=tile, sigma=sigma, omega=params.omega * sf, sf=sf)
    return new, theta * sf, area


def cmd_ablate(cfg: config.RunConfig, given: frozenset) -> int:
    config.require(given, "ablate", "suite", "profile", "out")
    suites = ("channels", "scale", "filters", "skip")
    if cfg.suite not in suites:
        raise ConfigError(f"suite must be one of {suites}, got {cfg.suite!r}")
    _network_config(cfg)  # validate before the expensive part
    _echo_config(cfg, cfg.out)

    train_frames = cfg.train_frames or None
    eval_frames = cfg.eval_frames or None
    if cfg.suite == "skip":
        # the widest stack must still fit around a center frame
        span = 2 * (30 * (cfg.c - 1) // 2) + data.MOTION_WINDOW + 2
        train_frames = max(train_frames or 0, span)
        eval_frames = max(eval_frames or 0, span)
    bench = synth.make_benchmark(cfg.profile, cfg.seed,
                                 train_frames=train_frames, eval_frames=eval_frames)

    if cfg.suite == "channels":
        arms = [(f"c={k}", replace(bench.params, channels=k), bench.theta,
                 bench.alpha, cfg.filter_config) for k in (1, 3, 5)]
    elif cfg.suite == "scale":
        arms = []
        for sf in (1.0, 0.4, 0.2):
            p, theta, alpha = _scale_arm(bench.params, bench.theta, bench.alpha, sf)
            arms.append((f"sf={sf}", p, theta, alpha, cfg.filter_config))
    elif cfg.suite == "filters":
        arms = [(f"config={k}", bench.params, bench.theta, bench.alpha, k)
                for k in sorted(model.FILTER_SIZE_CONFIGS)]
    else:
        arms = [(f"s={k}", replace(bench.params, stride=k), bench.theta,
                 bench.alpha, cfg.filter_config) for k in (5, 10, 15, 30)]

    scoped = []
    for name, params, theta, alpha, fc in arms:
        net = model.build_model(model.ModelConfig(
            filter_sizes=model.FILTER_SIZE_CONFIGS[fc],
            in_channels=params.channels,
            activation=cfg.activation,
            dropout_rate=cfg.dropout), cfg.seed)
        dataset = data.build_dataset(bench.train_seq, bench.train_annotations, params)
        spec = model.TrainSpec(lr=cfg.lr, batch_size=cfg.batch, max_steps=cfg.steps,
                               seed=cfg.seed, heatmap_sigma=params.sigma)
        net, _ = model.train(net, dataset, spec)
        report = pipeline.evaluate(pipeline.predictor(net), bench.eval_seq,
                                   bench.eval_annotations, params, theta, alpha,
                                   frame_step=cfg.frame_step)
        scoped.append((name, report))
        print(f"ablate[{cfg.suite}] {name}: f1={report.f1:.3f} "
              f"(p={report.precision:.3f}, r={report.recall:.3f})")

    out_csv = os.path.join(cfg.out, f"ablate_{cfg.suite}.csv")
    formats.write_report_csv(out_csv, scoped)
    print(formats.format_report_table(scoped), end="")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fovea",
        description="Tiny-vehicle detection in registered overhead video.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="key=value config file")
        for f in fields(config.RunConfig):
            cmd.add_argument(f"--{f.name}")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        mapping = config.load_config(args.config) if args.config else {}
        for f in fields(config.RunConfig):
            value = getattr(args, f.name)
            if value is not None:
                mapping[f.name] = value
        cfg, given = config.from_mapping(mapping)
        return _COMMANDS[args.command](cfg, given)
    except (FoveaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
