"""Command-line entry point: ``svgdistill <subcommand> ...``.

Every subcommand accepts ``--config FILE`` holding either a JSON object or
UTF-8 ``key=value`` lines (``#`` starts a comment). Keys use the long option
names with ``-`` or ``_``; explicit command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diffusion, live, pipeline, svgio
from .rasterizer import Raster, RenderConfig, render
from .sds import SdsConfig, write_trace

log = logging.getLogger("svgdistill")


def parse_config_text(text: str) -> dict:
    stripped = text.strip()
    if stripped.startswith("{"):
        data = json.loads(stripped)
        if not isinstance(data, dict):
            raise ValueError("JSON config must be an object")
        return {k.replace("-", "_"): v for k, v in data.items()}
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


# ---------------------------------------------------------------------------
# Priors and datasets
# ---------------------------------------------------------------------------

def load_prior(args) -> diffusion.Denoiser:
    if args.prior_svg:
        return pipeline.scene_prior(svgio.read_svg(args.prior_svg), args.size, args.prior_std)
    if args.prior in (None, "demo"):
        return pipeline.scene_prior(pipeline.demo_scene(), args.size, args.prior_std)
    return diffusion.TinyDenoiser.load(args.prior)


def _label(prior, text):
    if text is None:
        return prior.labels[0]
    for lab in prior.labels:
        if str(lab) == str(text):
            return lab
    raise SystemExit(f"unknown label {text!r}; prior has {list(prior.labels)}")


def load_dataset(path) -> tuple[np.ndarray, list]:
    """Images and labels from an ``.npz`` (``images``, ``labels``) or a folder of label subfolders."""
    p = Path(path)
    if p.is_dir():
        images, labels = [], []
        for sub in sorted(d for d in p.iterdir() if d.is_dir()):
            for f in sorted(sub.iterdir()):
                if f.suffix.lower() in (".ppm", ".png"):
                    images.append(svgio.read_image(f).pixels)
                    labels.append(sub.name)
        if not images:
            raise ValueError(f"no .ppm/.png images under {p}")
        return np.stack(images), labels
    with np.load(p, allow_pickle=False) as data:
        images = np.asarray(data["images"], dtype=float)
        labels = [v.item() if hasattr(v, "item") else v for v in data["labels"]]
    if images.ndim == 3:
        images = np.repeat(images[..., None], 3, axis=-1)
    return images, labels


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_vectorize(args) -> int:
    target = svgio.read_image(args.image)
    schedule = _int_list(args.schedule) if args.schedule else pipeline.default_live_schedule(args.paths)
    if args.paths is not None and sum(schedule) != args.paths:
        raise SystemExit(f"schedule {schedule} adds {sum(schedule)} paths, not --paths {args.paths}")
    res = live.vectorize(target.pixels, schedule, args.iters, RenderConfig(), seed=args.seed,
                         segments=args.segments, snapshot_dir=args.snapshots)
    _emit(res.scene, args.out)
    for s, err in enumerate(res.stage_l2):
        log.info("stage %d l2 %.6g", s, err)
    return 0


def _sds_config(args) -> SdsConfig:
    return SdsConfig(t_min=args.t_min, t_max=args.t_max, guidance=args.guidance, weighting=args.weighting,
                     steps=args.steps, latent=args.latent, encoder_factor=args.encoder_factor)


def _style_config(args) -> pipeline.StyleConfig:
    kw = {}
    if args.paths is not None:
        kw["n_paths"] = args.paths
    if args.segments is not None:
        kw["segments"] = args.segments
    if args.grid is not None:
        kw["grid"] = args.grid
    return pipeline.StyleConfig.for_style(args.style, **kw)


def cmd_distill(args) -> int:
    prior = load_prior(args)
    cond = _label(prior, args.label)
    augment = False if args.no_augment else None
    res = pipeline.run_style(_style_config(args), prior, cond, args.mode, args.seed, sds_cfg=_sds_config(args),
                             k=args.k, augment=augment, live_iters=args.live_iters)
    _emit(res.scene, args.out)
    if args.trace:
        write_trace(res.trace, args.trace)
    return 0


def cmd_sample(args) -> int:
    prior = load_prior(args)
    cond = _label(prior, args.label)
    x = diffusion.sample(prior, cond, prior.shape, prior.sched, steps=args.steps, omega=args.guidance, seed=args.seed)
    svgio.write_image(Raster.from_array(np.clip(x, 0.0, 1.0)), args.out)
    return 0


def cmd_train_prior(args) -> int:
    images, labels = load_dataset(args.dataset)
    classes = sorted(set(labels), key=str)
    model = diffusion.TinyDenoiser(images.shape[1:], classes, hidden=args.hidden, seed=args.seed)
    losses = model.train(images, labels, steps=args.steps, batch=args.batch, lr=args.lr, seed=args.seed)
    model.save(args.out)
    log.info("trained %d params; loss %.4f -> %.4f", model.n_params, losses[0], losses[-1])
    return 0


def cmd_pixel_fit(args) -> int:
    scene = pipeline.pixel_fit(svgio.read_image(args.image).pixels, args.grid, args.norm)
    _emit(scene, args.out)
    return 0


def cmd_eval(args) -> int:
    table = pipeline.ScoreTable.read_csv(args.scores)
    print(f"r_precision={pipeline.r_precision(table):.6f}")
    print(f"mean_similarity={pipeline.mean_similarity(table):.6f}")
    return 0


def cmd_render(args) -> int:
    scene = svgio.read_svg(args.svg)
    size = args.size if args.size else None
    svgio.write_image(render(scene, RenderConfig(resolution=size, aa_width=args.aa_width)), args.out)
    return 0


def cmd_sweep(args) -> int:
    prior = load_prior(args)
    prompts = pipeline.load_prompts(args.prompts)
    rows = pipeline.sweep(prompts, prior, _int_list(args.k), style_cfg=_style_config(args),
                          sds_cfg=_sds_config(args), seed=args.seed, distill_steps=args.distill_steps,
                          out_dir=args.out_dir, sample_steps=args.sample_steps)
    fields = ["prompt", "label", "k", "chosen", "score"] + (["svg"] if args.distill_steps and args.out_dir else [])
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        wr = csv.DictWriter(out, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _emit(scene, out) -> None:
    text = svgio.emit_svg(scene)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _prior_args(p) -> None:
    p.add_argument("--prior", help="TinyDenoiser checkpoint, or 'demo' for the built-in analytic prior")
    p.add_argument("--prior-svg", help="use a single Gaussian centered on this SVG's rendering")
    p.add_argument("--prior-std", type=float, default=0.1)
    p.add_argument("--size", type=int, default=32, help="image side for analytic priors")
    p.add_argument("--label", help="condition label (default: the prior's first)")


def _sds_args(p, steps: int) -> None:
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--guidance", type=float, default=diffusion.DEFAULT_GUIDANCE)
    p.add_argument("--t-min", type=int, default=50)
    p.add_argument("--t-max", type=int, default=950)
    p.add_argument("--weighting", default="unit", choices=["unit", "sigma_over_alpha", "zero"])
    p.add_argument("--latent", action="store_true")
    p.add_argument("--encoder-factor", type=int, default=8)


def _style_args(p) -> None:
    p.add_argument("--style", default="iconography", choices=[s.value for s in pipeline.Style])
    p.add_argument("--paths", type=int)
    p.add_argument("--segments", type=int)
    p.add_argument("--grid", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svgdistill", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON or key=value file with option defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        return p

    p = add("vectorize", cmd_vectorize, "trace a raster image with staged paths")
    p.add_argument("image")
    p.add_argument("--paths", type=int, default=16)
    p.add_argument("--schedule", help="comma-separated paths per stage, e.g. 2,4,10")
    p.add_argument("--iters", type=int, default=live.DEFAULT_ITERS)
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--snapshots", help="directory for per-stage SVGs")
    p.add_argument("--out")

    p = add("distill", cmd_distill, "optimize a styled SVG against a prior")
    _style_args(p)
    _prior_args(p)
    _sds_args(p, steps=1000)
    p.add_argument("--mode", default="scratch", choices=[m.value for m in pipeline.Mode])
    p.add_argument("--k", type=int, default=pipeline.DEFAULT_K)
    p.add_argument("--live-iters", type=int, default=live.DEFAULT_ITERS)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--trace", help="CSV loss trace path")
    p.add_argument("--out")

    p = add("sample", cmd_sample, "draw a DDIM sample from a prior")
    _prior_args(p)
    p.add_argument("--steps", type=int, default=diffusion.DEFAULT_SAMPLING_STEPS)
    p.add_argument("--guidance", type=float, default=diffusion.DEFAULT_GUIDANCE)
    p.add_argument("--out", required=True)

    p = add("train-prior", cmd_train_prior, "train a TinyDenoiser checkpoint")
    p.add_argument("dataset", help=".npz with images/labels, or a folder of label subfolders")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--out", required=True)

    p = add("pixel-fit", cmd_pixel_fit, "closed-form pixel-art fit of an image")
    p.add_argument("image")
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--norm", default="l1", choices=["l1", "l2"])
    p.add_argument("--out")

    p = add("eval", cmd_eval, "R-precision and mean similarity of a score table")
    p.add_argument("--scores", required=True)

    p = add("render", cmd_render, "rasterize an SVG from the supported subset")
    p.add_argument("svg")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=0)
    p.add_argument("--aa-width", type=float, default=0.8)

    p = add("sweep", cmd_sweep, "best-of-K reranking over a prompt list")
    _style_args(p)
    _prior_args(p)
    _sds_args(p, steps=1000)
    p.add_argument("--prompts", required=True)
    p.add_argument("--k", default=",".join(str(k) for k in pipeline.K_SWEEP))
    p.add_argument("--sample-steps", type=int, default=diffusion.DEFAULT_SAMPLING_STEPS)
    p.add_argument("--distill-steps", type=int, default=0)
    p.add_argument("--out-dir")
    p.add_argument("--out")
    return ap


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        values = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        parser.error(f"config {args.config}: {e}")
    known = vars(args)
    unknown = sorted(set(values) - set(known))
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    # re-parse so explicit flags override config values
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
