"""Command-line surface: stats | calibrate | infer | sweep | report | demo.

All randomness flows from --seed (default 0). Reports are JSON with sorted
keys so reruns diff cleanly. GDQ_THREADS caps in-process parallelism.
Exit codes: 0 success, 2 missing/unreadable input artifact, 3 run failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .e2b import (
    CalibratedThresholds,
    E2BConfig,
    calibrate_thresholds,
    load_thresholds,
    resolve_thresholds,
    save_thresholds,
)
from .entropy import (
    EntropyConfig,
    EntropyStats,
    entropy_histogram,
    load_stats,
    patch_entropy,
    save_stats,
)
from .gbc import load_gbc, save_gbc, seeded_gbc
from .image_io import load_image, save_image, to_luma
from .metrics import l1_loss, psnr, ssim
from .parallel import parallel_map
from .patches import extract_patches, stitch_patches
from .plan import PatchPlan
from .srnet import SrArch, forward_float, load_model, run_pipeline, save_model, seeded_model

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_RUN_FAILURE = 3


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _entropy_config(args) -> EntropyConfig:
    interpretation = "bin_wise" if args.entropy_mode == "bin" else "pixel_wise"
    return EntropyConfig(bins=args.bins, sigma=args.sigma, interpretation=interpretation)


def _corpus_files(directory: Path) -> list[Path]:
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise FileNotFoundError(f"{directory}: no PNG/PPM/PGM images found")
    return files


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _add_entropy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", type=int, default=256, help="entropy histogram bins")
    p.add_argument("--sigma", type=float, default=None,
                   help="entropy kernel bandwidth (default: one bin width)")
    p.add_argument("--entropy-mode", choices=("bin", "pixel"), default="bin",
                   help="per-bin (default) or literal per-pixel density entropy")


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    corpus = _require(Path(args.corpus), "corpus directory")
    cfg = _entropy_config(args)
    entropies: list[float] = []
    total_patches = 0
    for path in _corpus_files(corpus):
        img = load_image(path)
        _, tiles = extract_patches(img, args.patch_size, args.overlap)
        entropies.extend(parallel_map(lambda t: patch_entropy(t, cfg), tiles))
        total_patches += len(tiles)
    stats = EntropyStats.from_entropies(entropies, cfg)
    out = Path(args.out)
    save_stats(out, stats)
    edges, counts = entropy_histogram(stats, args.hist_bins)
    hist_csv = Path(args.hist) if args.hist else out.with_name(out.stem + "_hist.csv")
    rpt.write_histogram_csv(hist_csv, edges, counts)
    fig_path = Path(args.fig) if args.fig else out.with_name(out.stem + "_hist.png")
    rpt.render_entropy_histogram(fig_path, edges, counts)
    print(
        f"stats: {total_patches} patches, entropy range "
        f"[{stats.h_min:.4f}, {stats.h_max:.4f}] nats -> {out}, {hist_csv}, {fig_path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    stats = load_stats(_require(Path(args.stats), "stats file"))
    cfg = E2BConfig(thresholds=_parse_floats(args.t), bit_codes=_parse_ints(args.bits),
                    gamma=args.gamma)
    trace: list | None = [] if args.trace else None
    thr = calibrate_thresholds(stats, cfg, batch_size=args.batch_size,
                               select=args.atc_select, trace=trace)
    if trace is not None:
        for iteration, fractions in trace:
            print(f"iter {iteration}: " + " ".join(f"{f:.6f}" for f in fractions))
    save_thresholds(args.out, thr)
    cut = ", ".join(f"{c:.4f}" for c in thr.cutoffs)
    print(f"calibrate: {thr.iterations} iterations, cutoffs [{cut}] nats -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _resolved_config(args, e2b_cfg, entropy_cfg) -> dict:
    return {
        "command": "infer",
        "model": str(args.model),
        "gbc": None if args.gbc is None else str(args.gbc),
        "thresholds": None if args.thresholds is None else str(args.thresholds),
        "input": str(args.input),
        "output": str(args.out),
        "report": str(args.report),
        "patch_size": args.patch_size,
        "overlap": args.overlap,
        "force_bit": args.force_bit,
        "deterministic": args.deterministic,
        "seed": args.seed,
        "entropy": entropy_cfg.to_dict(),
        "e2b": None if e2b_cfg is None else e2b_cfg.to_dict(),
    }


def cmd_infer(args) -> int:
    model = load_model(_require(Path(args.model), "model"))
    entropy_cfg = _entropy_config(args)
    gbc_model = None
    thresholds = None
    e2b_cfg = None
    if args.force_bit is None:
        gbc_model = load_gbc(_require(Path(args.gbc), "controller")) if args.gbc else None
        if gbc_model is None:
            raise FileNotFoundError("missing controller: pass --gbc or use --force-bit")
        if not args.thresholds:
            raise FileNotFoundError("missing thresholds: pass --thresholds or use --force-bit")
        thresholds = load_thresholds(_require(Path(args.thresholds), "thresholds"))
        e2b_cfg = E2BConfig(thresholds=thresholds.fractions,
                            bit_codes=_parse_ints(args.bits), gamma=thresholds.gamma)
    image = load_image(_require(Path(args.input), "input image"))

    sr, plans, bundle = run_pipeline(
        model, gbc_model, thresholds, image,
        e2b_cfg=e2b_cfg or E2BConfig(),
        entropy_cfg=entropy_cfg,
        patch_size=args.patch_size,
        overlap=args.overlap,
        deterministic=args.deterministic,
        seed=args.seed,
        force_bit=args.force_bit,
    )
    if args.ref:
        ref = load_image(_require(Path(args.ref), "reference image"))
        if ref.shape != sr.shape:
            raise ValueError(f"reference shape {ref.shape} != output shape {sr.shape}")
        bundle.psnr_db = psnr(to_luma(sr), to_luma(ref))
        bundle.ssim = ssim(sr, ref)
        bundle.l1 = l1_loss(sr, ref)
    save_image(args.out, sr)
    report = {"config": _resolved_config(args, e2b_cfg, entropy_cfg)}
    report.update(bundle.to_report_dict(plans))
    Path(args.report).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    extra = "" if bundle.psnr_db is None else f", psnr {bundle.psnr_db:.2f} dB"
    print(
        f"infer: {len(plans)} patches, fab {bundle.fab:.2f}, "
        f"bitops ratio {bundle.bitops_ratio:.4f}{extra} -> {args.out}, {args.report}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _parse_sweep_config(text: str) -> tuple[tuple[float, ...], tuple[int, ...]]:
    try:
        t_part, b_part = text.split(":")
        return _parse_floats(t_part), _parse_ints(b_part)
    except ValueError as exc:
        raise ValueError(
            f"bad sweep config {text!r}; expected 't1,t2:b1,b2,b3'"
        ) from exc


def cmd_sweep(args) -> int:
    corpus = _corpus_files(_require(Path(args.corpus), "corpus directory"))
    model = load_model(_require(Path(args.model), "model"))
    gbc_model = load_gbc(_require(Path(args.gbc), "controller"))
    stats = load_stats(_require(Path(args.stats), "stats file"))
    entropy_cfg = stats.config
    configs = [_parse_sweep_config(c) for c in (args.config or ["0.5,0.9:4,5,8"])]

    images = [load_image(p) for p in corpus]
    refs = []
    for path, img in zip(corpus, images):
        if args.ref_dir:
            ref_path = Path(args.ref_dir) / path.name
            refs.append(load_image(_require(ref_path, "reference image")))
        else:
            # no ground truth: score against the full-precision model's output
            grid, tiles = extract_patches(img, args.patch_size)
            float_tiles = parallel_map(lambda t: forward_float(model, t), tiles)
            refs.append(stitch_patches(grid, float_tiles, model.arch.scale).astype(np.float32))

    rows = []
    for fractions, codes in configs:
        label = ",".join(f"{f:g}" for f in fractions) + ":" + ",".join(str(b) for b in codes)
        try:
            cfg = E2BConfig(thresholds=fractions, bit_codes=codes, gamma=args.gamma)
            thr = resolve_thresholds(stats, cfg)
            all_plans, psnrs, ssims, ratios = [], [], [], []
            for img, ref in zip(images, refs):
                sr, plans, bundle = run_pipeline(
                    model, gbc_model, thr, img,
                    e2b_cfg=cfg, entropy_cfg=entropy_cfg,
                    patch_size=args.patch_size, deterministic=True, seed=args.seed,
                )
                all_plans.extend(plans)
                psnrs.append(psnr(to_luma(sr), to_luma(ref)))
                ssims.append(ssim(sr, ref))
                ratios.append(bundle.bitops_ratio)
            rows.append({
                "config": label,
                "fab": f"{np.mean([p.final_bit for p in all_plans]):.4f}",
                "psnr_db": f"{np.mean(psnrs):.4f}",
                "ssim": f"{np.mean(ssims):.6f}",
                "bitops_ratio": f"{np.mean(ratios):.6f}",
                "status": "ok",
            })
        except Exception as exc:  # failed rows are marked, the sweep continues
            rows.append({"config": label, "status": f"error: {exc}"})
    rpt.write_sweep_csv(args.out, rows)
    fig_path = Path(args.fig) if args.fig else Path(args.out).with_suffix(".png")
    rpt.render_sweep_tradeoff(fig_path, rows)
    print(f"sweep: {len(rows)} configs -> {args.out}, {fig_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    data = json.loads(_require(Path(args.report), "report file").read_text())
    plans = [PatchPlan.from_dict(d) for d in data.get("per_patch", [])]
    if not plans:
        raise ValueError(f"{args.report}: no per-patch entries to render")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    patch_size = int(data.get("config", {}).get("patch_size", 96))
    rpt.write_per_patch_csv(outdir / "per_patch.csv", plans)
    rpt.render_bit_map(outdir / "bit_map.png", plans, patch_size)
    rpt.render_bit_histogram(outdir / "bit_hist.png", plans)
    entropies = [p.entropy for p in plans if p.entropy is not None]
    rendered = ["per_patch.csv", "bit_map.png", "bit_hist.png"]
    if len(entropies) >= 2:
        counts, edges = np.histogram(entropies, bins=min(30, max(5, len(entropies) // 2)))
        rpt.render_entropy_histogram(outdir / "entropy_hist.png", edges, counts)
        rendered.append("entropy_hist.png")
    fab_val = data.get("fab")
    ratio = data.get("bitops_ratio")
    print(
        f"report: {len(plans)} patches, fab {fab_val}, bitops ratio {ratio} -> "
        + ", ".join(str(outdir / name) for name in rendered)
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def _synth_image(rng: np.random.Generator, hw: tuple[int, int]) -> np.ndarray:
    """Procedural RGB test image mixing smooth and textured regions."""
    h, w = hw
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    freq = rng.uniform(2.0, 6.0, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    channels = []
    for c in range(3):
        smooth = 0.5 + 0.3 * np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy) + phase[c])
        texture = rng.normal(0.0, 0.15, (h, w))
        mask = (xx > 0.5).astype(np.float64)  # right half textured, left half smooth
        channels.append(np.clip(smooth + mask * texture, 0.0, 1.0))
    return np.stack(channels)[None].astype(np.float32)


def cmd_demo(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    model = seeded_model(args.seed, SrArch(scale=args.scale))
    save_model(outdir / "model.gdq", model)
    save_gbc(outdir / "gbc.gdq", seeded_gbc(args.seed))
    image_dir = outdir / "images"
    image_dir.mkdir(exist_ok=True)
    for i in range(args.images):
        save_image(image_dir / f"img{i:02d}.png", _synth_image(rng, (args.size, args.size)))
    print(f"demo: wrote model.gdq, gbc.gdq and {args.images} images under {outdir}")
    print("next steps:")
    print(f"  gdq stats --corpus {image_dir} --out {outdir / 'stats.json'} --patch-size 48")
    print(f"  gdq calibrate --stats {outdir / 'stats.json'} --out {outdir / 'thresholds.json'}")
    print(
        f"  gdq infer --model {outdir / 'model.gdq'} --gbc {outdir / 'gbc.gdq'} "
        f"--thresholds {outdir / 'thresholds.json'} --in {image_dir / 'img00.png'} "
        f"--out {outdir / 'sr.png'} --report {outdir / 'run.json'} --patch-size 48"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdq",
        description="Patch-wise, layer-invariant dynamic quantization for SR inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus entropy statistics + histogram")
    p.add_argument("--corpus", required=True, help="directory of LR images")
    p.add_argument("--out", required=True, help="output stats JSON")
    p.add_argument("--hist", default=None, help="histogram CSV (default: <out>_hist.csv)")
    p.add_argument("--fig", default=None, help="histogram figure (default: <out>_hist.png)")
    p.add_argument("--hist-bins", type=int, default=50)
    p.add_argument("--patch-size", type=int, default=96)
    p.add_argument("--overlap", type=int, default=0)
    _add_entropy_args(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("calibrate", help="drift + resolve entropy thresholds")
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True, help="output thresholds JSON")
    p.add_argument("--t", default="0.5,0.9", help="threshold fractions")
    p.add_argument("--bits", default="4,5,8", help="refinement bit codes")
    p.add_argument("--gamma", type=float, default=0.9997)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--atc-select", choices=("per-patch-sequential", "batch-mean"),
                   default="per-patch-sequential")
    p.add_argument("--trace", action="store_true", help="log the fraction trajectory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("infer", help="quantized SR inference on one image")
    p.add_argument("--model", required=True)
    p.add_argument("--gbc", default=None)
    p.add_argument("--thresholds", default=None)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output SR image")
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--ref", default=None, help="HR reference for PSNR/SSIM/L1")
    p.add_argument("--force-bit", type=int, default=None,
                   help="uniform bit, bypassing controller and refinement")
    p.add_argument("--deterministic", action="store_true", default=True)
    p.add_argument("--stochastic", dest="deterministic", action="store_false",
                   help="Gumbel-perturbed gate sampling")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=int, default=96)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--bits", default="4,5,8", help="refinement bit codes")
    _add_entropy_args(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="ablation grid over threshold/bit configs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--gbc", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--fig", default=None, help="trade-off figure (default: <out>.png)")
    p.add_argument("--config", action="append",
                   help="grid point 't1,t2:b1,b2,b3' (repeatable)")
    p.add_argument("--gamma", type=float, default=0.9997)
    p.add_argument("--ref-dir", default=None, help="HR references matched by filename")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=int, default=96)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render figures + CSV from a run report")
    p.add_argument("--report", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo", help="write seeded model/controller/images to try the pipeline")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--size", type=int, default=96, help="demo image side length")
    p.add_argument("--images", type=int, default=3)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"gdq {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except Exception as exc:
        print(f"gdq {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
