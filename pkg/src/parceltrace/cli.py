"""Command-line interface tying the pipeline stages together.

Every stage reads and writes plain files, so runs can be resumed, diffed,
and cross-checked against the external trainer. Exit codes: 0 success,
1 validation/usage error, 2 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .codecs import (
    load_binary_png,
    load_class_png,
    load_gray,
    load_instance_png,
    read_cbt,
    read_world_file,
    save_class_png,
    save_gray,
    save_instance_png,
)
from .errors import CodecError, ParcelTraceError, ValidationError
from .filters import FilterKind, apply_filter
from .losses import LossConfig, LossKind, OneHotTarget, loss_eval
from .manifest import RunManifest, digest_into
from .maskgen import MaskConfig, build_semantic_mask
from .metrics import EvalConfig, evaluate, select_buffers
from .raster import BinaryRaster, ClassMask, GrayRaster, TileGrid, stitch, tile
from .segment import (
    BASELINE_THRESHOLD,
    baseline_segment,
    ingest_predictions,
    synth_scene,
    tile_filename,
)
from .shapefile import read_shapefile, write_geojson, write_shapefile
from .skeletonize import apply_georef, boundary_mask, thin, trace_polylines, write_boundary_png

FILTER_CHOICES = [k.value for k in FilterKind]
LOSS_CHOICES = [k.value for k in LossKind]

# Fixed overlay colors: detected-only, reference-only, agreement.
DETECTED_COLOR = (255, 0, 0)
REFERENCE_COLOR = (0, 0, 255)
AGREEMENT_COLOR = (0, 255, 0)


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise CliUsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def max_workers() -> int:
    """Parallelism cap for per-tile stages (PARCEL_TRACE_THREADS)."""
    env = os.environ.get("PARCEL_TRACE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValidationError(f"PARCEL_TRACE_THREADS={env!r} is not an integer") from exc
        if n < 1:
            raise ValidationError("PARCEL_TRACE_THREADS must be >= 1")
        return n
    return min(4, os.cpu_count() or 1)


def emit_overlay(
    img: GrayRaster,
    detected: BinaryRaster,
    ref: BinaryRaster | None,
    path: str | Path,
) -> None:
    """RGB comparison figure: gray base, detected red, reference blue, agreement green."""
    if detected.data.shape != img.data.shape:
        raise ValidationError(
            f"emit_overlay: size mismatch, image {img.data.shape} vs detected {detected.data.shape}"
        )
    if ref is not None and ref.data.shape != img.data.shape:
        raise ValidationError(
            f"emit_overlay: size mismatch, image {img.data.shape} vs reference {ref.data.shape}"
        )
    rgb = np.stack([img.data] * 3, axis=2).astype(np.uint8)
    if ref is None:
        rgb[detected.data] = DETECTED_COLOR
    else:
        agree = detected.data & ref.data
        rgb[detected.data & ~ref.data] = DETECTED_COLOR
        rgb[ref.data & ~detected.data] = REFERENCE_COLOR
        rgb[agree] = AGREEMENT_COLOR
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_grid(path: str | Path) -> TileGrid:
    with open(path) as f:
        return TileGrid.from_dict(json.load(f))


def cmd_preprocess(args, manifest: RunManifest) -> None:
    with manifest.stage("preprocess") as rec:
        digest_into(rec, "in", args.input)
        img = load_gray(args.input)
        out = apply_filter(img, FilterKind(args.filter))
        save_gray(out, args.output)
        digest_into(rec, "out", args.output)


def cmd_makemask(args, manifest: RunManifest) -> None:
    with manifest.stage("makemask") as rec:
        digest_into(rec, "in", args.input)
        inst = load_instance_png(args.input)
        cfg = MaskConfig(buffer_px=args.buffer, allow_nonstandard_buffer=args.allow_any_buffer)
        mask, vanished = build_semantic_mask(inst, cfg)
        rec.warnings.extend(f"field {v} eroded to empty" for v in vanished)
        save_class_png(mask, args.output)
        digest_into(rec, "out", args.output)


def cmd_tile(args, manifest: RunManifest) -> None:
    with manifest.stage("tile") as rec:
        digest_into(rec, "in", args.input)
        img = load_gray(args.input)
        tiles, grid = tile(img, args.size)
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        for r in range(grid.rows):
            for c in range(grid.columns):
                p = outdir / f"tile_{r}_{c}.png"
                save_gray(tiles[r * grid.columns + c], p)
                digest_into(rec, "out", p)
        grid_path = outdir / "grid.json"
        grid_path.write_text(json.dumps(grid.to_dict(), indent=2, sort_keys=True) + "\n")
        digest_into(rec, "out", grid_path)


def cmd_stitch(args, manifest: RunManifest) -> None:
    with manifest.stage("stitch") as rec:
        grid = _load_grid(args.grid_json)
        digest_into(rec, "in", args.grid_json)
        tiles = []
        for r in range(grid.rows):
            for c in range(grid.columns):
                p = Path(args.tiles) / f"tile_{r}_{c}.png"
                if not p.exists():
                    raise FileNotFoundError(f"missing tile: {p}")
                digest_into(rec, "in", p)
                tiles.append(load_class_png(p) if args.kind == "class" else load_gray(p))
        full = stitch(tiles, grid)
        if args.kind == "class":
            save_class_png(full, args.output)
        else:
            save_gray(full, args.output)
        digest_into(rec, "out", args.output)


def cmd_segment_baseline(args, manifest: RunManifest) -> None:
    with manifest.stage("segment-baseline") as rec:
        digest_into(rec, "in", args.input)
        img = load_gray(args.input)
        mask = baseline_segment(img, threshold=args.threshold)
        save_class_png(mask, args.output)
        digest_into(rec, "out", args.output)


def cmd_ingest(args, manifest: RunManifest) -> None:
    with manifest.stage("ingest") as rec:
        grid = _load_grid(args.grid_json)
        digest_into(rec, "in", args.grid_json)
        for r in range(grid.rows):
            for c in range(grid.columns):
                p = Path(args.tiles) / tile_filename(r, c)
                if p.exists():
                    digest_into(rec, "in", p)
        mask = ingest_predictions(args.tiles, grid)
        save_class_png(mask, args.output)
        digest_into(rec, "out", args.output)


def cmd_skeletonize(args, manifest: RunManifest) -> None:
    with manifest.stage("skeletonize") as rec:
        digest_into(rec, "in", args.input)
        if args.binary:
            band = load_binary_png(args.input)
        else:
            band = boundary_mask(load_class_png(args.input))
        sk = thin(band)
        write_boundary_png(sk, args.output)
        digest_into(rec, "out", args.output)


def _vector_outputs(polylines, base: Path, fmt: str, rec) -> None:
    if fmt in ("shapefile", "both"):
        write_shapefile(polylines, base)
        digest_into(rec, "out", base.with_suffix(".shp"), base.with_suffix(".shx"), base.with_suffix(".dbf"))
    if fmt in ("geojson", "both"):
        gj = base.with_suffix(".geojson")
        write_geojson(polylines, gj)
        digest_into(rec, "out", gj)


def cmd_vectorize(args, manifest: RunManifest) -> None:
    with manifest.stage("vectorize") as rec:
        digest_into(rec, "in", args.input)
        sk = load_binary_png(args.input)
        polys = trace_polylines(sk)
        if args.world_file:
            digest_into(rec, "in", args.world_file)
            polys = apply_georef(polys, read_world_file(args.world_file))
        _vector_outputs(polys, Path(args.output), args.format, rec)


def cmd_evaluate(args, manifest: RunManifest) -> None:
    with manifest.stage("evaluate") as rec:
        digest_into(rec, "in", args.detected, args.reference)
        det = load_binary_png(args.detected)
        ref = load_binary_png(args.reference)
        cfg = EvalConfig(bf=args.bf, zone=args.zone, gsd=args.gsd, clamp_recall=not args.no_clamp)
        result = evaluate(det, ref, cfg)
        print(result.report_line())
        if args.json:
            payload = {"BF": args.bf, "gsd": args.gsd, "zone": args.zone, **result.to_dict()}
            Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            digest_into(rec, "out", args.json)


def cmd_synth(args, manifest: RunManifest) -> None:
    with manifest.stage("synth") as rec:
        img, inst = synth_scene(args.seed, args.width, args.height, args.parcels)
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        img_path = outdir / "image.png"
        inst_path = outdir / "instance.png"
        save_gray(img, img_path)
        save_instance_png(inst, inst_path)
        digest_into(rec, "out", img_path, inst_path)


def cmd_loss_eval(args, manifest: RunManifest) -> None:
    with manifest.stage("loss-eval") as rec:
        digest_into(rec, "in", args.pred, args.target)
        pred = read_cbt(args.pred)
        if not pred.probabilities:
            raise ValidationError(f"{args.pred}: prediction tensor is not normalized probabilities")
        target_raw = read_cbt(args.target, probabilities=None)
        tdata = target_raw.data
        if not np.isin(tdata, (0.0, 1.0)).all():
            raise ValidationError(f"{args.target}: target tensor is not one-hot")
        target = OneHotTarget(tdata.astype(np.uint8))
        cfg = LossConfig(
            kind=LossKind(args.kind),
            eps=args.eps,
            gamma=args.gamma,
            focal_alpha=args.focal_alpha,
            tversky_alpha=args.tversky_alpha,
            tversky_beta=args.tversky_beta,
            w_region=args.w_region,
            w_focal=args.w_focal,
        )
        print(f"{loss_eval(pred, target, cfg):.10g}")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _parse_bf_list(text: str | None, gsd: float, zone: str) -> list[int]:
    if text:
        try:
            bfs = [int(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ValidationError(f"--bf expects a comma-separated integer list, got {text!r}") from exc
        if not bfs:
            raise ValidationError("--bf list is empty")
        return bfs
    choices = select_buffers(gsd, zone)
    if not choices:
        raise ValidationError(f"no admissible BF for GSD {gsd} in zone {zone}")
    return [c.bf for c in choices[-2:]]  # the two widest admissible buffers


def cmd_pipeline(args, manifest: RunManifest) -> None:
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    evaluating = args.instance is not None
    if args.evaluate and not evaluating:
        raise ValidationError("--evaluate requires --instance to derive a reference boundary")

    with manifest.stage("preprocess") as rec:
        digest_into(rec, "in", args.input)
        original = load_gray(args.input)
        filtered = apply_filter(original, FilterKind(args.filter))
        filtered_path = outdir / "filtered.png"
        save_gray(filtered, filtered_path)
        digest_into(rec, "out", filtered_path)

    with manifest.stage("tile") as rec:
        digest_into(rec, "in", filtered_path)
        tiles, grid = tile(filtered, args.tile_size)
        tiles_dir = outdir / "tiles"
        tiles_dir.mkdir(exist_ok=True)
        for r in range(grid.rows):
            for c in range(grid.columns):
                p = tiles_dir / f"tile_{r}_{c}.png"
                save_gray(tiles[r * grid.columns + c], p)
                digest_into(rec, "out", p)
        grid_path = outdir / "grid.json"
        grid_path.write_text(json.dumps(grid.to_dict(), indent=2, sort_keys=True) + "\n")
        digest_into(rec, "out", grid_path)

    prediction_path = outdir / "prediction.png"
    if args.prediction == "baseline":
        with manifest.stage("predict-baseline") as rec:
            pred_dir = outdir / "pred_tiles"
            pred_dir.mkdir(exist_ok=True)
            with ThreadPoolExecutor(max_workers=max_workers()) as pool:
                masks = list(pool.map(lambda t: baseline_segment(t, threshold=args.threshold), tiles))
            for r in range(grid.rows):
                for c in range(grid.columns):
                    p = pred_dir / f"tile_{r}_{c}.png"
                    save_class_png(masks[r * grid.columns + c], p)
                    digest_into(rec, "out", p)
        with manifest.stage("stitch") as rec:
            loaded = [
                load_class_png(pred_dir / f"tile_{r}_{c}.png")
                for r in range(grid.rows)
                for c in range(grid.columns)
            ]
            prediction = stitch(loaded, grid)
            save_class_png(prediction, prediction_path)
            digest_into(rec, "out", prediction_path)
    else:
        with manifest.stage("ingest") as rec:
            for r in range(grid.rows):
                for c in range(grid.columns):
                    p = Path(args.prediction) / tile_filename(r, c)
                    if p.exists():
                        digest_into(rec, "in", p)
            prediction = ingest_predictions(args.prediction, grid)
            save_class_png(prediction, prediction_path)
            digest_into(rec, "out", prediction_path)

    with manifest.stage("boundary") as rec:
        digest_into(rec, "in", prediction_path)
        band = boundary_mask(prediction)
        band_path = outdir / "boundary_band.png"
        write_boundary_png(BinaryRaster(band.data), band_path)
        digest_into(rec, "out", band_path)

    with manifest.stage("thin") as rec:
        skeleton = thin(band)
        skel_path = outdir / "skeleton.png"
        write_boundary_png(skeleton, skel_path)
        digest_into(rec, "out", skel_path)

    with manifest.stage("vectorize") as rec:
        polys = trace_polylines(skeleton)
        if args.world_file:
            digest_into(rec, "in", args.world_file)
            polys = apply_georef(polys, read_world_file(args.world_file))
        _vector_outputs(polys, outdir / "boundary", args.format, rec)

    if evaluating:
        with manifest.stage("evaluate") as rec:
            digest_into(rec, "in", args.instance)
            inst = load_instance_png(args.instance)
            cfg = MaskConfig(buffer_px=args.buffer, allow_nonstandard_buffer=args.allow_any_buffer)
            ref_mask, vanished = build_semantic_mask(inst, cfg)
            rec.warnings.extend(f"field {v} eroded to empty" for v in vanished)
            reference = thin(boundary_mask(ref_mask))
            ref_path = outdir / "reference.png"
            write_boundary_png(reference, ref_path)
            digest_into(rec, "out", ref_path)
            results = {}
            for bf in _parse_bf_list(args.bf, args.gsd, args.zone):
                res = evaluate(
                    skeleton,
                    reference,
                    EvalConfig(bf=bf, zone=args.zone, gsd=args.gsd, clamp_recall=not args.no_clamp),
                )
                print(f"BF={bf} {res.report_line()}")
                results[str(bf)] = res.to_dict()
            results_path = outdir / "results.json"
            results_path.write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
            digest_into(rec, "out", results_path)
            overlay_path = outdir / "overlay.png"
            emit_overlay(original, skeleton, reference, overlay_path)
            digest_into(rec, "out", overlay_path)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="parceltrace", description=__doc__)
    parser.add_argument("--version", action="version", version=f"parceltrace {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)

    def add(name: str, func, help_: str) -> _Parser:
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file providing defaults for these flags")
        p.add_argument("--manifest", help="write a run manifest (JSON) to this path")
        return p

    p = add("preprocess", cmd_preprocess, "apply a pre-processing filter to an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--filter", choices=FILTER_CHOICES, default="none")

    p = add("makemask", cmd_makemask, "instance annotation -> three-class semantic mask")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--buffer", type=int, default=2, help="boundary band width in px (1, 2 or 5)")
    p.add_argument("--allow-any-buffer", action="store_true")

    p = add("tile", cmd_tile, "split an image into reflect-padded tiles")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True, help="output directory")
    p.add_argument("--size", type=int, default=256)

    p = add("stitch", cmd_stitch, "reassemble tiles produced by `tile`")
    p.add_argument("--tiles", required=True)
    p.add_argument("--grid-json", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--kind", choices=["gray", "class"], default="gray")

    p = add("segment-baseline", cmd_segment_baseline, "deterministic non-ML segmentation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--threshold", type=int, default=BASELINE_THRESHOLD)

    p = add("ingest", cmd_ingest, "stitch per-tile CBT predictions into a class mask")
    p.add_argument("--tiles", required=True, help="directory of tile_<row>_<col>.cbt files")
    p.add_argument("--grid-json", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = add("skeletonize", cmd_skeletonize, "thin a boundary band to a 1-px skeleton")
    p.add_argument("--in", dest="input", required=True, help="class mask PNG (or binary with --binary)")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--binary", action="store_true", help="treat input as binary (255 = foreground)")

    p = add("vectorize", cmd_vectorize, "trace a skeleton into polylines and export vectors")
    p.add_argument("--in", dest="input", required=True, help="binary skeleton PNG")
    p.add_argument("--out", dest="output", required=True, help="output base path (no extension)")
    p.add_argument("--format", choices=["shapefile", "geojson", "both"], default="shapefile")
    p.add_argument("--world-file", help="6-line affine sidecar for pixel->world mapping")

    p = add("evaluate", cmd_evaluate, "buffered precision/recall/F-score")
    p.add_argument("--detected", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--bf", type=int, required=True, help="reference buffer width in px")
    p.add_argument("--gsd", type=float, default=0.72)
    p.add_argument("--zone", choices=["rural", "urban"], default="rural")
    p.add_argument("--no-clamp", action="store_true", help="report recall above 1 unclamped")
    p.add_argument("--json", help="also write the result as JSON")

    p = add("synth", cmd_synth, "generate a synthetic farmland scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--parcels", type=int, default=6)
    p.add_argument("--out", dest="output", required=True, help="output directory")

    p = add("loss-eval", cmd_loss_eval, "evaluate a segmentation loss on CBT tensors")
    p.add_argument("--kind", choices=LOSS_CHOICES, required=True)
    p.add_argument("--pred", required=True, help="probability tensor (CBT)")
    p.add_argument("--target", required=True, help="one-hot target tensor (CBT)")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--focal-alpha", type=float, default=1.0)
    p.add_argument("--tversky-alpha", type=float, default=0.3)
    p.add_argument("--tversky-beta", type=float, default=0.7)
    p.add_argument("--w-region", type=float, default=1.0)
    p.add_argument("--w-focal", type=float, default=1.0)

    p = add("pipeline", cmd_pipeline, "run the full boundary-delineation pipeline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True, help="output directory")
    p.add_argument("--instance", help="instance annotation; enables evaluation")
    p.add_argument("--filter", choices=FILTER_CHOICES, default="none")
    p.add_argument("--tile-size", type=int, default=256)
    p.add_argument("--buffer", type=int, default=2, help="semantic-mask boundary buffer (px)")
    p.add_argument("--allow-any-buffer", action="store_true")
    p.add_argument("--prediction", default="baseline", help='"baseline" or a directory of CBT tiles')
    p.add_argument("--threshold", type=int, default=BASELINE_THRESHOLD)
    p.add_argument("--evaluate", action="store_true", help="require evaluation (needs --instance)")
    p.add_argument("--bf", help="comma-separated BF list; default: two widest admissible")
    p.add_argument("--gsd", type=float, default=0.72)
    p.add_argument("--zone", choices=["rural", "urban"], default="rural")
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--format", choices=["shapefile", "geojson", "both"], default="shapefile")
    p.add_argument("--world-file")

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    try:
        # --config provides defaults; explicit flags still win.
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            with open(known.config) as f:
                overrides = json.load(f)
            if not isinstance(overrides, dict):
                raise ValidationError(f"{known.config}: config must be a JSON object")
            for sp in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
                sp.set_defaults(**overrides)

        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        manifest = RunManifest(
            config={k: v for k, v in vars(args).items() if k not in ("func",)},
            version=__version__,
        )
        args.func(args, manifest)
        if getattr(args, "manifest", None):
            manifest.write(args.manifest)
        elif args.command == "pipeline":
            manifest.write(Path(args.output) / "manifest.json")
        return 0
    except CliUsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CodecError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParcelTraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
