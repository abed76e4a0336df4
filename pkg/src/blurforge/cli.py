"""Command-line pipeline driver.

Every subcommand takes -o/--out, writes its artifacts there, and drops exactly
one JSON run manifest alongside them (out + ".manifest.json", or manifest.json
inside directory outputs). Exit codes: 0 success, 1 argument error, 2 format
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import baselines, dataset, flow, imgcore, linepred, metrics
from .errors import ArgumentError, FormatError, NumericalError
from .fit import FitConfig, fit_line_field

EXIT_OK = 0
EXIT_ARGUMENT = 1
EXIT_FORMAT = 2
EXIT_NUMERICAL = 3

IMAGE_EXTENSIONS = (".pfm", ".ppm", ".pgm", ".pnm")


class _CliParser(argparse.ArgumentParser):
    # raise instead of sys.exit so dispatch can map usage errors to exit code 1
    def error(self, message):
        raise ArgumentError(message)


def _worker_count() -> int:
    raw = os.environ.get("BLURFORGE_THREADS", "0")
    try:
        count = int(raw)
    except ValueError:
        raise ArgumentError(f"BLURFORGE_THREADS must be an integer, got {raw!r}")
    if count <= 0:
        return os.cpu_count() or 1
    return count


def _parse_velocity(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ArgumentError(f"velocity must be 'vx,vy', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ArgumentError(f"velocity must be numeric, got {text!r}")


def _list_frames(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise ArgumentError(f"not a directory: {directory}")
    names = sorted(
        name
        for name in os.listdir(directory)
        if os.path.splitext(name)[1].lower() in IMAGE_EXTENSIONS
    )
    if not names:
        raise ArgumentError(f"no image files in {directory}")
    return [os.path.join(directory, name) for name in names]


def _write_manifest(command: str, args_ns, inputs, outputs, out_path, started, argv):
    manifest = {
        "command": command,
        "argv": list(argv),
        "inputs": list(inputs),
        "params": {
            k: v for k, v in sorted(vars(args_ns).items()) if k not in ("func", "command")
        },
        "outputs": list(outputs),
        "wall_time_ms": (time.perf_counter() - started) * 1000.0,
    }
    if os.path.isdir(out_path):
        path = os.path.join(out_path, "manifest.json")
    else:
        path = out_path + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return path


def _flow_args(parser):
    parser.add_argument("--levels", type=int, default=flow.DEFAULT_LEVELS)
    parser.add_argument("--radius", type=int, default=flow.DEFAULT_RADIUS)
    parser.add_argument("--flow-iters", type=int, default=flow.DEFAULT_ITERATIONS)


def _estimate(a, b, args):
    return flow.estimate_flow(
        a, b, levels=args.levels, radius=args.radius, iterations=args.flow_iters
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_render(args):
    i1 = imgcore.read_image(args.image1)
    i2 = imgcore.read_image(args.image2)
    lf = linepred.load_line_field(args.field)
    imgcore.write_image(args.out, linepred.render(i1, i2, lf))
    return [args.image1, args.image2, args.field], [args.out]


def _cmd_blur_flow(args):
    i1 = imgcore.read_image(args.image1)
    i2 = imgcore.read_image(args.image2)
    inputs = [args.image1, args.image2]
    if args.estimate:
        fwd = _estimate(i1, i2, args)
        bwd = _estimate(i2, i1, args)
    else:
        if not args.flow_fwd or not args.flow_bwd:
            raise ArgumentError("provide --flow-fwd and --flow-bwd, or pass --estimate")
        fwd = flow.read_flo(args.flow_fwd)
        bwd = flow.read_flo(args.flow_bwd)
        inputs += [args.flow_fwd, args.flow_bwd]
    mode = (
        baselines.MODE_NEGATIVE_BACKWARD if args.mode == "negback" else baselines.MODE_FORWARD
    )
    out = baselines.blur_from_flow(i1, i2, fwd, bwd, mode=mode, n=args.samples)
    imgcore.write_image(args.out, out)
    return inputs, [args.out]


def _cmd_fit(args):
    i1 = imgcore.read_image(args.image1)
    i2 = imgcore.read_image(args.image2)
    target = imgcore.read_image(args.target)
    cfg = FitConfig(
        iterations=args.iterations,
        step_size=args.step,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.adam_eps,
        charbonnier_eps=args.charbonnier_eps,
        n_samples=args.samples,
        init=args.init.replace("-", "_"),
        weight_mode=args.weight_mode,
        normalization=args.normalization,
    )
    init_flows = None
    inputs = [args.image1, args.image2, args.target]
    if args.flow_fwd and args.flow_bwd:
        init_flows = (flow.read_flo(args.flow_fwd), flow.read_flo(args.flow_bwd))
        inputs += [args.flow_fwd, args.flow_bwd]
    result = fit_line_field(i1, i2, target, cfg, init_flows=init_flows)
    linepred.save_line_field(args.out, result.field)
    trace_path = args.trace or args.out + ".trace.csv"
    with open(trace_path, "w") as fh:
        fh.write(result.trace_csv())
    print(f"final_loss={result.final_loss:.6g} final_psnr={result.final_psnr:.4f}")
    return inputs, [args.out, trace_path]


def _cmd_filter(args):
    paths = _list_frames(args.frames)
    if len(paths) < 3:
        raise ArgumentError(f"need at least 3 frames, got {len(paths)}")
    frames = [imgcore.read_image(p) for p in paths]
    thresholds = dataset.FilterThresholds()

    def evaluate(i):
        report = dataset.filter_triplet(frames[i], frames[i + 1], frames[i + 2], thresholds)
        triplet_id = os.path.splitext(os.path.basename(paths[i]))[0]
        return triplet_id, report

    indices = range(len(frames) - 2)
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, indices))
    else:
        results = [evaluate(i) for i in indices]
    results.sort(key=lambda item: item[0])
    lines = [report.to_record(tid) for tid, report in results]
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return paths, [args.out]


def _cmd_average(args):
    paths = _list_frames(args.frames)
    frames = [imgcore.read_image(p) for p in paths]
    imgcore.write_image(args.out, dataset.average_frames(frames))
    return paths, [args.out]


def _cmd_gen_scene(args):
    spec = dataset.SceneSpec(
        width=args.width,
        height=args.height,
        frame_count=args.frames,
        velocity=_parse_velocity(args.velocity),
        sprite_size=args.sprite_size,
        sprite_shape=args.sprite_shape,
        background_seed=args.bg_seed,
        sprite_seed=args.sprite_seed,
    )
    scene = dataset.gen_scene(spec, substeps=args.substeps)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for k, frame in enumerate(scene.sequence):
        path = os.path.join(args.out, "%06d.%s" % (k, args.format))
        imgcore.write_image(path, frame)
        outputs.append(path)
    for k, f in enumerate(scene.exact_flows):
        path = os.path.join(args.out, "flow_%06d.flo" % k)
        flow.write_flo(path, f)
        outputs.append(path)
    print(f"wrote {len(scene.sequence.frames)} frames and {len(scene.exact_flows)} flows")
    return [], outputs


def _cmd_eval(args):
    ref = imgcore.read_image(args.reference)

    def evaluate(path):
        img = imgcore.read_image(path)
        return os.path.basename(path), metrics.psnr(ref, img), metrics.ssim(ref, img)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, args.images))
    else:
        rows = [evaluate(p) for p in args.images]
    rows.sort(key=lambda row: row[0])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["name", "psnr", "ssim"])
    for name, p, s in rows:
        writer.writerow([name, "inf" if math.isinf(p) else f"{p:.6f}", f"{s:.6f}"])
    text = buf.getvalue()
    with open(args.out, "w", newline="") as fh:
        fh.write(text)
    print(text, end="")
    return [args.reference] + list(args.images), [args.out]


def _cmd_check_sampling(args):
    lf = linepred.load_line_field(args.field)
    report = linepred.check_sampling(lf)
    text = (
        f"max_displacement={report.max_displacement:.6g} "
        f"min_required_samples={report.min_required_samples} "
        f"n_samples={lf.n_samples} "
        f"undersampled={int(report.undersampled)}\n"
    )
    with open(args.out, "w") as fh:
        fh.write(text)
    print(text, end="")
    return [args.field], [args.out]


def build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="blurforge", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("render", parents=[], help="render a line field over an image pair")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("field", help="LPF1 line-field file")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("blur-flow", help="uniform-weight motion blur from flow fields")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--flow-fwd", help=".flo file, image1 -> image2")
    p.add_argument("--flow-bwd", help=".flo file, image2 -> image1")
    p.add_argument("--estimate", action="store_true", help="estimate flows instead")
    p.add_argument("--mode", choices=["forward", "negback"], default="negback")
    p.add_argument("--samples", type=int, default=baselines.DEFAULT_SAMPLES)
    _flow_args(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_blur_flow)

    p = sub.add_parser("fit", help="fit a line field to a target blur")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("target")
    p.add_argument("-o", "--out", required=True, help="output LPF1 path")
    p.add_argument("--trace", help="loss trace CSV path (default: OUT.trace.csv)")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.998)
    p.add_argument("--adam-eps", type=float, default=1e-8)
    p.add_argument("--charbonnier-eps", type=float, default=1e-3)
    p.add_argument("--samples", type=int, default=17)
    p.add_argument("--init", choices=["zeros", "from-flows"], default="zeros")
    p.add_argument("--weight-mode", choices=["softplus", "uniform"], default="softplus")
    p.add_argument("--normalization", choices=["off", "global"], default="off")
    p.add_argument("--flow-fwd", help=".flo for from-flows init")
    p.add_argument("--flow-bwd", help=".flo for from-flows init")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("filter", help="run the triplet filter over a frame directory")
    p.add_argument("frames", help="directory of numbered frames")
    p.add_argument("-o", "--out", required=True, help="records file")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("average", help="average a directory of frames")
    p.add_argument("frames", help="directory of numbered frames")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_average)

    p = sub.add_parser("gen-scene", help="generate a synthetic sprite scene")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--substeps", type=int, default=16)
    p.add_argument("--velocity", default="8,0", help="per-step velocity 'vx,vy'")
    p.add_argument("--sprite-size", type=int, default=24)
    p.add_argument("--sprite-shape", choices=list(dataset.SPRITE_SHAPES), default="square")
    p.add_argument("--bg-seed", type=int, default=1)
    p.add_argument("--sprite-seed", type=int, default=2)
    p.add_argument("--format", choices=["pfm", "ppm"], default="pfm")
    p.set_defaults(func=_cmd_gen_scene)

    p = sub.add_parser("eval", help="PSNR/SSIM of images against a reference")
    p.add_argument("reference")
    p.add_argument("images", nargs="+")
    p.add_argument("-o", "--out", required=True, help="CSV output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("check-sampling", help="sampling-density report for a line field")
    p.add_argument("field", help="LPF1 line-field file")
    p.add_argument("-o", "--out", required=True, help="report text file")
    p.set_defaults(func=_cmd_check_sampling)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_ARGUMENT
        inputs, outputs = args.func(args)
        _write_manifest(args.command, args, inputs, outputs, args.out, started, argv)
        return EXIT_OK
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
