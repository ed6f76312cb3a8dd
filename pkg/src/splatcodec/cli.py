"""Command-line front end.

Subcommands: encode, decode, info, render, metrics, rd-sweep, synth.
Exit codes: 0 success, 1 usage error, 2 data error. Output files are
written atomically (temp file + rename), so failed runs leave nothing
behind.

Encode settings come from flags and optionally a plain-text config file
of `key = value` lines (same names as the long flags, dashes or
underscores interchangeable); flags win on conflict.
"""

import argparse
import concurrent.futures
import os
import sys
import tempfile

import numpy as np

from . import container, metrics, render, synth
from ._bitio import BitstreamError
from .model import ModelFormatError, load_model, write_model


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _atomic_write_bytes(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_CONFIG_KEYS = {
    "mode": str,
    "j_uni": int,
    "j_low": int,
    "j_high": int,
    "v_percent": float,
    "tau1": float,
    "q_ac": float,
    "q_dc": float,
    "q_op": float,
    "cov_mode": str,
    "k_rot": int,
    "k_scale": int,
    "seed": int,
}


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise UsageError(
                    "%s:%d: expected key = value" % (path, lineno)
                )
            key, _, raw = body.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip()
            if key not in _CONFIG_KEYS:
                raise UsageError(
                    "%s:%d: unknown config key %r" % (path, lineno, key)
                )
            try:
                values[key] = _CONFIG_KEYS[key](raw)
            except ValueError:
                raise UsageError(
                    "%s:%d: bad value %r for %s" % (path, lineno, raw, key)
                ) from None
    return values


def _add_encode_flags(sub, with_q_ac):
    sub.add_argument("--config", help="key = value settings file")
    sub.add_argument("--mode", choices=container.VOX_MODES)
    sub.add_argument("--j-uni", type=int, dest="j_uni")
    sub.add_argument("--j-low", type=int, dest="j_low")
    sub.add_argument("--j-high", type=int, dest="j_high")
    sub.add_argument("--v-percent", type=float, dest="v_percent")
    sub.add_argument("--tau1", type=float)
    if with_q_ac:
        sub.add_argument("--q-ac", type=float, dest="q_ac")
    sub.add_argument("--q-dc", type=float, dest="q_dc")
    sub.add_argument("--q-op", type=float, dest="q_op")
    sub.add_argument("--cov", choices=container.COV_MODES,
                     dest="cov_mode")
    sub.add_argument("--k-rot", type=int, dest="k_rot")
    sub.add_argument("--k-scale", type=int, dest="k_scale")
    sub.add_argument("--seed", type=int)


def _merged_values(args):
    """Config-file settings with command-line flags layered on top."""
    values = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _make_config(values):
    try:
        return container.EncodeConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _parse_background(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("background must be r,g,b")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError("background must be numeric r,g,b") from None


def _write_ppm_atomic(img, path):
    pix = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    head = b"P6\n%d %d\n255\n" % (img.width, img.height)
    _atomic_write_bytes(path, head + pix.tobytes())


def cmd_encode(args):
    cfg = _make_config(_merged_values(args))
    cloud = load_model(args.input)
    blob, summary = container.encode(cloud, cfg)
    _atomic_write_bytes(args.output, blob)
    print("wrote %s (%d bytes, %d bits)"
          % (args.output, summary["total_bytes"],
             summary["total_bytes"] * 8))
    print("source gaussians: %d" % summary["n_source"])
    print("leaves: %d" % summary["m_leaves"])
    for name, size in summary["sections"].items():
        print("section %s: %d bytes" % (name, size))
    print("wall time: %.3f s" % summary["seconds"])
    return 0


def cmd_decode(args):
    with open(args.input, "rb") as fh:
        blob = fh.read()
    cloud = container.decode(blob)
    _atomic_write_bytes(args.output, write_model(cloud))
    print("wrote %s (%d gaussians)" % (args.output, cloud.count))
    return 0


def cmd_info(args):
    with open(args.input, "rb") as fh:
        blob = fh.read()
    header = container.info(blob)
    print("container version %d" % header["version"])
    print("voxelization: %s (j_low %d, j_high %d)"
          % (header["mode"], header["j_low"], header["j_high"]))
    print("cube origin: %.17g %.17g %.17g  side: %.17g"
          % (*header["origin"], header["side"]))
    print("quant steps: q_dc %g  q_ac %g  q_op %g"
          % (header["q_dc"], header["q_ac"], header["q_op"]))
    print("covariance: %s (k_rot %d, k_scale %d, seed %d)"
          % (header["cov_mode"], header["k_rot"], header["k_scale"],
             header["seed"]))
    print("source gaussians: %d" % header["n_source"])
    print("leaves: %d" % header["m_leaves"])
    for section in header["sections"]:
        print("section %s: offset %d, %d bytes"
              % (section["kind"], section["offset"], section["bytes"]))
    return 0


def cmd_render(args):
    background = _parse_background(args.background)
    cloud = load_model(args.model)
    cameras = render.load_cameras(args.cameras)
    if not cameras:
        raise ValueError("camera file %s holds no cameras" % args.cameras)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, cam in enumerate(cameras):
        img = render.render(cloud, cam, background=background,
                            threads=args.threads)
        path = os.path.join(args.out_dir, "%s%03d.ppm" % (args.prefix, i))
        _write_ppm_atomic(img, path)
        print("wrote %s" % path)
    return 0


def cmd_metrics(args):
    if not args.psnr and not args.bd:
        raise UsageError("metrics needs --psnr and/or --bd")
    if args.psnr:
        a = render.read_ppm(args.psnr[0])
        b = render.read_ppm(args.psnr[1])
        print("psnr: %.6f dB" % metrics.psnr(a, b))
    if args.bd:
        ref = metrics.read_rd_csv(args.bd[0])
        test = metrics.read_rd_csv(args.bd[1])
        bd_rate, bd_psnr = metrics.bd_metrics(ref, test)
        print("bd_rate: %+.4f %%" % bd_rate)
        print("bd_psnr: %+.4f dB" % bd_psnr)
    return 0


def _sweep_point(vox, cfg, n_source, q_ac, cameras, refs, threads):
    blob = container.reencode_attributes(vox, cfg, n_source, q_ac,
                                         q_dc=cfg.q_dc, q_op=cfg.q_op)
    decoded = container.decode(blob)
    _, mean_psnr = metrics.test_loss(decoded, cameras, refs,
                                     threads=threads)
    return len(blob) * 8, mean_psnr


def cmd_rd_sweep(args):
    try:
        q_list = [float(q) for q in args.q_grid.split(",") if q]
    except ValueError:
        raise UsageError("--q-ac expects a comma-separated float list") \
            from None
    if not q_list:
        raise UsageError("--q-ac expects at least one value")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise UsageError("--modes expects at least one mode")
    for mode in modes:
        if mode not in container.VOX_MODES:
            raise UsageError("unknown voxelization mode %r" % mode)
    base = _merged_values(args)
    cloud = load_model(args.input)
    cameras = render.load_cameras(args.cameras)
    if not cameras:
        raise ValueError("camera file %s holds no cameras" % args.cameras)
    if args.references:
        names = sorted(
            n for n in os.listdir(args.references) if n.endswith(".ppm")
        )
        if len(names) != len(cameras):
            raise ValueError(
                "reference dir has %d images for %d cameras"
                % (len(names), len(cameras))
            )
        refs = [render.read_ppm(os.path.join(args.references, n))
                for n in names]
    else:
        refs = [render.render(cloud, cam, threads=args.threads)
                for cam in cameras]
    rows = []
    for mode in modes:
        values = dict(base)
        values["mode"] = mode
        if mode == "uniform":
            if values.get("j_uni") is None:
                values["j_uni"] = values.get(
                    "j_high", container.EncodeConfig.j_high
                )
        else:
            values.pop("j_uni", None)
        cfg = _make_config(values)
        vox = container.voxelize(cloud, cfg)
        with concurrent.futures.ThreadPoolExecutor(args.jobs) as pool:
            futures = [
                pool.submit(_sweep_point, vox, cfg, cloud.count, q,
                            cameras, refs, args.threads)
                for q in q_list
            ]
            for q, fut in zip(q_list, futures):
                bits, quality = fut.result()
                rows.append(("%s-q%g" % (mode, q), bits, quality))
    lines = ["label,bits,psnr"]
    for label, bits, quality in rows:
        lines.append("%s,%d,%.17g" % (label, bits, quality))
    _atomic_write_bytes(args.output,
                        ("\n".join(lines) + "\n").encode("ascii"))
    print("wrote %s (%d points)" % (args.output, len(rows)))
    return 0


def cmd_synth(args):
    cloud = synth.make_synthetic_scene(
        n_small=args.n_small, n_large=args.n_large,
        clusters=args.clusters, seed=args.seed,
    )
    _atomic_write_bytes(args.output, write_model(cloud))
    print("wrote %s (%d gaussians)" % (args.output, cloud.count))
    return 0


def _build_parser():
    parser = _Parser(prog="splatcodec",
                     description="Multi-rate compression for Gaussian "
                                 "splat models")
    subs = parser.add_subparsers(dest="command", required=True)

    enc = subs.add_parser("encode", help="compress a model file")
    enc.add_argument("--input", "-i", required=True)
    enc.add_argument("--output", "-o", required=True)
    _add_encode_flags(enc, with_q_ac=True)
    enc.set_defaults(func=cmd_encode)

    dec = subs.add_parser("decode", help="reconstruct a model file")
    dec.add_argument("--input", "-i", required=True)
    dec.add_argument("--output", "-o", required=True)
    dec.set_defaults(func=cmd_decode)

    inf = subs.add_parser("info", help="print container header")
    inf.add_argument("--input", "-i", required=True)
    inf.set_defaults(func=cmd_info)

    ren = subs.add_parser("render", help="render a model to PPM images")
    ren.add_argument("--model", required=True)
    ren.add_argument("--cameras", required=True)
    ren.add_argument("--out-dir", required=True, dest="out_dir")
    ren.add_argument("--prefix", default="view")
    ren.add_argument("--background", default="0,0,0")
    ren.add_argument("--threads", type=int, default=1)
    ren.set_defaults(func=cmd_render)

    met = subs.add_parser("metrics", help="PSNR between images or "
                                          "Bjontegaard between curves")
    met.add_argument("--psnr", nargs=2, metavar=("A", "B"))
    met.add_argument("--bd", nargs=2, metavar=("REF", "TEST"))
    met.set_defaults(func=cmd_metrics)

    sweep = subs.add_parser("rd-sweep", help="rate-distortion sweep")
    sweep.add_argument("--input", "-i", required=True)
    sweep.add_argument("--cameras", required=True)
    sweep.add_argument("--output", "-o", required=True)
    sweep.add_argument("--q-ac", required=True, dest="q_grid",
                       help="comma-separated q_ac grid")
    sweep.add_argument("--modes", default="adaptive",
                       help="comma-separated voxelization modes")
    sweep.add_argument("--references",
                       help="directory of reference PPMs (defaults to "
                            "renders of the input model)")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--jobs", type=int, default=4,
                       help="concurrent grid points")
    _add_encode_flags(sweep, with_q_ac=False)
    sweep.set_defaults(func=cmd_rd_sweep)

    syn = subs.add_parser("synth", help="write the seeded synthetic "
                                        "scene")
    syn.add_argument("--output", "-o", required=True)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--n-small", type=int, default=9500, dest="n_small")
    syn.add_argument("--n-large", type=int, default=500, dest="n_large")
    syn.add_argument("--clusters", type=int, default=60)
    syn.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits directly for --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, BitstreamError, ModelFormatError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
