"""Command-line surface.

Subcommands: phantom, drr, train, eval, reconstruct, gradcheck,
export-slices. Exit code 0 on success; failures print one machine-parsable
``error: <code>: <message>`` line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys


def _cmd_phantom(args):
    from .projection import synthesize_biplanar, write_xray_pair
    from .volumes import PhantomSpec, clip_normalize, generate_phantom, write_volume

    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        spec = PhantomSpec(size=args.size, seed=args.seed + i,
                           implant_probability=args.implant_probability)
        vol = generate_phantom(spec)
        path = os.path.join(args.out, "phantom_%04d.ctv" % i)
        write_volume(vol, path)
        if args.with_xrays:
            pair = synthesize_biplanar(clip_normalize(vol))
            write_xray_pair(pair, path[:-4] + ".bxr", vol.dims)
    print("wrote %d phantom volume(s) to %s" % (args.count, args.out))


def _cmd_drr(args):
    from .projection import synthesize_biplanar, write_xray_pair
    from .volumes import clip_normalize, read_volume

    vol = read_volume(args.infile)
    pair = synthesize_biplanar(clip_normalize(vol))
    write_xray_pair(pair, args.out, vol.dims)
    print("wrote %s" % args.out)


def _cmd_train(args):
    from .training import TrainConfig, train

    cfg = TrainConfig.from_file(args.config)
    def log_fn(step, comp):
        if step % args.log_every == 0:
            print("step %d  adv %.5f  vox %.5f  proj %.5f  d %.5f"
                  % (step, comp["adv"], comp["vox"], comp["proj"], comp["d"]))
    _, _, ckpt = train(cfg, resume=args.resume, log_fn=log_fn)
    print("final checkpoint: %s" % ckpt)


def _cmd_eval(args):
    from .training import evaluate

    report = evaluate(args.ckpt, args.data, args.report)
    m = report.mean()
    print("evaluated %d sample(s); report: %s" % (len(report.rows), args.report))
    print("mean  mae %.5f  mse %.6f  cosine %.4f  psnr %.2f dB  ssim %.4f"
          % (m["mae"], m["mse"], m["cosine"], m["psnr_db"], m["ssim"]))


def _cmd_reconstruct(args):
    from .training import reconstruct

    reconstruct(args.ckpt, args.xrays, args.out)
    print("wrote %s" % args.out)


def _cmd_gradcheck(args):
    from .verification import run_all

    worst = 0.0
    ok = True
    for name, report in run_all(args.op):
        status = "PASS" if report.passed else "FAIL"
        print("%-20s %s  max rel err %.3e" % (name, status, report.max_error))
        worst = max(worst, report.max_error)
        ok = ok and report.passed
    print("overall: %s (worst %.3e)" % ("PASS" if ok else "FAIL", worst))
    if not ok:
        raise SystemExit(1)


def _cmd_export_slices(args):
    from .training import export_slices

    written = export_slices(args.vol, args.plane, args.out)
    for path in written:
        print("wrote %s" % path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biplanarct",
                                description="biplanar X-ray to CT reconstruction")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="generate procedural phantom volumes")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--size", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--implant-probability", type=float, default=0.5)
    sp.add_argument("--with-xrays", action="store_true",
                    help="also write the paired .bxr files")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_phantom)

    sp = sub.add_parser("drr", help="synthesize a biplanar X-ray pair from a volume")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_drr)

    sp = sub.add_parser("train", help="run training from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--resume", default=None)
    sp.add_argument("--log-every", type=int, default=10)
    sp.set_defaults(fn=_cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report", required=True)
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("reconstruct", help="reconstruct a volume from an X-ray pair")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--xrays", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_reconstruct)

    sp = sub.add_parser("gradcheck", help="run registered gradient checks")
    sp.add_argument("--op", default=None)
    sp.set_defaults(fn=_cmd_gradcheck)

    sp = sub.add_parser("export-slices", help="write mid-slice PGM images")
    sp.add_argument("--vol", required=True)
    sp.add_argument("--plane", default="mid3",
                    choices=["axial", "coronal", "sagittal", "mid3"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_export_slices)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:  # one machine-parsable line per contract
        code = getattr(exc, "code", type(exc).__name__)
        print("error: %s: %s" % (code, exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
