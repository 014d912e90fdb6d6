"""Command-line entry point: synth / train / eval / infer / inspect-ndr."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import images, metrics
from .checkpoint import load_checkpoint, load_into
from .config import ConfigError, DEFAULTS, load_config, resolve
from .degrade import load_manifest, load_pair, make_dataset
from .model import joint_params
from .train import ablate, build_models, train_loop


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["dataset"]["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        cfg["train"]["steps"] = args.steps
    if getattr(args, "lambda_", None) is not None:
        cfg["train"]["lambda"] = args.lambda_
    if getattr(args, "alt_steps", False):
        cfg["train"]["alt_steps"] = True
    if getattr(args, "out", None):
        cfg["out_dir"] = args.out
    return cfg


def _get_config(args):
    cfg = load_config(args.config) if args.config else resolve({})
    return _apply_overrides(cfg, args)


def _load_models(ckpt_path):
    tensors, meta = load_checkpoint(ckpt_path)
    restore, degrad = build_models(meta["config"]["train"], meta["config"]["seed"])
    load_into(joint_params(restore, degrad), tensors, prefix=None)
    return restore, degrad, meta


def _dump_tensor(base, arr):
    """Write raw little-endian float32 + JSON shape sidecar + CSV."""
    arr = np.asarray(arr)
    with open(base + ".f32", "wb") as f:
        f.write(arr.astype("<f4").tobytes())
    with open(base + ".json", "w", encoding="utf-8") as f:
        json.dump({"shape": list(arr.shape), "dtype": "float32", "order": "C"},
                  f, sort_keys=True)
        f.write("\n")
    flat = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
    np.savetxt(base + ".csv", flat, delimiter=",", fmt="%.8g")


def cmd_synth(args):
    cfg = _get_config(args)
    out_dir = args.out or cfg["dataset"]["dir"]
    if not out_dir:
        raise ConfigError("no output directory: set dataset.dir in the config or pass --out")
    dcfg = dict(cfg["dataset"])
    dcfg.pop("dir", None)
    manifest = make_dataset(dcfg, out_dir)
    print(f"wrote {len(manifest)} pairs to {out_dir}")
    return 0


def cmd_train(args):
    cfg = _get_config(args)
    dataset_dir = cfg["dataset"]["dir"]
    if not dataset_dir or not os.path.isdir(dataset_dir):
        raise ConfigError(f"dataset.dir {dataset_dir!r} does not exist; run `ndrestore synth` first")
    out_dir = cfg["out_dir"]
    if args.ablate:
        result = ablate(cfg, dataset_dir, out_dir, log=lambda m: print(m, flush=True))
        print(f"ablation report: {result['csv_path']}")
        return 0
    result = train_loop(cfg, dataset_dir, out_dir, resume_from=args.ckpt,
                        log=lambda m: print(m, flush=True))
    print(f"final checkpoint: {result['checkpoint_path']}")
    print(f"metrics: {result['metrics_path']}")
    return 0


def cmd_eval(args):
    entries = load_manifest(args.dataset)
    pairs = [load_pair(args.dataset, e) + (e["kind"],) for e in entries]
    restore_fn = None
    meta = None
    if args.ckpt:
        restore, _, meta = _load_models(args.ckpt)
        restore_fn = restore.restore_image
    report = metrics.score_pairs(pairs, restore_fn=restore_fn)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("id,kind,psnr,ssim\n")
        for row in report["rows"]:
            f.write(f"{row['id']},{row['kind']},{row['psnr']:.6f},{row['ssim']:.6f}\n")
    json_path = os.path.join(out_dir, "report.json")
    payload = {"summary": report["summary"], "mode": "model" if args.ckpt else "degraded-baseline"}
    if meta is not None:
        payload["config"] = meta["config"]
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
    if args.grid and restore_fn is not None:
        grid_dir = os.path.join(out_dir, "grid")
        os.makedirs(grid_dir, exist_ok=True)
        for e in entries:
            x, y = load_pair(args.dataset, e)
            out = restore_fn(x)
            images.save_image(os.path.join(grid_dir, f"{e['id']:04d}.png"),
                              np.concatenate([x, out, y], axis=1))
    for kind, s in sorted(report["summary"].items()):
        print(f"{kind}: psnr {s['psnr']:.3f} dB, ssim {s['ssim']:.4f} (n={s['n']})")
    return 0


def _pad_to_multiple(img, factor):
    h, w = img.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return img, (h, w)
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect"), (h, w)


def cmd_infer(args):
    restore, _, _ = _load_models(args.ckpt)
    img = images.load_image(args.input)
    factor = 2 ** (restore.scales - 1)
    h, w = img.shape[:2]
    if (h % factor or w % factor) and not args.pad:
        raise ValueError(f"image {h}x{w} not divisible by {factor}; pass --pad to reflect-pad")
    padded, (oh, ow) = _pad_to_multiple(img, factor)
    out = restore.restore_image(padded)[:oh, :ow]
    images.save_image(args.output, out)
    print(f"wrote {args.output}")
    return 0


def cmd_inspect_ndr(args):
    restore, _, meta = _load_models(args.ckpt)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    if restore.dictionary is None:
        raise ValueError("checkpoint was trained with variant no_dq; it has no dictionary")
    _dump_tensor(os.path.join(out_dir, "D"), restore.dictionary.D.data)
    written = ["D"]
    if args.image:
        img = images.load_image(args.image)
        s_matrix = restore.affinity_matrix(img)
        _dump_tensor(os.path.join(out_dir, "S"), s_matrix)
        from .tensor import Tensor, no_grad
        with no_grad():
            _, u_list, _ = restore.forward(Tensor(np.asarray(img, dtype=restore.dtype)[None]))
        _dump_tensor(os.path.join(out_dir, "U"), u_list[0].data[0])
        written += ["S", "U"]
    m, n = restore.dictionary.D.data.shape
    print(f"dictionary shape ({m}, {n}); wrote {', '.join(written)} to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ndrestore",
        description="Synthesize degradations, train the bidirectional restoration "
                    "model, and inspect the learned degradation dictionary.")
    parser.add_argument("--json-errors", action="store_true",
                        help="emit errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a paired clean/degraded dataset")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="dataset output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="run bidirectional training")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="weight of the y-reconstruction loss term")
    p.add_argument("--alt-steps", action="store_true",
                   help="alternate the optimized direction between steps")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--ckpt", help="checkpoint to resume from")
    p.add_argument("--ablate", action="store_true",
                   help="run the module/lambda ablation sweep instead of one run")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a dataset (degraded baseline or a model)")
    p.add_argument("dataset", help="dataset directory with manifest.json")
    p.add_argument("--ckpt", help="checkpoint; omit for the degraded baseline")
    p.add_argument("--out", help="report output directory")
    p.add_argument("--grid", action="store_true", help="write side-by-side PNG grids")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="restore one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pad", action="store_true",
                   help="reflect-pad inputs whose dims are not divisible by the scale factor")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("inspect-ndr", help="dump the dictionary (and S/U for an image)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", help="dump directory")
    p.add_argument("--image", help="also dump S and U for this image")
    p.set_defaults(fn=cmd_inspect_ndr)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        if args.json_errors:
            print(json.dumps({"error": type(e).__name__, "message": str(e)}),
                  file=sys.stderr)
        else:
            print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
