"""``graphfuse prepare | train | fuse | eval``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric error.
Every command writes one JSON manifest recording the resolved
configuration, inputs and a git-style SHA-1 of every output file.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, parse_overrides, read_config, resolve
from .dataset import image_files, list_pairs, load_gray_pairs, pair_directories, read_pair_manifest
from .errors import DataError, GraphFuseError, NumericError
from .image import crop_offsets, load_image, save_image, to_gray
from .metrics import evaluate_corpus, write_report
from .net import auto_patch_size, fuse, fuse_color
from .train import load_checkpoint, train, write_history

log = logging.getLogger("graphfuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def blob_sha1(path):
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(path, command, config, seed, inputs, checkpoint, outputs, extra=None):
    root = Path(path).parent
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "checkpoint": str(checkpoint) if checkpoint is not None else None,
        "outputs": {str(Path(p).relative_to(root)) if Path(p).is_relative_to(root) else str(p):
                    blob_sha1(p) for p in sorted(outputs)},
    }
    manifest.update(extra or {})
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_prepare(args):
    if args.pairs:
        pairs = read_pair_manifest(args.pairs)
    else:
        if not (args.ir_dir and args.vis_dir):
            raise ConfigError("prepare needs --ir-dir and --vis-dir (or --pairs)")
        pairs = pair_directories(args.ir_dir, args.vis_dir)
    out = Path(args.out)
    outputs = []
    for i, (name, ir_path, vis_path) in enumerate(pairs):
        ir = to_gray(load_image(ir_path))
        vis = to_gray(load_image(vis_path))
        if ir.shape != vis.shape:
            raise GraphFuseError(f"{name}: ir {ir.shape} and vis {vis.shape} are not aligned")
        for y, x in crop_offsets(*ir.shape, args.size, args.stride):
            fname = f"pair_{i}_{y}_{x}.png"
            for sub, img in (("ir", ir), ("vis", vis)):
                path = out / sub / fname
                save_image(img[y:y + args.size, x:x + args.size], path)
                outputs.append(path)
    count = len(outputs) // 2
    log.info("wrote %d crop pairs from %d source pairs", count, len(pairs))
    write_manifest(out / "manifest.json", "prepare", {"size": args.size, "stride": args.stride},
                   None, [p for _, a, b in pairs for p in (a, b)], None, outputs,
                   {"crop_pairs": count, "source_pairs": len(pairs)})
    return EXIT_OK


def _train_flags(args):
    flags = parse_overrides(args.set or [])
    for key in ("epochs", "max_steps", "seed", "batch", "lr0", "lam", "feature_dim", "patch_size"):
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = value
    if args.fixed_k is not None:
        flags["fixed_k"] = args.fixed_k
    if args.no_dilation:
        flags["no_dilation"] = True
    if args.no_inter_modal:
        flags["no_inter_modal"] = True
    return flags


def cmd_train(args):
    file_values = read_config(args.config) if args.config else {}
    flags = _train_flags(args)
    pairs = list_pairs(args.data)
    dataset = load_gray_pairs(pairs)
    if "patch_size" not in flags and "patch_size" not in file_values:
        flags["patch_size"] = auto_patch_size(*dataset[0][0].shape)
    net_cfg, train_cfg = resolve(file_values, flags)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = net_cfg.executed_schedule()
    log.info("schedule intra=%s inter=%s", schedule["intra"], schedule["inter"])

    def report(row):
        if row["step"] % 10 == 0:
            log.info("step %d epoch %d lr %.3g total %.6g", row["step"], row["epoch"],
                     row["lr"], row["total"])

    result = train(dataset, net_cfg, train_cfg, out_dir=out, on_step=report)
    ckpt = out / "checkpoint.gfc"
    history = out / "history.csv"
    write_history(result.history, history)
    final = result.history[-1]["total"] if result.history else None
    write_manifest(out / "manifest.json", "train",
                   {"network": net_cfg.to_dict(), "train": train_cfg.to_dict()},
                   train_cfg.seed, [args.data] + ([args.config] if args.config else []), ckpt,
                   [ckpt, history],
                   {"schedule": {k: [list(p) for p in v] for k, v in schedule.items()},
                    "steps": result.step, "final_total": final})
    return EXIT_OK


def _fuse_inputs(ir, vis):
    ir, vis = Path(ir), Path(vis)
    if ir.is_dir() != vis.is_dir():
        raise ConfigError("--ir and --vis must both be files or both be directories")
    if ir.is_dir():
        return [(Path(name).stem, a, b) for name, a, b in pair_directories(ir, vis)]
    return [(ir.stem, ir, vis)]


def cmd_fuse(args):
    ckpt = load_checkpoint(args.ckpt)
    cfg, params = ckpt.net_cfg, ckpt.params
    out = Path(args.out)
    outputs = []
    inputs = _fuse_inputs(args.ir, args.vis)
    for stem, ir_path, vis_path in inputs:
        ir = to_gray(load_image(ir_path))
        vis = load_image(vis_path)
        fused = fuse_color(ir, vis, params, cfg) if vis.ndim == 3 else fuse(ir, vis, params, cfg)
        if not np.isfinite(fused).all():
            raise NumericError(f"{stem}: fused image contains NaN")
        path = out / f"{stem}.png"
        save_image(fused, path)
        outputs.append(path)
    schedule = cfg.executed_schedule()
    write_manifest(out / "manifest.json", "fuse", {"network": cfg.to_dict()},
                   ckpt.train_cfg.seed if ckpt.train_cfg else None,
                   [p for _, a, b in inputs for p in (a, b)], args.ckpt, outputs,
                   {"schedule": {k: [list(p) for p in v] for k, v in schedule.items()}})
    return EXIT_OK


def cmd_eval(args):
    fused_files = {p.stem: p for p in image_files(args.fused_dir)}
    if not fused_files:
        raise DataError(f"{args.fused_dir}: no fused images")
    sources = pair_directories(args.ir_dir, args.vis_dir, match="stem")
    names = {n for n, _, _ in sources}
    missing = sorted(names ^ set(fused_files))
    if missing:
        raise DataError("missing pair members: " + ", ".join(
            f"{n} (no fused image)" if n in names else f"{n} (no source pair)" for n in missing))
    triples = []
    for name, ir_path, vis_path in sources:
        triples.append((name, to_gray(load_image(fused_files[name])),
                        to_gray(load_image(ir_path)), to_gray(load_image(vis_path))))
    report = evaluate_corpus(triples)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    write_manifest(out.with_name(out.name + ".manifest.json"), "eval", {}, None,
                   [args.fused_dir, args.ir_dir, args.vis_dir], None, [out],
                   {"flagged": report.flagged})
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="graphfuse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="crop aligned pairs into a training set")
    p.add_argument("--ir-dir")
    p.add_argument("--vis-dir")
    p.add_argument("--pairs", help="TSV manifest: name<TAB>ir_path<TAB>vis_path")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--stride", type=int, default=20)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the fusion network")
    p.add_argument("--data", required=True, help="prepared root with ir/ and vis/, or a TSV manifest")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--fixed-k", type=int, help="ablation: same k in every block")
    p.add_argument("--no-dilation", action="store_true", help="ablation: d = 1 everywhere")
    p.add_argument("--no-inter-modal", action="store_true", help="ablation: drop the inter-modal branch")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="fuse image pairs with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ir", required=True, help="infrared image or directory")
    p.add_argument("--vis", required=True, help="visible image or directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score fused images against their sources")
    p.add_argument("--fused-dir", required=True)
    p.add_argument("--ir-dir", required=True)
    p.add_argument("--vis-dir", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (GraphFuseError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
