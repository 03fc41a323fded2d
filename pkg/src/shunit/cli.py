"""Command-line entry points.

    shunit [--workdir DIR] gen-synthetic CONFIG [--out DIR]
    shunit [--workdir DIR] train CONFIG [--resume CHECKPOINT]
    shunit [--workdir DIR] translate CHECKPOINT INPUT_DIR {XY,YX} OUTPUT_DIR
    shunit [--workdir DIR] eval-cfid GEN_DIR REF_DIR [--extractor NAME] [--report FILE]
    shunit [--workdir DIR] inspect CHECKPOINT

Relative paths, including those inside a config file, resolve against
``--workdir``. Exit codes: 0 success, 2 input or config error, 3 numerical
abort, 4 metric undefined.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import DatasetError, load_dataset, load_pairs, save_pair
from .data import generate_synthetic, save_sample
from .losses import NonFiniteLossError
from .metrics import MetricUndefinedError, cfid
from .networks import PerceptualExtractor
from .trainer import CheckpointError, Trainer

log = logging.getLogger("shunit")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_METRIC = 0, 2, 3, 4
MAX_LABEL = 256  # masks are 8-bit PNGs


class InputError(Exception):
    pass


def _path(workdir, p):
    return Path(workdir) / p


def _config(workdir, path):
    path = _path(workdir, path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    return load_config(path)


# -- commands ------------------------------------------------------------


def cmd_gen_synthetic(args):
    cfg = _config(args.workdir, args.config)
    root = _path(args.workdir, args.out or cfg.data_root or "data")
    spec = cfg.synthetic_spec()
    for domain in ("X", "Y"):
        for sample in generate_synthetic(spec, cfg.synth_count, domain):
            save_sample(sample, root)
    print(f"wrote {cfg.synth_count} samples per domain to {root}")
    return EXIT_OK


def _save_previews(trainer, samples, out_dir, iteration):
    target = out_dir / "previews" / f"iter_{iteration:06d}"
    for direction, pool in (("XY", samples["X"]), ("YX", samples["Y"])):
        for s in pool[:4]:
            img = trainer.translate(s, direction)
            save_pair(target / direction, s.name, img, s.mask)


def _truncate_log(path, iteration):
    # drop rows written after the checkpoint we resume from
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = rows[:1] + [r for r in rows[1:] if int(r[0]) <= iteration]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)


def cmd_train(args):
    cfg = _config(args.workdir, args.config)
    if not cfg.data_root:
        raise InputError("config key 'data_root' is empty")
    root = _path(args.workdir, cfg.data_root)
    if not root.is_dir():
        raise InputError(f"dataset not found: {root}")
    data = {d: load_dataset(root, d, cfg.num_classes) for d in ("X", "Y")}
    for d, samples in data.items():
        if not samples:
            raise InputError(f"domain {d} under {root} has no samples")
    out_dir = _path(args.workdir, cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "losses.csv"

    if args.resume:
        trainer = Trainer.load_checkpoint(_path(args.workdir, args.resume))
        mode = "a" if log_path.exists() else "w"
        if mode == "a":
            _truncate_log(log_path, trainer.iteration)
        log.info("resumed at iteration %d", trainer.iteration)
    else:
        trainer = Trainer(cfg)
        mode = "w"

    with open(log_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["iter", "term_name", "value"])
        while trainer.iteration < cfg.iterations:
            report = trainer.train_step(trainer.sample_batch(data["X"]),
                                        trainer.sample_batch(data["Y"]))
            it = trainer.iteration
            if it % cfg.log_every == 0:
                writer.writerows([it, name, f"{v:.10g}"] for name, v in report.rows())
                fh.flush()
            if cfg.preview_every and it % cfg.preview_every == 0:
                _save_previews(trainer, data, out_dir, it)
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                trainer.save_checkpoint(out_dir / "checkpoints" / f"iter_{it:06d}.safetensors")
    path = trainer.save_checkpoint(out_dir / "checkpoint.safetensors")
    print(f"trained to iteration {trainer.iteration}; checkpoint {path}")
    return EXIT_OK


def cmd_translate(args):
    trainer = Trainer.load_checkpoint(_path(args.workdir, args.checkpoint))
    src = _path(args.workdir, args.input_dir)
    samples = load_pairs(src, trainer.cfg.num_classes, args.direction[0])
    if not samples:
        raise InputError(f"no inputs under {src}")
    out = _path(args.workdir, args.output_dir)
    for s in samples:
        save_pair(out, s.name, trainer.translate(s, args.direction), s.mask)
    print(f"translated {len(samples)} images {args.direction[0]}->{args.direction[1]} into {out}")
    return EXIT_OK


def cmd_eval_cfid(args):
    pairs = []
    for d in (args.gen_dir, args.ref_dir):
        samples = load_pairs(_path(args.workdir, d), MAX_LABEL)
        if not samples:
            raise InputError(f"no image/label pairs under {_path(args.workdir, d)}")
        pairs.append([(s.image, s.mask) for s in samples])
    weights = str(_path(args.workdir, args.weights)) if args.weights else None
    try:
        extractor = PerceptualExtractor(args.extractor, args.seed, weights=weights)
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from None
    report = cfid(pairs[0], pairs[1], extractor, args.min_pixels, args.eps)
    path = _path(args.workdir, args.report)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(report.lines()) + "\n")
    for n, why in sorted(report.skipped.items()):
        print(f"skipped class {n}: {why}")
    print(f"mean,{report.mean:.10g}")
    return EXIT_OK


def cmd_inspect(args):
    trainer = Trainer.load_checkpoint(_path(args.workdir, args.checkpoint))
    print(f"iteration {trainer.iteration}")
    print("domain,layer,class,alpha")
    for domain, layers in trainer.alphas().items():
        for i, alpha in enumerate(layers):
            for n, a in enumerate(alpha.tolist()):
                print(f"{domain},{i},{n},{a:.6f}")
    print("domain,class,key_norm,value_norm")
    for domain in ("X", "Y"):
        mem = trainer.model.memory[domain]
        for n in range(mem.num_classes):
            print(f"{domain},{n},{float(mem.keys[n].detach().norm()):.6f},"
                  f"{float(mem.values[n].detach().norm()):.6f}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="shunit", description=__doc__.split("\n")[0])
    parser.add_argument("--workdir", default=".", help="base for all relative paths")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write the synthetic two-domain dataset")
    p.add_argument("config")
    p.add_argument("--out", help="dataset root (default: config data_root)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("config")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate a directory of image/label pairs")
    p.add_argument("checkpoint")
    p.add_argument("input_dir")
    p.add_argument("direction", choices=("XY", "YX"))
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval-cfid", help="class-wise FID between two directories")
    p.add_argument("gen_dir")
    p.add_argument("ref_dir")
    p.add_argument("--extractor", default="frozen-random-convnet",
                   choices=PerceptualExtractor.VARIANTS)
    p.add_argument("--weights", help="local VGG-16 state dict for the pretrained extractor")
    p.add_argument("--seed", type=int, default=1234, help="seed of the random extractor")
    p.add_argument("--min-pixels", type=int, default=16)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--report", default="cfid_report.csv")
    p.set_defaults(func=cmd_eval_cfid)

    p = sub.add_parser("inspect", help="print per-class alphas and memory norms")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, CheckpointError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteLossError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MetricUndefinedError as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC


if __name__ == "__main__":
    sys.exit(main())
