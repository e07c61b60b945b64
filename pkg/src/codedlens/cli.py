"""Command-line surface: simulate, reconstruct, train, eval, benchmark, ablate.

Every run writes a resolved_config.json (full configuration + seeds) into
its output directory so results can be regenerated bit-for-bit. A JSON
config file (--config) supplies defaults section-by-section; explicit flags
win. Errors are categorized: exit 1 carries a package error, argparse
handles usage errors.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from codedlens import dataio, metrics, network, solvers, wiener
from codedlens.errors import CodedLensError, ConfigError
from codedlens.solvers import InverseProblem, SolverConfig

CONFIG_SECTIONS = {"data", "model", "train", "solver", "eval"}


def _load_config_file(path):
    with open(path) as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _apply_config_defaults(parser, cfg):
    """Install config-file values as subparser defaults.

    Applied before parsing, so flags given on the command line still win.
    Keys are validated against the section map; values only land on
    subcommands that actually define the destination.
    """
    for section, entries in cfg.items():
        keys = _SECTION_MAP[section]
        for key, value in entries.items():
            dest = keys.get(key)
            if dest is None:
                raise ConfigError(f"unknown key {key!r} in config section {section!r}")
            for sub in parser.command_parsers.values():
                if any(a.dest == dest for a in sub._actions):
                    sub.set_defaults(**{dest: value})


def _write_resolved(outdir, args):
    os.makedirs(outdir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items()
                if not k.startswith("_") and k != "func" and not callable(v)}
    with open(os.path.join(outdir, "resolved_config.json"), "w") as fh:
        json.dump(resolved, fh, indent=2, default=str)


def _write_metric_rows(outdir, rows, stem="metrics"):
    """rows: list of dicts with a leading label column."""
    if not rows:
        return
    fields = list(rows[0].keys())
    with open(os.path.join(outdir, f"{stem}.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    with open(os.path.join(outdir, f"{stem}.json"), "w") as fh:
        json.dump(rows, fh, indent=2)


def _format_table(rows):
    if not rows:
        return ""
    fields = list(rows[0].keys())
    def fmt(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)
    widths = [max(len(f), *(len(fmt(r[f])) for r in rows)) for f in fields]
    lines = ["  ".join(f.ljust(w) for f, w in zip(fields, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(fmt(r[f]).ljust(w) for f, w in zip(fields, widths)))
    return "\n".join(lines)


def _default_root():
    return os.environ.get("CODEDLENS_OUT", "runs")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    manifest = dataio.DatasetManifest(
        root=args.root, extents=(args.extents, args.extents),
        counts={"train": args.train_count, "val": args.val_count,
                "test": args.test_count},
        mask_pattern=args.mask_pattern, mask_density=args.density,
        mask_seed=args.mask_seed, noise_kind=args.noise_kind,
        noise_sigma=args.noise_sigma, seed=args.seed)
    dataio.synthesize_dataset(manifest)
    _write_resolved(args.root, args)
    print(f"dataset written to {args.root}")
    return 0


def _solve_one(meas, psf, args):
    if args.method == "wiener":
        return wiener.wiener_restore(meas, psf, wiener.WienerConfig(delta=args.delta))
    problem = InverseProblem(meas, psf, nonneg=args.nonneg,
                             tv_weight=args.tv, l1_weight=args.l1)
    cfg = SolverConfig(max_iters=args.iters,
                       step_size="auto" if args.step is None else args.step,
                       rho=args.rho)
    return solvers.METHODS[args.method](problem, cfg).estimate


def cmd_reconstruct(args):
    manifest = dataio.load_manifest(args.dataset)
    psf = manifest.psf()
    pairs = dataio.load_split(args.dataset, args.split)
    if args.index is not None:
        pairs = [pairs[args.index]]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, (meas, obj) in enumerate(pairs):
        est = np.clip(_solve_one(meas, psf, args), 0.0, 1.0)
        from codedlens import pnm
        pnm.write_pnm(os.path.join(args.out, f"{i:04d}_{args.method}.pgm"), est)
        rep = metrics.report(est, obj)
        rows.append({"index": i, "method": args.method, **rep.as_dict()})
    _write_metric_rows(args.out, rows)
    _write_resolved(args.out, args)
    print(_format_table(rows))
    return 0


def _model_config_from_args(args, manifest):
    return network.NetworkConfig(
        scales=args.scales, base_channels=args.base_channels,
        input_extents=manifest.extents,
        wiener_delta_init=args.delta_init, seed=args.seed)


def cmd_train(args):
    manifest = dataio.load_manifest(args.dataset)
    train_pairs = dataio.load_split(args.dataset, "train")
    val_pairs = dataio.load_split(args.dataset, "val")
    config = _model_config_from_args(args, manifest)
    tconfig = network.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                                  epochs=args.epochs, augment=args.augment,
                                  seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    psf = manifest.psf()

    def resimulate(obj):
        from codedlens import optics
        noise = optics.NoiseModel(kind=manifest.noise_kind,
                                  sigma=manifest.noise_sigma, seed=args.seed)
        return optics.simulate_measurement(obj, psf, noise)

    params, history = network.train(
        train_pairs, config, tconfig, val_set=val_pairs,
        resimulate=resimulate if args.augment else None,
        log=lambda row: print(f"epoch {row['epoch']}: loss {row['mean_loss']:.5f}"
                              + (f" val_psnr {row['val_psnr']:.2f}" if "val_psnr" in row else "")))
    step = tconfig.epochs * ((len(train_pairs) + tconfig.batch_size - 1)
                             // tconfig.batch_size)
    network.save_checkpoint(os.path.join(args.out, "checkpoint.bin"), params,
                            config, step=step)
    with open(os.path.join(args.out, "history.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "mean_loss", "val_psnr"])
        writer.writeheader()
        for row in history["epochs"]:
            writer.writerow(row)
    _write_resolved(args.out, args)
    print(f"checkpoint and history written to {args.out}")
    return 0


def cmd_eval(args):
    pairs = dataio.load_split(args.dataset, args.split)
    os.makedirs(args.out, exist_ok=True)
    params, config, _ = network.load_checkpoint(args.checkpoint)
    rows = []
    for i, (meas, obj) in enumerate(pairs):
        est = network.predict(params, config, meas)
        rows.append({"index": i, "method": "lensnet", **metrics.report(est, obj).as_dict()})
    _write_metric_rows(args.out, rows)
    _write_resolved(args.out, args)
    print(_format_table(rows))
    return 0


def _mean_report(rows):
    return {k: float(np.mean([r[k] for r in rows]))
            for k in ("psnr_db", "ssim", "perceptual")}


def cmd_benchmark(args):
    manifest = dataio.load_manifest(args.dataset)
    psf = manifest.psf()
    pairs = dataio.load_split(args.dataset, args.split)
    os.makedirs(args.out, exist_ok=True)
    table = []
    methods = [
        ("wiener", dict(method="wiener", delta=args.delta)),
        ("gd", dict(method="gd", tv=0.0, l1=0.0, nonneg=True)),
        ("nesterov", dict(method="nesterov", tv=0.0, l1=0.0, nonneg=True)),
        ("fista", dict(method="fista", tv=0.0, l1=args.l1, nonneg=True)),
        ("admm", dict(method="admm", tv=args.tv, l1=0.0, nonneg=True)),
        ("apgd", dict(method="apgd", tv=0.0, l1=0.0, nonneg=True)),
    ]
    base = argparse.Namespace(iters=args.iters, step=None, rho=args.rho,
                              delta=args.delta, tv=args.tv, l1=args.l1, nonneg=True)
    for name, over in methods:
        ns = argparse.Namespace(**{**vars(base), **over})
        rows = []
        for meas, obj in pairs:
            est = np.clip(_solve_one(meas, psf, ns), 0.0, 1.0)
            rows.append(metrics.report(est, obj).as_dict())
        table.append({"method": name, **_mean_report(rows)})
    if args.checkpoint:
        params, config, _ = network.load_checkpoint(args.checkpoint)
        rows = []
        for meas, obj in pairs:
            est = network.predict(params, config, meas)
            rows.append(metrics.report(est, obj).as_dict())
        table.append({"method": "lensnet", **_mean_report(rows)})
    _write_metric_rows(args.out, table, stem="benchmark")
    _write_resolved(args.out, args)
    print(_format_table(table))
    return 0


def ablation_variants(base_config, true_psf_kernel):
    """The ablation family: full, 3-scale, no gated blocks, fixed PSF."""
    d = base_config.to_dict()
    full = network.NetworkConfig.from_dict(d)
    three = network.NetworkConfig.from_dict({**d, "scales": base_config.scales - 1})
    norecb = network.NetworkConfig.from_dict({**d, "use_recb": False})
    fixed = network.NetworkConfig.from_dict(d)
    fixed.fixed_psf = np.asarray(true_psf_kernel, dtype=np.float64)
    return {"full": full, "threedown": three, "no_recb": norecb, "fixed_psf": fixed}


def cmd_ablate(args):
    manifest = dataio.load_manifest(args.dataset)
    train_pairs = dataio.load_split(args.dataset, "train")
    val_pairs = dataio.load_split(args.dataset, "val")
    base = _model_config_from_args(args, manifest)
    variants = ablation_variants(base, manifest.psf().centered_kernel(manifest.extents))
    tconfig = network.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                                  epochs=args.epochs, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    table = []
    for name, config in variants.items():
        params, _ = network.train(train_pairs, config, tconfig)
        rows = []
        for meas, obj in val_pairs:
            est = network.predict(params, config, meas)
            rows.append(metrics.report(est, obj).as_dict())
        table.append({"variant": name, **_mean_report(rows),
                      "parameters": network.count_parameters(params)})
        print(f"{name}: psnr {table[-1]['psnr_db']:.2f}")
    _write_metric_rows(args.out, table, stem="ablation")
    _write_resolved(args.out, args)
    print(_format_table(table))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="codedlens",
                                     description="Coded-mask lensless imaging toolkit")
    parser.add_argument("--config", help="JSON config file with section defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.command_parsers = {}
    _add_parser = sub.add_parser

    def add_parser(name, **kw):
        p = _add_parser(name, **kw)
        parser.command_parsers[name] = p
        return p
    sub.add_parser = add_parser

    p = sub.add_parser("simulate", help="synthesize a phantom dataset")
    p.add_argument("--root", default=os.path.join(_default_root(), "dataset"))
    p.add_argument("--extents", type=int, default=32)
    p.add_argument("--train-count", type=int, default=160)
    p.add_argument("--val-count", type=int, default=20)
    p.add_argument("--test-count", type=int, default=20)
    p.add_argument("--mask-pattern", default="random", choices=dataio.optics.PATTERNS)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--mask-seed", type=int, default=1)
    p.add_argument("--noise-kind", default="gaussian",
                   choices=("none", "gaussian", "poisson"))
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="classical reconstruction of a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--method", default="wiener",
                   choices=("wiener", "gd", "nesterov", "fista", "admm", "apgd"))
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--tv", type=float, default=0.0)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--nonneg", action="store_true")
    p.add_argument("--out", default=os.path.join(_default_root(), "reconstruct"))
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train the reconstruction network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--delta-init", type=float, default=1.0)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=os.path.join(_default_root(), "train"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=os.path.join(_default_root(), "eval"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="all classical methods (+checkpoint) on a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--tv", type=float, default=0.005)
    p.add_argument("--l1", type=float, default=0.0005)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--out", default=os.path.join(_default_root(), "benchmark"))
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("ablate", help="train and compare the ablation variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--delta-init", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=os.path.join(_default_root(), "ablate"))
    p.set_defaults(func=cmd_ablate)
    return parser


_SECTION_MAP = {
    "data": {"root": "root", "dataset": "dataset", "extents": "extents",
             "mask_pattern": "mask_pattern", "density": "density",
             "noise_sigma": "noise_sigma", "noise_kind": "noise_kind"},
    "model": {"scales": "scales", "base_channels": "base_channels",
              "delta_init": "delta_init"},
    "train": {"epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
              "augment": "augment", "seed": "seed"},
    "solver": {"method": "method", "iters": "iters", "step": "step", "tv": "tv",
               "l1": "l1", "rho": "rho", "delta": "delta", "nonneg": "nonneg"},
    "eval": {"split": "split", "checkpoint": "checkpoint"},
}


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    try:
        if known.config:
            _apply_config_defaults(parser, _load_config_file(known.config))
        args = parser.parse_args(argv)
        return args.func(args)
    except CodedLensError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
