"""Command-line entry points.

Every run resolves its configuration (flags > environment > config file >
defaults), echoes it together with the seed into the output directory, and
writes its artifacts (checkpoints, CSV/JSON reports) under that directory.
Errors exit nonzero with a single machine-parseable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, config as cfgmod, convert as convertmod, data as datamod
from . import harness
from .ann import build_mlp
from .attacks import AttackConfig, AttackReport, run_attack
from .attention import TinyAttentionNet
from .dynamics import NeuronConfig, SpikingNet, build_snn_mlp
from .errors import ConfigError, SnnAdvError
from .surrogate import KINDS, SurrogateSpec, canonical_kind
from .train import Adam, SGD, evaluate, train_epochs

_COMMON = {
    "out": (str, "run"),
    "seed": (int, 0),
    "jobs": (int, 1),
    "data": (str, "auto"),       # auto | mnist | digits | blobs
    "n-train": (int, 10000),
    "n-test": (int, 2000),
}

_SURROGATE_KEYS = {
    "surrogate-threshold": (float, 1.0),
    "surrogate-sigma": (float, 0.4),
    "surrogate-alpha": (float, 1.0),
    "surrogate-beta": (float, 5.0),
}

_SCHEMAS = {
    "train": {
        **_COMMON,
        "kind": (str, "ann"),            # ann | snn | attention
        "arch": (str, "784-128-10"),
        "epochs": (int, 10),
        "lr": (float, 0.0),              # 0 keeps the per-kind default
        "optimizer": (str, "auto"),      # auto | adam | sgd
        "batch-size": (int, 128),
        "surrogate": (str, "arctan"),
        **_SURROGATE_KEYS,
        "timesteps": (int, 8),
        "readout": (str, "membrane"),
        "reset": (str, "hard_zero"),
        "adapt-decay": (float, -1.0),    # < 0 disables adaptation
        "patch": (int, 4),
        "embed": (int, 32),
        "att-layers": (int, 2),
        "att-heads": (int, 2),
    },
    "convert": {
        **_COMMON,
        "ann": (str, ""),
        "mode": (str, "weight_balance"),
        "percentile": (float, 99.9),
        "n-calib": (int, 512),
        "timesteps": (int, 64),
        "surrogate": (str, "arctan"),
        **_SURROGATE_KEYS,
        "fine-tune-epochs": (int, 1),
        "lr": (float, 1e-3),
        "batch-size": (int, 128),
    },
    "attack": {
        **_COMMON,
        "kind": (str, "pgd"),
        "models": (str, ""),
        "eps": (float, 0.031),
        "eps-step": (float, 0.01),
        "steps": (int, 40),
        "mu": (float, 1.0),
        "kappa": (float, 0.0),
        "r": (float, 10000.0),
        "u": (float, 1.0),
        "alphas": (str, ""),
        "n": (int, 200),
        "random-start": (bool, True),
        "surrogate": (str, ""),          # override the checkpoint's kernel
        **_SURROGATE_KEYS,
    },
    "sweep-surrogate": {
        **_COMMON,
        "model": (str, ""),
        "eps": (str, "0.0062,0.0124,0.0186,0.0248,0.031"),
        "surrogates": (str, ",".join(KINDS)),
        **_SURROGATE_KEYS,
        "steps": (int, 20),
        "eps-step": (float, 0.01),
        "n": (int, 200),
    },
    "transfer-matrix": {
        **_COMMON,
        "models": (str, ""),
        "attacks": (str, "fgsm,pgd,mim"),
        "eps": (float, 0.031),
        "eps-step": (float, 0.01),
        "steps": (int, 40),
        "n": (int, 200),
    },
    "multi-attack": {
        **_COMMON,
        "pairs": (str, ""),
        "eps": (float, 0.031),
        "steps": (int, 40),
        "single-eps-step": (float, 0.01),
        "saga-eps-step": (float, 0.005),
        "r": (float, 10000.0),
        "u": (float, 1.0),
        "kappa": (float, 0.0),
        "n": (int, 200),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnadv",
                                     description="spiking-network adversarial toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="KEY=VALUE config file")
        for key, (typ, default) in schema.items():
            if typ is bool:
                group = p.add_mutually_exclusive_group()
                group.add_argument(f"--{key}", dest=key, action="store_const", const=True,
                                   default=None)
                group.add_argument(f"--no-{key}", dest=key, action="store_const", const=False,
                                   default=None)
            else:
                p.add_argument(f"--{key}", dest=key, type=typ, default=None,
                               help=f"default: {default}")
    ins = sub.add_parser("inspect")
    ins.add_argument("checkpoint")
    return parser


def _resolve(command: str, args: argparse.Namespace) -> dict:
    flags = {key: getattr(args, key) for key in _SCHEMAS[command]}
    return cfgmod.resolve_config(_SCHEMAS[command], config_file=args.config, flags=flags)


def _load_dataset(cfg: dict):
    name = cfg["data"]
    seed = cfg["seed"]
    if name == "blobs":
        x, y = datamod.synth_blobs(cfg["n-train"] + cfg["n-test"], classes=2, dim=2,
                                   seed=seed)
        k = cfg["n-train"]
        return x[:k], y[:k], x[k:], y[k:], "blobs"
    if name == "digits":
        x, y = datamod.synth_digits(cfg["n-train"] + cfg["n-test"], seed=seed)
        k = cfg["n-train"]
        return x[:k], y[:k], x[k:], y[k:], "synthetic-digits"
    if name == "mnist":
        if datamod.find_mnist_dir() is None:
            raise ConfigError("data=mnist but no IDX files found "
                              f"(set {datamod.MNIST_ENV_VAR} or place files under ./data)")
        return datamod.image_dataset(cfg["n-train"], cfg["n-test"], seed=seed)
    if name == "auto":
        return datamod.image_dataset(cfg["n-train"], cfg["n-test"], seed=seed)
    raise ConfigError(f"unknown data source {name!r}")


def _surrogate_from(cfg: dict, kind: str | None = None) -> SurrogateSpec:
    return SurrogateSpec(kind=canonical_kind(kind or cfg["surrogate"]),
                         threshold=cfg["surrogate-threshold"],
                         sigma=cfg["surrogate-sigma"],
                         alpha=cfg["surrogate-alpha"],
                         beta=cfg["surrogate-beta"])


def _parse_arch(arch: str) -> list:
    try:
        dims = [int(part) for part in arch.split("-")]
    except ValueError as exc:
        raise ConfigError(f"bad arch {arch!r}; expected like 784-128-10") from exc
    if len(dims) < 2:
        raise ConfigError(f"arch needs at least two widths, got {arch!r}")
    return dims


def _echo(cfg: dict, out_dir: Path) -> None:
    cfgmod.write_config_echo(out_dir, cfg)


def _portable(cfg: dict) -> dict:
    # checkpoint-embedded echo: identical bytes regardless of the target dir
    return {k: v for k, v in cfg.items() if k != "out"}


def _load_models(spec: str) -> tuple[list, list]:
    paths = [p for p in spec.split(",") if p]
    if not paths:
        raise ConfigError("no model checkpoints given")
    models, names = [], []
    for path in paths:
        model, _ = checkpoint.load_model(path)
        models.append(model)
        names.append(Path(path).stem)
    return models, names


def cmd_train(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, source = _load_dataset(cfg)
    kind = cfg["kind"]
    dims = _parse_arch(cfg["arch"])
    seed = cfg["seed"]
    if kind == "ann":
        model = build_mlp(dims, seed=seed)
        optimizer = SGD(lr=cfg["lr"] or 0.05)
        spec = None
    elif kind == "snn":
        adapt = cfg["adapt-decay"] if cfg["adapt-decay"] >= 0 else None
        neuron = NeuronConfig(reset=cfg["reset"], adapt_decay=adapt)
        spec = _surrogate_from(cfg)
        model = build_snn_mlp(dims, T=cfg["timesteps"], seed=seed, neuron=neuron,
                              surrogate=spec, readout=cfg["readout"])
        optimizer = Adam(lr=cfg["lr"] or 1e-3)
    elif kind == "attention":
        if train_x.ndim < 3:
            raise ConfigError("attention models need image data")
        model = TinyAttentionNet(image_shape=train_x.shape[1:], patch=cfg["patch"],
                                 embed=cfg["embed"], n_layers=cfg["att-layers"],
                                 n_heads=cfg["att-heads"], seed=seed)
        optimizer = Adam(lr=cfg["lr"] or 1e-3)
        spec = None
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    if cfg["optimizer"] == "sgd":
        optimizer = SGD(lr=cfg["lr"] or 0.05)
    elif cfg["optimizer"] == "adam":
        optimizer = Adam(lr=cfg["lr"] or 1e-3)
    elif cfg["optimizer"] != "auto":
        raise ConfigError(f"unknown optimizer {cfg['optimizer']!r}")
    history = train_epochs(model, train_x, train_y, epochs=cfg["epochs"],
                           optimizer=optimizer, seed=seed, batch_size=cfg["batch-size"],
                           spec=spec, test_x=test_x, test_y=test_y)
    _echo(cfg, out_dir)
    checkpoint.save_model(out_dir / "model.snnm", model, seed=seed,
                          config_echo=_portable(cfg))
    harness.write_json({"source": source, **history.as_dict()}, out_dir / "history.json")
    print(f"saved {out_dir / 'model.snnm'}")
    return 0


def cmd_convert(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, source = _load_dataset(cfg)
    if not cfg["ann"]:
        raise ConfigError("convert needs --ann checkpoint path")
    ann, _ = checkpoint.load_model(cfg["ann"])
    calib = train_x[:cfg["n-calib"]]
    spec = _surrogate_from(cfg)
    snn = convertmod.convert_ann_to_snn(ann, calib, mode=cfg["mode"],
                                        percentile=cfg["percentile"],
                                        T=cfg["timesteps"], surrogate=spec)
    report = convertmod.fine_tune(snn, train_x, train_y, epochs=cfg["fine-tune-epochs"],
                                  spec=spec, seed=cfg["seed"], lr=cfg["lr"],
                                  batch_size=cfg["batch-size"], test_x=test_x, test_y=test_y)
    report["source"] = source
    report["test_acc"] = evaluate(snn, test_x, test_y).accuracy
    _echo(cfg, out_dir)
    checkpoint.save_model(out_dir / "converted.snnm", snn, seed=cfg["seed"],
                          config_echo=_portable(cfg))
    harness.write_json(report, out_dir / "convert_report.json")
    print(f"saved {out_dir / 'converted.snnm'} test_acc {report['test_acc']:.4f}")
    return 0


def cmd_attack(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, _ = _load_dataset(cfg)
    models, names = _load_models(cfg["models"])
    if cfg["surrogate"]:
        spec = _surrogate_from(cfg)
        for model in models:
            if isinstance(model, SpikingNet):
                model.surrogate = spec
    alphas = tuple(float(a) for a in cfg["alphas"].split(",")) if cfg["alphas"] else None
    attack_cfg = AttackConfig(eps_max=cfg["eps"], eps_step=cfg["eps-step"],
                              n_iter=cfg["steps"], mu=cfg["mu"], kappa=cfg["kappa"],
                              coeff_lr=cfg["r"], fit_u=cfg["u"], alphas=alphas,
                              random_start=cfg["random-start"], seed=cfg["seed"])
    evalset = harness.select_eval_set(models, test_x, test_y, cfg["n"], seed=cfg["seed"])
    x_adv = run_attack(cfg["kind"], models, evalset.x, evalset.y, attack_cfg)
    report = AttackReport.build(models, evalset.x, x_adv, evalset.y,
                                iterations=cfg["steps"], names=names)
    _echo(cfg, out_dir)
    harness.write_json(report.as_dict(), out_dir / "attack_report.json")
    rates = " ".join(f"{name}={rate:.3f}" for name, rate in
                     zip(names, report.per_model_rate))
    print(f"{cfg['kind']} success: {rates} joint={report.joint_rate:.3f}")
    return 0


def cmd_sweep_surrogate(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, _ = _load_dataset(cfg)
    if not cfg["model"]:
        raise ConfigError("sweep needs --model checkpoint path")
    model, _ = checkpoint.load_model(cfg["model"])
    if not isinstance(model, SpikingNet):
        raise ConfigError("surrogate sweep expects a spiking checkpoint")
    eps_values = [float(e) for e in cfg["eps"].split(",") if e]
    specs = [_surrogate_from(cfg, kind=k) for k in cfg["surrogates"].split(",") if k]
    # eps_max placeholder; the sweep rebuilds the config per grid column
    attack_cfg = AttackConfig(eps_max=1.0, eps_step=cfg["eps-step"],
                              n_iter=cfg["steps"], seed=cfg["seed"])
    evalset = harness.select_eval_set([model], test_x, test_y, cfg["n"], seed=cfg["seed"])
    grid = harness.surrogate_sweep(model, eps_values, specs, evalset, attack_cfg)
    _echo(cfg, out_dir)
    grid.write_csv(out_dir / "sweep.csv")
    harness.write_json(grid.as_dict(), out_dir / "sweep.json")
    print(f"wrote {out_dir / 'sweep.csv'}")
    return 0


def cmd_transfer_matrix(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, _ = _load_dataset(cfg)
    models, names = _load_models(cfg["models"])
    if len(models) < 1:
        raise ConfigError("transfer matrix needs at least one model")
    attack_cfg = AttackConfig(eps_max=cfg["eps"], eps_step=cfg["eps-step"],
                              n_iter=cfg["steps"], seed=cfg["seed"])
    attack_names = [a.strip() for a in cfg["attacks"].split(",") if a.strip()]
    matrix = harness.transfer_matrix(models, names, test_x, test_y, cfg["n"], attack_cfg,
                                     attack_names=attack_names, seed=cfg["seed"],
                                     jobs=cfg["jobs"])
    _echo(cfg, out_dir)
    matrix.write_csv(out_dir)
    harness.write_json(matrix.as_dict(), out_dir / "transfer.json")
    print(f"wrote transfer matrices under {out_dir}")
    return 0


def cmd_multi_attack(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    train_x, train_y, test_x, test_y, _ = _load_dataset(cfg)
    if not cfg["pairs"]:
        raise ConfigError("multi-attack needs --pairs a.snnm:b.snnm[,c:d]")
    pairs, names = [], []
    for pair_spec in cfg["pairs"].split(","):
        parts = [p for p in pair_spec.split(":") if p]
        if len(parts) != 2:
            raise ConfigError(f"bad pair spec {pair_spec!r}")
        ms, ns = _load_models(",".join(parts))
        pairs.append(tuple(ms))
        names.append("+".join(ns))
    single_cfg = AttackConfig(eps_max=cfg["eps"], eps_step=cfg["single-eps-step"],
                              n_iter=cfg["steps"], seed=cfg["seed"], random_start=True)
    saga_cfg = AttackConfig(eps_max=cfg["eps"], eps_step=cfg["saga-eps-step"],
                            n_iter=cfg["steps"], kappa=cfg["kappa"], coeff_lr=cfg["r"],
                            fit_u=cfg["u"], seed=cfg["seed"])
    rows = harness.multi_model_comparison(pairs, test_x, test_y, cfg["n"], single_cfg,
                                          saga_cfg, seed=cfg["seed"], pair_names=names)
    _echo(cfg, out_dir)
    harness.write_comparison_csv(rows, out_dir / "comparison.csv")
    harness.write_json({"rows": rows}, out_dir / "comparison.json")
    for row in rows:
        print(f"{row['pair']}: max_mim={row['max_mim']:.3f} max_pgd={row['max_pgd']:.3f} "
              f"basic_saga={row['basic_saga']:.3f} auto_saga={row['auto_saga']:.3f}")
    return 0


def cmd_inspect(path: str) -> int:
    model, meta = checkpoint.load_model(path)
    print(f"kind: {meta['kind']}")
    print(f"seed: {meta['seed']}")
    print(f"arch: {json.dumps(meta['arch'], sort_keys=True)}")
    ok = True
    for name, p, _ in model.param_pairs():
        finite = bool(np.all(np.isfinite(p)))
        ok &= finite
        print(f"tensor {name}: shape {tuple(p.shape)} dtype {p.dtype} "
              f"finite {'yes' if finite else 'NO'}")
    print(f"invariants: {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "inspect":
            return cmd_inspect(args.checkpoint)
        cfg = _resolve(args.command, args)
        handler = {
            "train": cmd_train,
            "convert": cmd_convert,
            "attack": cmd_attack,
            "sweep-surrogate": cmd_sweep_surrogate,
            "transfer-matrix": cmd_transfer_matrix,
            "multi-attack": cmd_multi_attack,
        }[args.command]
        return handler(cfg)
    except (SnnAdvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
