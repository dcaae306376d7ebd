"""Command-line pipeline: toy-data generation, GAN training, synthesis,
PAD classifier training, evaluation, and the verification suite.

Every command echoes its fully resolved configuration (including the
seed) into the output directory before doing any work, so a run can be
reconstructed from its outputs alone. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

# Honor the worker cap before numpy (and its BLAS) loads.
_threads = os.environ.get("SPOOFSMITH_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

import numpy as np  # noqa: E402

from . import data as D  # noqa: E402
from . import metrics as M  # noqa: E402
from . import models  # noqa: E402
from . import train as TR  # noqa: E402
from .errors import ConfigError, SpoofsmithError  # noqa: E402


def _echo_config(out_dir: str, command: str, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w",
              encoding="utf-8", newline="\n") as f:
        json.dump({"command": command, **resolved}, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return cfg


def _resolve(args, defaults: dict) -> dict:
    """Layer built-in defaults < config file < explicit flags."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    resolved = dict(defaults)
    for key, val in file_cfg.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        resolved[key] = val
    for key in defaults:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            resolved[key] = flag
    return resolved


# -- commands -------------------------------------------------------------

def cmd_gen_toy(args) -> int:
    cfg = _resolve(args, {"count": 500, "res": 64, "seed": 0})
    _echo_config(args.out, "gen-toy", {**cfg, "out": args.out})
    D.gen_toy_corpus(cfg["count"], cfg["res"], cfg["seed"], args.out)
    manifest_path = os.path.join(args.out, "manifest.jsonl")
    print(manifest_path)
    return 0


_GAN_DEFAULTS = {
    "epochs": 1, "res": 64, "real_per_iter": 200, "seed": 0,
    "width_scale": 1.0, "z_dim": 100, "lr": 2e-4,
}


def cmd_train_gan(args) -> int:
    cfg = _resolve(args, _GAN_DEFAULTS)
    _echo_config(args.out, "train-gan",
                 {**cfg, "manifest": args.manifest, "out": args.out})
    manifest = D.load_manifest(args.manifest)
    shape = (3, cfg["res"], cfg["res"])
    g = models.build_dcgan_generator(cfg["z_dim"], shape, cfg["width_scale"],
                                     seed=cfg["seed"])
    d = models.build_dcgan_discriminator(shape, cfg["width_scale"],
                                         seed=cfg["seed"])
    tc = TR.TrainConfig(learning_rate=cfg["lr"], epochs=cfg["epochs"],
                        seed=cfg["seed"], real_per_iter=cfg["real_per_iter"])
    result = TR.train_gan(manifest, g, d, tc)
    chash = D.config_hash(cfg)
    meta = {"seed": cfg["seed"], "iteration": result.iterations,
            "config_hash": chash}
    D.save_checkpoint(os.path.join(args.out, "g.ckpt"), g, meta=meta,
                      adam=result.g_adam.snapshot())
    D.save_checkpoint(os.path.join(args.out, "d.ckpt"), d, meta=meta,
                      adam=result.d_adam.snapshot())
    TR.write_loss_csv(os.path.join(args.out, "losses.csv"),
                      "iter,d_loss,g_loss", result.history)
    print(os.path.join(args.out, "g.ckpt"))
    return 0


def cmd_synth(args) -> int:
    cfg = _resolve(args, {"count": 10000, "seed": 0})
    _echo_config(args.out, "synth", {**cfg, "ckpt": args.ckpt, "out": args.out})
    g = D.load_checkpoint(args.ckpt).network
    manifest = TR.synthesize(g, cfg["count"], cfg["seed"], args.out)
    path = os.path.join(args.out, "manifest.jsonl")
    print(path)
    return 0


_PAD_DEFAULTS = {
    "epochs": 10, "res": 64, "width_scale": 0.25, "head_units": 256,
    "seed": 0, "lr": 1e-4, "batch_size": 16, "train_fraction": 0.8,
}


def cmd_train_pad(args) -> int:
    cfg = _resolve(args, _PAD_DEFAULTS)
    _echo_config(args.out, "train-pad",
                 {**cfg, "real_manifest": args.real_manifest,
                  "attack_manifest": args.attack_manifest, "out": args.out})
    real = D.load_manifest(args.real_manifest)
    attack = D.load_manifest(args.attack_manifest)
    # Merge with per-source base dirs resolved to absolute paths.
    entries = []
    for m in (real, attack):
        for e in m:
            entries.append(D.ManifestEntry(path=m.resolve(e), label=e.label,
                                           eye=e.eye, subset=e.subset,
                                           extra=e.extra))
    labeled = D.DatasetManifest(entries)

    net = models.build_modified_vggnet((3, cfg["res"], cfg["res"]),
                                       cfg["width_scale"], cfg["head_units"],
                                       seed=cfg["seed"])
    tc = TR.TrainConfig.classifier(learning_rate=cfg["lr"],
                                   batch_size=cfg["batch_size"],
                                   epochs=cfg["epochs"], seed=cfg["seed"])
    sc = TR.SplitConfig(train_fraction=cfg["train_fraction"], seed=cfg["seed"])
    result = TR.train_classifier(labeled, net, tc, sc)
    meta = {"seed": cfg["seed"], "iteration": cfg["epochs"],
            "config_hash": D.config_hash(cfg)}
    D.save_checkpoint(os.path.join(args.out, "classifier.ckpt"), net,
                      meta=meta, adam=result.adam.snapshot())
    TR.write_loss_csv(os.path.join(args.out, "losses.csv"),
                      "epoch,train_loss,test_acc", result.history)
    result.test_manifest.save(os.path.join(args.out, "test_manifest.jsonl"))
    M.emit_report(result.report, args.out)
    print(os.path.join(args.out, "report.json"))
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"threshold": 0.5})
    _echo_config(args.out, "eval", {**cfg, "ckpt": args.ckpt,
                                    "manifest": args.manifest, "out": args.out})
    net = D.load_checkpoint(args.ckpt).network
    manifest = D.load_manifest(args.manifest)
    report = M.evaluate_scores(TR.score_manifest(net, manifest),
                               cfg["threshold"])
    M.emit_report(report, args.out)
    print(os.path.join(args.out, "report.json"))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verification
    results = run_verification()
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spoofsmith",
        description="Presentation-attack-detection pipeline: toy data, "
                    "DCGAN training, synthesis, PAD classification, metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate the procedural toy corpus")
    p.add_argument("--count", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("train-gan", help="adversarial training on real images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--real-per-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width-scale", type=float)
    p.add_argument("--z-dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("synth", help="sample synthetic attack images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-pad", help="train the PAD classifier")
    p.add_argument("--real-manifest", required=True)
    p.add_argument("--attack-manifest", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--width-scale", type=float)
    p.add_argument("--head-units", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_pad)

    p = sub.add_parser("eval", help="evaluate a classifier checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the built-in verification suite")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpoofsmithError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
