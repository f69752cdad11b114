"""Experiment runner: ``train``, ``attack`` and ``sensitivity`` subcommands.

An experiment is one JSON document, for example::

    {
      "experiment_id": "table2-and-or",
      "geometry": "R(64,64,64,10|and,or,and,or)",
      "u_max": 3.0,
      "seeds": [0, 1, 2],
      "train": {"epochs": 10, "batch_size": 100, "gradient_mode": "pseudo",
                "regularizer_c": 0.0},
      "attacks": [{"kind": "fgsm", "epsilons": [0.0, 0.1, 0.2, 0.3]},
                  {"kind": "pgd", "epsilons": [0.3], "pgd_restarts": 20}],
      "data": {"dir": "/path/to/mnist", "train_limit": null},
      "output": "runs/table2/train.csv",
      "attack_output": "runs/table2/attack.csv",
      "checkpoint": "runs/table2/model.ckpt",
      "limit": null
    }

Relative paths are resolved against the config file's directory. Command-line
flags override the corresponding fields. Wall-clock timings go to a
``*.timing.csv`` file next to each CSV so that the metrics themselves are a
pure function of the configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields

from .attacks import AttackConfig, evaluate_under_attack
from .checkpoint import CheckpointIntegrityError, checkpoint_load, checkpoint_save
from .layers import GeometryError, Network, init_network, parse_geometry
from .mnist import Dataset, IDXFormatError, load_idx, load_mnist
from .sensitivity import network_sensitivity_bound
from .training import TrainConfig, accuracy, train

log = logging.getLogger("rbfinet")


class ConfigError(ValueError):
    pass


EXIT_CODES = {ConfigError: 2, IDXFormatError: 3, CheckpointIntegrityError: 4}

TRAIN_COLUMNS = ["experiment_id", "geometry", "seed", "epoch", "train_loss", "test_accuracy",
                 "sensitivity_bound", "accuracy_std", "bound_std"]
ATTACK_COLUMNS = ["experiment_id", "geometry", "seed", "attack", "epsilon", "accuracy",
                  "clean_accuracy", "sensitivity_bound", "n_examples"]


@dataclass
class ExperimentConfig:
    geometry: str
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: list[AttackConfig] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])
    u_max: float = 3.0
    experiment_id: str = "experiment"
    data: dict = field(default_factory=dict)
    output: str = "train.csv"
    attack_output: str = "attack.csv"
    checkpoint: str = "model.ckpt"
    limit: int | None = None

    def spec(self, seed: int):
        return parse_geometry(self.geometry, u_max=self.u_max, seed=seed)

    def checkpoint_path(self, seed: int) -> str:
        if len(self.seeds) == 1:
            return self.checkpoint
        root, ext = os.path.splitext(self.checkpoint)
        return f"{root}-seed{seed}{ext}"


@dataclass
class MetricsRecord:
    experiment_id: str
    geometry: str
    seed: int | str
    descriptor: str  # "epoch N" for training rows, attack name for attack rows
    epsilon: float | None
    accuracy: float
    sensitivity_bound: float
    seconds: float


def _attack_configs(entries: list[dict]) -> list[AttackConfig]:
    out = []
    known = {f.name for f in fields(AttackConfig)}
    for entry in entries:
        entry = dict(entry)
        eps_list = entry.pop("epsilons", None)
        if eps_list is None:
            eps_list = [entry.pop("epsilon")]
        unknown = set(entry) - known
        if unknown:
            raise ConfigError(f"unknown attack fields {sorted(unknown)}")
        for eps in eps_list:
            out.append(AttackConfig(epsilon=float(eps), **entry))
    return out


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Read an experiment JSON file; ``None``-valued overrides are ignored."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    return config_from_dict(raw, base, **overrides)


def config_from_dict(raw: dict, base_dir: str = ".", seed=None, epochs=None, geometry=None,
                     limit=None) -> ExperimentConfig:
    raw = dict(raw)
    try:
        train_cfg = dict(raw.pop("train", {}))
        if epochs is not None:
            train_cfg["epochs"] = epochs
        attacks = _attack_configs(raw.pop("attacks", []))
        seeds = raw.pop("seeds", None)
        if seeds is None:
            seeds = [raw.pop("seed", 0)]
        raw.pop("seed", None)
        if seed is not None:
            seeds = [seed]
        train_cfg.setdefault("seed", seeds[0])
        cfg = ExperimentConfig(train=TrainConfig(**train_cfg), attacks=attacks,
                               seeds=[int(s) for s in seeds], **raw)
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, (ConfigError, GeometryError)):
            raise
        raise ConfigError(str(exc)) from exc
    if geometry is not None:
        cfg.geometry = geometry
    if limit is not None:
        cfg.limit = limit
    try:
        parse_geometry(cfg.geometry, u_max=cfg.u_max)
    except (GeometryError, ValueError) as exc:
        raise ConfigError(f"bad geometry: {exc}") from exc
    for key in ("output", "attack_output", "checkpoint"):
        setattr(cfg, key, os.path.join(base_dir, getattr(cfg, key)))
    cfg.data = {k: os.path.join(base_dir, v) if isinstance(v, str) else v for k, v in cfg.data.items()}
    return cfg


def load_data(cfg: ExperimentConfig, split: str) -> Dataset:
    """Load a split; ``data.<split>_limit`` keeps only the first N examples."""
    data = cfg.data
    prefix = "train" if split == "train" else "test"
    try:
        if f"{prefix}_images" in data:
            ds = load_idx(data[f"{prefix}_images"], data[f"{prefix}_labels"])
        elif "dir" in data:
            ds = load_mnist(data["dir"], split)
        else:
            raise ConfigError("config needs data.dir or data.<split>_images / data.<split>_labels")
    except FileNotFoundError as exc:
        raise IDXFormatError(exc.filename or "?", "file", "not found") from exc
    return ds.subset(data.get(f"{prefix}_limit"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, columns: list[str], rows: list[dict]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _write_timing(path: str, records: list[MetricsRecord]) -> None:
    root, _ = os.path.splitext(path)
    _write_csv(root + ".timing.csv", ["experiment_id", "seed", "descriptor", "epsilon", "seconds"],
               [asdict(r) for r in records])


def cmd_train(cfg: ExperimentConfig) -> list[MetricsRecord]:
    """Train one network per seed; write its checkpoint plus the per-epoch CSV."""
    train_data = load_data(cfg, "train")
    test_data = load_data(cfg, "test")
    rows, records = [], []
    finals = []
    for seed in cfg.seeds:
        net = init_network(cfg.spec(seed), seed)
        tcfg = TrainConfig(**{**asdict(cfg.train), "seed": seed})
        history = train(net, train_data, tcfg, test_data)
        for rec in history:
            rows.append(dict(experiment_id=cfg.experiment_id, geometry=cfg.geometry, seed=seed, epoch=rec.epoch,
                             train_loss=rec.train_loss, test_accuracy=rec.test_accuracy,
                             sensitivity_bound=rec.sensitivity_bound))
            records.append(MetricsRecord(cfg.experiment_id, cfg.geometry, seed, f"epoch {rec.epoch}", None,
                                         rec.test_accuracy, rec.sensitivity_bound, rec.seconds))
        final_acc = history.final_accuracy if len(history) else accuracy(net, test_data)
        finals.append((final_acc, network_sensitivity_bound(net).network_bound))
        checkpoint_save(net, cfg.checkpoint_path(seed))
        log.info("seed %d: accuracy %.4f", seed, final_acc)
    accs = [a for a, _ in finals]
    bounds = [b for _, b in finals]
    rows.append(dict(
        experiment_id=cfg.experiment_id, geometry=cfg.geometry, seed="summary", epoch=cfg.train.epochs,
        test_accuracy=statistics.fmean(accs), sensitivity_bound=statistics.fmean(bounds),
        accuracy_std=statistics.stdev(accs) if len(accs) > 1 else 0.0,
        bound_std=statistics.stdev(bounds) if len(bounds) > 1 else 0.0,
    ))
    _write_csv(cfg.output, TRAIN_COLUMNS, rows)
    _write_timing(cfg.output, records)
    return records


def cmd_attack(cfg: ExperimentConfig, checkpoint: str | None = None) -> list[MetricsRecord]:
    """Evaluate a checkpoint under every configured attack and epsilon."""
    path = checkpoint or cfg.checkpoint
    net = checkpoint_load(path, expected_geometry=cfg.geometry)
    test_data = load_data(cfg, "test")
    bound = network_sensitivity_bound(net).network_bound
    seed = net.spec.seed
    rows, records = [], []
    for acfg in cfg.attacks:
        t0 = time.perf_counter()
        res = evaluate_under_attack(net, test_data, acfg, cfg.limit if acfg.kind == "pgd" else None)
        seconds = time.perf_counter() - t0
        rows.append(dict(experiment_id=cfg.experiment_id, geometry=cfg.geometry, seed=seed,
                         attack=acfg.descriptor, epsilon=acfg.epsilon, accuracy=res.attacked_accuracy,
                         clean_accuracy=res.clean_accuracy, sensitivity_bound=bound,
                         n_examples=res.n_examples))
        records.append(MetricsRecord(cfg.experiment_id, cfg.geometry, seed, acfg.descriptor, acfg.epsilon,
                                     res.attacked_accuracy, bound, seconds))
        log.info("%s eps=%g: accuracy %.4f", acfg.descriptor, acfg.epsilon, res.attacked_accuracy)
    _write_csv(cfg.attack_output, ATTACK_COLUMNS, rows)
    _write_timing(cfg.attack_output, records)
    return records


def cmd_sensitivity(checkpoint: str) -> dict:
    net = checkpoint_load(checkpoint)
    report = network_sensitivity_bound(net)
    return {
        "geometry": net.spec.geometry,
        "network_bound": report.network_bound,
        "per_layer_max": [float(v.max()) for v in report.per_layer_bounds],
    }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbfinet", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train networks and write checkpoints + per-epoch CSV")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--geometry")

    a = sub.add_parser("attack", help="evaluate a checkpoint under the configured attacks")
    a.add_argument("--config", required=True)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--limit", type=int, help="evaluate PGD on the first N test examples only")

    s = sub.add_parser("sensitivity", help="print the sensitivity bound of a checkpoint")
    s.add_argument("--checkpoint", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "train":
            cmd_train(load_config(args.config, seed=args.seed, epochs=args.epochs, geometry=args.geometry))
        elif args.command == "attack":
            cmd_attack(load_config(args.config, limit=args.limit), args.checkpoint)
        else:
            print(json.dumps(cmd_sensitivity(args.checkpoint)))
    except tuple(EXIT_CODES) as exc:
        tag = {ConfigError: "config", IDXFormatError: "format", CheckpointIntegrityError: "integrity"}
        kind = next(v for k, v in tag.items() if isinstance(exc, k))
        print(f"error [{kind}]: {exc}", file=sys.stderr)
        return next(code for k, code in EXIT_CODES.items() if isinstance(exc, k))
    except (OSError, ValueError) as exc:
        print(f"error [runtime]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
