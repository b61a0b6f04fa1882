"""Command-line entry point: ``molcyclegan {train,evaluate,convert}``.

Configuration precedence is flags > ``--config`` JSON file > per-task
defaults. The effective configuration is written to the output directory
and its hash is stamped on every report.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""
import argparse
import copy
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict

import numpy as np

from . import dataio, gan, optimize
from .codec import SYNTHETIC_PREDICATE, SYNTHETIC_PROPERTY, EmbeddingTable, SyntheticSpace, synthetic_sample
from .errors import ConfigError, DataError, LookupFailure, NumericError, ShapeError, StateError

log = logging.getLogger("molcyclegan")

TASKS = ("halogen", "aromatic", "constrained", "unconstrained", "synthetic")
CODECS = ("table", "synthetic")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT = "checkpoint.zip"
CONFIG_ECHO = "config.json"

_TASK_PRESET = {
    "halogen": gan.STRUCTURAL, "aromatic": gan.STRUCTURAL, "synthetic": gan.STRUCTURAL,
    "constrained": gan.PHYSIOCHEMICAL, "unconstrained": gan.PHYSIOCHEMICAL,
}
_TASK_SPLIT = {"halogen": dataio.HALOGEN, "aromatic": dataio.AROMATIC,
               "constrained": "constrained", "unconstrained": "unconstrained"}


def default_config(task):
    """Effective defaults for one task, as a plain JSON-ready dict."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    preset = _TASK_PRESET[task]
    train = asdict(gan.TrainConfig(epochs=gan.PRESET_EPOCHS[preset]))
    del train["seed"]  # derived from the top-level seed
    cfg = {
        "task": task,
        "codec": "synthetic" if task == "synthetic" else "table",
        "dataset": None,
        "seed": 0,
        "output_dir": None,
        "preset": preset,
        "bn_generators": False,
        "bn_discriminators": False,
        "train": train,
        "sizes": None,
        "property": dataio.PENALIZED_LOGP,
        "fraction": 0.2,
        "deltas": list(optimize.DEFAULT_DELTAS),
        "k_points": optimize.DEFAULT_K,
        "include_endpoint": True,
        "require_positive_improvement": False,
        "iterations": 30,
        "synthetic": {"dim": 56, "n_train": 2000, "n_test": 200},
    }
    if task == "synthetic":
        # the synthetic harness has ~30 steps per epoch instead of ~1250
        cfg["train"]["lr"] = 2e-3
    if task in _TASK_SPLIT:
        cfg["sizes"] = dataio.DEFAULT_SIZES[_TASK_SPLIT[task]].to_dict()
    return cfg


def _merge(base, override, path=""):
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value
    return base


def validate_config(cfg):
    if cfg["task"] not in TASKS:
        raise ConfigError(f"unknown task {cfg['task']!r}")
    if cfg["codec"] not in CODECS:
        raise ConfigError(f"unknown codec {cfg['codec']!r}; expected one of {CODECS}")
    if cfg["task"] in ("halogen", "aromatic") and cfg["codec"] != "table":
        raise ConfigError(f"task {cfg['task']!r} needs the table codec")
    if cfg["task"] == "synthetic" and cfg["codec"] != "synthetic":
        raise ConfigError("task 'synthetic' needs the synthetic codec")
    if cfg["codec"] == "table" and not cfg["dataset"]:
        raise ConfigError("the table codec needs --dataset")
    if cfg["preset"] not in gan.PRESET_EPOCHS:
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    if not cfg["deltas"] or not all(isinstance(d, (int, float)) and 0 <= d <= 1 for d in cfg["deltas"]):
        raise ConfigError("deltas must be a non-empty list of values in [0, 1]")
    if not isinstance(cfg["k_points"], int) or cfg["k_points"] < 1:
        raise ConfigError("k_points must be a positive integer")
    if not isinstance(cfg["iterations"], int) or cfg["iterations"] < 0:
        raise ConfigError("iterations must be a non-negative integer")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    syn = cfg["synthetic"]
    if syn["n_train"] < 2 or syn["n_test"] < 1 or syn["dim"] < 1:
        raise ConfigError("synthetic sizes must be positive (n_train >= 2)")
    if cfg["sizes"] is not None:
        unknown = set(cfg["sizes"]) - {"x_train", "y_train", "x_test", "y_test"}
        if unknown:
            raise ConfigError(f"unknown split size keys {sorted(unknown)}")
    gan.TrainConfig.from_dict(cfg["train"])
    return cfg


def config_hash(cfg):
    """SHA-256 of the canonical JSON config, ignoring where outputs go."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _read_config_file(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None


def _flag_overrides(args):
    out = {}
    for flag, key in (("seed", "seed"), ("dataset", "dataset"), ("codec", "codec"), ("output_dir", "output_dir"),
                      ("k_points", "k_points"), ("iterations", "iterations")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    if getattr(args, "delta", None):
        out["deltas"] = list(args.delta)
    train = {}
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    if getattr(args, "batch_size", None) is not None:
        train["batch_size"] = args.batch_size
    if getattr(args, "lr", None) is not None:
        train["lr"] = args.lr
    if train:
        out["train"] = train
    return out


def build_config(args, stored=None):
    """Layer defaults, an optional stored config, the --config file and flags."""
    file_cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
    task = getattr(args, "task", None) or file_cfg.get("task") or (stored or {}).get("task")
    if task is None:
        raise ConfigError("no task given (use --task or a config file)")
    cfg = default_config(task)
    if stored:
        stored = copy.deepcopy(stored)
        if stored.get("task") != task:
            # a different task brings its own preset; the checkpoint is then checked against it
            for key in ("task", "preset", "codec", "sizes", "train"):
                stored.pop(key, None)
        _merge(cfg, stored)
    _merge(cfg, file_cfg)
    _merge(cfg, _flag_overrides(args))
    if cfg["task"] != task:
        raise ConfigError(f"task {cfg['task']!r} conflicts with {task!r}")
    return validate_config(cfg)


# --- data -------------------------------------------------------------------

def _seeds(seed):
    """Independent integer seeds for (data, model init, training)."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]


def _space(cfg):
    return SyntheticSpace(dim=cfg["synthetic"]["dim"])


def _sizes(cfg):
    s = cfg["sizes"] or {}
    return dataio.SplitSizes(**s)


def _load_table(cfg):
    path = cfg["dataset"]
    if not os.path.exists(path):
        raise ConfigError(f"dataset {path!r} not found")
    ds = dataio.load_dataset(path)
    if not len(ds):
        raise DataError(f"dataset {path!r} is empty")
    if ds.dim is None:
        raise DataError(f"dataset {path!r} has no embeddings")
    return ds


def make_split(cfg):
    """(SplitPair, codec, property_name, predicate) for a config."""
    data_seed = _seeds(cfg["seed"])[0]
    task = cfg["task"]
    if cfg["codec"] == "synthetic":
        space = _space(cfg)
        syn = cfg["synthetic"]
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(data_seed).spawn(3)]
        x_train = synthetic_sample(space, "X", syn["n_train"], seeds[0])
        y_train = synthetic_sample(space, "Y", syn["n_train"], seeds[1])
        x_test = _relabel(synthetic_sample(space, "X", syn["n_test"], seeds[2]), "t")
        y_test = _relabel(synthetic_sample(space, "Y", syn["n_test"], seeds[2]), "t")
        info = {"mode": "synthetic", "seed": data_seed, "space": space.to_dict()}
        split = dataio.SplitPair(x_train, y_train, x_test, y_test if task == "synthetic" else dataio.Dataset(), info)
        return split, space, SYNTHETIC_PROPERTY, SYNTHETIC_PREDICATE
    ds = _load_table(cfg)
    sizes = _sizes(cfg)
    if task in ("halogen", "aromatic"):
        split = dataio.split_structural(ds, _TASK_SPLIT[task], sizes, data_seed)
    elif task == "constrained":
        split = dataio.split_by_median(ds, cfg["property"], sizes, data_seed)
    else:
        split = dataio.split_top_fraction(ds, cfg["property"], cfg["fraction"], sizes, data_seed)
    return split, EmbeddingTable(ds), cfg["property"], _TASK_SPLIT.get(task)


def _relabel(dataset, prefix):
    return dataio.Dataset(dataio.MoleculeRecord(prefix + r.id, r.smiles, r.embedding, r.properties) for r in dataset)


# --- commands -----------------------------------------------------------------

def _write_config(out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_ECHO), "w") as fh:
        json.dump(dict(cfg, config_hash=config_hash(cfg)), fh, indent=1, sort_keys=True)
        fh.write("\n")


LOG_COLUMNS = ["epoch", "l_gan", "l_cyc", "l_identity", "total", "d_x", "d_y", "g_adv"]


def _write_log(path, history):
    rows = [dict(epoch=i, **rep.as_dict()) for i, rep in enumerate(history, start=1)]
    with open(path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in LOG_COLUMNS) + "\n")


def cmd_train(cfg):
    out_dir = cfg["output_dir"] or "."
    _write_config(out_dir, cfg)
    split, codec, _, _ = make_split(cfg)
    if len(split.x_train) < 2 or len(split.y_train) < 2:
        raise DataError(f"training sets too small (|X|={len(split.x_train)}, |Y|={len(split.y_train)})")
    dataio.write_split_manifest(os.path.join(out_dir, "split_manifest.json"), split)
    x = codec.latents(list(split.x_train))
    y = codec.latents(list(split.y_train))
    _, model_seed, train_seed = _seeds(cfg["seed"])
    model = gan.build_model(cfg["preset"], x.shape[1], model_seed, cfg["bn_generators"], cfg["bn_discriminators"])
    tcfg = gan.TrainConfig.from_dict(dict(cfg["train"], seed=train_seed))
    portable = {k: v for k, v in cfg.items() if k != "output_dir"}
    extra = {"experiment": portable, "config_hash": config_hash(cfg), "split": split.manifest()}
    history = []

    def on_epoch(epoch, report, net, opts):
        history.append(report)
        if tcfg.checkpoint_every and epoch % tcfg.checkpoint_every == 0:
            gan.save_bundle(os.path.join(out_dir, f"checkpoint_epoch{epoch:04d}.zip"), net, tcfg, opts,
                            dict(extra, epoch=epoch))

    ckpt = os.path.join(out_dir, CHECKPOINT)
    try:
        model, _, opts = gan.train(model, x, y, tcfg, on_epoch=on_epoch)
    except NumericError as exc:
        last_epoch = exc.epoch - 1
        gan.save_bundle(ckpt, exc.last_good, tcfg, exc.last_good_optimizers,
                        dict(extra, epoch=last_epoch, failed=str(exc)))
        _write_log(os.path.join(out_dir, "train_log.csv"), history)
        raise
    gan.save_bundle(ckpt, model, tcfg, opts, dict(extra, epoch=tcfg.epochs))
    _write_log(os.path.join(out_dir, "train_log.csv"), history)
    return ckpt


def _check_architecture(model, cfg):
    dim = model.latent_dim
    expected = {
        "G": gan.generator_layers(cfg["preset"], dim, cfg["bn_generators"]),
        "F": gan.generator_layers(cfg["preset"], dim, cfg["bn_generators"]),
        "D_X": gan.discriminator_layers(cfg["preset"], dim, cfg["bn_discriminators"]),
        "D_Y": gan.discriminator_layers(cfg["preset"], dim, cfg["bn_discriminators"]),
    }
    for name, net in model.networks().items():
        found = [s.to_dict() for s in net.layers]
        want = [s.to_dict() for s in expected[name]]
        if found != want:
            raise ConfigError(f"checkpoint network {name} does not match task {cfg['task']!r} "
                              f"(preset {cfg['preset']}): expected layers {want}, found {found}")


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_evaluate(cfg, checkpoint):
    out_dir = cfg["output_dir"] or "."
    model, _, _, manifest = gan.load_bundle(checkpoint)
    _check_architecture(model, cfg)
    _write_config(out_dir, cfg)
    split, codec, prop, predicate = make_split(cfg)
    stored = manifest.get("extra", {}).get("split")
    if stored is not None and cfg["codec"] == "table" and stored.get("ids") != split.manifest()["ids"]:
        log.warning("split differs from the one recorded at training time")
    if codec.dim != model.latent_dim:
        raise ConfigError(f"checkpoint latent dim {model.latent_dim} does not match data dim {codec.dim}")
    meta = optimize.report_meta(codec, config_hash(cfg), task=cfg["task"], checkpoint_sha256=_file_sha256(checkpoint))
    written = {}
    task = cfg["task"]
    if task in ("halogen", "aromatic", "synthetic"):
        baseline = codec.dataset if isinstance(codec, EmbeddingTable) else None
        report = optimize.eval_structural(model, split.x_test, split.y_test, codec, predicate, baseline, cfg["seed"])
        optimize.write_structural(out_dir, report, meta)
        written["structural"] = report
    if task in ("constrained", "synthetic"):
        outcomes = optimize.constrained_sweep(model, split.x_test, codec, prop, cfg["deltas"], cfg["k_points"],
                                              cfg["include_endpoint"], cfg["require_positive_improvement"])
        written["constrained"] = optimize.write_constrained(out_dir, outcomes, codec, prop, meta)
    if task in ("unconstrained", "synthetic"):
        trace = optimize.unconstrained_iterate(model, split.x_test, codec, prop, cfg["iterations"])
        written["unconstrained"] = optimize.write_trace(out_dir, trace, codec, prop, meta)
        if trace.aborted_at is not None:
            raise NumericError(f"unconstrained iteration {trace.aborted_at}: {trace.error}")
    return written


def cmd_convert(csv_path, jsonl_path):
    return dataio.convert_csv(csv_path, jsonl_path)


# --- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON config file mirroring the experiment config")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", help="JSONL dataset (table codec)")
    p.add_argument("--codec", choices=CODECS)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--delta", type=float, nargs="+", help="similarity thresholds for the constrained protocol")
    p.add_argument("--k-points", dest="k_points", type=int, help="points along each optimisation path")
    p.add_argument("--iterations", type=int, help="generator applications in the unconstrained protocol")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser():
    parser = _Parser(prog="molcyclegan", description="CycleGAN molecule optimisation in a latent space")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    tr = sub.add_parser("train", help="train a model and write a checkpoint bundle")
    _common(tr)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--lr", type=float)
    ev = sub.add_parser("evaluate", help="evaluate a checkpoint with the task's protocol")
    _common(ev)
    ev.add_argument("--checkpoint", required=True)
    cv = sub.add_parser("convert", help="convert a CSV dataset to JSONL")
    cv.add_argument("csv_path")
    cv.add_argument("-o", "--output", required=True)
    return parser


def _stored_config(checkpoint):
    try:
        _, _, _, manifest = gan.load_bundle(checkpoint)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint {checkpoint!r} not found") from None
    return manifest.get("extra", {}).get("experiment")


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    warnings.simplefilter("default", dataio.DataWarning)
    try:
        if args.command == "convert":
            n = cmd_convert(args.csv_path, args.output)
            print(f"wrote {n} records to {args.output}")
        elif args.command == "train":
            cfg = build_config(args)
            ckpt = cmd_train(cfg)
            print(f"checkpoint: {ckpt}")
        else:
            stored = _stored_config(args.checkpoint)
            if stored is not None:
                stored = {k: v for k, v in stored.items() if k != "output_dir"}
            cfg = build_config(args, stored)
            cmd_evaluate(cfg, args.checkpoint)
            print(f"reports: {cfg['output_dir'] or '.'}")
    except (ConfigError, ShapeError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LookupFailure, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
