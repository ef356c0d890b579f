"""Command-line interface: ``dpgn <command> [options]``.

Commands
--------
simulate   run a graph PDE and write the trajectory as CSV plus a summary
gen-data   simulate many noisy sequences and save them as a dataset directory
train      fit a model on a dataset directory (checkpoint + metric log)
eval       per-lead-time test MSE of a checkpoint, printed as JSON
inductive  train on one dataset and evaluate on another graph's dataset
horizon    train over several seeds and report MSE for lead times 1..N

Settings are resolved as built-in defaults, then ``--config`` (a JSON file
or inline JSON object), then explicit flags.  Exit status: 0 success,
2 configuration or input error, 3 numerical divergence, 4 missing checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .data import DatasetManifest, load_dataset, load_graph, save_dataset, write_trajectory_csv
from .exceptions import DPGNError, NonFiniteLoss, NonFiniteState
from .graph import complete_graph, cycle_graph, grid_coordinates, grid_graph, path_graph, random_graph
from .model import ModelKind
from .pde import PDEKind, PDESpec, dirichlet_energy, simulate
from .synthetic import initial_condition, make_synthetic_dataset
from .training import (
    TrainConfig,
    evaluate,
    evaluate_inductive,
    horizon_sweep,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metric_log,
)

log = logging.getLogger("dpgn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NO_CHECKPOINT = 4

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "lam": "lam",
    "alpha": "alpha",
    "lr": "learning_rate",
    "iterations": "iterations",
    "horizon": "T",
    "hidden": "d_hidden",
    "batch_size": "batch_size",
    "label_fraction": "label_fraction",
    "eval_every": "eval_every",
}

SIM_DEFAULTS = {"eq": "diffusion", "alpha": 0.1, "c": 0.0, "steps": 50, "source": None, "amplitude": 1.0}
GEN_DEFAULTS = {
    "eq": "diffusion",
    "alpha": 0.1,
    "c": 0.0,
    "sequences": 20,
    "steps": 40,
    "noise": 0.05,
    "amplitude": 1.0,
    "coords": False,
    "split_fractions": [0.65, 0.10, 0.25],
}


class ConfigError(DPGNError):
    """Invalid command-line or JSON configuration."""


class MissingCheckpoint(DPGNError):
    pass


# -- helpers -------------------------------------------------------------------


def configure_logging() -> None:
    name = os.environ.get("DPGN_LOG_LEVEL", "warn").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(
        level=logging.WARNING if level is None else level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    logging.captureWarnings(True)
    warnings.simplefilter("always")
    if level is None:
        log.warning("ignoring DPGN_LOG_LEVEL=%r (expected one of %s)", name, ", ".join(LOG_LEVELS))


def read_config(value) -> dict:
    """``--config`` accepts a path to a JSON file or an inline JSON object."""
    if value is None:
        return {}
    text = value
    if not value.lstrip().startswith("{"):
        try:
            text = Path(value).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {value}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def merge(defaults: dict, config: dict, args: argparse.Namespace, allowed=None) -> dict:
    allowed = set(defaults) if allowed is None else set(allowed)
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    out = {**defaults, **config}
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def parse_graph(spec: str):
    """Graph JSON path, or a generator string such as ``grid:5x6``, ``path:10``,
    ``cycle:8``, ``complete:5`` or ``random:20:0.2`` (seeded by ``--seed``)."""
    if spec is None:
        raise ConfigError("--graph is required")
    path = Path(spec)
    if path.exists():
        return load_graph(path)
    kind, _, rest = spec.partition(":")
    try:
        if kind == "grid":
            rows, cols = (int(x) for x in rest.lower().split("x"))
            return grid_graph(rows, cols), None
        if kind == "path":
            return path_graph(int(rest)), None
        if kind == "cycle":
            return cycle_graph(int(rest)), None
        if kind == "complete":
            return complete_graph(int(rest)), None
        if kind == "random":
            n, p = rest.split(":")
            return random_graph(int(n), float(p), np.random.default_rng(0), connected=True), None
    except ValueError as exc:
        raise ConfigError(f"bad --graph {spec!r}: {exc}") from exc
    raise ConfigError(f"--graph {spec!r} is neither a file nor a known generator")


def pde_spec(cfg: dict) -> PDESpec:
    try:
        kind = PDEKind(cfg["eq"])
    except ValueError as exc:
        raise ConfigError(f"eq must be 'diffusion' or 'wave', got {cfg['eq']!r}") from exc
    if kind is PDEKind.WAVE and not cfg.get("c"):
        raise ConfigError("c must be > 0 for the wave equation")
    try:
        return PDESpec(kind, float(cfg["alpha"]), float(cfg["c"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(args, config: dict) -> TrainConfig:
    base = TrainConfig().to_dict()
    unknown = sorted(set(config) - set(base) - {"model"})
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    values = {**base, **{k: v for k, v in config.items() if k != "model"}}
    for flag, name in TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def model_kind(args, config: dict) -> ModelKind:
    name = args.model or config.get("model", "dpgn")
    try:
        return ModelKind.parse(name)
    except ValueError as exc:
        raise ConfigError(f"model must be one of {[k.value for k in ModelKind]}, got {name!r}") from exc


def load_data(path):
    if path is None:
        raise ConfigError("--data is required")
    if not Path(path).exists():
        raise ConfigError(f"dataset {path} does not exist")
    return load_dataset(path)


def out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# -- commands ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = merge(SIM_DEFAULTS, read_config(args.config), args)
    spec = pde_spec(cfg)
    steps = int(cfg["steps"])
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    g, _ = parse_graph(args.graph)
    rng = np.random.default_rng(args.seed or 0)
    if cfg["source"] is None:
        init = initial_condition(g, spec, rng, float(cfg["amplitude"]))
    else:
        source = int(cfg["source"])
        if not 0 <= source < g.n_nodes:
            raise ConfigError(f"source must be a node index in [0, {g.n_nodes})")
        v = np.zeros(g.n_nodes)
        v[source] = float(cfg["amplitude"])
        init = v if spec.kind is PDEKind.DIFFUSION else (v, v.copy())
    traj = simulate(g, spec, init, steps)

    mass = traj.mass()
    energy = dirichlet_energy(g, traj.states)
    summary = {
        "pde": spec.to_dict(),
        "n_nodes": g.n_nodes,
        "steps": steps,
        "n_states": len(traj),
        "mass_initial": float(mass[0]),
        "mass_final": float(mass[-1]),
        "mass_drift": float(np.max(np.abs(mass - mass[0]))),
        "energy_initial": float(energy[0]),
        "energy_final": float(energy[-1]),
        "energy_nonincreasing": bool(np.all(np.diff(energy) <= 1e-12 * max(1.0, energy[0]))),
    }
    out = out_dir(args)
    write_trajectory_csv(out / "trajectory.csv", [traj.states], {"pde": spec.to_dict(), "n_nodes": g.n_nodes})
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    emit(summary)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = merge(GEN_DEFAULTS, read_config(args.config), args)
    spec = pde_spec(cfg)
    g, _ = parse_graph(args.graph)
    coords = None
    if cfg["coords"]:
        if not (args.graph or "").startswith("grid:"):
            raise ConfigError("coords are only available for grid:RxC graphs")
        rows, cols = (int(x) for x in args.graph[5:].lower().split("x"))
        coords = grid_coordinates(rows, cols)
    try:
        ds = make_synthetic_dataset(
            g,
            spec,
            int(cfg["sequences"]),
            int(cfg["steps"]),
            seed=args.seed or 0,
            noise_std=float(cfg["noise"]),
            coords=coords,
            split_fractions=tuple(cfg["split_fractions"]),
            amplitude=float(cfg["amplitude"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = out_dir(args)
    manifest = save_dataset(ds, out)
    emit({"out": str(out), "samples": len(ds), "sequences": ds.n_sequences, "manifest": manifest.to_dict()})
    return EXIT_OK


def cmd_train(args) -> int:
    config = read_config(args.config)
    cfg = train_config(args, config)
    kind = model_kind(args, config)
    ds = load_data(args.data)
    result = train(ds, cfg, kind)
    out = out_dir(args)
    save_checkpoint(out / "checkpoint.json", result, {"data": str(args.data)})
    write_metric_log(out / "metrics.jsonl", result.log)
    emit({"best_iteration": result.best_iteration, "best_val_mse": result.best_val_mse, "model": kind.value})
    return EXIT_OK


def _checkpoint(args):
    path = Path(args.checkpoint) if args.checkpoint else Path(args.out or ".") / "checkpoint.json"
    if not path.is_file():
        raise MissingCheckpoint(f"checkpoint {path} not found")
    return load_checkpoint(path)


def _mse_record(per_step) -> dict:
    return {"mse": float(np.mean(per_step)), "mse_per_step": [float(x) for x in per_step]}


def cmd_eval(args) -> int:
    result = _checkpoint(args)
    ds = load_data(args.data)
    h = args.horizon or result.config.T
    per_step = evaluate(result.params, result.model, ds, h, args.split)
    emit({"horizon": h, "split": args.split, **_mse_record(per_step)})
    return EXIT_OK


def cmd_inductive(args) -> int:
    config = read_config(args.config)
    cfg = train_config(args, config)
    kind = model_kind(args, config)
    src = load_data(args.train_on)
    dst = load_data(args.eval_on)
    if args.checkpoint:
        result = _checkpoint(args)
    else:
        result = train(src, cfg, kind)
    h = result.config.T
    in_domain = evaluate(result.params, result.model, src, h)
    transfer = evaluate_inductive(result.params, result.model, dst, h)
    emit(
        {
            "model": result.model.kind.value,
            "horizon": h,
            "in_domain": _mse_record(in_domain),
            "inductive": _mse_record(transfer),
            "ratio": float(np.mean(transfer) / np.mean(in_domain)),
        }
    )
    return EXIT_OK


def cmd_horizon(args) -> int:
    config = read_config(args.config)
    if args.horizon is None and "T" not in config:
        args.horizon = args.horizons
    cfg = train_config(args, config)
    kind = model_kind(args, config)
    if args.horizons < 1 or args.seeds < 1:
        raise ConfigError("--horizons and --seeds must be >= 1")
    ds = load_data(args.data)
    base = cfg.seed
    rows = horizon_sweep(ds, cfg, kind, args.horizons, range(base, base + args.seeds))
    for row in rows:
        emit(row)
    if args.out:
        path = out_dir(args) / "horizon.jsonl"
        write_metric_log(path, rows)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="graph JSON file or generator such as grid:5x6")
    p.add_argument("--data", help="dataset directory (or manifest.json)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON file or inline JSON object with default overrides")


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=[k.value for k in ModelKind])
    p.add_argument("--lambda", dest="lam", type=float, help="physics loss weight")
    p.add_argument("--alpha", type=float, help="latent diffusivity of the physics residual")
    p.add_argument("--lr", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--horizon", type=int, help="training rollout length T")
    p.add_argument("--hidden", type=int, help="latent width")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--label-fraction", type=float)
    p.add_argument("--eval-every", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpgn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a graph PDE")
    _common(p)
    p.add_argument("--eq", choices=[k.value for k in PDEKind])
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float, help="wave speed")
    p.add_argument("--steps", type=int)
    p.add_argument("--source", type=int, help="node carrying the initial impulse")
    p.add_argument("--amplitude", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    _common(p)
    p.add_argument("--eq", choices=[k.value for k in PDEKind])
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--sequences", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--coords", action="store_true", default=None, help="append grid coordinates")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    _common(p)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", help="defaults to OUT/checkpoint.json")
    p.add_argument("--horizon", type=int)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inductive", help="train on one graph, evaluate on another")
    _common(p)
    _train_flags(p)
    p.add_argument("--train-on", required=True, help="dataset directory of graph A")
    p.add_argument("--eval-on", required=True, help="dataset directory of graph B")
    p.add_argument("--checkpoint", help="skip training and use this checkpoint")
    p.set_defaults(func=cmd_inductive)

    p = sub.add_parser("horizon", help="MSE against lead time over several seeds")
    _common(p)
    _train_flags(p)
    p.add_argument("--horizons", type=int, default=10)
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_horizon)
    return parser


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except MissingCheckpoint as exc:
        log.error("%s", exc)
        return EXIT_NO_CHECKPOINT
    except (NonFiniteState, NonFiniteLoss, FloatingPointError) as exc:
        log.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except (ConfigError, DPGNError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
