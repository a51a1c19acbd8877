"""``dca`` command line: simulate, interpolate, gradcheck and train experiments."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .binary import BinaryRule
from .config import ExperimentConfig
from .core import (
    RuleTable,
    Topology,
    dca_run,
    delta_configuration,
    wolfram_to_rule,
)
from .grad import central_difference, max_relative_error
from .interpolation import ALPHAS, interpolated_table
from .io import (
    RuleFileError,
    SpaceTimeDiagram,
    load_configuration,
    load_rule,
    save_rule,
    write_loss_csv,
    write_pgm,
)
from .optim import (
    TargetSpec,
    TrainingError,
    TrainState,
    batch_loss_gradient,
    initial_weights,
    loss_gradient,
    loss_value,
    train,
)

log = logging.getLogger("dca")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
MODES = ("simulate", "train", "gradcheck", "interpolate")


class ConfigError(ValueError):
    pass


class Experiment:
    """A validated config plus everything resolved from it (seed, topology, paths)."""

    def __init__(self, cfg: ExperimentConfig, mode: str, base_dir: Path):
        self.cfg = cfg
        self.mode = mode
        self.base_dir = base_dir
        self.topology = Topology(cfg.topology.n, tuple(cfg.topology.offsets))
        seed = cfg.seed
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % 2**32)
        self.seed = seed
        weight_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
        self.weight_rng_seed = weight_seq
        self.batch_rng = np.random.default_rng(batch_seq)
        self.out_dir = Path(cfg.outputs.dir)
        if not self.out_dir.is_absolute():
            self.out_dir = base_dir / self.out_dir

    def effective_config(self) -> dict:
        doc = self.cfg.model_dump(mode="json")
        doc["mode"] = self.mode
        doc["seed"] = self.seed
        doc["outputs"]["dir"] = str(self.out_dir)
        return doc

    # -- rules -------------------------------------------------------------

    def _need_eca(self, what: str) -> None:
        if self.topology.arity != 3:
            raise ConfigError(f"{what} needs exactly three offsets")

    def rule(self, alpha: float | None = None):
        rc = self.cfg.rule
        arity = self.topology.arity
        binary = rc.parameterization == "sigmoid"
        if rc.wolfram is not None:
            self._need_eca("a Wolfram rule")
            discrete = wolfram_to_rule(rc.wolfram)
            return BinaryRule.from_discrete(discrete) if binary else RuleTable.from_discrete(discrete)
        if rc.file is not None:
            try:
                loaded = load_rule((self.base_dir / rc.file).read_text())
            except RuleFileError as exc:
                raise ConfigError(f"{rc.file}: {exc}") from None
            if loaded.offsets != self.topology.offsets:
                raise ConfigError(
                    f"rule file offsets {list(loaded.offsets)} differ from topology "
                    f"{list(self.topology.offsets)}"
                )
            return loaded.rule
        if rc.weights is not None:
            try:
                return (BinaryRule.from_weights(rc.weights) if binary
                        else RuleTable.from_weights(rc.weights))
            except ValueError as exc:
                raise ConfigError(f"rule.weights: {exc}") from None
        if rc.init is not None:
            shape = (2**arity,) if binary else (2**arity, 2)
            w = initial_weights(shape, self.weight_rng_seed, rc.init, rc.init_scale)
            return BinaryRule.from_weights(w) if binary else RuleTable.from_weights(w)
        self._need_eca("an interpolation table")
        if alpha is None:
            alpha = rc.alphas[0]
        return interpolated_table(rc.table, alpha)

    # -- initial configurations ---------------------------------------------

    def initial_configs(self) -> list[np.ndarray]:
        ic = self.cfg.initial
        n = self.topology.ring_size
        if ic.bits is not None:
            return [delta_configuration([int(c) for c in ic.bits])]
        if ic.centered:
            state = np.zeros(n, dtype=np.int64)
            state[n // 2] = 1
            return [delta_configuration(state)]
        if ic.file is not None:
            x = load_configuration((self.base_dir / ic.file).read_text())
            if x.shape != (n, 2):
                raise ConfigError(f"initial configuration file has shape {x.shape}, expected ({n}, 2)")
            return [x]
        r = ic.random
        return [delta_configuration((self.batch_rng.random(n) < r.p).astype(np.int64))
                for _ in range(r.count)]

    def target(self) -> TargetSpec:
        tc = self.cfg.target
        if tc.kind == "majority":
            return TargetSpec.majority()
        if tc.kind == "discrete_rule_after_n_steps":
            self._need_eca("a Wolfram target")
            return TargetSpec.after_steps(wolfram_to_rule(tc.wolfram))
        return TargetSpec.fixed(delta_configuration([int(c) for c in tc.bits]))


def _as_engine_input(rule, config: np.ndarray):
    return config[:, 1] if isinstance(rule, BinaryRule) else config


def _as_engine_target(rule, target: TargetSpec) -> TargetSpec:
    if isinstance(rule, BinaryRule) and target.kind == "fixed_configuration":
        return TargetSpec.fixed(target.configuration[:, 1])
    return target


def _general(rule) -> RuleTable:
    return rule.to_general() if isinstance(rule, BinaryRule) else rule


def _trajectory_pgm(path: Path, rule, config, topology, steps) -> None:
    write_pgm(path, SpaceTimeDiagram.from_trajectory(dca_run(_general(rule), config, topology, steps)))


def run_simulate(exp: Experiment) -> int:
    path = exp.out_dir / "simulate.pgm"
    _trajectory_pgm(path, exp.rule(), exp.initial_configs()[0], exp.topology, exp.cfg.steps)
    print(f"wrote {path}")
    return EXIT_OK


def run_interpolate(exp: Experiment) -> int:
    alphas = exp.cfg.rule.alphas or list(ALPHAS)
    config = exp.initial_configs()[0]
    for alpha in alphas:
        path = exp.out_dir / f"interpolate_alpha_{alpha:.2f}.pgm"
        _trajectory_pgm(path, exp.rule(alpha), config, exp.topology, exp.cfg.steps)
        print(f"wrote {path}")
    return EXIT_OK


def run_gradcheck(exp: Experiment) -> int:
    rule = exp.rule()
    gc = exp.cfg.gradcheck
    target = _as_engine_target(rule, exp.target())
    worst = 0.0
    for config in exp.initial_configs():
        x0 = _as_engine_input(rule, config)
        _, grad = loss_gradient(rule, x0, exp.cfg.steps, target, exp.topology)

        def loss(w):
            return loss_value(rule.with_weights(w), x0, exp.cfg.steps, target, exp.topology)

        fd = central_difference(loss, rule.require_weights(), gc.h)
        worst = max(worst, max_relative_error(grad, fd, gc.tolerance, gc.floor))
    ok = worst <= gc.tolerance
    print(f"max relative error {worst:.3e} (tolerance {gc.tolerance:.0e}, "
          f"floor {gc.floor:.0e}): {'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def run_train(exp: Experiment) -> int:
    rule = exp.rule()
    configs = exp.initial_configs()
    target = _as_engine_target(rule, exp.target())
    oc = exp.cfg.optimizer
    state = TrainState(rule, [_as_engine_input(rule, c) for c in configs],
                       rate=oc.rate, momentum=oc.momentum, seed=exp.seed)
    _trajectory_pgm(exp.out_dir / "before.pgm", rule, configs[0], exp.topology, exp.cfg.steps)
    state, history = train(state, exp.cfg.steps, target, oc.iterations, exp.topology)
    final_loss, _ = batch_loss_gradient(state.rule, state.batch, exp.cfg.steps, target,
                                        exp.topology)
    (exp.out_dir / "loss.csv").write_bytes(write_loss_csv(history))
    (exp.out_dir / "rule.json").write_text(save_rule(state.rule, exp.topology.offsets))
    _trajectory_pgm(exp.out_dir / "after.pgm", state.rule, configs[0], exp.topology, exp.cfg.steps)
    discrete = state.rule.to_discrete()
    print(f"iterations {len(history)}  final batch loss {final_loss:.6g}")
    print(f"thresholded rule outputs {list(discrete.outputs)}")
    return EXIT_OK


RUNNERS = {
    "simulate": run_simulate,
    "interpolate": run_interpolate,
    "gradcheck": run_gradcheck,
    "train": run_train,
}


def load_experiment(mode: str, config_path: Path, steps=None, seed=None,
                    out_dir=None) -> Experiment:
    try:
        raw = json.loads(config_path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in (("steps", steps), ("seed", seed)):
        if value is not None:
            raw[key] = value
    if out_dir is not None:
        raw.setdefault("outputs", {})["dir"] = str(Path(out_dir).resolve())
    try:
        cfg = ExperimentConfig.model_validate(raw)
        base_dir = config_path.resolve().parent
        cfg.check_mode(mode, base_dir)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Experiment(cfg, mode, base_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dca", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} experiment")
        p.add_argument("--config", required=True, type=Path, help="experiment JSON file")
        p.add_argument("--steps", type=int, help="override steps")
        p.add_argument("--seed", type=int, help="override root seed")
        p.add_argument("--out-dir", help="override outputs.dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        exp = load_experiment(args.mode, args.config, args.steps, args.seed, args.out_dir)
        exp.out_dir.mkdir(parents=True, exist_ok=True)
        (exp.out_dir / "effective-config.json").write_text(
            json.dumps(exp.effective_config(), indent=2) + "\n")
        return RUNNERS[args.mode](exp)
    except ConfigError as exc:
        print(f"dca: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingError as exc:
        print(f"dca: training failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"dca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"dca: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
