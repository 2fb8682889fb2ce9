"""Command line interface.

Subcommands: validate a JSON config, synthesize encryption parameters
(design), compute steady-state and boundedness analysis (analyze), run
a Monte Carlo simulation (simulate), and rebuild the reference
experiments (reproduce). Delimited outputs are accompanied by rendered
PNG figures on the report paths.

Exit codes: 0 on success, 1 on configuration problems, 2 on numerical
failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .crypto import CipherKey, EncryptionPartition, make_partition
from .design import (
    DesignBudget,
    boundedness_check,
    design_stable_deterministic,
    design_stable_stochastic,
    design_unstable,
    partition_from_optimal,
    partition_from_unstable,
    single_strategy_check,
    stochastic_expected_covariance,
)
from .exceptions import ConfigError, NumericalFailure
from .harness import (
    ScenarioConfig,
    export_results,
    mass_spring_scenario,
    monte_carlo,
)
from .model import SystemModel, steady_state, validate_model
from .numerics import spectral_radius
from .schedule import (
    DeterministicStrategy,
    SingleStepStrategy,
    StochasticStrategy,
    Strategy,
)

__all__ = ["main"]

_DEFAULT_RUN = {
    "horizon": 300,
    "trials": 1000,
    "seed": 0,
    "out": "results.csv",
    "format": "csv",
    "key": 0,
}


# ---------------------------------------------------------------------------
# config parsing with field-path diagnostics


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _expect_dict(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _number(obj, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {type(obj).__name__}")
    return float(obj)


def _integer(obj, path: str) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, f"expected an integer, got {type(obj).__name__}")
    return int(obj)


def _string(obj, path: str) -> str:
    if not isinstance(obj, str):
        _fail(path, f"expected a string, got {type(obj).__name__}")
    return obj


def _vector(obj, path: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        _fail(path, "expected a nonempty list of numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(obj)])


def _matrix(obj, path: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        _fail(path, "expected a nonempty list of rows")
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(obj)]
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            _fail(f"{path}[{i}]", f"row has {len(r)} entries, row 0 has {width}")
    return np.vstack(rows)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from exc
    return _expect_dict(raw, "config")


def parse_model(raw_cfg: dict) -> SystemModel:
    block = _expect_dict(raw_cfg.get("model"), "model")
    if "scenario" in block:
        name = _string(block["scenario"], "model.scenario")
        if name != "mass_spring":
            _fail("model.scenario", f"unknown scenario {name!r}")
        c1 = _number(block.get("c1", 1.0), "model.c1")
        c2 = _number(block.get("c2", 1.0), "model.c2")
        return mass_spring_scenario(c1, c2)
    required = ("A", "B", "C", "Q", "R", "x0_mean", "P0")
    missing = [k for k in required if k not in block]
    if missing:
        _fail("model", f"missing fields: {', '.join(missing)}")
    model = SystemModel(
        A=_matrix(block["A"], "model.A"),
        B=_matrix(block["B"], "model.B"),
        C=_matrix(block["C"], "model.C"),
        Q=_matrix(block["Q"], "model.Q"),
        R=_matrix(block["R"], "model.R"),
        x0_mean=_vector(block["x0_mean"], "model.x0_mean"),
        P0=_matrix(block["P0"], "model.P0"),
    )
    return validate_model(model)


def parse_strategy(raw_cfg: dict, required: bool = True) -> Strategy | None:
    block = raw_cfg.get("strategy")
    if block is None:
        if required:
            _fail("strategy", "missing block")
        return None
    block = _expect_dict(block, "strategy")
    kind = _string(block.get("kind", ""), "strategy.kind")
    if kind == "stochastic":
        rate = _number(block.get("rate", 0.0), "strategy.rate")
        if not 0.0 <= rate <= 1.0:
            _fail("strategy.rate", f"must lie in [0, 1], got {rate}")
        return StochasticStrategy(rate)
    if kind == "deterministic":
        pattern = block.get("pattern", [1])
        if not isinstance(pattern, list) or not pattern:
            _fail("strategy.pattern", "expected a nonempty list of 0/1")
        for i, b in enumerate(pattern):
            if b not in (0, 1):
                _fail(f"strategy.pattern[{i}]", f"must be 0 or 1, got {b!r}")
        return DeterministicStrategy(tuple(int(b) for b in pattern))
    if kind == "single":
        return SingleStepStrategy(_integer(block.get("delta", 1), "strategy.delta"))
    _fail("strategy.kind", f"must be stochastic, deterministic, or single, got {kind!r}")


def _parse_budget(block: dict) -> DesignBudget:
    if "rate_budget" not in block:
        _fail("partition.rate_budget", "required when auto is 'stable'")
    rate = _number(block["rate_budget"], "partition.rate_budget")
    if rate <= 0.0:
        _fail("partition.rate_budget", f"must be positive, got {rate}")
    rows = _integer(block.get("row_budget", 1), "partition.row_budget")
    if rows < 1:
        _fail("partition.row_budget", f"must be >= 1, got {rows}")
    return DesignBudget(rate_budget=rate, row_budget=rows)


def resolve_partition(
    raw_cfg: dict,
    model: SystemModel,
    strategy: Strategy | None,
) -> tuple[EncryptionPartition, Strategy | None, dict | None]:
    """Return (partition, possibly redesigned strategy, design record).

    Auto partitions run the matching synthesis routine; for the stable
    design the synthesized frequency or pattern replaces the strategy's
    own, since picking those numbers is the point of the design.
    """
    block = _expect_dict(raw_cfg.get("partition"), "partition")
    if "auto" in block:
        mode = _string(block["auto"], "partition.auto")
        if mode == "unstable":
            ud = design_unstable(model)
            record = {
                "kind": "unstable",
                "eigenvalue": [ud.eigenvalue.real, ud.eigenvalue.imag],
                "S_bar": ud.S_bar.tolist(),
                "S": ud.S.tolist(),
            }
            return partition_from_unstable(ud), strategy, record
        if mode == "stable":
            budget = _parse_budget(block)
            if strategy is None or isinstance(strategy, StochasticStrategy):
                params = design_stable_stochastic(budget, model)
                strategy = StochasticStrategy(params.frequency)
                record = {"kind": "stable_stochastic"}
            elif isinstance(strategy, DeterministicStrategy):
                params, pattern = design_stable_deterministic(budget, model)
                strategy = DeterministicStrategy(pattern)
                record = {"kind": "stable_deterministic", "pattern": list(pattern)}
            else:
                _fail(
                    "partition.auto",
                    "stable design pairs with a stochastic or deterministic strategy",
                )
            record.update(
                {
                    "m_bar": params.m_bar,
                    "frequency": params.frequency,
                    "objective": params.objective,
                    "S": params.S.tolist(),
                    "S_bar": params.S_bar.tolist(),
                }
            )
            return partition_from_optimal(params), strategy, record
        _fail("partition.auto", f"must be 'stable' or 'unstable', got {mode!r}")
    if "S_bar" not in block:
        _fail("partition", "needs either S_bar (with optional S) or an auto block")
    S_bar = _matrix(block["S_bar"], "partition.S_bar")
    S = _matrix(block["S"], "partition.S") if "S" in block else None
    part = make_partition(S_bar, S)
    if part.m != model.m:
        _fail(
            "partition.S_bar",
            f"has {part.m} columns, model innovation dimension is {model.m}",
        )
    return part, strategy, None


def parse_run(raw_cfg: dict, overrides: dict) -> dict:
    block = raw_cfg.get("run", {})
    block = _expect_dict(block, "run") if block else {}
    run = dict(_DEFAULT_RUN)
    for key in ("horizon", "trials", "seed", "key"):
        if key in block:
            run[key] = _integer(block[key], f"run.{key}")
    if "out" in block:
        run["out"] = _string(block["out"], "run.out")
    if "format" in block:
        run["format"] = _string(block["format"], "run.format")
    for key, val in overrides.items():
        if val is not None:
            run[key] = val
    if run["format"] not in ("csv", "json"):
        _fail("run.format", f"must be 'csv' or 'json', got {run['format']!r}")
    if run["horizon"] < 1:
        _fail("run.horizon", f"must be >= 1, got {run['horizon']}")
    if run["trials"] < 1:
        _fail("run.trials", f"must be >= 1, got {run['trials']}")
    return run


def build_scenario(raw_cfg: dict, overrides: dict) -> tuple[ScenarioConfig, dict, dict | None]:
    model = parse_model(raw_cfg)
    strategy = parse_strategy(raw_cfg, required=True)
    part, strategy, record = resolve_partition(raw_cfg, model, strategy)
    run = parse_run(raw_cfg, overrides)
    cfg = ScenarioConfig(
        model=model,
        partition=part,
        strategy=strategy,
        horizon=run["horizon"],
        trials=run["trials"],
        seed=run["seed"],
        key=CipherKey(run["key"]),
    )
    return cfg, run, record


# ---------------------------------------------------------------------------
# subcommands


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_validate(args) -> int:
    raw = load_config(args.config)
    model = parse_model(raw)
    rho = spectral_radius(model.A)
    print(
        f"model: OK (states={model.n}, inputs={model.p}, outputs={model.m}, "
        f"spectral_radius={rho:.6f})"
    )
    if "partition" in raw:
        block = _expect_dict(raw["partition"], "partition")
        if "auto" in block:
            mode = _string(block["auto"], "partition.auto")
            if mode not in ("stable", "unstable"):
                _fail("partition.auto", f"must be 'stable' or 'unstable', got {mode!r}")
            if mode == "stable":
                _parse_budget(block)
            print(f"partition: OK (auto {mode})")
        else:
            part, _, _ = resolve_partition(raw, model, None)
            print(f"partition: OK (encrypted_rows={part.m_bar} of {part.m})")
    strategy = parse_strategy(raw, required=False)
    if strategy is not None:
        print(f"strategy: OK ({type(strategy).__name__})")
    if "run" in raw:
        parse_run(raw, {})
        print("run: OK")
    print("config: OK")
    return 0


def _cmd_design(args) -> int:
    raw = load_config(args.config)
    model = parse_model(raw)
    block = _expect_dict(raw.get("partition"), "partition")
    if "auto" not in block:
        _fail("partition", "design needs an auto partition block")
    strategy = parse_strategy(raw, required=False)
    _, _, record = resolve_partition(raw, model, strategy)
    _emit(record, args.out)
    return 0


def _cmd_analyze(args) -> int:
    raw = load_config(args.config)
    model = parse_model(raw)
    strategy = parse_strategy(raw, required=False)
    part, strategy, record = resolve_partition(raw, model, strategy)
    rho = spectral_radius(model.A)
    ss = steady_state(model)
    verdict = boundedness_check(part, model)
    limits: dict = {
        "P_minus": ss.P_minus.tolist(),
        "P_plus": ss.P_plus.tolist(),
        "boundedness_steps": verdict.steps,
        "witness_trace": verdict.witness_trace,
        "eavesdropper_limit": verdict.limit.tolist() if verdict.limit is not None else None,
    }
    if isinstance(strategy, StochasticStrategy) and strategy.rate > 0 and rho < 1:
        _, expected_limit = stochastic_expected_covariance(
            strategy.rate, part, model, horizon=1
        )
        limits["stochastic_expected_limit"] = (
            expected_limit.tolist() if expected_limit is not None else None
        )
    optimal = None
    if record is not None and record.get("kind", "").startswith("stable"):
        optimal = {
            "m_bar": record["m_bar"],
            "frequency": record["frequency"],
            "S": record["S"],
        }
    report: dict = {
        "verdict": verdict.verdict,
        "limits": limits,
        "optimal": optimal,
        "N": ss.N,
        "rho": rho,
    }
    if isinstance(strategy, SingleStepStrategy):
        sv = single_strategy_check(strategy.delta, model)
        report["single_strategy"] = {"case": sv.case, "unbounded": sv.unbounded}
    _emit(report, args.out)
    return 0


def _cmd_simulate(args) -> int:
    raw = load_config(args.config)
    overrides = {"seed": args.seed, "out": args.out, "format": args.format}
    cfg, run, _ = build_scenario(raw, overrides)
    agg = monte_carlo(cfg)
    export_results(agg, run["out"], run["format"])
    written = [str(run["out"])]
    if args.plot:
        from .report import save_mse_figure

        png = str(Path(run["out"]).with_suffix(".png"))
        save_mse_figure(agg, png)
        written.append(png)
    print(
        f"simulate: {cfg.trials} trials x {cfg.horizon} steps -> "
        + ", ".join(written)
    )
    return 0


def _reference_configs(figure: str, trials: int, seed: int) -> dict[str, ScenarioConfig]:
    """Scenario set behind each reference experiment."""
    horizon = 300
    if figure in ("fig3", "fig5"):
        model = mass_spring_scenario(-1.0, -1.0)
        part_designed = partition_from_unstable(design_unstable(model))
    else:
        model = mass_spring_scenario(1.0, 1.0)
        budget = DesignBudget(rate_budget=0.2, row_budget=2)
        params = design_stable_stochastic(budget, model)
        part_designed = partition_from_optimal(params)
    part_full = make_partition(np.eye(model.m))

    def cfg(part, strategy):
        return ScenarioConfig(
            model=model,
            partition=part,
            strategy=strategy,
            horizon=horizon,
            trials=trials,
            seed=seed,
            key=CipherKey(seed),
        )

    sparse_pattern = (1,) + (0,) * 9
    if figure == "fig3":
        return {
            "stochastic": cfg(part_designed, StochasticStrategy(0.1)),
            "deterministic": cfg(part_designed, DeterministicStrategy(sparse_pattern)),
            "single": cfg(part_full, SingleStepStrategy(1)),
            "baseline": cfg(part_designed, StochasticStrategy(0.0)),
        }
    if figure == "fig4":
        _, pattern = design_stable_deterministic(
            DesignBudget(rate_budget=0.2, row_budget=2), model
        )
        return {
            "stochastic": cfg(part_designed, StochasticStrategy(0.2)),
            "deterministic": cfg(part_designed, DeterministicStrategy(pattern)),
            "single": cfg(part_full, SingleStepStrategy(1)),
            "baseline": cfg(part_designed, StochasticStrategy(0.0)),
        }
    return {
        "intermittent_stochastic": cfg(part_designed, StochasticStrategy(0.1)),
        "intermittent_deterministic": cfg(
            part_designed, DeterministicStrategy(sparse_pattern)
        ),
        "single_step": cfg(part_full, SingleStepStrategy(1)),
        "successive": cfg(part_designed, DeterministicStrategy((1,))),
        "full_low_frequency": cfg(part_full, StochasticStrategy(0.05)),
    }


def _cmd_reproduce(args) -> int:
    from .report import save_comparison_figure, save_mse_figure

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    configs = _reference_configs(args.figure, args.trials, args.seed)
    eav_curves: dict[str, np.ndarray] = {}
    written: list[str] = []
    for name, cfg in configs.items():
        agg = monte_carlo(cfg)
        csv_path = outdir / f"{args.figure}_{name}.csv"
        export_results(agg, csv_path, "csv")
        written.append(str(csv_path))
        eav_curves[name] = agg.eav_mse
        png_path = outdir / f"{args.figure}_{name}.png"
        save_mse_figure(agg, png_path, title=f"{args.figure}: {name}")
        written.append(str(png_path))
    overlay = outdir / f"{args.figure}.png"
    save_comparison_figure(
        eav_curves, overlay, title=f"{args.figure}: eavesdropper error by method"
    )
    written.append(str(overlay))
    print(f"reproduce {args.figure}: wrote {len(written)} files under {outdir}")
    for w in written:
        print(f"  {w}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch


class _Parser(argparse.ArgumentParser):
    """argparse variant using exit code 1 for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="covert-kalman",
        description=(
            "State estimation with intermittently encrypted innovations: "
            "validate configs, design encryption parameters, analyze "
            "eavesdropper error, simulate, and reproduce the reference "
            "experiments."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("validate", help="check a JSON config and report problems")
    p.add_argument("config", help="path to the JSON config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("design", help="synthesize encryption parameters")
    p.add_argument("config", help="path to the JSON config (auto partition block)")
    p.add_argument("--out", help="write the design JSON here instead of stdout")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("analyze", help="steady-state and boundedness analysis")
    p.add_argument("config", help="path to the JSON config")
    p.add_argument("--out", help="write the report JSON here instead of stdout")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p.add_argument("config", help="path to the JSON config")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", help="override run.out")
    p.add_argument("--format", choices=("csv", "json"), help="override run.format")
    p.add_argument("--plot", action="store_true", help="render a PNG next to the output")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reproduce", help="rebuild a reference experiment")
    p.add_argument("figure", choices=("fig3", "fig4", "fig5"))
    p.add_argument("--out", default="reproduction", help="output directory")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=20260814)
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"covert-kalman: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"covert-kalman: i/o error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"covert-kalman: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
