"""Batch front-end: JSON config in, CSV/JSON artifacts out.

Commands: simulate, execute, value, mc-cost, pms-check, poisson-arb,
figure1.  Exit codes: 0 success, 1 usage, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .hawkes import ExcitationPair, HawkesSpec, MarkLaw, PowerSum, simulate
from .market import ImpactParams, MarketState, realized_cost
from .montecarlo import estimate_cost
from .pms import mihm_diagnosis, poisson_arbitrage_expected_cost, poisson_arbitrage_schedule
from .special import StabilityConfig
from .strategy import (
    ExecutionProblem,
    execute_optimal,
    ow_schedule,
    value_function,
    write_trajectory_csv,
)

COMMANDS = ("simulate", "execute", "value", "mc-cost", "pms-check", "poisson-arb", "figure1")

USAGE = """usage: mihexec <command> [config.json] [--seed N] [--paths N] [--grid-step H] [--out DIR] [--no-timestamp]

commands:
  simulate     simulate one event path, write events.csv
  execute      run the optimal strategy on one path, write trajectory.csv + cost.json
  value        evaluate the value function at t=0, write value.json
  mc-cost      Monte Carlo cost of the optimal policy, write mc_cost.json
  pms-check    price-manipulation diagnosis, write pms_report.json
  poisson-arb  order-shading round trip on a Poisson config, write schedule CSV + cost.json
  figure1      two-resilience showcase on a shared path, write figure1_*.csv
"""


class ConfigError(Exception):
    """Invalid configuration; .path points at the offending JSON field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _need(obj: dict, path: str, key: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return obj[key]


def _number(obj: dict, path: str, key: str, default=None) -> float:
    if key not in obj:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}", "missing required field")
    v = obj[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _power_terms(raw, path: str) -> PowerSum:
    if not isinstance(raw, list):
        raise ConfigError(path, "expected a list of {coef, power} objects")
    terms = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"{path}[{i}]", "expected an object with coef and power")
        terms.append((_number(item, f"{path}[{i}]", "coef"), _number(item, f"{path}[{i}]", "power")))
    try:
        return PowerSum.of(*terms)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _mark_law(raw, path: str) -> MarkLaw:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    kind = _need(raw, path, "type")
    try:
        if kind == "dirac":
            return MarkLaw.dirac(_number(raw, path, "m1"))
        if kind == "exponential":
            return MarkLaw.exponential(_number(raw, path, "m1"))
        if kind == "empirical":
            return MarkLaw.empirical(_need(raw, path, "volumes"), _need(raw, path, "weights"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}.type", f"unknown mark law type {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    params: ImpactParams
    spec: HawkesSpec
    x0: float
    T: float
    D0: float
    S0: float
    ode_step: float
    grid_step: float
    eta_threshold: float
    n_paths: int
    seed: int

    def problem(self) -> ExecutionProblem:
        return ExecutionProblem(
            x0=self.x0,
            T=self.T,
            D0=self.D0,
            S0=self.S0,
            params=self.params,
            spec=self.spec,
            stability=StabilityConfig(series_threshold=self.eta_threshold),
        )

    def echo(self) -> dict:
        return {
            "market": {
                "q": self.params.q,
                "rho": self.params.rho,
                "nu": self.params.nu,
                "epsilon": self.params.epsilon,
            },
            "hawkes": {
                "beta": self.spec.beta,
                "kappa_infty": self.spec.kappa_infty,
                "kappa0_plus": self.spec.kappa0_plus,
                "kappa0_minus": self.spec.kappa0_minus,
            },
            "execution": {"x0": self.x0, "T": self.T, "D0": self.D0, "S0": self.S0},
            "numerics": {
                "ode_step": self.ode_step,
                "grid_step": self.grid_step,
                "eta_threshold": self.eta_threshold,
                "n_paths": self.n_paths,
                "seed": self.seed,
            },
        }


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("$", "top-level config must be an object")
    market = raw.get("market")
    if not isinstance(market, dict):
        raise ConfigError("market", "missing or not an object")
    try:
        params = ImpactParams(
            q=_number(market, "market", "q"),
            rho=_number(market, "market", "rho"),
            nu=_number(market, "market", "nu"),
            epsilon=_number(market, "market", "epsilon"),
        )
    except ValueError as exc:
        raise ConfigError("market", str(exc)) from exc

    hawkes = raw.get("hawkes")
    if not isinstance(hawkes, dict):
        raise ConfigError("hawkes", "missing or not an object")
    marks = _mark_law(_need(hawkes, "hawkes", "mark_law"), "hawkes.mark_law")
    excitation = ExcitationPair(
        phi_s=_power_terms(_need(hawkes, "hawkes", "phi_s"), "hawkes.phi_s"),
        phi_c=_power_terms(_need(hawkes, "hawkes", "phi_c"), "hawkes.phi_c"),
    )
    try:
        spec = HawkesSpec(
            beta=_number(hawkes, "hawkes", "beta"),
            kappa_infty=_number(hawkes, "hawkes", "kappa_infty"),
            kappa0_plus=_number(hawkes, "hawkes", "kappa0_plus"),
            kappa0_minus=_number(hawkes, "hawkes", "kappa0_minus"),
            marks=marks,
            excitation=excitation,
        )
    except ValueError as exc:
        raise ConfigError("hawkes", str(exc)) from exc

    execution = raw.get("execution")
    if not isinstance(execution, dict):
        raise ConfigError("execution", "missing or not an object")
    T = _number(execution, "execution", "T")
    if not (T > 0.0):
        raise ConfigError("execution.T", "must be > 0")

    numerics = raw.get("numerics", {})
    if not isinstance(numerics, dict):
        raise ConfigError("numerics", "not an object")
    n_paths = numerics.get("n_paths", 10_000)
    if not isinstance(n_paths, int) or n_paths < 2:
        raise ConfigError("numerics.n_paths", "must be an integer >= 2")
    seed = numerics.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("numerics.seed", "must be an integer")
    eta_threshold = _number(numerics, "numerics", "eta_threshold", default=1e-4)
    if not (eta_threshold > 0.0):
        raise ConfigError("numerics.eta_threshold", "must be > 0")
    ode_step = _number(numerics, "numerics", "ode_step", default=T / 2000.0)
    grid_step = _number(numerics, "numerics", "grid_step", default=T / 2000.0)
    if not (ode_step > 0.0):
        raise ConfigError("numerics.ode_step", "must be > 0")
    if not (grid_step > 0.0):
        raise ConfigError("numerics.grid_step", "must be > 0")

    return RunConfig(
        params=params,
        spec=spec,
        x0=_number(execution, "execution", "x0"),
        T=T,
        D0=_number(execution, "execution", "D0"),
        S0=_number(execution, "execution", "S0"),
        ode_step=ode_step,
        grid_step=grid_step,
        eta_threshold=eta_threshold,
        n_paths=n_paths,
        seed=seed,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("$", f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from exc
    return parse_config(raw)


def _write_json(payload: dict, out: Path, name: str, timestamp: bool) -> None:
    if timestamp:
        payload = dict(payload)
        payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_simulate(cfg: RunConfig, out: Path, timestamp: bool) -> None:
    path = simulate(cfg.spec, cfg.T, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.csv", "w", newline="") as fh:
        path.to_csv(fh)


def _cmd_execute(cfg: RunConfig, out: Path, timestamp: bool) -> None:
    problem = cfg.problem()
    path = simulate(cfg.spec, cfg.T, cfg.seed)
    result = execute_optimal(path, problem, mode="feedback", grid_step=cfg.grid_step)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        write_trajectory_csv(result, problem, fh)
    _write_json(
        {
            "cost": result.cost,
            "mode": result.mode,
            "n_events": path.n_events,
            "grid_step": cfg.grid_step,
            "seed": cfg.seed,
            "params_echo": cfg.echo(),
        },
        out,
        "cost.json",
        timestamp,
    )


def _cmd_value(cfg: RunConfig, out: Path, timestamp: bool) -> None:
    problem = cfg.problem()
    v = value_function(
        0.0, cfg.x0, cfg.D0, cfg.S0, problem.delta0, problem.Sigma0, problem, ode_step=cfg.ode_step
    )
    _write_json(
        {
            "value": v,
            "state": {
                "t": 0.0,
                "x": cfg.x0,
                "D": cfg.D0,
                "S": cfg.S0,
                "delta": problem.delta0,
                "Sigma": problem.Sigma0,
            },
            "params_echo": cfg.echo(),
        },
        out,
        "value.json",
        timestamp,
    )


def _cmd_mc_cost(cfg: RunConfig, out: Path, timestamp: bool) -> None:
    problem = cfg.problem()
    est = estimate_cost("optimal", problem, cfg.n_paths, cfg.seed, cfg.grid_step)
    v = value_function(0.0, cfg.x0, cfg.D0, cfg.S0, problem.delta0, problem.Sigma0, problem, cfg.ode_step)
    _write_json(
        {
            "policy": "optimal",
            "n_paths": cfg.n_paths,
            "seed": cfg.seed,
            "grid_step": cfg.grid_step,
            "mean": est.mean,
            "stderr": est.stderr,
            "ci95": list(est.ci95),
            "value_function": v,
            "params_echo": cfg.echo(),
        },
        out,
        "mc_cost.json",
        timestamp,
    )


def _cmd_pms_check(cfg: RunConfig, out: Path, timestamp: bool) -> None:
    report = mihm_diagnosis(cfg.problem())
    payload = json.loads(report.to_json())
    payload["params_echo"] = cfg.echo()
    _write_json(payload, out, "pms_report.json", timestamp)


def _cmd_poisson_arb(cfg: RunConfig, out: Path, timestamp: bool, lam: float = 0.5) -> None:
    path = simulate(cfg.spec, cfg.T, cfg.seed)
    schedule = poisson_arbitrage_schedule(lam, path, cfg.params)
    kappa0 = cfg.spec.kappa0_plus
    expected = poisson_arbitrage_expected_cost(lam, kappa0, cfg.spec.marks.m2, cfg.params, cfg.T)
    init = MarketState(t=0.0, S=cfg.S0, D=cfg.D0, X=0.0)
    cost = realized_cost(path, schedule, init, cfg.params)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "poisson_arb_schedule.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "dX"])
        for t, dx in zip(schedule.block_times, schedule.block_sizes):
            writer.writerow([repr(float(t)), repr(float(dx))])
        writer.writerow([repr(float(cfg.T)), repr(float(schedule.terminal_block))])
    _write_json(
        {
            "lambda": lam,
            "expected_cost": expected,
            "realized_cost_on_path": cost,
            "n_events": path.n_events,
            "seed": cfg.seed,
            "params_echo": cfg.echo(),
        },
        out,
        "cost.json",
        timestamp,
    )


FIGURE1_CONFIG = {
    "market": {"q": 100.0, "rho": 25.0, "nu": 0.3, "epsilon": 0.3},
    "hawkes": {
        "beta": 20.0,
        "kappa_infty": 12.0,
        "kappa0_plus": 60.0,
        "kappa0_minus": 60.0,
        "mark_law": {"type": "exponential", "m1": 50.0},
        "phi_s": [{"coef": 1.2, "power": 0.2}, {"coef": 0.5, "power": 0.7}, {"coef": 14.4, "power": 1.0}],
        "phi_c": [{"coef": 1.2, "power": 0.2}, {"coef": 0.5, "power": 0.7}, {"coef": 0.4, "power": 1.0}],
    },
    "execution": {"x0": -500.0, "T": 1.0, "D0": 0.1, "S0": 0.0},
    "numerics": {"grid_step": 0.0005, "seed": 20140904},
}


def figure1(out_dir: str | Path, seed: int, grid_step: float = 5e-4) -> dict[str, Path]:
    """Run the two-resilience showcase against one shared event path.

    Simulates the showcase flow once, executes the optimal strategy for
    rho=25 (mean-reverting reactions) and rho=16 (trend-following) against
    the same events, and writes the trajectories plus the block/rate/block
    benchmark.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = parse_config(FIGURE1_CONFIG)
    path = simulate(cfg.spec, cfg.T, seed)
    written: dict[str, Path] = {}
    for rho in (25.0, 16.0):
        params = ImpactParams(q=cfg.params.q, rho=rho, nu=cfg.params.nu, epsilon=cfg.params.epsilon)
        problem = ExecutionProblem(
            x0=cfg.x0, T=cfg.T, D0=cfg.D0, S0=cfg.S0, params=params, spec=cfg.spec
        )
        result = execute_optimal(path, problem, mode="feedback", grid_step=grid_step)
        name = f"figure1_rho{int(rho)}.csv"
        with open(out / name, "w", newline="") as fh:
            write_trajectory_csv(result, problem, fh)
        written[name] = out / name
    ow = ow_schedule(cfg.x0, 25.0, cfg.T)
    with open(out / "figure1_ow.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "X"])
        n = 200
        for i in range(n + 1):
            t = cfg.T * i / n
            x = cfg.x0 + ow.initial_block + ow.rate_values[0] * t if t < cfg.T else 0.0
            writer.writerow([repr(float(t)), repr(float(x))])
    written["figure1_ow.csv"] = out / "figure1_ow.csv"
    return written


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 1
    command = argv[0]
    if command not in COMMANDS:
        print(USAGE, file=sys.stderr)
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return 1

    parser = argparse.ArgumentParser(prog=f"mihexec {command}", add_help=True)
    if command != "figure1":
        parser.add_argument("config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--grid-step", type=float, default=None)
    parser.add_argument("--out", type=str, default=".")
    parser.add_argument("--no-timestamp", action="store_true")
    if command == "poisson-arb":
        parser.add_argument("--lambda", dest="lam", type=float, default=0.5)
    try:
        args = parser.parse_args(argv[1:])
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0

    out = Path(args.out)
    timestamp = not args.no_timestamp

    if command == "figure1":
        seed = args.seed if args.seed is not None else 20140904
        try:
            figure1(out, seed, args.grid_step if args.grid_step is not None else 5e-4)
        except (FloatingPointError, OverflowError, RuntimeError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 3
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paths is not None:
        if args.paths < 2:
            print("config error: --paths must be >= 2", file=sys.stderr)
            return 2
        overrides["n_paths"] = args.paths
    if args.grid_step is not None:
        if not (args.grid_step > 0.0):
            print("config error: --grid-step must be > 0", file=sys.stderr)
            return 2
        overrides["grid_step"] = args.grid_step
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)

    handler = {
        "simulate": _cmd_simulate,
        "execute": _cmd_execute,
        "value": _cmd_value,
        "mc-cost": _cmd_mc_cost,
        "pms-check": _cmd_pms_check,
    }.get(command)
    try:
        if handler is not None:
            handler(cfg, out, timestamp)
        elif command == "poisson-arb":
            _cmd_poisson_arb(cfg, out, timestamp, lam=args.lam)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, OverflowError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
