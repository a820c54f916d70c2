"""Command-line driver: ``borderdefense {solve,simulate,train,evaluate,landscape}``.

Exit codes: 0 success, 2 usage, 3 scenario/schema error, 4 runtime divergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__, engine, evaluation, geometry
from .engine import Mode
from .env import BatchEnv, saved_steps_estimate
from .learn import CheckpointError, TrainingDivergence, load_checkpoint, policy_controls, train
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_USAGE, EXIT_SCHEMA, EXIT_DIVERGENCE = 2, 3, 4
OUT_ENV = "BORDERDEFENSE_OUT"


class UsageError(Exception):
    pass


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _pursuit_config(attacker: str, defenders: list[str]) -> geometry.PursuitConfig:
    if not defenders:
        raise UsageError("at least one --defender x,y,nu is required")
    caps = []
    for d in defenders:
        x, y, nu = _floats(d, 3)
        caps.append(((x, y), nu))
    try:
        return geometry.PursuitConfig(tuple(_floats(attacker, 2)), tuple(caps))
    except geometry.GeometryError as exc:
        raise UsageError(str(exc)) from None


def _resolve_seed(args, fallback=None) -> tuple[int, str]:
    if args.seed is not None:
        return args.seed, "cli"
    if fallback is not None:
        return int(fallback), "scenario"
    return secrets.randbits(31), "entropy"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        raise UsageError(f"--out is required (or set {OUT_ENV})")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if getattr(args, "mode", None):
        sc.mode = Mode.parse(args.mode)
    return sc


def _echo(path: Path, scenario: Scenario, **extra) -> None:
    doc = {"version": __version__, **extra, "scenario": scenario.to_dict()}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _print(obj, as_json: bool) -> None:
    if as_json:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        for k, v in obj.items():
            print(f"{k}: {v}")


# --------------------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = _pursuit_config(args.attacker, args.defender)
    sol = geometry.nash_payoff_multi(cfg)
    out = {
        "payoff": sol.payoff,
        "intercept_point": list(sol.intercept_point),
        "clamped": sol.clamped,
        "circles": [{"center": list(c.center), "radius": c.radius} for c in cfg.circles()],
    }
    if args.check:
        oracle = geometry.nash_payoff_oracle(cfg, args.resolution)
        out["oracle_payoff"] = oracle
        out["oracle_difference"] = abs(sol.payoff - oracle)
    _print(out, args.json)
    return 0


def _search_pattern(name: str):
    if name == "hold":
        return engine.hold_position
    if name == "up":
        def up(state, config):
            return np.tile([0.0, 1.0], (config.n_defenders, 1))
        return up
    raise UsageError(f"unknown search pattern {name!r}")


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    seed, origin = _resolve_seed(args, sc.eval_seed)
    out = _out_dir(args)
    if args.policy == "checkpoint":
        if not args.checkpoint:
            raise UsageError("--policy checkpoint needs --checkpoint PATH")
        learner, _ = load_checkpoint(args.checkpoint)
        policy = policy_controls(learner.policy, deterministic=True)
    else:
        policy = engine.scripted_policy(_search_pattern(args.search))
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    episodes = []
    for k in range(args.episodes):
        rec = engine.run_episode(sc.game, policy, sc.mode, np.random.default_rng([seed, k]))
        rec.write_trace(traces / f"episode_{k:05d}.jsonl")
        episodes.append(dataclasses.asdict(evaluation.summarize(rec, k)))
    summary = {
        "seed": seed, "seed_source": origin, "mode": sc.mode.value, "policy": args.policy,
        "episodes": episodes,
        "saved_steps_estimate": saved_steps_estimate(sc.game),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _echo(out / "config.json", sc, seed=seed, command="simulate")
    print(f"seed: {seed} ({origin})")
    print(f"wrote {args.episodes} trace(s) to {traces}")
    print(f"saved_steps_estimate: {summary['saved_steps_estimate']:.3f}")
    return 0


def cmd_train(args) -> int:
    sc = _scenario(args)
    if args.seeds:
        seeds = [int(s) for s in _floats(args.seeds)]
    else:
        seeds = [_resolve_seed(args)[0]]
    out = _out_dir(args)
    for seed in seeds:
        tcfg = dataclasses.replace(sc.train, seed=seed,
                                   total_frames=args.frames if args.frames else sc.train.total_frames)
        run = out / f"seed_{seed}"
        learner, start, it = None, 0, 0
        if args.resume:
            learner, payload = load_checkpoint(args.resume)
            start, it = payload["frames"], payload["iteration"]
        run.mkdir(parents=True, exist_ok=True)
        scen = dataclasses.replace(sc, train=tcfg)
        _echo(run / "config.json", scen, seed=seed, command="train", mode=sc.mode.value,
              resumed_from=str(args.resume) if args.resume else None)
        env = BatchEnv(sc.game, tcfg.n_envs, sc.mode, tcfg.gamma, seed=seed)
        res = train(env, tcfg, run, learner, start, it, extra_meta={"scenario": scen.to_dict()})
        last = res.metrics[-1] if res.metrics else {}
        print(f"seed {seed}: {res.frames} frames, final mean reward {last.get('mean_reward')}, "
              f"checkpoint {res.checkpoints[-1] if res.checkpoints else None}")
    return 0


def cmd_evaluate(args) -> int:
    sc = _scenario(args)
    seed, origin = _resolve_seed(args, sc.eval_seed)
    out = _out_dir(args)
    episodes = sc.eval_episodes if args.episodes is None else args.episodes
    try:
        report = evaluation.evaluate_checkpoint(args.checkpoint, sc.game, sc.mode, episodes, seed,
                                                stochastic=args.stochastic or sc.eval_stochastic,
                                                config_echo=sc.to_dict())
    except CheckpointError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report.write(out / "report.json", out / "report.csv")
    _echo(out / "config.json", sc, seed=seed, command="evaluate", checkpoint=str(args.checkpoint))
    headline = {k: getattr(report, k) for k in
                ("episodes", "sensing_rate", "mean_reward", "median_reward", "median_nash", "mean_length")}
    headline["seed"] = seed
    headline["seed_source"] = origin
    if args.compare:
        cmp = evaluation.compare(report, evaluation.EvalReport.read(args.compare))
        (out / "comparison.json").write_text(json.dumps(cmp, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        headline["comparison"] = cmp
    _print(headline, args.json)
    return 0


def cmd_landscape(args) -> int:
    cfg = _pursuit_config(args.attacker, args.defender)
    xr, yr = _floats(args.x_range, 2), _floats(args.y_range, 2)
    res = [int(v) for v in _floats(args.resolution)]
    res = res[0] if len(res) == 1 else tuple(res)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        land = evaluation.landscape_report(cfg, args.nu, out, xr, yr, res)
    except geometry.GeometryError as exc:
        raise UsageError(str(exc)) from None
    print(f"wrote {land.values.shape[1]}x{land.values.shape[0]} landscape to {out}")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="borderdefense", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (default: fresh entropy, printed)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="equilibrium payoff of one configuration")
    s.add_argument("--attacker", required=True, metavar="X,Y")
    s.add_argument("--defender", action="append", default=[], metavar="X,Y,NU")
    s.add_argument("--json", action="store_true")
    s.add_argument("--check", action="store_true", help="also run the grid oracle")
    s.add_argument("--resolution", type=int, default=2000)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="play episodes and write traces")
    s.add_argument("--scenario", required=True)
    s.add_argument("--policy", choices=("scripted", "checkpoint"), default="scripted")
    s.add_argument("--checkpoint")
    s.add_argument("--search", default="hold", help="scripted search pattern: hold | up")
    s.add_argument("--episodes", type=int, default=1)
    s.add_argument("--mode", choices=("gt", "standard"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", parents=[common], help="MAPPO training, one run per seed")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
    s.add_argument("--frames", type=int)
    s.add_argument("--mode", choices=("gt", "standard"))
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--episodes", type=int)
    s.add_argument("--mode", choices=("gt", "standard"))
    s.add_argument("--stochastic", action="store_true")
    s.add_argument("--compare", help="report.json to compare against")
    s.add_argument("--json", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("landscape", parents=[common], help="payoff versus an extra defender's position")
    s.add_argument("--attacker", required=True, metavar="X,Y")
    s.add_argument("--defender", action="append", default=[], metavar="X,Y,NU")
    s.add_argument("--nu", type=float, required=True, help="speed ratio of the swept defender")
    s.add_argument("--x-range", default="0,1")
    s.add_argument("--y-range", default="0,1")
    s.add_argument("--resolution", default="50", help="N or NX,NY")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_landscape)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except TrainingDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
