"""Command-line entry points: train, evaluate, replay, derive-lut, scenarios.

Failures exit nonzero after printing a machine-readable JSON error record to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .agent import QTable
from .env import bundled_scenario, bundled_scenario_names
from .radar import lut_rows
from .runner import (
    RunConfig,
    evaluate,
    export_trace,
    load_trace,
    stabilized_actions_csv,
    train,
)


def _write_lut_csv(fh, fps_ladder) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["pref", "fps", "range_res_m", "max_range_m",
                     "max_vel_mps", "vel_res_mps"])
    for row in lut_rows(fps_ladder):
        writer.writerow([row["pref"], row["fps"], repr(row["range_res_m"]),
                         repr(row["max_range_m"]), repr(row["max_vel_mps"]),
                         repr(row["vel_res_mps"])])


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    scenarios = cfg.resolve_scenarios()
    result = train(
        scenarios, cfg.agent, cfg.episodes, ladders=cfg.ladders,
        discretizer=cfg.discretizer, cost_model=cfg.cost_model,
        max_steps=cfg.max_steps, convergence_patience=cfg.convergence_patience)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.qtable.save(out / "qtable.npz", cfg.ladders.content_hash())
    with (out / "learning_curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "cumulative_reward"])
        for i, r in enumerate(result.learning_curve):
            writer.writerow([i, repr(r)])
    print(f"trained {result.episodes_run} episodes ({result.steps} updates); "
          f"outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = RunConfig.load(args.config)
    scenarios = cfg.resolve_scenarios()
    qtable = QTable.load(args.qtable, cfg.ladders.content_hash())
    policies = cfg.build_policies(qtable)
    report, traces = evaluate(
        policies, scenarios, ladders=cfg.ladders, discretizer=cfg.discretizer,
        cost_model=cfg.cost_model, reward_weights=cfg.agent.reward_weights,
        keep_traces=True)
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n")
    (out / "metrics.csv").write_text(report.to_csv())
    (out / "stabilized_actions.csv").write_text(stabilized_actions_csv(report))
    for (policy, scenario), trace in traces.items():
        export_trace(trace, out / "traces" / f"{policy}__{scenario}.csv", fmt="csv")
    for name, delta in report.deltas.items():
        print(f"{name} vs {report.baseline}: "
              f"load reduction {delta['load_reduction_pct']:.1f}%, "
              f"accuracy delta {delta['accuracy_delta_pct']:.1f}%")
    print(f"outputs in {out}")
    return 0


def cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    print(f"scenario:      {trace.scenario_name} (seed {trace.seed})")
    print(f"policy:        {trace.policy_name}")
    print(f"ticks:         {trace.num_ticks}")
    print(f"decisions:     {trace.decision_count}")
    print(f"switches:      {trace.switch_count}")
    print(f"total reward:  {trace.cumulative_reward:.4f}")
    if trace.num_ticks:
        loads = trace.column("gpu_load")
        confs = trace.column("conf_agg")
        print(f"mean load:     {sum(loads) / len(loads):.4f}")
        print(f"mean conf_agg: {sum(confs) / len(confs):.4f}")
    final = trace.final_action
    print(f"final action:  rgb {final.rgb_res}@{final.rgb_fps}fps, "
          f"thermal {final.thermal_res}@{final.thermal_fps}fps, "
          f"mmwave {final.mmwave_pref.value}@{final.mmwave_fps}fps")
    return 0


def cmd_derive_lut(args) -> int:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _write_lut_csv(fh, tuple(args.fps))
        print(f"wrote {args.out}")
    else:
        _write_lut_csv(sys.stdout, tuple(args.fps))
    return 0


def cmd_scenarios(args) -> int:
    if args.action == "list":
        for name in bundled_scenario_names():
            scenario = bundled_scenario(name)
            print(f"{name}: {scenario.total_duration:g}s @ {scenario.tick_rate:g}Hz, "
                  f"{len(scenario.phases)} phases, seed {scenario.seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorloop",
        description="Adaptive multispectral sensing simulator and Q-learning "
                    "reconfiguration agent.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the adaptive policy from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate static/heuristic/adaptive policies")
    p.add_argument("--config", required=True)
    p.add_argument("--qtable", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="summarize a stored JSON-lines trace")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("derive-lut", help="print or write the radar parameter table")
    p.add_argument("--out", default=None)
    p.add_argument("--fps", type=int, nargs="+", default=[1, 5, 15, 27])
    p.set_defaults(func=cmd_derive_lut)

    p = sub.add_parser("scenarios", help="inspect bundled scenarios")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=cmd_scenarios)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a machine-readable error record
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
