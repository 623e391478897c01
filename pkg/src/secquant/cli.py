"""Command-line entry point: ``secquant {nmse,train,defense,cost}``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from secquant.experiments.config import (
    APPROACHES,
    CONVERSIONS,
    SCALES,
    SCHEMES,
    ExperimentConfig,
    load_config,
    override,
)
from secquant.experiments.fl import run_defense_experiment, run_fl_training
from secquant.experiments.nmse import run_nmse_sweep
from secquant.experiments.report import FORMATS, render
from secquant.mpc.cost import PROTOCOLS, cost_report, measure
from secquant.robust import AttackConfig, DefenseConfig


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file; flags override its values")
    parser.add_argument("--scheme", choices=SCHEMES)
    parser.add_argument("--scales", choices=SCALES)
    parser.add_argument("--conversion", choices=CONVERSIONS)
    parser.add_argument("--approach", choices=APPROACHES)
    parser.add_argument("--servers", type=int, dest="q", help="number of servers q")
    parser.add_argument("--dim", type=int, nargs="+")
    parser.add_argument("--clients", type=int, nargs="+")
    parser.add_argument("--population", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="output file (default: stdout)")
    parser.add_argument("--format", choices=FORMATS, default="csv")
    parser.add_argument("--self-check", action="store_true", help="exit 1 if an invariant fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secquant", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nmse", help="NMSE sweep over dimensions and client counts")
    _common(p)

    for name, text in (("train", "federated training"), ("defense", "attack/defense comparison")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--rounds", type=int)
        p.add_argument("--perturbation", choices=("inverse-unit", "inverse-std", "inverse-sign"))
        p.add_argument("--mu-th", type=float)
        p.add_argument("--psi", type=int)
        if name == "train":
            p.add_argument("--attack", action="store_true", help="let malicious clients run Min-Max")
            p.add_argument("--defend", action="store_true", help="aggregate with Aura")

    p = sub.add_parser("cost", help="communication cost report")
    _common(p)
    p.add_argument("--protocol", choices=PROTOCOLS, nargs="+", default=list(PROTOCOLS))
    p.add_argument("--bits", type=int, default=73024, help="quantized bits per client")
    p.add_argument("--transcript", type=Path, help="write a measured message transcript (JSON lines)")
    return parser


def _experiment(args) -> tuple:
    run = load_config(args.config)
    exp = override(
        run.experiment,
        scheme=args.scheme,
        scales=args.scales,
        conversion=args.conversion,
        approach=args.approach,
        q=args.q,
        dims=tuple(args.dim) if args.dim else None,
        clients=tuple(args.clients) if args.clients else None,
        population=args.population,
        trials=args.trials,
        seed=args.seed,
    )
    return run, exp


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _fail(messages: list[str]) -> int:
    for message in messages:
        print(f"self-check failed: {message}", file=sys.stderr)
    return 1 if messages else 0


def _cmd_nmse(args) -> int:
    _, exp = _experiment(args)
    cells = run_nmse_sweep(exp)
    _emit(render([c.as_row() for c in cells], "nmse", args.format), args.out)
    if not args.self_check:
        return 0
    problems = [f"non-finite NMSE at d={c.d}, n={c.n}" for c in cells if not math.isfinite(c.nmse_mean)]
    if exp.sepagg and 1 in exp.clients:
        exact = {c.d: c.nmse_mean for c in run_nmse_sweep(replace(exp, approach="I", clients=(1,)))}
        problems += [f"SepAgg differs from exact at n=1, d={c.d}" for c in cells if c.n == 1 and c.nmse_mean != exact[c.d]]
    return _fail(problems)


def _robust_configs(args, run) -> tuple[AttackConfig, DefenseConfig]:
    attack = AttackConfig(**{**run.attack, **({"perturbation": args.perturbation} if args.perturbation else {})})
    defense_kw = dict(run.defense)
    if args.mu_th is not None:
        defense_kw["mu_th"] = args.mu_th
    if args.psi is not None:
        defense_kw["psi"] = args.psi
    return attack, DefenseConfig(**defense_kw)


def _cmd_train(args) -> int:
    run, exp = _experiment(args)
    task = override(run.task, rounds=args.rounds)
    attack, defense = _robust_configs(args, run)
    result = run_fl_training(task, exp, attack if args.attack else None, defense if args.defend else None)
    arm = "defended" if args.defend else "attack" if args.attack else "clean"
    _emit(render(result.rows(arm), "train", args.format), args.out)
    if not args.self_check:
        return 0
    problems = ["training diverged"] if result.diverged else []
    problems += [f"accuracy {a} outside [0, 1]" for a in result.accuracy if not 0 <= a <= 1]
    return _fail(problems)


def _cmd_defense(args) -> int:
    run, exp = _experiment(args)
    task = override(run.task, rounds=args.rounds)
    attack, defense = _robust_configs(args, run)
    arms = run_defense_experiment(task, exp, attack, defense)
    rows = [row for name, result in arms.items() for row in result.rows(name)]
    _emit(render(rows, "defense", args.format), args.out)
    if not args.self_check:
        return 0
    problems = []
    rate = arms["defended"].exclusion_rate()
    if not rate >= 0.5:
        problems.append(f"defense excluded {rate:.3f} of selected attackers (< 0.5)")
    if not arms["defended"].final_accuracy > arms["attack"].final_accuracy:
        problems.append("defended final accuracy does not exceed undefended")
    return _fail(problems)


def _cmd_cost(args) -> int:
    _, exp = _experiment(args)
    rows = []
    for protocol in args.protocol:
        for n in exp.clients:
            report = cost_report(protocol, n, args.bits, exp.conversion)
            counts = {op: report.counts.get(op, 0) for op in ("BitA_pre", "Mult_pre", "BitA_on", "Mult_on")}
            rows.append(
                {
                    "protocol": protocol,
                    "mode": report.mode,
                    "n": n,
                    "m_bits": args.bits,
                    **counts,
                    "offline_mib": round(report.offline_mib, 6),
                    "online_mib": round(report.online_mib, 6),
                    "total_mib": round(report.total_mib, 6),
                }
            )
    _emit(render(rows, "cost", args.format), args.out)
    if args.transcript is not None:
        protocol = next((p for p in args.protocol if p != "prio+"), "approach3")
        ledger = measure(protocol, exp.clients[0], exp.dims[0], exp.conversion, q=exp.q, seed=exp.seed)
        ledger.write_jsonl(args.transcript)
    if not args.self_check:
        return 0
    problems = []
    for protocol in ("approach2", "approach3"):
        online = {measure(protocol, n, 4, exp.conversion, q=exp.q, seed=exp.seed).bits("online") for n in (1, 3, 6)}
        if len(online) != 1:
            problems.append(f"{protocol} online bits vary with n: {sorted(online)}")
    return _fail(problems)


COMMANDS = {"nmse": _cmd_nmse, "train": _cmd_train, "defense": _cmd_defense, "cost": _cmd_cost}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
