"""Command-line entry point: ``platoon-codesign``.

Exit codes: 0 success, 2 infeasible, 3 schema or input error,
4 numerical failure (including failed checks).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockmat import IllConditionedError, sylvester_decompose
from .codesign import (PlatoonLedger, SynthesisResult, centralized_codesign,
                       certify_weak_string_stability, decentralized_codesign,
                       lemma1_check, recertify, weak_coupling_metric)
from .config import ConfigError, ScenarioConfig
from .dissipativity import InfeasibleError, NotHurwitzError
from .platoon import StructureError, check_structure
from .sim import dissipation_check, metrics, run, write_csv, write_plots

__all__ = ["main", "build_parser", "synthesize_config", "run_checks",
           "CheckLine", "EXIT_OK", "EXIT_INFEASIBLE", "EXIT_SCHEMA",
           "EXIT_NUMERICAL"]

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SCHEMA = 3
EXIT_NUMERICAL = 4

NUMERICAL_ERRORS = (ArithmeticError, np.linalg.LinAlgError, NotHurwitzError,
                    IllConditionedError)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# shared helpers ---------------------------------------------------------------

def _load_config(args) -> ScenarioConfig:
    if args.config is None:
        cfg = ScenarioConfig()
    else:
        try:
            cfg = ScenarioConfig.load(args.config)
        except ConfigError as exc:
            raise CliError(EXIT_SCHEMA, f"config error: {exc}") from None
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "formulation", None):
        changes["formulation"] = args.formulation
    if getattr(args, "string_stability", False):
        changes["string_stability"] = True
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        changes["noise"] = replace(cfg.noise, seed=args.seed)
    return cfg.replace(**changes) if changes else cfg


def _load_result(path, validate: bool = True) -> SynthesisResult:
    try:
        return SynthesisResult.from_json(Path(path), validate)
    except OSError as exc:
        raise CliError(EXIT_SCHEMA, f"cannot read result: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_SCHEMA, f"result parse error: {exc}") from None


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def synthesize_config(cfg: ScenarioConfig):
    """Run the co-design described by ``cfg``; returns ``(result, ledger)``."""
    params = cfg.vehicle_params()
    if cfg.mode == "centralized":
        result = centralized_codesign(params, cfg.formulation, cfg.costs(),
                                      cfg.p_values())
        ledger = None
    else:
        result, ledger = decentralized_codesign(
            params, cfg.formulation, cfg.costs(), cfg.p_values(),
            string_stability=cfg.string_stability)
    result.string_stability = cfg.string_stability
    result.config_hash = cfg.synthesis_hash()
    return result, ledger


def synthesis_report(result: SynthesisResult) -> str:
    lines = [f"mode: {result.mode}  formulation: {result.formulation}",
             f"gamma_tilde: {result.gamma_tilde:.6f}  (gamma_bar {result.gamma_bar:g},"
             f" gain bound sqrt {result.gamma:.6f})"]
    if result.gamma_hat is not None:
        lines.append("gamma_hat: " + " ".join(f"{g:.6f}" for g in result.gamma_hat))
    lines.append("edges (follower <- source, 0 = leader): " +
                 ", ".join(f"{i}<-{j}" for i, j in result.edges()))
    if len(result.segments) > 1:
        lines.append("segments: " + "; ".join(
            f"leader {s.leader}: {s.followers}" for s in result.segments))
    lines.append("vehicle      nu        rho      p_local  gamma_loc   Lbar")
    follow = [f for s in result.segments for f in s.followers]
    for f, c in zip(follow, result.certs):
        lines.append(f"{f:>7d} {c.nu:9.4f} {c.rho:9.4f} {c.p:9.4f} "
                     f"{c.gamma_tilde:9.4f}   "
                     + " ".join(f"{x:8.3f}" for x in np.ravel(c.Lbar)))
    if result.string_stability:
        try:
            w = certify_weak_string_stability(result)
            lines.append(f"weak string stability: ||e|| <= {w.slope:g} ||w||")
        except ValueError as exc:
            lines.append(f"weak string stability: not certified ({exc})")
    ck = result.checks
    lines.append(f"network analysis: {ck.get('network_analysis')}  "
                 f"hurwitz: {ck.get('hurwitz')}  lemma1: {ck.get('lemma1')}  "
                 f"wall time: {ck.get('wall_time', float('nan')):.2f} s")
    return "\n".join(lines)


@dataclass
class CheckLine:
    name: str
    ok: bool
    detail: str

    def __str__(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<17} {self.detail}"


def run_checks(result: SynthesisResult) -> list[CheckLine]:
    """Re-verify a stored design."""
    out = []
    K = result.gains.K
    try:
        check_structure(K, result.formulation)
        k0 = np.stack([K[i].sum(axis=0) for i in range(result.n)]) if result.n \
            else np.zeros((0, 3, 3))
        dev = float(np.max(np.abs(k0 - result.gains.K0), initial=0.0))
        ok = dev <= 1e-6 * max(1.0, float(np.max(np.abs(K), initial=0.0)))
        out.append(CheckLine("structure", ok, f"leader block mismatch {dev:.2e}"))
    except StructureError as exc:
        out.append(CheckLine("structure", False, str(exc)))
    gw = result.supply_weights()
    worst = float(max(result.gamma_tilde, float(np.max(gw, initial=0.0))))
    ok = 0.0 < result.gamma_tilde and worst < result.gamma_bar
    out.append(CheckLine("gain_bound", ok,
                         f"max gamma {worst:.6g} vs bound {result.gamma_bar:g}"))
    bad = [i + 1 for i, c in enumerate(result.certs) if not lemma1_check(c)]
    out.append(CheckLine("lemma1", not bad,
                         "all inside box" if not bad else f"outside: {bad}"))
    try:
        rc = recertify(result.gains.dense_K(), result.certs, gw, result.p)
        out.append(CheckLine("network_analysis", rc["network_analysis"],
                             f"margin {rc['network_margin']}"))
    except NUMERICAL_ERRORS + (ValueError,) as exc:
        out.append(CheckLine("network_analysis", False, f"error: {exc}"))
    try:
        led = PlatoonLedger.from_result(result, rebuild=False)
        lam = []
        for k, seg in enumerate(led.segments):
            if seg.order:
                res = sylvester_decompose(led.assemble_w(k))
                lam.append(min(res.lambdas) if res.lambdas else -np.inf)
                if not res.positive:
                    lam.append(-np.inf)
        m = min(lam, default=np.inf)
        out.append(CheckLine("sylvester", m > 0, f"min pivot eigenvalue {m:.3e}"))
    except NUMERICAL_ERRORS + (ValueError, KeyError) as exc:
        out.append(CheckLine("sylvester", False, f"error: {exc}"))
    _, wc = weak_coupling_metric(result)
    out.append(CheckLine("weak_coupling", wc < 1.0, f"max column sum {wc:.3e}"))
    eig = float(np.linalg.eigvals(result.gains.closed_loop_matrix()).real.max()) \
        if result.n else -np.inf
    out.append(CheckLine("hurwitz", eig < 0, f"max real eigenvalue {eig:.4f}"))
    return out


# subcommands ------------------------------------------------------------------

def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    try:
        result, _ = synthesize_config(cfg)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    path = out / "result.json"
    result.to_json(path)
    text = synthesis_report(result)
    (out / "report.txt").write_text(text + "\n")
    print(text)
    splits = len(result.segments) - 1
    if splits:
        print(f"split events: {splits} (new segment leaders "
              f"{[s.leader for s in result.segments[1:]]})")
    print(f"result written to {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.result is None:
        raise CliError(EXIT_SCHEMA, "simulate needs --result")
    result = _load_result(args.result)
    if result.formulation != cfg.formulation:
        raise CliError(EXIT_SCHEMA,
                       f"result formulation {result.formulation} does not match "
                       f"config formulation {cfg.formulation}")
    if result.config_hash != cfg.synthesis_hash() and not args.force:
        raise CliError(EXIT_SCHEMA, "result was produced by a different config "
                       "(use --force to simulate anyway)")
    out = _out_dir(args, cfg)
    try:
        trace = run(cfg.scenario(), result)
    except ValueError as exc:
        raise CliError(EXIT_SCHEMA, f"scenario error: {exc}") from None
    write_csv(trace, out / "trace.csv")
    write_plots(trace, out)
    m = metrics(trace)
    summary = {"metrics": m.to_dict(), "events": trace.events,
               "aborted": trace.aborted, "diagnostic": trace.diagnostic,
               "wall_time": trace.wall_time}
    final = trace.versions[-1][1]
    summary["weak_coupling"] = weak_coupling_metric(final)[1]
    for k, (t, res) in enumerate(trace.versions[1:], start=1):
        res.config_hash = result.config_hash
        res.to_json(out / f"result.v{k}.json")
    if len(trace.versions) == 1 and not trace.aborted:
        dc = dissipation_check(trace, result)
        summary["dissipation"] = {"ok": dc.ok, "worst": dc.worst,
                                  "worst_step": dc.worst_step}
    (out / "metrics.json").write_text(json.dumps(summary, indent=1, default=float))
    gain = m.empirical_gain
    print(f"steps: {trace.t.size - 1}  wall time: {trace.wall_time:.2f} s")
    print(f"empirical gain ||e||/||w||: "
          f"{'undefined' if gain is None else f'{gain:.4g}'}")
    print(f"min spacing: {m.min_spacing:.3f} m  collisions: {m.collisions}")
    print(f"weak coupling: {summary['weak_coupling']:.3e}")
    for ev in trace.events:
        print(f"event: {ev}")
    print(f"outputs written to {out}")
    if trace.aborted:
        print(f"aborted: {trace.diagnostic}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_check(args) -> int:
    if args.result is None:
        raise CliError(EXIT_SCHEMA, "check needs --result")
    result = _load_result(args.result, validate=False)
    lines = run_checks(result)
    for line in lines:
        print(line)
    return EXIT_OK if all(line.ok for line in lines) else EXIT_NUMERICAL


def cmd_demo(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    modes = [args.mode] if args.mode else ["centralized", "decentralized"]
    rows = []
    for mode in modes:
        sub = out / mode
        sub.mkdir(parents=True, exist_ok=True)
        mcfg = cfg.replace(mode=mode)
        t0 = time.perf_counter()
        try:
            result, _ = synthesize_config(mcfg)
        except InfeasibleError as exc:
            print(f"{mode}: infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        t_syn = time.perf_counter() - t0
        result.to_json(sub / "result.json")
        (sub / "report.txt").write_text(synthesis_report(result) + "\n")
        trace = run(mcfg.scenario(), result)
        write_csv(trace, sub / "trace.csv")
        write_plots(trace, sub)
        m = metrics(trace)
        rows.append((mode, result.gamma_tilde, t_syn, weak_coupling_metric(result)[1],
                     m.empirical_gain, m.min_spacing, m.collisions))
    print(f"{'mode':<14}{'gamma_tilde':>12}{'synth [s]':>11}{'weak coup':>11}"
          f"{'emp gain':>10}{'min gap':>9}{'coll':>6}")
    for mode, g, ts, wc, eg, ms, nc in rows:
        eg_s = "undef" if eg is None else f"{eg:.4f}"
        print(f"{mode:<14}{g:>12.6f}{ts:>11.2f}{wc:>11.2e}{eg_s:>10}{ms:>9.3f}{nc:>6d}")
    print(f"outputs written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoon-codesign",
        description="Dissipativity-based controller and topology co-design "
                    "for vehicle platoons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, result=False):
        p.add_argument("--config", help="scenario YAML file")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--mode", choices=["centralized", "decentralized"])
        p.add_argument("--formulation", choices=["I", "II"])
        p.add_argument("--string-stability", action="store_true",
                       help="decreasing per-vehicle gain bounds (sequential mode)")
        p.add_argument("--seed", type=int, help="noise seed override")
        if result:
            p.add_argument("--result", help="result JSON from synthesize")
            p.add_argument("--force", action="store_true",
                           help="ignore a config hash mismatch")

    common(sub.add_parser("synthesize", help="design gains and topology"))
    common(sub.add_parser("simulate", help="simulate a stored design"), result=True)
    p = sub.add_parser("check", help="re-verify a stored design")
    p.add_argument("--result", required=True)
    common(sub.add_parser("demo", help="design and simulate the reference scenario"))
    return parser


COMMANDS = {"synthesize": cmd_synthesize, "simulate": cmd_simulate,
            "check": cmd_check, "demo": cmd_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
