"""Command line entry point.

    sandwichpde run [--config FILE] [--mode MODE] [--seed N] [--out DIR]
    sandwichpde audit-kernels [--N 100]
    sandwichpde audit-synthesis [--out DIR]
    sandwichpde sweep --seeds 1-10 [--amplitude 400]
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .harness import (EXIT_OK, MODES, ScenarioConfig, exit_code_for, run_scenario, sweep)


def _seed_list(text: str) -> List[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    kw = {}
    if args.out is not None:
        kw["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "amplitude", None) is not None:
        kw["A_D"] = args.amplitude
    if getattr(args, "horizon", None) is not None:
        kw["horizon"] = args.horizon
    if getattr(args, "no_disturbance", False):
        kw["disturbance"] = False
    return cfg.replace(**kw) if kw else cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sandwichpde", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="INI scenario file")
        p.add_argument("--out", help="output directory for traces and summaries")
        return p

    r = common(sub.add_parser("run", help="simulate one scenario"))
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--amplitude", type=float, help="disturbance amplitude A_D")
    r.add_argument("--horizon", type=float)
    r.add_argument("--no-disturbance", action="store_true")

    k = common(sub.add_parser("audit-kernels", help="kernel residuals and refinement ratios"))
    k.add_argument("--N", type=int, help="kernel grid size (the audit also solves at 2N)")

    common(sub.add_parser("audit-synthesis", help="small-gain margin and realization check"))

    s = common(sub.add_parser("sweep", help="paired controlled/uncontrolled runs over seeds"))
    s.add_argument("--seeds", default="1-10", help="e.g. 1-10 or 1,3,5")
    s.add_argument("--amplitude", type=float, help="disturbance amplitude A_D")
    s.add_argument("--horizon", type=float)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.verb == "run":
            if args.mode:
                cfg = cfg.replace(mode=args.mode)
            _, summary = run_scenario(cfg)
            print(summary.to_text())
        elif args.verb == "audit-kernels":
            cfg = cfg.replace(mode="kernel_audit", **({"kernel_N": args.N} if args.N else {}))
            _, summary = run_scenario(cfg)
            print(summary.to_text())
        elif args.verb == "audit-synthesis":
            _, summary = run_scenario(cfg.replace(mode="synth_audit"))
            print(summary.to_text())
        else:
            rows = sweep(cfg, _seed_list(args.seeds))
            print("seed  bL_ctrl  bL_unctrl  crossing_s  final_ratio")
            for r in rows:
                ct = "none" if r["crossing_time"] is None else f"{r['crossing_time']:.3f}"
                print(f"{r['seed']:4d}  {r['bL_controlled']:7.3f}  {r['bL_uncontrolled']:9.3f}  "
                      f"{ct:>10}  {r['final_energy_ratio']:.4f}")
    except Exception as exc:  # noqa: BLE001 - unknown errors re-raise inside exit_code_for
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
