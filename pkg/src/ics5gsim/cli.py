"""Command-line entry point: ``ics5gsim run | matrix | ids | jam-sweep | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments, runner, scenario

OUT_ENV = "ICS5GSIM_OUT"


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "ics5gsim-out")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1, help="root seed (default 1)")
    common.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./ics5gsim-out)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable (e.g. channel.dc_extra_noise_db=30)")
    common.add_argument("--config", default=None, help="scenario file (YAML or JSON)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ics5gsim", description="Virtual ICS testbed over wired and 5G links.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("--deployment", choices=scenario.DEPLOYMENTS, default=None)
    r.add_argument("--attack", choices=scenario.ATTACK_KINDS, default=None)
    r.add_argument("--duration", type=float, default=None, help="simulated seconds")
    r.add_argument("--name", default=None, help="run directory name under the output root")

    for name, text in (("matrix", "all attacks on all deployments"), ("jam-sweep", "jamming power sweep on 5G-GC")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--workers", type=int, default=None, help="parallel processes (default: CPU count)")
    sub.add_parser("ids", parents=[common], help="train and evaluate both detectors on the matrix output")
    sub.add_parser("report", parents=[common], help="summarise the matrix, IDS and jamming outputs")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or _default_out())
    try:
        if args.command == "run":
            ov = list(args.override)
            for key, val in (("deployment", args.deployment), ("attack.kind", args.attack),
                             ("duration_s", args.duration)):
                if val is not None:
                    ov.append(f"{key}={val}")
            cfg = scenario.load(args.config, [*ov, f"seed={args.seed}"])
            name = args.name or f"{cfg.deployment}_{cfg.attack.kind}_s{cfg.seed}"
            _, m = runner.run(cfg, out / name)
            print(json.dumps({"run_dir": str(out / name), **{k: m[k] for k in (
                "spill_count", "long_spills", "safety_halts", "hmi_timeouts", "stationary_fraction",
                "jitter_s", "retx_per_s")}}, indent=2))
        elif args.command == "matrix":
            rows = experiments.run_matrix(out, args.seed, args.override, args.workers, args.config)
            print((out / "matrix" / "table.csv").read_text(), end="")
            print(f"{len(rows)} runs written under {out / 'matrix'}")
        elif args.command == "ids":
            res = experiments.ids_pipeline(out)
            for row in res["summary"]:
                print(f"{row['train']:>6} -> {row['eval']:<6} {row['detector']:<4} "
                      f"detected {row['attacks_detected']}/{row['attacks_total']} "
                      f"false {row['false_alerts']} benign-active {row['benign_active_fraction']}")
        elif args.command == "jam-sweep":
            rows = experiments.run_jam_sweep(out, args.seed, args.override, args.workers, config_path=args.config)
            print(json.dumps(experiments.jam_analysis(rows), indent=2))
        elif args.command == "report":
            text, _ = experiments.report(out)
            print(text, end="")
    except experiments.ReportError as exc:
        print(json.dumps(exc.as_dict()), file=sys.stderr)
        return 2
    except scenario.ConfigError as exc:
        print(json.dumps({"error": "invalid_config", "problems": exc.problems}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
