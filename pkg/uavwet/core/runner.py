# PYTHONPATH=. .venv/bin/python -m uavwet.core.runner ablation --scenario test2x3 --seeds 1..5 --jobs 4
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from prettytable import PrettyTable

from uavwet.common.config import DEFAULT_CONFIG_PATH, PROJECT_ROOT, WorldConfig, load_config, load_env
from uavwet.common.csv_log import ABLATION_FIELDS, CsvLog
from uavwet.common.enums import Variant
from uavwet.common.errors import CheckpointMismatchError, ConfigError, DivergenceError, NonFiniteError
from uavwet.core.magrl import evaluate, train, variant_config, write_report
from uavwet.sim.env import WetEnv

logger_run = logging.getLogger("_RUN")
LOGGER_NAMES = ("_ENV", "_MAGRL", "_RUN", "_CKPT")
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def setup_logging(level: str = "INFO") -> None:
    fmt = "%(asctime)s %(levelname)s:%(name)s:%(message)s"
    lvl = logging.getLevelName(level.upper())
    if not isinstance(lvl, int):
        raise ConfigError(f"unknown log level {level!r}")
    formatter = logging.Formatter(fmt, datefmt="%m-%d:%H:%M:%S")
    console = logging.StreamHandler()
    console.setLevel(lvl)
    console.setFormatter(formatter)
    for name in LOGGER_NAMES:
        lg = logging.getLogger(name)
        lg.setLevel(lvl)
        lg.handlers = [h for h in lg.handlers if not isinstance(h, logging.StreamHandler)]
        lg.addHandler(console)
        lg.propagate = False
    logging.getLogger("numpy").setLevel(logging.WARNING)


def parse_seeds(text: str) -> list[int]:
    """'1..5' (inclusive range), '1,4,9' or a single seed."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse seeds {text!r}") from exc


def write_trajectory(env: WetEnv, out: Path) -> None:
    CsvLog(out / "trajectory_uavs.csv", WetEnv.UAV_LOG_FIELDS, truncate=True).extend(env.uav_log)
    CsvLog(out / "trajectory_devices.csv", WetEnv.DEV_LOG_FIELDS, truncate=True).extend(env.dev_log)


def _world(args) -> WorldConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "variant", None):
        updates["variant"] = Variant(args.variant)
    if getattr(args, "episodes", None) is not None:
        updates["episodes"] = args.episodes
    return cfg.with_train(**updates) if updates else cfg


def run_train(args) -> int:
    cfg = _world(args)
    scenario = cfg.scenario(args.scenario)
    out = Path(args.out) / f"{cfg.train.variant.value}_{args.scenario}_seed{args.seed}"
    logger_run.info("[TRAIN] scenario=%s variant=%s seed=%s out=%s", args.scenario,
                    cfg.train.variant.value, args.seed, out)
    result = train(cfg, scenario, args.seed, out_dir=out, checkpoint_every=args.checkpoint_every,
                   scenario_name=args.scenario)
    logger_run.info("[TRAIN DONE] checkpoint=%s episodes=%s", result.checkpoint, len(result.history))
    return EXIT_OK


def run_eval(args) -> int:
    cfg = _world(args)
    scenario = cfg.scenario(args.scenario)
    out = Path(args.out) / f"eval_{args.scenario}_seed{args.seed}"
    report, env = evaluate(args.checkpoint, cfg, scenario, args.seed, args.scenario)
    write_report(report, out / "report.json")
    write_trajectory(env, out)
    for d in report["devices"]:
        logger_run.info("[EVAL DEVICE] i=%s battery=%.6f threshold=%.6f reached=%s",
                        d["device"], d["final_battery"], d["threshold"], d["reached"])
    logger_run.info("[EVAL DONE] h_total=%s success=%s out=%s", report["h_total"], report["success"], out)
    return EXIT_OK


def _ablation_job(job: tuple) -> dict:
    cfg_json, scenario_name, variant, seed, out = job
    cfg = variant_config(WorldConfig.model_validate_json(cfg_json), variant)
    result = train(cfg, cfg.scenario(scenario_name), seed, out_dir=out, scenario_name=scenario_name)
    last = result.history[-1] if result.history else None
    return {
        "variant": variant,
        "seed": seed,
        "r_ac": last.r_ac if last else 0.0,
        "h_total": last.h_total if last else 0,
        "pen_distance": last.pen_distance if last else 0,
        "pen_area": last.pen_area if last else 0,
    }


def run_ablation(args) -> int:
    cfg = _world(args)
    cfg.scenario(args.scenario)
    seeds = parse_seeds(args.seeds)
    out = Path(args.out) / f"ablation_{args.scenario}"
    jobs = [
        (cfg.model_dump_json(), args.scenario, v.value, s, out / v.value / f"seed{s}")
        for v in Variant for s in seeds
    ]
    logger_run.info("[ABLATION] variants=%s seeds=%s jobs=%s", [v.value for v in Variant], seeds, args.jobs)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_ablation_job, jobs))
    else:
        rows = [_ablation_job(j) for j in jobs]
    CsvLog(out / "ablation.csv", ABLATION_FIELDS, truncate=True).extend(rows)
    print(ablation_table(rows))
    ok, broken = ablation_ordering(rows)
    for line in broken:
        logger_run.warning("[ABLATION ORDER] %s", line)
    print(f"ordering_ok={ok}")
    return EXIT_OK


def ablation_table(rows: Sequence[dict]) -> PrettyTable:
    table = PrettyTable()
    table.field_names = ["variant", "runs", "median r_ac", "median H_total"]
    for v in Variant:
        mine = [r for r in rows if r["variant"] == v.value]
        if not mine:
            continue
        table.add_row([
            v.value,
            len(mine),
            f"{np.median([r['r_ac'] for r in mine]):.6f}",
            f"{np.median([r['h_total'] for r in mine]):.1f}",
        ])
    return table


def _median_h(rows: Sequence[dict], variant: Variant) -> Optional[float]:
    vals = [r["h_total"] for r in rows if r["variant"] == variant.value]
    return float(np.median(vals)) if vals else None


def ablation_ordering(rows: Sequence[dict]) -> tuple[bool, list[str]]:
    """Full MAGRL should not end hungrier (median final H_total) than either single ablation."""
    full = _median_h(rows, Variant.MAGRL)
    broken = []
    for other in (Variant.MAGRL_G, Variant.MAGRL_HOE):
        theirs = _median_h(rows, other)
        if full is None or theirs is None:
            continue
        if full > theirs:
            broken.append(f"median h_total {Variant.MAGRL.value}={full:g} > {other.value}={theirs:g}")
    return not broken, broken


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavwet", description="Multi-UAV WET simulator and MAGRL trainer.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=os.getenv("UAVWET_CONFIG", str(DEFAULT_CONFIG_PATH)))
    common.add_argument("--scenario", default="test2x3")
    common.add_argument("--variant", choices=[v.value for v in Variant], default=None)
    common.add_argument("--episodes", type=int, default=None)
    common.add_argument("--out", default=os.getenv("UAVWET_OUT", str(PROJECT_ROOT / "runs")))
    common.add_argument("--log-level", default=os.getenv("UAVWET_LOG_LEVEL", "INFO"))
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[common], help="train one variant on one seed")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--checkpoint-every", type=int, default=0)
    p_train.set_defaults(func=run_train)

    p_eval = sub.add_parser("eval", parents=[common], help="deterministic rollout of a checkpoint")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=run_eval)

    p_abl = sub.add_parser("ablation", parents=[common], help="all four variants over a seed list")
    p_abl.add_argument("--seeds", default="1..5")
    p_abl.add_argument("--jobs", type=int, default=1)
    p_abl.set_defaults(func=run_ablation)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_env()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        setup_logging(args.log_level)
        return args.func(args)
    except (ConfigError, CheckpointMismatchError) as exc:
        logger_run.error("[CONFIG ERROR] %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger_run.error("[OUTPUT ERROR] %s", exc)
        return EXIT_CONFIG
    except (DivergenceError, NonFiniteError) as exc:
        logger_run.error("[DIVERGENCE] %s", exc)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
