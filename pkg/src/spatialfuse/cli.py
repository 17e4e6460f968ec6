"""Command-line entry points: gen-data, train, eval, gradcheck.

Exit codes: 0 success, 1 check failure, 2 usage or I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import container
from .config import RunConfig, load_config, parse_pairs
from .errors import ConfigError, FormatError
from .params import Params
from .train import ModelPolicy, dataset_loss, load_dataset, train, write_episode
from .world.episode import ExpertDriver, expert_rollout, run_episode, stop_policy
from .world.metrics import aggregate, format_line
from .world.world import generate_world

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _fail(msg: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def save_checkpoint(params: Params | dict, path) -> None:
    arrays = {k: (v.data if hasattr(v, "data") else v) for k, v in params.items()}
    container.save(path, arrays)


def load_checkpoint(path) -> Params:
    return Params.from_arrays(container.load(path))


def _parse_seeds(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"seed range must look like START:END, got {text!r}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: RunConfig) -> int:
    seeds = cfg.seeds()
    if len(seeds) == 0:
        return _fail(f"empty seed range {cfg.seed_start}:{cfg.seed_end}")
    out = Path(cfg.data_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        return _fail(f"cannot write to {out}: {exc}")
    world_cfg, limits = cfg.world_config(), cfg.limits()
    frames = 0
    for seed in seeds:
        ep = expert_rollout(seed, world_cfg, limits, steer_noise=cfg.steer_noise)
        write_episode(out, ep)
        frames += len(ep.frames)
        print(f"seed={seed} frames={len(ep.frames)} duration={ep.duration:.1f}")
    print(f"episodes={len(seeds)} frames={frames}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    try:
        data = load_dataset(cfg.data_dir)
    except (OSError, ValueError, FormatError) as exc:
        return _fail(f"cannot load dataset from {cfg.data_dir}: {exc}")
    if cfg.optimizer != "adam":
        return _fail(f"unsupported optimizer {cfg.optimizer!r}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mcfg = cfg.model_config()
    log_lines: list[str] = []

    def log(step: int, loss: float) -> None:
        line = f"step={step} loss={loss:.6f}"
        log_lines.append(line)
        print(line, flush=True)

    from .model import init_model

    params = init_model(mcfg, cfg.seed)
    initial = dataset_loss(params, data, mcfg, cfg.batch_size)
    print(f"frames={len(data)} initial_loss={initial:.6f}", flush=True)
    res = train(data, mcfg, cfg.steps, seed=cfg.seed, lr=cfg.lr, batch_size=cfg.batch_size,
                betas=(cfg.beta1, cfg.beta2), adam_eps=cfg.adam_eps, params=params,
                log=log, log_every=cfg.log_every)
    (out / "loss.log").write_text("\n".join(log_lines) + "\n")
    save_checkpoint(res.best_params, out / "best.sfse")
    if res.nan_step is not None:
        print(f"non-finite loss at step {res.nan_step}; kept best.sfse", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(res.params, out / "final.sfse")
    final = dataset_loss(res.params, data, mcfg, cfg.batch_size)
    summary = f"initial_loss={initial:.6f} final_loss={final:.6f} ratio={final / initial:.6f}"
    print(summary)
    with open(out / "loss.log", "a") as fh:
        fh.write(summary + "\n")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    seeds = cfg.seeds()
    if len(seeds) == 0:
        return _fail(f"empty seed range {cfg.seed_start}:{cfg.seed_end}")
    if cfg.policy == "expert":
        policy = ExpertDriver()
    elif cfg.policy == "stop":
        policy = stop_policy
    elif cfg.policy == "model":
        try:
            params = load_checkpoint(cfg.checkpoint)
        except (OSError, FormatError) as exc:
            return _fail(f"cannot load checkpoint {cfg.checkpoint}: {exc}")
        policy = ModelPolicy(params, cfg.model_config())
    else:
        return _fail(f"unknown policy {cfg.policy!r}")
    world_cfg, limits = cfg.world_config(), cfg.limits()
    lines, results = [], []
    for seed in seeds:
        res = run_episode(policy, generate_world(seed, world_cfg), limits)
        line = format_line(seed, res.metrics)
        if res.aborted:
            line += f" aborted={res.aborted.replace(' ', '_')}"
        lines.append(line)
        results.append(res.metrics)
        print(line, flush=True)
    agg = aggregate(results)
    agg_line = f"AGG ds={agg['ds']:.4f} rc={agg['rc']:.4f} is={agg['is']:.6f}"
    lines.append(agg_line)
    print(agg_line)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_{cfg.policy}_{cfg.seed_start}_{cfg.seed_end}.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, fault: str | None = None) -> int:
    from .checks import run_gradcheck

    report = run_gradcheck(precision=cfg.gradcheck_precision, eps=cfg.gradcheck_eps, seed=cfg.seed, fault=fault)
    failed = []
    for name, err in report.items():
        ok = err <= 1e-3
        print(f"{name:<24s} max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print("failed: " + " ".join(failed))
        return EXIT_CHECK
    print("all gradients ok")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatialfuse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="run seed (init and shuffling)")
    common.add_argument("--seeds", help="episode seed range START:END (END exclusive)")
    common.add_argument("--out", help="output directory (dataset dir for gen-data)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    sub.add_parser("gen-data", parents=[common], help="collect expert episodes")
    sub.add_parser("train", parents=[common], help="train on a dataset")
    ev = sub.add_parser("eval", parents=[common], help="closed-loop evaluation")
    ev.add_argument("--expert", action="store_true", help="drive with the expert instead of a checkpoint")
    ev.add_argument("--stop", action="store_true", help="drive with the always-stop policy")
    ev.add_argument("--checkpoint", help="checkpoint to evaluate")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    gc.add_argument("--f64", action="store_true", help="run in 64-bit floats (the default)")
    gc.add_argument("--f32", action="store_true", help="run in 32-bit floats")
    gc.add_argument("--fault", help=argparse.SUPPRESS)
    return p


def config_from_args(args) -> RunConfig:
    overrides = parse_pairs("\n".join(args.set))
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.seeds:
        a, b = _parse_seeds(args.seeds)
        overrides["seed_start"], overrides["seed_end"] = str(a), str(b)
    if args.out:
        overrides["data_dir" if args.command == "gen-data" else "out_dir"] = args.out
    if args.command == "eval":
        if args.expert:
            overrides["policy"] = "expert"
        elif args.stop:
            overrides["policy"] = "stop"
        if args.checkpoint:
            overrides["checkpoint"] = args.checkpoint
    if args.command == "gradcheck":
        if args.f32:
            overrides["gradcheck_precision"] = "float32"
        if args.f64:
            overrides["gradcheck_precision"] = "float64"
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        return cmd_gradcheck(cfg, fault=args.fault)
    except ConfigError as exc:
        return _fail(str(exc))


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
