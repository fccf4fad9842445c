"""Command-line pipeline: weight calibration, nominal design, EKF
validation, policy training, and Monte-Carlo comparison.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, artifacts, astro, config, guidance, mc, navfilter
from . import nominal as nom
from . import rl

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _worker_count(cfg: dict, args) -> int:
    env = os.environ.get("RPO_FORGE_THREADS")
    if env is not None:
        return int(env)
    if getattr(args, "workers", None) is not None:
        return args.workers
    return int(cfg["mc"]["workers"])


def cmd_calibrate_weights(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    mission = config.mission_from_config(cfg)
    pso = config.pso_from_config(cfg)
    out = _ensure_outdir(args.out_dir)

    if args.gamma is not None:
        gamma = tuple(float(x) for x in args.gamma.split(","))
        if len(gamma) != 3:
            print("--gamma needs three comma-separated values",
                  file=sys.stderr)
            return EXIT_USAGE
        optima = (float("nan"),) * 3
    else:
        gamma, optima = nom.calibrate_weights(mission, pso)
    path = os.path.join(out, "weights.json")
    artifacts.write_weights(path, gamma, optima)
    print(f"gamma = {gamma}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_design(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    mission = config.mission_from_config(cfg)
    pso = config.pso_from_config(cfg)
    out = _ensure_outdir(args.out_dir)

    if args.gamma is not None:
        gamma = tuple(float(x) for x in args.gamma.split(","))
    elif cfg["weights"]["gamma"] is not None:
        gamma = tuple(float(x) for x in cfg["weights"]["gamma"])
    else:
        gamma, _ = nom.calibrate_weights(mission, pso)

    problem = nom.DesignProblem(mission)
    plan, breakdown = nom.pso_optimize(mission, gamma, pso, problem=problem)
    traj = nom.build_nominal(mission, plan)

    plan_path = os.path.join(out, "plan.json")
    prof_path = os.path.join(out, "profiles.csv")
    artifacts.write_plan(plan_path, plan)
    artifacts.write_profiles(prof_path, traj)
    manifest = os.path.join(out, "manifest.json")
    artifacts.write_manifest(manifest, cfg, {"design": pso.seed},
                             {"plan": plan_path, "profiles": prof_path},
                             __version__)
    print(f"total dv: {plan.total_dv:.4f} m/s  "
          f"(g_total {breakdown.g_total:.4f})")
    print(f"wrote {plan_path}, {prof_path}, {manifest}")
    return EXIT_OK


def cmd_ekf(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    mission = config.mission_from_config(cfg)
    out = _ensure_outdir(args.out_dir)
    plan = artifacts.read_plan(args.trajectory)
    traj = nom.build_nominal(mission, plan)

    ekf_cfg = config.ekf_from_config(cfg)
    truth = navfilter.truth_from_nominal(traj, ekf_cfg.dt)
    finals = []
    paths = {}
    for k in range(args.seeds):
        seed = cfg["seed"] + k
        run_cfg = config.ekf_from_config(cfg, seed=seed)
        hist = navfilter.ekf_run(truth, mission.target_el0, run_cfg,
                                 np.random.default_rng(seed),
                                 mission.gravity)
        path = os.path.join(out, f"ekf_seed{seed}.csv")
        artifacts.write_ekf_history(path, hist)
        paths[f"ekf_seed{seed}"] = path
        finals.append(hist.final_max_pos_sigma)

    summary = {
        "seeds": args.seeds,
        "final_max_pos_sigma_m": [float(x) for x in finals],
        "median_final_max_pos_sigma_m": float(np.median(finals)),
    }
    spath = os.path.join(out, "ekf_summary.json")
    artifacts._jdump(summary, spath)
    paths["summary"] = spath
    artifacts.write_manifest(os.path.join(out, "manifest.json"), cfg,
                             {"ekf_base": cfg["seed"]}, paths, __version__)
    print(f"median final max position sigma: "
          f"{summary['median_final_max_pos_sigma_m']:.4f} m")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    mission = config.mission_from_config(cfg)
    out = _ensure_outdir(args.out_dir)
    plan = artifacts.read_plan(args.trajectory)
    traj = nom.build_nominal(mission, plan)

    gcfg = config.guidance_from_config(cfg)
    pcfg = config.ppo_from_config(cfg)
    problem = guidance.GuidanceProblem(mission, traj, gcfg)
    params, best_score, curve = rl.train(mission, traj, gcfg, pcfg,
                                         problem=problem)

    ppath = os.path.join(out, "policy.json")
    artifacts.write_policy(ppath, params, problem)
    cpath = os.path.join(out, "training_curve.csv")
    with open(cpath, "w") as f:
        f.write("steps,mean_episode_reward,sigma_score\n")
        for s, r, sc in zip(curve.steps, curve.mean_episode_reward,
                            curve.sigma_score):
            f.write(f"{s},{repr(float(r))},{repr(float(sc))}\n")
    artifacts.write_manifest(os.path.join(out, "manifest.json"), cfg,
                             {"train": pcfg.seed},
                             {"policy": ppath, "curve": cpath}, __version__)
    print(f"best sigma-point score: {best_score:.3f}")
    print(f"wrote {ppath}, {cpath}")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    mission = config.mission_from_config(cfg)
    out = _ensure_outdir(args.out_dir)
    plan = artifacts.read_plan(args.trajectory)
    traj = nom.build_nominal(mission, plan)

    strategies = args.strategies.split(",") if args.strategies else None
    levels = args.levels.split(",") if args.levels else None
    mcc = config.mc_from_config(cfg, strategies=strategies, levels=levels,
                                workers=_worker_count(cfg, args))
    gcfg = config.guidance_from_config(cfg)
    problem = guidance.GuidanceProblem(mission, traj, gcfg)

    policy = None
    if "rl" in mcc.strategies:
        if args.policy is None:
            print("strategy 'rl' needs --policy", file=sys.stderr)
            return EXIT_USAGE
        policy = artifacts.read_policy(args.policy)

    schedule = None
    if "s" in mcc.strategies:
        points = rl.sigma_points(mission, gcfg)
        schedule, converged = guidance.alpha_s_optimize(
            problem, points, maxiter=int(cfg["alpha_s"]["maxiter"]))
        spath = os.path.join(out, "alpha_s_schedule.json")
        artifacts.write_schedule(spath, schedule, converged)

    controllers = mc.default_controllers(problem, policy=policy,
                                         schedule=schedule)
    records, summary = mc.run_campaign(problem, controllers, mcc)

    rpath = os.path.join(out, "mc_records.csv")
    spath = os.path.join(out, "mc_summary.json")
    artifacts.write_mc_records(rpath, records)
    artifacts.write_mc_summary(spath, summary)

    # single-episode traces per strategy for plotting (alpha and deviation)
    x0 = astro.RelativeState(mission.x0_rel.x + gcfg.dx0_max * 0.5)
    episodes = {}
    for st in mcc.strategies:
        res = guidance.run_episode(
            controllers[st](), problem, x0_rel=x0,
            rng=np.random.default_rng(cfg["seed"]),
            thrust_error=guidance.ThrustErrorModel.preset("none"))
        episodes[st] = res
    tpath = os.path.join(out, "alpha_traces.csv")
    artifacts.write_alpha_traces(tpath, problem, episodes)

    artifacts.write_manifest(os.path.join(out, "manifest.json"), cfg,
                             {"mc": mcc.seed},
                             {"records": rpath, "summary": spath,
                              "traces": tpath}, __version__)
    for level in mcc.error_levels:
        for st in mcc.strategies:
            stats = summary.get(st, level)
            print(f"{level:5s} {st:3s}: mean {stats['mean_dv']:8.3f} "
                  f"+- {stats['std_dv']:7.3f}  "
                  f"[P25 {stats['p25_dv']:.3f}, P75 {stats['p75_dv']:.3f}, "
                  f"P99 {stats['p99_dv']:.3f}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpo-forge",
        description="Far-range rendezvous design and guidance pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trajectory=False):
        p.add_argument("--config", default=None,
                       help="JSON config (defaults used when omitted)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default="out")
        if trajectory:
            p.add_argument("--trajectory", required=True,
                           help="plan.json from the design step")

    p = sub.add_parser("calibrate-weights",
                       help="single-objective optima -> gamma weights")
    common(p)
    p.add_argument("--gamma", default=None,
                   help="skip calibration, write these weights")
    p.set_defaults(func=cmd_calibrate_weights)

    p = sub.add_parser("design", help="PSO nominal trajectory design")
    common(p)
    p.add_argument("--gamma", default=None,
                   help="comma-separated objective weights")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("ekf", help="bearings-only EKF validation")
    common(p, trajectory=True)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_ekf)

    p = sub.add_parser("train", help="PPO guidance policy training")
    common(p, trajectory=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mc", help="Monte-Carlo strategy comparison")
    common(p, trajectory=True)
    p.add_argument("--policy", default=None, help="policy.json checkpoint")
    p.add_argument("--strategies", default=None,
                   help="comma-separated subset of rl,ld,c,s")
    p.add_argument("--levels", default=None,
                   help="comma-separated subset of none,low,high")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (astro.NumericalFailure, astro.UnsupportedOrbit,
            nom.InconsistentPlan) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
