"""Command-line entry points.

Subcommands: gen-map, gen-traces, train, eval-pred, simulate, sweep,
report.  Global flags: --config, --seed, --out.  All commands are fully
deterministic given the config and master seed.
"""

import argparse
import sys
from pathlib import Path

from . import dualconn, harness, lstm, mobility, predictor, radio
from .config import load_config
from .streams import derive_rng


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_map(cfg, args):
    out = _out_dir(args)
    rng = derive_rng(args.seed, "hotspots", 0)
    hotspots = mobility.generate_hotspots(cfg.map_spec, rng)
    mobility.write_hotspot_csv(out / "hotspots.csv", hotspots)
    for density in cfg.densities_per_km2:
        rng_dep = derive_rng(args.seed, "deploy", 0, density)
        dep = radio.deploy_ppp(cfg.map_spec, density, rng_dep, cfg.capacity_per_bs)
        radio.write_deployment_csv(out / f"deployment_{density:g}.csv", dep,
                                   seed=args.seed)
    print(f"wrote hotspots and {len(cfg.densities_per_km2)} deployments to {out}")
    return 0


def _make_profiles(cfg, args, hotspots):
    profiles = {}
    uid = 0
    for speed in cfg.speeds_mps:
        for _ in range(cfg.users_per_speed):
            rng = derive_rng(args.seed, "sites", 0, uid)
            sites = mobility.assign_user_sites(hotspots, cfg.sites_per_user, 3.0, rng)
            profiles[uid] = mobility.UserProfile(uid, speed, sites)
            uid += 1
    return profiles


def cmd_gen_traces(cfg, args):
    out = _out_dir(args)
    rng = derive_rng(args.seed, "hotspots", 0)
    hotspots = mobility.generate_hotspots(cfg.map_spec, rng)
    mobility.write_hotspot_csv(out / "hotspots.csv", hotspots)
    profiles = _make_profiles(cfg, args, hotspots)
    trajectories = []
    for uid, prof in profiles.items():
        trajectories.extend(mobility.generate_trajectory(
            prof, cfg.map_spec, hotspots, cfg.days,
            harness.derive_seed(args.seed, "traces", 0)))
    mobility.write_trace_csv(out / "traces.csv", trajectories)
    print(f"wrote {len(trajectories)} trajectories to {out / 'traces.csv'}")
    return 0


def cmd_train(cfg, args):
    out = _out_dir(args)
    trajectories = mobility.read_trace_csv(args.traces)
    by_user = {}
    for tr in trajectories:
        by_user.setdefault(tr.user_id, []).append(tr)
    norm = predictor.NormSpec(cfg.map_spec.width_m, cfg.map_spec.height_m)
    for uid, trajs in sorted(by_user.items()):
        train = sorted(trajs, key=lambda t: t.day)[: cfg.train_days]
        dataset = predictor.build_dataset(train, norm)
        hyper = lstm.TrainHyper(
            **{**harness._hyper_dict(cfg.hyper),
               "seed": harness._model_seed(args.seed, 0, uid)})
        params, losses = predictor.train_user_model(dataset, cfg.stack_spec, hyper)
        (out / f"user_{uid}.lstm").write_bytes(
            lstm.save_checkpoint(cfg.stack_spec, params))
        with open(out / f"user_{uid}_train_log.csv", "w") as f:
            f.write("epoch,loss\n")
            for epoch, loss in enumerate(losses):
                f.write(f"{epoch},{loss:.6e}\n")
        print(f"user {uid}: final loss {losses[-1]:.3e}")
    return 0


def cmd_eval_pred(cfg, args):
    out = _out_dir(args)
    trajectories = mobility.read_trace_csv(args.traces)
    deployment = radio.read_deployment_csv(args.deployment)
    norm = predictor.NormSpec(cfg.map_spec.width_m, cfg.map_spec.height_m)
    by_user = {}
    for tr in trajectories:
        by_user.setdefault(tr.user_id, []).append(tr)
    log_path = out / "predictions.csv"
    with open(log_path, "w") as f:
        f.write("user_id,day,minute,pred_x_m,pred_y_m,serving_bs,predicted_target_bs\n")
        for uid, trajs in sorted(by_user.items()):
            blob = Path(args.models) / f"user_{uid}.lstm"
            spec, params = lstm.load_checkpoint(blob.read_bytes())
            accs = []
            for tr in sorted(trajs, key=lambda t: t.day)[cfg.train_days:]:
                acc, preds, actual, pred_pos = predictor.evaluate_day(
                    spec, params, tr, deployment, cfg.radio_cfg, norm,
                    cfg.map_spec, cfg.match_window_min)
                if actual:
                    accs.append(acc)
                pred_by_minute = {p.minute: p for p in preds}
                serving = radio.best_bs_along(deployment, cfg.radio_cfg, tr.positions)
                for t in range(mobility.MINUTES_PER_DAY - 1):
                    p = pred_by_minute.get(t + 1)
                    tgt = p.target_bs if p is not None else ""
                    f.write(f"{uid},{tr.day},{t},{pred_pos[t, 0]:.3f},"
                            f"{pred_pos[t, 1]:.3f},{serving[t]},{tgt}\n")
            mean = sum(accs) / len(accs) if accs else float("nan")
            print(f"user {uid}: accuracy {mean:.3f} over {len(accs)} eval days")
    print(f"wrote {log_path}")
    return 0


def cmd_simulate(cfg, args):
    out = _out_dir(args)
    world = harness.build_seed_world(cfg, args.seed, 0,
                                     progress=lambda m: print(m, file=sys.stderr))
    rng_dep = derive_rng(args.seed, "deploy", 0, args.density)
    deployment = radio.deploy_ppp(cfg.map_spec, args.density, rng_dep,
                                  cfg.capacity_per_bs)
    norm = predictor.NormSpec(cfg.map_spec.width_m, cfg.map_spec.height_m)
    uids = [u for u, p in world.profiles.items() if p.speed_mps == args.speed]
    if not uids:
        print(f"no users at speed {args.speed}", file=sys.stderr)
        return 1
    all_events, all_records = [], []
    for day_idx in range(cfg.train_days, cfg.days):
        day_trajs = {u: world.trajectories[u][day_idx] for u in uids}
        events, records = dualconn.simulate_day(
            [world.profiles[u] for u in uids], day_trajs, deployment,
            cfg.radio_cfg, {u: world.models[u] for u in uids},
            cfg.policy, args.mode, norm=norm, map_spec=cfg.map_spec)
        all_events.extend(events)
        all_records.extend(records)
    dualconn.write_event_csv(out / "events.csv", all_events)
    dualconn.write_link_csv(out / "links.csv", all_records)
    print(f"wrote {len(all_events)} events and {len(all_records)} link records to {out}")
    return 0


def cmd_sweep(cfg, args):
    out = _out_dir(args)
    try:
        rows = harness.run_sweep(cfg, args.seed,
                                 progress=lambda m: print(m, file=sys.stderr))
    except Exception as exc:  # partial results are not recoverable here
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 1
    harness.write_metrics_csv(out / "metrics.csv", rows)
    print(f"wrote {len(rows)} rows to {out / 'metrics.csv'}")
    return 0


def cmd_report(cfg, args):
    rows = harness.read_metrics_csv(args.metrics)
    tables = harness.report(rows)
    print(harness.format_report(tables), end="")
    out = _out_dir(args)
    harness.write_long_csv(out / "metrics_long.csv", tables)
    print(f"wrote {out / 'metrics_long.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcsim",
        description="Dual-connectivity handover simulator")
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-map", help="generate hotspots and PPP deployments")
    sub.add_parser("gen-traces", help="generate mobility traces")

    p = sub.add_parser("train", help="train per-user predictors from a trace file")
    p.add_argument("--traces", required=True)

    p = sub.add_parser("eval-pred", help="score handover-prediction accuracy")
    p.add_argument("--traces", required=True)
    p.add_argument("--deployment", required=True)
    p.add_argument("--models", required=True, help="directory of .lstm checkpoints")

    p = sub.add_parser("simulate", help="simulate one (mode, density, speed) run")
    p.add_argument("--mode", choices=dualconn.MODES, required=True)
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--speed", type=float, required=True)

    sub.add_parser("sweep", help="run the full metric sweep")

    p = sub.add_parser("report", help="summarize a metrics CSV")
    p.add_argument("--metrics", required=True)
    return parser


_COMMANDS = {
    "gen-map": cmd_gen_map,
    "gen-traces": cmd_gen_traces,
    "train": cmd_train,
    "eval-pred": cmd_eval_pred,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    return _COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
