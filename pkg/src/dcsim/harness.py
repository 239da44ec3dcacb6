"""Experiment orchestration: handover-window metrics, network energy
efficiency, the density x speed x mode x seed sweep, and report tables.

Every run is a pure function of (config, master seed): traces, models,
and deployments all draw from streams derived from the master seed plus
context tags, and trained models are cached by a content hash of the
training traces and hyperparameters so the three modes share them.
"""

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from . import dualconn, lstm, mobility, predictor, radio
from .streams import derive_rng

METRICS_HEADER = ("density_per_km2,speed_mps,mode,seed,accuracy,"
                  "mean_ho_rate_bps,mean_ho_ber,network_ee_bpj")


@dataclass(frozen=True)
class PowerModel:
    p_fixed_w: float = 1.0   # per deployed BS, always on
    p_tx_w: float = 0.25     # per active downlink

    def __post_init__(self):
        if self.p_fixed_w <= 0 or self.p_tx_w < 0:
            raise ValueError("power model values must be positive")


@dataclass(frozen=True)
class SimConfig:
    map_spec: mobility.MapSpec = mobility.MapSpec()
    radio_cfg: radio.RadioConfig = radio.RadioConfig()
    policy: dualconn.DcPolicy = dualconn.DcPolicy()
    power: PowerModel = PowerModel()
    stack_spec: lstm.StackSpec = lstm.StackSpec()
    hyper: lstm.TrainHyper = lstm.TrainHyper()
    densities_per_km2: tuple = (5.0, 10.0, 20.0)
    speeds_mps: tuple = (1.0, 4.0, 8.0)
    users_per_speed: int = 3
    days: int = 22
    eval_days: int = 2
    sites_per_user: int = 10
    modes: tuple = dualconn.MODES
    seeds: tuple = (0, 1, 2)
    capacity_per_bs: int = 16
    ho_window_min: int = 2
    match_window_min: int = 1

    def __post_init__(self):
        if self.days < 3 or self.eval_days < 1 or self.days <= self.eval_days:
            raise ValueError("need at least 1 eval day and 2 train days")
        for name in ("densities_per_km2", "speeds_mps", "modes", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")

    @property
    def train_days(self) -> int:
        return self.days - self.eval_days


@dataclass
class HoWindow:
    user_id: int
    ho_minute: int
    minutes: tuple
    bers: tuple
    rates: tuple


def ho_window_metrics(link_records, actual_events_by_user, w_min: int):
    """Per-handover windows of half-width `w_min` minutes.

    Returns (windows, mean_rate, mean_ber) with the means pooled over all
    window minutes, or (list, None, None) when there are no handovers.
    """
    by_user = {}
    for r in link_records:
        by_user.setdefault(r.user_id, {})[r.minute] = r
    windows = []
    all_rates = []
    all_bers = []
    for uid, events in actual_events_by_user.items():
        recs = by_user.get(uid, {})
        for minute, _from_bs, _to_bs in events:
            lo = max(0, minute - w_min)
            hi = min(mobility.MINUTES_PER_DAY - 1, minute + w_min)
            mins, bers, rates = [], [], []
            for m in range(lo, hi + 1):
                if m in recs:
                    mins.append(m)
                    bers.append(recs[m].ber)
                    rates.append(recs[m].rate_bps)
            if mins:
                windows.append(HoWindow(uid, minute, tuple(mins),
                                        tuple(bers), tuple(rates)))
                all_rates.extend(rates)
                all_bers.extend(bers)
    if not all_rates:
        return windows, None, None
    return windows, float(np.mean(all_rates)), float(np.mean(all_bers))


def network_ee(link_records, deployment, power: PowerModel) -> float:
    """Delivered bits over network energy, in bit/J.

    Energy = (fixed power for every deployed BS over the covered minutes
    + transmit power per active downlink-minute) * 60 s.
    """
    if not link_records:
        raise ValueError("no link records")
    minutes = {r.minute for r in link_records}
    n_minutes = len(minutes)
    total_bits = sum(r.rate_bps for r in link_records) * 60.0
    link_minutes = sum(2 if r.target_bs >= 0 else 1 for r in link_records)
    energy = (deployment.n_bs * power.p_fixed_w * n_minutes
              + power.p_tx_w * link_minutes) * 60.0
    return total_bits / energy


def _trace_hash(trajectories, hyper, stack_spec) -> str:
    h = hashlib.sha256()
    for tr in trajectories:
        h.update(np.ascontiguousarray(tr.positions).tobytes())
    h.update(repr(hyper).encode())
    h.update(repr(stack_spec).encode())
    return h.hexdigest()


@dataclass
class _SeedWorld:
    """Everything one seed shares across densities and modes."""
    hotspots: np.ndarray
    profiles: dict          # user_id -> UserProfile
    trajectories: dict      # user_id -> list[Trajectory]
    models: dict            # user_id -> (StackSpec, StackParams)
    loss_logs: dict         # user_id -> list[float]


def build_seed_world(config: SimConfig, master_seed: int, seed: int,
                     model_cache=None, progress=None) -> _SeedWorld:
    """Generate hotspots, users, traces, and trained models for one seed."""
    rng_map = derive_rng(master_seed, "hotspots", seed)
    hotspots = mobility.generate_hotspots(config.map_spec, rng_map)
    profiles = {}
    uid = 0
    for speed in config.speeds_mps:
        for _ in range(config.users_per_speed):
            rng_sites = derive_rng(master_seed, "sites", seed, uid)
            sites = mobility.assign_user_sites(hotspots, config.sites_per_user,
                                               3.0, rng_sites)
            profiles[uid] = mobility.UserProfile(uid, speed, sites)
            uid += 1
    trajectories = {}
    for u, prof in profiles.items():
        trajectories[u] = mobility.generate_trajectory(
            prof, config.map_spec, hotspots, config.days,
            derive_seed(master_seed, "traces", seed))
    norm = predictor.NormSpec(config.map_spec.width_m, config.map_spec.height_m)
    models = {}
    loss_logs = {}
    cache = model_cache if model_cache is not None else {}
    for u, trajs in trajectories.items():
        train = trajs[: config.train_days]
        key = _trace_hash(train, config.hyper, config.stack_spec)
        if key not in cache:
            dataset = predictor.build_dataset(train, norm)
            hyper = lstm.TrainHyper(
                **{**_hyper_dict(config.hyper),
                   "seed": _model_seed(master_seed, seed, u)})
            if progress:
                progress(f"training user {u} (seed {seed})")
            cache[key] = predictor.train_user_model(dataset, config.stack_spec, hyper)
        models[u] = (config.stack_spec, cache[key][0])
        loss_logs[u] = cache[key][1]
    return _SeedWorld(hotspots, profiles, trajectories, models, loss_logs)


def _hyper_dict(h: lstm.TrainHyper) -> dict:
    return {f: getattr(h, f) for f in
            ("learning_rate", "lr_decay", "epochs", "bptt_window", "grad_clip",
             "adam_beta1", "adam_beta2", "adam_eps", "seed")}


def _model_seed(master_seed, seed, uid) -> int:
    digest = hashlib.sha256(f"model/{master_seed}/{seed}/{uid}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(master_seed, *tags) -> int:
    """Int sub-seed for APIs that take a plain seed."""
    h = hashlib.sha256(repr((int(master_seed),) + tags).encode()).digest()
    return int.from_bytes(h[:8], "little")


@dataclass(frozen=True)
class MetricsRow:
    density_per_km2: float
    speed_mps: float
    mode: str
    seed: int
    accuracy: float
    mean_ho_rate_bps: float
    mean_ho_ber: float
    network_ee_bpj: float

    def csv_line(self) -> str:
        rate = "" if self.mean_ho_rate_bps is None else f"{self.mean_ho_rate_bps:.6e}"
        ber = "" if self.mean_ho_ber is None else f"{self.mean_ho_ber:.6e}"
        return (f"{self.density_per_km2:g},{self.speed_mps:g},{self.mode},"
                f"{self.seed},{self.accuracy:.6f},{rate},{ber},"
                f"{self.network_ee_bpj:.6e}")


def run_grid_point(config, master_seed, world, deployment, speed, mode, seed,
                   record_sink=None):
    """Simulate the eval days for one (density, speed, mode, seed) cell
    and reduce them to one MetricsRow.

    `record_sink(row_key, link_records)` is called with every link record
    of the cell when given, for callers that audit per-minute link data.
    """
    norm = predictor.NormSpec(config.map_spec.width_m, config.map_spec.height_m)
    uids = [u for u, p in world.profiles.items() if p.speed_mps == speed]
    all_records = []
    events_by_user = {}
    accuracies = []
    for day_idx in range(config.train_days, config.days):
        day_trajs = {u: world.trajectories[u][day_idx] for u in uids}
        models = {u: world.models[u] for u in uids}
        _events, records = dualconn.simulate_day(
            [world.profiles[u] for u in uids], day_trajs, deployment,
            config.radio_cfg, models, config.policy, mode,
            norm=norm, map_spec=config.map_spec)
        # time-shift records of successive days so windows never collide
        offset = (day_idx - config.train_days) * mobility.MINUTES_PER_DAY
        for r in records:
            all_records.append(dualconn.LinkRecord(
                r.minute + offset, r.user_id, r.mode, r.serving_bs,
                r.target_bs, r.rss_s_w, r.rss_t_w, r.ber, r.rate_bps))
        for u in uids:
            spec, params = world.models[u]
            acc, _p, actual, _pp = predictor.evaluate_day(
                spec, params, day_trajs[u], deployment, config.radio_cfg,
                norm, config.map_spec, config.match_window_min)
            if actual:
                accuracies.append(acc)
            events_by_user.setdefault(u, []).extend(
                (m + offset, f, t) for m, f, t in actual)
    if record_sink is not None:
        record_sink((deployment.density_per_km2, speed, mode, seed), all_records)
    _windows, mean_rate, mean_ber = _window_metrics_multiday(
        all_records, events_by_user, config.ho_window_min)
    ee = network_ee(all_records, deployment, config.power)
    accuracy = float(np.mean(accuracies)) if accuracies else 1.0
    return MetricsRow(deployment.density_per_km2, speed, mode, seed,
                      accuracy, mean_rate, mean_ber, ee)


def _window_metrics_multiday(records, events_by_user, w_min):
    by_user = {}
    for r in records:
        by_user.setdefault(r.user_id, {})[r.minute] = r
    all_rates, all_bers, windows = [], [], []
    for uid, events in events_by_user.items():
        recs = by_user.get(uid, {})
        for minute, _f, _t in events:
            mins, bers, rates = [], [], []
            for m in range(minute - w_min, minute + w_min + 1):
                if m in recs:
                    mins.append(m)
                    bers.append(recs[m].ber)
                    rates.append(recs[m].rate_bps)
            if mins:
                windows.append(HoWindow(uid, minute, tuple(mins),
                                        tuple(bers), tuple(rates)))
                all_rates.extend(rates)
                all_bers.extend(bers)
    if not all_rates:
        return windows, None, None
    return windows, float(np.mean(all_rates)), float(np.mean(all_bers))


def run_sweep(config: SimConfig, master_seed: int, progress=None,
              record_sink=None) -> list:
    """Full density x speed x mode x seed grid; returns MetricsRows in
    canonical grid order."""
    rows = []
    model_cache = {}
    for seed in config.seeds:
        world = build_seed_world(config, master_seed, seed,
                                 model_cache=model_cache, progress=progress)
        for density in config.densities_per_km2:
            rng_dep = derive_rng(master_seed, "deploy", seed, density)
            deployment = radio.deploy_ppp(config.map_spec, density, rng_dep,
                                          config.capacity_per_bs)
            for speed in config.speeds_mps:
                for mode in config.modes:
                    if progress:
                        progress(f"simulate d={density} v={speed} {mode} seed={seed}")
                    rows.append(run_grid_point(config, master_seed, world,
                                               deployment, speed, mode, seed,
                                               record_sink=record_sink))
    rows.sort(key=lambda r: (config.densities_per_km2.index(r.density_per_km2),
                             config.speeds_mps.index(r.speed_mps),
                             config.modes.index(r.mode),
                             config.seeds.index(r.seed)))
    return rows


def write_metrics_csv(path, rows):
    with open(path, "w") as f:
        f.write(METRICS_HEADER + "\n")
        for row in rows:
            f.write(row.csv_line() + "\n")


def read_metrics_csv(path) -> list:
    rows = []
    with open(path) as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != METRICS_HEADER.split(","):
            raise ValueError(f"unexpected metrics header {reader.fieldnames}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(MetricsRow(
                    float(rec["density_per_km2"]), float(rec["speed_mps"]),
                    rec["mode"], int(rec["seed"]), float(rec["accuracy"]),
                    float(rec["mean_ho_rate_bps"]) if rec["mean_ho_rate_bps"] else None,
                    float(rec["mean_ho_ber"]) if rec["mean_ho_ber"] else None,
                    float(rec["network_ee_bpj"])))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"bad metrics row at line {lineno}: {exc}") from exc
    return rows


def report(rows) -> dict:
    """Reduce metrics rows to gain and accuracy tables.

    Gains compare mode means at each density (averaged over speeds and
    seeds): throughput and EE gain = (dual - single)/single, BER gain =
    (single - dual)/single.  Returns {"gains": ..., "accuracy": ...,
    "long": ...} where "long" is a plot-ready list of flat dicts.
    """
    def group_mean(selector, value):
        groups = {}
        for r in rows:
            v = value(r)
            if v is None:
                continue
            groups.setdefault(selector(r), []).append(v)
        return {k: float(np.mean(v)) for k, v in groups.items()}

    densities = sorted({r.density_per_km2 for r in rows})
    gains = []
    for d in densities:
        def mode_mean(mode, value):
            vals = [value(r) for r in rows
                    if r.density_per_km2 == d and r.mode == mode
                    and value(r) is not None]
            return float(np.mean(vals)) if vals else None
        row = {"density_per_km2": d}
        for name, value in (("rate", lambda r: r.mean_ho_rate_bps),
                            ("ber", lambda r: r.mean_ho_ber),
                            ("ee", lambda r: r.network_ee_bpj)):
            single = mode_mean("single", value)
            dual = mode_mean("dual", value)
            if single is None or dual is None or single == 0:
                row[f"{name}_gain_pct"] = None
            elif name == "ber":
                row[f"{name}_gain_pct"] = 100.0 * (single - dual) / single
            else:
                row[f"{name}_gain_pct"] = 100.0 * (dual - single) / single
        gains.append(row)

    accuracy = group_mean(lambda r: (r.speed_mps, r.density_per_km2),
                          lambda r: r.accuracy)
    acc_table = [{"speed_mps": s, "density_per_km2": d, "accuracy": a}
                 for (s, d), a in sorted(accuracy.items())]
    long_rows = []
    for r in rows:
        for metric, value in (("accuracy", r.accuracy),
                              ("mean_ho_rate_bps", r.mean_ho_rate_bps),
                              ("mean_ho_ber", r.mean_ho_ber),
                              ("network_ee_bpj", r.network_ee_bpj)):
            if value is not None:
                long_rows.append({"density_per_km2": r.density_per_km2,
                                  "speed_mps": r.speed_mps, "mode": r.mode,
                                  "seed": r.seed, "metric": metric,
                                  "value": value})
    return {"gains": gains, "accuracy": acc_table, "long": long_rows}


def format_report(tables) -> str:
    out = io.StringIO()
    out.write("Gains of dual over single connectivity (percent)\n")
    out.write(f"{'density':>10} {'rate':>10} {'ber':>10} {'ee':>10}\n")
    for row in tables["gains"]:
        cells = [f"{row['density_per_km2']:>10g}"]
        for k in ("rate_gain_pct", "ber_gain_pct", "ee_gain_pct"):
            cells.append(f"{row[k]:>10.1f}" if row[k] is not None else f"{'-':>10}")
        out.write(" ".join(cells) + "\n")
    out.write("\nHandover prediction accuracy by speed and density\n")
    out.write(f"{'speed':>10} {'density':>10} {'accuracy':>10}\n")
    for row in tables["accuracy"]:
        out.write(f"{row['speed_mps']:>10g} {row['density_per_km2']:>10g} "
                  f"{row['accuracy']:>10.3f}\n")
    return out.getvalue()


def write_long_csv(path, tables):
    with open(path, "w") as f:
        f.write("density_per_km2,speed_mps,mode,seed,metric,value\n")
        for row in tables["long"]:
            f.write(f"{row['density_per_km2']:g},{row['speed_mps']:g},"
                    f"{row['mode']},{row['seed']},{row['metric']},"
                    f"{row['value']:.6e}\n")
