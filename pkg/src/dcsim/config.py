"""INI configuration: sections [map] [radio] [policy] [train] [sweep]
with keys matching the corresponding dataclass fields."""

import configparser

from . import dualconn, lstm, mobility, radio
from .harness import PowerModel, SimConfig


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _strs(text):
    return tuple(x for x in text.replace(",", " ").split())


def load_config(path=None) -> SimConfig:
    """Build a SimConfig from an INI file; missing keys keep defaults."""
    parser = configparser.ConfigParser()
    if path is not None:
        with open(path) as f:
            parser.read_file(f)

    def sec(name):
        return parser[name] if parser.has_section(name) else {}

    m = sec("map")
    map_spec = mobility.MapSpec(
        width_m=float(m.get("width_m", 4000.0)),
        height_m=float(m.get("height_m", 4000.0)),
        n_hotspots=int(m.get("n_hotspots", 200)),
        fractal_depth=int(m.get("fractal_depth", 4)))

    r = sec("radio")
    radio_cfg = radio.RadioConfig(
        bandwidth_hz=float(r.get("bandwidth_hz", 1e7)),
        noise_w=float(r.get("noise_w", 1e-13)),
        pathloss_exp=float(r.get("pathloss_exp", 4.0)),
        tx_power_w=float(r.get("tx_power_w", 0.25)),
        d_min_m=float(r.get("d_min_m", 1.0)))

    p = sec("policy")
    policy = dualconn.DcPolicy(
        hysteresis_db=float(p.get("hysteresis_db", 3.0)),
        ttt_min=int(p.get("ttt_min", 2)),
        abort_margin_db=float(p.get("abort_margin_db", 10.0)),
        abort_ttt_min=int(p.get("abort_ttt_min", 3)))

    t = sec("train")
    hidden = _ints(t.get("hidden_sizes", "64 64 64")) if "hidden_sizes" in t else (64, 64, 64)
    stack_spec = lstm.StackSpec(hidden_sizes=tuple(hidden))
    hyper = lstm.TrainHyper(
        learning_rate=float(t.get("learning_rate", 1e-2)),
        lr_decay=float(t.get("lr_decay", 0.99)),
        epochs=int(t.get("epochs", 100)),
        bptt_window=int(t.get("bptt_window", 60)),
        grad_clip=float(t.get("grad_clip", 5.0)))

    s = sec("sweep")
    power = PowerModel(p_fixed_w=float(s.get("p_fixed_w", 1.0)),
                       p_tx_w=float(s.get("p_tx_w", 0.25)))
    return SimConfig(
        map_spec=map_spec, radio_cfg=radio_cfg, policy=policy, power=power,
        stack_spec=stack_spec, hyper=hyper,
        densities_per_km2=_floats(s.get("densities_per_km2", "5 10 20")),
        speeds_mps=_floats(s.get("speeds_mps", "1 4 8")),
        users_per_speed=int(s.get("users_per_speed", 3)),
        days=int(s.get("days", 22)),
        eval_days=int(s.get("eval_days", 2)),
        sites_per_user=int(s.get("sites_per_user", 10)),
        modes=_strs(s.get("modes", "single dual ideal-dual")),
        seeds=_ints(s.get("seeds", "0 1 2")),
        capacity_per_bs=int(s.get("capacity_per_bs", 16)),
        ho_window_min=int(s.get("ho_window_min", 2)),
        match_window_min=int(s.get("match_window_min", 1)))
