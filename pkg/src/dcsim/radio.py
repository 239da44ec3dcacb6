"""Cell deployment, propagation, link quality, and the handover oracle.

Base stations are dropped by a Poisson point process; links are
noise-limited with a deterministic power-law path loss, so association is
exactly the Voronoi (nearest-BS) rule when transmit powers are equal.
BPSK gives the bit-error curve; throughput is the Shannon rate of the
band.  A dual-connected terminal combines its two links by summing rates
and multiplying bit-error probabilities (an error survives only if both
copies are wrong).
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


@dataclass(frozen=True)
class RadioConfig:
    bandwidth_hz: float = 1e7
    noise_w: float = 1e-13
    pathloss_exp: float = 4.0
    tx_power_w: float = 0.25
    d_min_m: float = 1.0  # near-field clamp

    def __post_init__(self):
        for name in ("bandwidth_hz", "noise_w", "pathloss_exp", "tx_power_w", "d_min_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pathloss_exp < 2:
            raise ValueError("pathloss_exp must be >= 2")


@dataclass
class Deployment:
    density_per_km2: float
    positions: np.ndarray  # (N, 2) meters; bs_id == row index
    capacity_per_bs: int = 16

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if len(self.positions) < 1:
            raise ValueError("deployment needs at least one BS")

    @property
    def n_bs(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class LinkStats:
    rss_w: float
    snr: float
    ber: float
    rate_bps: float


def deploy_ppp(map_spec, density_per_km2: float, rng: np.random.Generator,
               capacity_per_bs: int = 16) -> Deployment:
    """Poisson(density * area) base stations, uniform on the map.

    A zero-count draw is resampled: association needs a nonempty
    deployment.
    """
    if density_per_km2 <= 0:
        raise ValueError("density must be positive")
    mean = density_per_km2 * map_spec.area_km2
    n = 0
    while n == 0:
        n = int(rng.poisson(mean))
    pos = rng.random((n, 2)) * np.array([map_spec.width_m, map_spec.height_m])
    return Deployment(density_per_km2, pos, capacity_per_bs)


def rss(cfg: RadioConfig, bs_pos, ue_pos) -> float:
    """Received power P_tx * max(d, d_min)^-alpha in watts."""
    d = float(np.linalg.norm(np.asarray(bs_pos, dtype=float) - np.asarray(ue_pos, dtype=float)))
    d = max(d, cfg.d_min_m)
    return cfg.tx_power_w * d ** (-cfg.pathloss_exp)


def snr(cfg: RadioConfig, rss_w: float) -> float:
    if rss_w < 0:
        raise ValueError("rss must be nonnegative")
    return rss_w / cfg.noise_w


def bpsk_ber(snr_value) -> float:
    """Coherent BPSK over AWGN: Q(sqrt(2*snr)) = erfc(sqrt(snr))/2."""
    return 0.5 * erfc(np.sqrt(snr_value))


def link_rate(cfg: RadioConfig, snr_value: float) -> float:
    """Shannon rate B*log2(1 + snr) in bit/s."""
    return cfg.bandwidth_hz * np.log2(1.0 + snr_value)


def link_stats(cfg: RadioConfig, bs_pos, ue_pos) -> LinkStats:
    p = rss(cfg, bs_pos, ue_pos)
    g = snr(cfg, p)
    return LinkStats(p, g, float(bpsk_ber(g)), float(link_rate(cfg, g)))


def best_bs(deployment: Deployment, cfg: RadioConfig, ue_pos) -> int:
    """Strongest (equivalently nearest) BS; ties go to the lowest id."""
    d = np.linalg.norm(deployment.positions - np.asarray(ue_pos, dtype=float), axis=1)
    return int(np.argmin(d))


def best_bs_along(deployment: Deployment, cfg: RadioConfig, positions) -> np.ndarray:
    """best_bs vectorized over an (T, 2) array of positions."""
    pts = np.asarray(positions, dtype=float)
    d2 = ((pts[:, None, :] - deployment.positions[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def actual_ho_events(trajectory, deployment: Deployment, cfg: RadioConfig) -> list:
    """Ground-truth handovers: (minute, from_bs, to_bs) wherever the best
    serving BS changes relative to the previous sample.
    """
    serving = best_bs_along(deployment, cfg, trajectory.positions)
    events = []
    for minute in range(1, len(serving)):
        if serving[minute] != serving[minute - 1]:
            events.append((minute, int(serving[minute - 1]), int(serving[minute])))
    return events


def dual_ber(ber_serving: float, ber_target: float) -> float:
    """Dual-link BER: the product of both links' BERs."""
    if not (0.0 <= ber_serving <= 0.5 and 0.0 <= ber_target <= 0.5):
        raise ValueError("link BERs must lie in [0, 0.5]")
    return ber_serving * ber_target


def dual_rate(rate_serving: float, rate_target: float) -> float:
    """Dual-link throughput: sum of the two user-plane rates."""
    if rate_serving < 0 or rate_target < 0:
        raise ValueError("rates must be nonnegative")
    return rate_serving + rate_target


def write_deployment_csv(path, deployment: Deployment, seed=None):
    """CSV `bs_id,x_m,y_m` plus a JSON sidecar recording density and seed."""
    with open(path, "w") as f:
        f.write("bs_id,x_m,y_m\n")
        for i, (x, y) in enumerate(deployment.positions):
            f.write(f"{i},{x:.3f},{y:.3f}\n")
    sidecar = str(path) + ".meta.json"
    with open(sidecar, "w") as f:
        json.dump({"density_per_km2": deployment.density_per_km2,
                   "capacity_per_bs": deployment.capacity_per_bs,
                   "seed": seed}, f, indent=2)


def read_deployment_csv(path) -> Deployment:
    with open(path) as f:
        header = f.readline().strip()
        if header != "bs_id,x_m,y_m":
            raise ValueError(f"unexpected deployment header: {header!r}")
        pos = []
        for line in f:
            _, x, y = line.strip().split(",")
            pos.append((float(x), float(y)))
    meta_path = str(path) + ".meta.json"
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        meta = {}
    return Deployment(meta.get("density_per_km2", 1.0), np.array(pos),
                      meta.get("capacity_per_bs", 16))
