"""Synthetic human-mobility traces.

Walkers own a small set of hotspot "sites", plan trips between them with
least-action trip planning (next waypoint chosen with probability
proportional to distance^-a), pause at each waypoint with truncated-Pareto
dwell times, and move in straight lines at constant speed.  Each simulated
day is a contiguous 12-hour window sampled at one-minute granularity
(720 samples), and the walker restarts from its anchor site at every day
boundary so days share a recognizable daily structure.
"""

from dataclasses import dataclass, field

import numpy as np

from .streams import derive_rng

MINUTES_PER_DAY = 720
SECONDS_PER_SAMPLE = 60.0

# Dirichlet concentration for the quadrant weights of the fractal
# hotspot map; < 1 concentrates mass and produces visible clusters.
_QUAD_ALPHA = 0.6


@dataclass(frozen=True)
class MapSpec:
    width_m: float = 4000.0
    height_m: float = 4000.0
    n_hotspots: int = 200
    fractal_depth: int = 4

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValueError("map dimensions must be positive")
        if self.n_hotspots < 1:
            raise ValueError("need at least one hotspot")
        if self.fractal_depth < 0:
            raise ValueError("fractal_depth must be >= 0")

    @property
    def area_km2(self) -> float:
        return self.width_m * self.height_m / 1e6


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    speed_mps: float
    site_ids: tuple  # ordered; site_ids[0] is the anchor
    pause_min_s: float = 30.0
    pause_max_s: float = 1800.0
    pause_exponent: float = 1.5
    latp_exponent: float = 3.0

    def __post_init__(self):
        if self.speed_mps <= 0:
            raise ValueError("speed must be positive")
        if len(self.site_ids) < 2:
            raise ValueError("a user needs at least two sites")
        if not self.pause_min_s < self.pause_max_s:
            raise ValueError("pause_min_s must be below pause_max_s")
        if self.latp_exponent <= 0:
            raise ValueError("latp_exponent must be positive")


@dataclass
class Trajectory:
    user_id: int
    day: int
    positions: np.ndarray  # (720, 2) meters, minute t at row t

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.shape != (MINUTES_PER_DAY, 2):
            raise ValueError(
                f"trajectory must have {MINUTES_PER_DAY} samples, "
                f"got shape {self.positions.shape}"
            )


def generate_hotspots(map_spec: MapSpec, rng: np.random.Generator) -> np.ndarray:
    """Place hotspots by recursive quadrant subdivision.

    The map is split into quadrants `fractal_depth` times; each split
    redistributes its cell's mass over the four children with a symmetric
    Dirichlet draw.  Hotspots are then assigned to leaf cells in
    proportion to the accumulated mass and placed uniformly inside their
    cell.  Depth 0 degenerates to uniform placement.  Returns (N, 2).
    """
    cells = [(0.0, 0.0, map_spec.width_m, map_spec.height_m)]
    weights = np.array([1.0])
    for _ in range(map_spec.fractal_depth):
        new_cells = []
        new_weights = []
        for (x0, y0, w, h), cw in zip(cells, weights):
            split = rng.dirichlet([_QUAD_ALPHA] * 4)
            hw, hh = w / 2.0, h / 2.0
            quads = [
                (x0, y0, hw, hh),
                (x0 + hw, y0, hw, hh),
                (x0, y0 + hh, hw, hh),
                (x0 + hw, y0 + hh, hw, hh),
            ]
            new_cells.extend(quads)
            new_weights.extend(cw * split)
        cells = new_cells
        weights = np.array(new_weights)
    weights = weights / weights.sum()

    idx = rng.choice(len(cells), size=map_spec.n_hotspots, p=weights)
    u = rng.random((map_spec.n_hotspots, 2))
    out = np.empty((map_spec.n_hotspots, 2))
    for row, cell_i in enumerate(idx):
        x0, y0, w, h = cells[cell_i]
        out[row, 0] = x0 + u[row, 0] * w
        out[row, 1] = y0 + u[row, 1] * h
    return out


def _latp_weights(distances: np.ndarray, exponent: float) -> np.ndarray:
    """Normalized d^-a selection weights; zero distances collapse the mass."""
    d = np.asarray(distances, dtype=np.float64)
    zero = d <= 0.0
    if zero.any():
        w = np.zeros_like(d)
        w[np.argmax(zero)] = 1.0  # first (lowest-index) zero-distance site
        return w
    w = d ** (-exponent)
    return w / w.sum()


def assign_user_sites(
    hotspots: np.ndarray, k: int, latp_exponent: float, rng: np.random.Generator
) -> tuple:
    """Pick k sites for one user: a uniform anchor, then k-1 others
    drawn without replacement with probability ~ distance^-a from the
    anchor.  Returns hotspot indices, anchor first.
    """
    n = len(hotspots)
    if k > n:
        raise ValueError(f"requested {k} sites but only {n} hotspots exist")
    anchor = int(rng.integers(n))
    chosen = [anchor]
    remaining = [i for i in range(n) if i != anchor]
    for _ in range(k - 1):
        d = np.linalg.norm(hotspots[remaining] - hotspots[anchor], axis=1)
        w = _latp_weights(d, latp_exponent)
        pick = rng.choice(len(remaining), p=w)
        chosen.append(remaining.pop(pick))
    return tuple(chosen)


def latp_next_waypoint(
    current_pos: np.ndarray,
    unvisited_sites: list,
    positions: np.ndarray,
    latp_exponent: float,
    rng: np.random.Generator,
) -> int:
    """Least-action trip planning: choose the next waypoint among
    `unvisited_sites` (hotspot indices) with probability ~ d^-a from the
    current position.  A zero-distance site wins outright (lowest id on
    ties).
    """
    if not unvisited_sites:
        raise ValueError("no unvisited sites to choose from")
    sites = sorted(unvisited_sites)
    d = np.linalg.norm(positions[sites] - np.asarray(current_pos), axis=1)
    w = _latp_weights(d, latp_exponent)
    return sites[rng.choice(len(sites), p=w)]


def sample_pause(profile: UserProfile, rng: np.random.Generator) -> float:
    """Truncated-Pareto pause time in seconds via inverse CDF."""
    m, big_m, a = profile.pause_min_s, profile.pause_max_s, profile.pause_exponent
    u = rng.random()
    return m / (1.0 - u * (1.0 - (m / big_m) ** a)) ** (1.0 / a)


def _day_itinerary(profile, hotspots, rng):
    """Piecewise-linear continuous path for one day.

    Returns (times, points): segment breakpoints such that the walker is
    at points[i] at times[i] and moves linearly in between (pauses are
    zero-displacement segments).  Covers at least the full day.
    """
    horizon = MINUTES_PER_DAY * SECONDS_PER_SAMPLE
    anchor = profile.site_ids[0]
    pos = hotspots[anchor].copy()
    times = [0.0]
    points = [pos.copy()]
    t = 0.0
    current_site = anchor
    unvisited = [s for s in profile.site_ids if s != anchor]
    while t < horizon:
        pause = sample_pause(profile, rng)
        t += pause
        times.append(t)
        points.append(pos.copy())
        if t >= horizon:
            break
        if not unvisited:
            unvisited = [s for s in profile.site_ids if s != current_site]
        nxt = latp_next_waypoint(pos, unvisited, hotspots, profile.latp_exponent, rng)
        unvisited.remove(nxt)
        target = hotspots[nxt]
        dist = float(np.linalg.norm(target - pos))
        t += dist / profile.speed_mps
        pos = target.copy()
        times.append(t)
        points.append(pos.copy())
        current_site = nxt
    return np.array(times), np.array(points)


def generate_trajectory(
    profile: UserProfile,
    map_spec: MapSpec,
    hotspots: np.ndarray,
    days: int,
    master_seed: int,
) -> list:
    """Generate `days` daily trajectories for one user.

    Each day draws its own stream from (master_seed, user_id, day), so
    any (user, day) pair can be regenerated independently and in
    parallel.  The walker restarts from its anchor site each day.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    out = []
    sample_t = np.arange(MINUTES_PER_DAY) * SECONDS_PER_SAMPLE
    for day in range(days):
        rng = derive_rng(master_seed, "trace", profile.user_id, day)
        times, points = _day_itinerary(profile, hotspots, rng)
        x = np.interp(sample_t, times, points[:, 0])
        y = np.interp(sample_t, times, points[:, 1])
        pos = np.column_stack([x, y])
        np.clip(pos[:, 0], 0.0, map_spec.width_m, out=pos[:, 0])
        np.clip(pos[:, 1], 0.0, map_spec.height_m, out=pos[:, 1])
        out.append(Trajectory(profile.user_id, day, pos))
    return out


def write_trace_csv(path, trajectories):
    """CSV `user_id,day,minute,x_m,y_m`, sorted by (user_id, day, minute)."""
    rows = []
    for tr in trajectories:
        for minute in range(MINUTES_PER_DAY):
            rows.append((tr.user_id, tr.day, minute,
                         tr.positions[minute, 0], tr.positions[minute, 1]))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path, "w") as f:
        f.write("user_id,day,minute,x_m,y_m\n")
        for uid, day, minute, x, y in rows:
            f.write(f"{uid},{day},{minute},{x:.3f},{y:.3f}\n")


def read_trace_csv(path) -> list:
    """Inverse of write_trace_csv; returns a list of Trajectory."""
    data = {}
    with open(path) as f:
        header = f.readline().strip()
        if header != "user_id,day,minute,x_m,y_m":
            raise ValueError(f"unexpected trace header: {header!r}")
        for line in f:
            uid, day, minute, x, y = line.strip().split(",")
            key = (int(uid), int(day))
            data.setdefault(key, {})[int(minute)] = (float(x), float(y))
    out = []
    for (uid, day), samples in sorted(data.items()):
        if len(samples) != MINUTES_PER_DAY:
            raise ValueError(f"user {uid} day {day}: {len(samples)} samples")
        pos = np.array([samples[m] for m in range(MINUTES_PER_DAY)])
        out.append(Trajectory(uid, day, pos))
    return out


def write_hotspot_csv(path, hotspots):
    """CSV `hotspot_id,x_m,y_m`."""
    with open(path, "w") as f:
        f.write("hotspot_id,x_m,y_m\n")
        for i, (x, y) in enumerate(hotspots):
            f.write(f"{i},{x:.3f},{y:.3f}\n")
