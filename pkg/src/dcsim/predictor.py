"""Per-user next-position prediction and handover-prediction scoring.

Positions are normalized to the unit square, one model is trained per
user on its historical days (inputs = minutes 0..718, targets = the same
series shifted one minute forward), and at run time the model's
next-position estimate is mapped back to meters and compared against the
cell layout: a handover is predicted whenever the strongest BS at the
predicted point differs from the current serving BS.
"""

from dataclasses import dataclass

import numpy as np

from . import lstm
from .mobility import MINUTES_PER_DAY
from .radio import best_bs
from .streams import derive_rng


@dataclass(frozen=True)
class NormSpec:
    width_m: float
    height_m: float


@dataclass(frozen=True)
class HoPrediction:
    minute: int  # minute the handover is expected to happen
    target_bs: int
    predicted_pos: tuple


def normalize(pos, spec: NormSpec) -> np.ndarray:
    p = np.asarray(pos, dtype=np.float64)
    return p / np.array([spec.width_m, spec.height_m])


def denormalize(unit_pos, spec: NormSpec) -> np.ndarray:
    p = np.asarray(unit_pos, dtype=np.float64)
    return p * np.array([spec.width_m, spec.height_m])


def build_dataset(trajectories, spec: NormSpec) -> list:
    """One (input, target) pair per day, each (719, 2) normalized, with
    target[t] = input[t+1] exactly."""
    pairs = []
    for tr in trajectories:
        if len(tr.positions) != MINUTES_PER_DAY:
            raise ValueError(
                f"user {tr.user_id} day {tr.day}: expected {MINUTES_PER_DAY} "
                f"samples, got {len(tr.positions)}")
        unit = normalize(tr.positions, spec)
        pairs.append((unit[:-1], unit[1:]))
    return pairs


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch


def train_user_model(dataset, spec: lstm.StackSpec, hyper: lstm.TrainHyper):
    """Train one model with truncated BPTT, days batched together.

    Recurrent state carries across windows within a day and resets at day
    boundaries.  Returns (params, loss_log) with one mean loss per epoch.
    Deterministic given hyper.seed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    inputs = np.stack([p[0] for p in dataset], axis=1)   # (T, B, 2)
    targets = np.stack([p[1] for p in dataset], axis=1)
    T = inputs.shape[0]
    rng = derive_rng(hyper.seed, "lstm-init")
    params = lstm.init_params(spec, rng)
    moments = lstm.AdamMoments()
    w = min(hyper.bptt_window, T)
    loss_log = []
    from dataclasses import replace as _replace
    for epoch in range(hyper.epochs):
        epoch_hyper = _replace(
            hyper, learning_rate=hyper.learning_rate * hyper.lr_decay ** epoch)
        states = lstm.zero_states(spec, inputs.shape[1])
        losses = []
        for start in range(0, T, w):
            seg_x = inputs[start:start + w]
            seg_t = targets[start:start + w]
            grads, loss, states = lstm.bptt_grads(
                spec, params, seg_x, seg_t, init_states=states)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            moments = lstm.optimizer_step(params, grads, epoch_hyper, moments)
            losses.append(loss)
        loss_log.append(float(np.mean(losses)))
    return params, loss_log


class PredictorSession:
    """Incremental next-position prediction over one day.

    Feeding the observed positions one minute at a time keeps inference
    O(1) per minute; `predict_position` below is the stateless equivalent
    over an explicit history.
    """

    def __init__(self, spec, params, norm, map_spec):
        self.spec = spec
        self.params = params
        self.norm = norm
        self.map_spec = map_spec
        self.reset()

    def reset(self):
        self.states = lstm.zero_states(self.spec)
        self.last_output = None

    def push(self, pos_m) -> np.ndarray:
        """Observe the current position; returns the predicted next
        position in meters, clamped into the map."""
        x = normalize(pos_m, self.norm)
        out, self.states = lstm.stack_forward(
            self.spec, self.params, x[None, :], init_states=self.states)
        pred = denormalize(out[-1], self.norm)
        pred[0] = min(max(pred[0], 0.0), self.map_spec.width_m)
        pred[1] = min(max(pred[1], 0.0), self.map_spec.height_m)
        self.last_output = pred
        return pred


def predict_position(spec, params, history, norm: NormSpec, map_spec) -> np.ndarray:
    """Predicted next position (meters) after feeding `history` (N, 2)
    through a fresh stack; clamped to the map rectangle."""
    hist = np.asarray(history, dtype=np.float64)
    if hist.ndim != 2 or len(hist) < 1:
        raise ValueError("history must be a nonempty (N, 2) array")
    out, _ = lstm.stack_forward(spec, params, normalize(hist, norm))
    pred = denormalize(out[-1], norm)
    pred[0] = min(max(pred[0], 0.0), map_spec.width_m)
    pred[1] = min(max(pred[1], 0.0), map_spec.height_m)
    return pred


def predict_ho(predicted_pos, minute, deployment, cfg, current_serving):
    """HoPrediction if the strongest BS at the predicted position differs
    from the current serving BS, else None.  `minute` is the minute the
    predicted position refers to."""
    target = best_bs(deployment, cfg, predicted_pos)
    if target == current_serving:
        return None
    return HoPrediction(minute, target, (float(predicted_pos[0]), float(predicted_pos[1])))


def score_accuracy(predicted, actual, match_window_min: int = 1) -> float:
    """Fraction of actual handovers that were accurately predicted.

    A prediction matches an actual event when the target BS is identical
    and the minute difference is at most `match_window_min`; each side is
    matched at most once, greedily in time order.  No actual events and
    no predictions scores 1; no actual events but spurious predictions
    scores 0.
    """
    if match_window_min < 0:
        raise ValueError("match_window_min must be >= 0")
    if not actual:
        return 1.0 if not predicted else 0.0
    preds = sorted(predicted, key=lambda p: p.minute)
    used = [False] * len(preds)
    matched = 0
    for minute, _from_bs, to_bs in sorted(actual):
        best_j = None
        best_gap = None
        for j, p in enumerate(preds):
            if used[j] or p.target_bs != to_bs:
                continue
            gap = abs(p.minute - minute)
            if gap <= match_window_min and (best_gap is None or gap < best_gap):
                best_j, best_gap = j, gap
        if best_j is not None:
            used[best_j] = True
            matched += 1
    return matched / len(actual)


def evaluate_day(spec, params, trajectory, deployment, cfg, norm, map_spec,
                 match_window_min: int = 1):
    """Run one evaluation day: serving tracked by the nearest-BS rule,
    one prediction per minute.  Returns (accuracy, predictions, actual
    events, predicted positions array)."""
    from .radio import actual_ho_events, best_bs_along

    session = PredictorSession(spec, params, norm, map_spec)
    serving_seq = best_bs_along(deployment, cfg, trajectory.positions)
    predictions = []
    predicted_pos = np.empty((MINUTES_PER_DAY, 2))
    for t in range(MINUTES_PER_DAY):
        pred = session.push(trajectory.positions[t])
        predicted_pos[t] = pred
        if t + 1 < MINUTES_PER_DAY:
            ho = predict_ho(pred, t + 1, deployment, cfg, int(serving_seq[t]))
            if ho is not None:
                predictions.append(ho)
    actual = actual_ho_events(trajectory, deployment, cfg)
    return (score_accuracy(predictions, actual, match_window_min),
            predictions, actual, predicted_pos)
