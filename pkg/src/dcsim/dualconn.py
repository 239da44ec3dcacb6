"""Prediction-triggered dual-connectivity state machine.

A single-connected UE whose predicted next position lands in another
cell asks the MME for a dual connection; the MME admits it if the target
BS has spare capacity.  The dual-connected UE then watches both links:
when the target exceeds the serving link by the hysteresis margin for
the time-to-trigger, the handover executes (target promoted, old serving
released); when the target instead stays well below the serving link,
the prediction was wrong and the dual leg is torn down.  Predictions
keep updating every minute, and a held leg follows them: when the
current prediction names a different cell than the prepared target, the
leg is rotated onto the new target.  A conventional
hysteresis+TTT handover path covers single-connected UEs, which is also
the entire mechanism in the single-connectivity baseline; it keeps
tracking candidates while dual-connected too, so that a leg prepared for
the wrong cell is torn down as soon as a third BS wins the race instead
of pinning the UE to a stale serving cell.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .mobility import MINUTES_PER_DAY
from .predictor import PredictorSession, predict_ho
from .radio import actual_ho_events, best_bs, best_bs_along, dual_ber, dual_rate, link_stats


class EventKind(Enum):
    DUAL_TRIGGERED = "DualTriggered"
    DUAL_REJECTED_LOAD = "DualRejectedLoad"
    HO_EXECUTED = "HoExecuted"
    DUAL_ABORTED = "DualAborted"
    CONVENTIONAL_HO = "ConventionalHo"


@dataclass(frozen=True)
class SimEvent:
    minute: int
    user_id: int
    kind: EventKind
    from_bs: int
    to_bs: int


@dataclass
class Single:
    serving_bs: int
    # conventional-HO bookkeeping: current candidate and its streak
    cand_bs: int = -1
    cand_streak: int = 0


@dataclass
class Dual:
    serving_bs: int
    target_bs: int
    trigger_minute: int
    above_hysteresis_streak: int = 0
    low_rss_streak: int = 0
    # conventional-HO tracking continues while dual-connected, so a
    # mispredicted leg cannot pin the UE to a stale serving cell
    cand_bs: int = -1
    cand_streak: int = 0

    def __post_init__(self):
        if self.serving_bs == self.target_bs:
            raise ValueError("dual connection with serving == target")


@dataclass(frozen=True)
class DcPolicy:
    hysteresis_db: float = 3.0
    ttt_min: int = 2
    abort_margin_db: float = 10.0
    abort_ttt_min: int = 3

    def __post_init__(self):
        if min(self.hysteresis_db, self.ttt_min,
               self.abort_margin_db, self.abort_ttt_min) < 0:
            raise ValueError("policy values must be >= 0")


class LoadTable:
    """Per-BS attached-UE counts with a hard capacity."""

    def __init__(self, n_bs: int, capacity: int):
        self.capacity = capacity
        self.counts = [0] * n_bs

    def attach(self, bs_id: int):
        if self.counts[bs_id] >= self.capacity:
            raise RuntimeError(f"BS {bs_id} over capacity")
        self.counts[bs_id] += 1

    def detach(self, bs_id: int):
        if self.counts[bs_id] <= 0:
            raise RuntimeError(f"BS {bs_id} load underflow")
        self.counts[bs_id] -= 1

    def total(self) -> int:
        return sum(self.counts)


def admission_check(target_bs: int, loads: LoadTable, capacity=None) -> bool:
    """True iff the target BS can accept one more attachment."""
    if target_bs < 0 or target_bs >= len(loads.counts):
        raise KeyError(f"unknown BS {target_bs}")
    cap = loads.capacity if capacity is None else capacity
    return loads.counts[target_bs] < cap


class MmeAction(Enum):
    NO_ACTION = "NoAction"
    TRIGGER_DUAL = "TriggerDual"


def mme_decide(state: Single, prediction, loads: LoadTable):
    """MME decision for a single-connected UE.

    Returns (action, rejected_for_load).  A prediction naming the current
    serving BS violates the predictor contract.
    """
    if not isinstance(state, Single):
        raise TypeError("mme_decide only applies to single-connected UEs")
    if prediction is None:
        return MmeAction.NO_ACTION, False
    if prediction.target_bs == state.serving_bs:
        raise ValueError("prediction targets the current serving BS")
    if admission_check(prediction.target_bs, loads):
        return MmeAction.TRIGGER_DUAL, False
    return MmeAction.NO_ACTION, True


class MonitorOutcome(Enum):
    KEEP_DUAL = "KeepDual"
    EXECUTE_HO = "ExecuteHo"
    ABORT_DUAL = "AbortDual"


def _margin_db(rss_a: float, rss_b: float) -> float:
    if rss_b <= 0:
        return math.inf if rss_a > 0 else 0.0
    return 10.0 * math.log10(rss_a / rss_b)


def ue_monitor(state: Dual, rss_serving: float, rss_target: float,
               policy: DcPolicy) -> MonitorOutcome:
    """Advance the dual-link RSS monitor by one sample (mutates streaks).

    ExecuteHo fires when the target beats the serving link by the
    hysteresis margin for ttt_min consecutive samples; AbortDual fires
    when it trails by abort_margin_db for abort_ttt_min samples.
    ExecuteHo wins if both fire at once.
    """
    if not isinstance(state, Dual):
        raise TypeError("ue_monitor only applies to dual-connected UEs")
    if _margin_db(rss_target, rss_serving) >= policy.hysteresis_db:
        state.above_hysteresis_streak += 1
    else:
        state.above_hysteresis_streak = 0
    if _margin_db(rss_serving, rss_target) >= policy.abort_margin_db:
        state.low_rss_streak += 1
    else:
        state.low_rss_streak = 0
    if state.above_hysteresis_streak >= policy.ttt_min:
        return MonitorOutcome.EXECUTE_HO
    if state.low_rss_streak >= policy.abort_ttt_min:
        return MonitorOutcome.ABORT_DUAL
    return MonitorOutcome.KEEP_DUAL


def execute_ho(state: Dual, loads: LoadTable) -> Single:
    """Promote the target to serving, release the old serving leg."""
    if not isinstance(state, Dual):
        raise TypeError("execute_ho requires a dual-connected state")
    loads.detach(state.serving_bs)
    return Single(serving_bs=state.target_bs)


def abort_dual(state: Dual, loads: LoadTable) -> Single:
    loads.detach(state.target_bs)
    return Single(serving_bs=state.serving_bs)


def conventional_ho_step(state, deployment, cfg, ue_pos,
                         policy: DcPolicy):
    """Hysteresis+TTT handover candidate tracking (the baseline
    mechanism; no prepared dual link).  Mutates the candidate streak and
    returns the new serving BS id or None if no handover fired.  Also
    runs for dual-connected UEs, whose own target is never a candidate
    here (the dual-link monitor owns that case)."""
    cand = best_bs(deployment, cfg, ue_pos)
    if cand == state.serving_bs or (
            isinstance(state, Dual) and cand == state.target_bs):
        state.cand_bs, state.cand_streak = -1, 0
        return None
    rss_s = link_stats(cfg, deployment.positions[state.serving_bs], ue_pos).rss_w
    rss_c = link_stats(cfg, deployment.positions[cand], ue_pos).rss_w
    if _margin_db(rss_c, rss_s) >= policy.hysteresis_db:
        if cand == state.cand_bs:
            state.cand_streak += 1
        else:
            state.cand_bs, state.cand_streak = cand, 1
    else:
        state.cand_bs, state.cand_streak = -1, 0
        return None
    if state.cand_streak >= policy.ttt_min:
        return cand
    return None


@dataclass(frozen=True)
class LinkRecord:
    minute: int
    user_id: int
    mode: str
    serving_bs: int
    target_bs: int  # -1 when single-connected
    rss_s_w: float
    rss_t_w: float  # 0 when single-connected
    ber: float
    rate_bps: float


class _OraclePredictor:
    """Ideal predictor: the learned predictor's trigger rule evaluated on
    the ground truth.  It fires when the user's true next-minute position
    lies in another cell, and additionally announces upcoming handovers
    `lead` minutes in advance so the dual leg covers the window around
    each one."""

    def __init__(self, events, best_seq, lead: int):
        self.events = sorted(events)
        self.best_seq = best_seq  # ground-truth best BS per minute
        self.lead = lead

    def prediction_at(self, minute, serving_bs):
        from .predictor import HoPrediction
        nan = (float("nan"), float("nan"))
        if minute + 1 < len(self.best_seq):
            nxt = int(self.best_seq[minute + 1])
            if nxt != serving_bs:
                return HoPrediction(minute + 1, nxt, nan)
        for ho_minute, _from_bs, to_bs in self.events:
            if minute < ho_minute <= minute + self.lead and to_bs != serving_bs:
                return HoPrediction(ho_minute, to_bs, nan)
        return None


MODES = ("single", "dual", "ideal-dual")
# Oracle announcement lead.  Three minutes covers the handover window
# while keeping the abort streak (abort_ttt_min consecutive low samples)
# from completing before the border crossing resets it, so a correctly
# predicted leg is never torn down as a misprediction.
IDEAL_LEAD_MIN = 3


def simulate_day(profiles, trajectories, deployment, cfg, models, policy,
                 mode: str, norm=None, map_spec=None):
    """Simulate one day of the network in one of the three modes.

    `trajectories` maps user_id -> Trajectory for the same day; `models`
    maps user_id -> (StackSpec, StackParams) and is only consulted in
    `dual` mode.  Returns (events, link_records).  One state transition
    per UE per minute; users are processed in ascending user_id order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    user_ids = sorted(tr.user_id for tr in trajectories.values())
    loads = LoadTable(deployment.n_bs, deployment.capacity_per_bs)
    states = {}
    sessions = {}
    oracles = {}
    for uid in user_ids:
        tr = trajectories[uid]
        serving = best_bs(deployment, cfg, tr.positions[0])
        loads.attach(serving)
        states[uid] = Single(serving_bs=serving)
        if mode == "dual":
            spec, params = models[uid]
            sessions[uid] = PredictorSession(spec, params, norm, map_spec)
        elif mode == "ideal-dual":
            oracles[uid] = _OraclePredictor(
                actual_ho_events(tr, deployment, cfg),
                best_bs_along(deployment, cfg, tr.positions), IDEAL_LEAD_MIN)

    events = []
    records = []
    for minute in range(MINUTES_PER_DAY):
        for uid in user_ids:
            tr = trajectories[uid]
            pos = tr.positions[minute]
            state = states[uid]
            transitioned = False

            # keep the predictor's recurrent state fed every minute,
            # dual-connected or not
            pred_pos = sessions[uid].push(pos) if mode == "dual" else None

            if isinstance(state, Dual):
                ls = link_stats(cfg, deployment.positions[state.serving_bs], pos)
                lt = link_stats(cfg, deployment.positions[state.target_bs], pos)
                outcome = ue_monitor(state, ls.rss_w, lt.rss_w, policy)
                if outcome is MonitorOutcome.EXECUTE_HO:
                    events.append(SimEvent(minute, uid, EventKind.HO_EXECUTED,
                                           state.serving_bs, state.target_bs))
                    states[uid] = execute_ho(state, loads)
                    transitioned = True
                elif outcome is MonitorOutcome.ABORT_DUAL:
                    events.append(SimEvent(minute, uid, EventKind.DUAL_ABORTED,
                                           state.serving_bs, state.target_bs))
                    states[uid] = abort_dual(state, loads)
                    transitioned = True
                else:
                    # a third BS can still win the conventional race: the
                    # leg was prepared for the wrong cell, so tear it down
                    # and hand over in the same minute
                    new_serving = conventional_ho_step(state, deployment,
                                                       cfg, pos, policy)
                    if new_serving is not None and admission_check(new_serving, loads):
                        events.append(SimEvent(minute, uid, EventKind.DUAL_ABORTED,
                                               state.serving_bs, state.target_bs))
                        events.append(SimEvent(minute, uid, EventKind.CONVENTIONAL_HO,
                                               state.serving_bs, new_serving))
                        loads.detach(state.target_bs)
                        loads.detach(state.serving_bs)
                        loads.attach(new_serving)
                        states[uid] = Single(serving_bs=new_serving)
                    elif minute + 1 < MINUTES_PER_DAY:
                        # predictions keep updating every minute: when the
                        # current one names a different cell, rotate the
                        # prepared leg onto the new target
                        if mode == "dual":
                            prediction = predict_ho(pred_pos, minute + 1,
                                                    deployment, cfg,
                                                    state.serving_bs)
                        else:
                            prediction = oracles[uid].prediction_at(
                                minute, state.serving_bs)
                        if (prediction is not None
                                and prediction.target_bs != state.target_bs
                                and admission_check(prediction.target_bs, loads)):
                            events.append(SimEvent(
                                minute, uid, EventKind.DUAL_ABORTED,
                                state.serving_bs, state.target_bs))
                            events.append(SimEvent(
                                minute, uid, EventKind.DUAL_TRIGGERED,
                                state.serving_bs, prediction.target_bs))
                            loads.detach(state.target_bs)
                            loads.attach(prediction.target_bs)
                            states[uid] = Dual(state.serving_bs,
                                               prediction.target_bs,
                                               trigger_minute=minute)
                # the minute's record reflects the links held while dual
                records.append(LinkRecord(
                    minute, uid, mode, state.serving_bs, state.target_bs,
                    ls.rss_w, lt.rss_w, dual_ber(ls.ber, lt.ber),
                    dual_rate(ls.rate_bps, lt.rate_bps)))
                continue

            # single-connected
            if mode != "single" and not transitioned and minute + 1 < MINUTES_PER_DAY:
                prediction = None
                if mode == "dual":
                    prediction = predict_ho(pred_pos, minute + 1, deployment,
                                            cfg, state.serving_bs)
                else:
                    prediction = oracles[uid].prediction_at(minute, state.serving_bs)
                if prediction is not None:
                    action, rejected = mme_decide(state, prediction, loads)
                    if action is MmeAction.TRIGGER_DUAL:
                        loads.attach(prediction.target_bs)
                        states[uid] = Dual(state.serving_bs, prediction.target_bs,
                                           trigger_minute=minute)
                        events.append(SimEvent(minute, uid, EventKind.DUAL_TRIGGERED,
                                               state.serving_bs, prediction.target_bs))
                        transitioned = True
                    elif rejected:
                        events.append(SimEvent(minute, uid, EventKind.DUAL_REJECTED_LOAD,
                                               state.serving_bs, prediction.target_bs))

            if not transitioned:
                new_serving = conventional_ho_step(state, deployment, cfg, pos, policy)
                if new_serving is not None:
                    if not admission_check(new_serving, loads):
                        new_serving = None  # target full; retry next minute
                    else:
                        events.append(SimEvent(minute, uid, EventKind.CONVENTIONAL_HO,
                                               state.serving_bs, new_serving))
                        loads.detach(state.serving_bs)
                        loads.attach(new_serving)
                        state.serving_bs = new_serving
                        state.cand_bs, state.cand_streak = -1, 0

            state = states[uid]
            if isinstance(state, Dual):
                ls = link_stats(cfg, deployment.positions[state.serving_bs], pos)
                lt = link_stats(cfg, deployment.positions[state.target_bs], pos)
                records.append(LinkRecord(
                    minute, uid, mode, state.serving_bs, state.target_bs,
                    ls.rss_w, lt.rss_w, dual_ber(ls.ber, lt.ber),
                    dual_rate(ls.rate_bps, lt.rate_bps)))
            else:
                ls = link_stats(cfg, deployment.positions[state.serving_bs], pos)
                records.append(LinkRecord(
                    minute, uid, mode, state.serving_bs, -1,
                    ls.rss_w, 0.0, ls.ber, ls.rate_bps))

        _check_load_conservation(states, loads)
    return events, records


def _check_load_conservation(states, loads):
    expect = sum(2 if isinstance(s, Dual) else 1 for s in states.values())
    if expect != loads.total():
        raise RuntimeError(
            f"load table inconsistent: {loads.total()} attachments "
            f"recorded, {expect} implied by UE states")


def write_event_csv(path, events):
    """CSV `minute,user_id,kind,from_bs,to_bs`."""
    with open(path, "w") as f:
        f.write("minute,user_id,kind,from_bs,to_bs\n")
        for e in events:
            f.write(f"{e.minute},{e.user_id},{e.kind.value},{e.from_bs},{e.to_bs}\n")


def write_link_csv(path, records):
    """CSV `minute,user_id,mode,serving_bs,target_bs,rss_s_w,rss_t_w,ber,rate_bps`."""
    with open(path, "w") as f:
        f.write("minute,user_id,mode,serving_bs,target_bs,rss_s_w,rss_t_w,ber,rate_bps\n")
        for r in records:
            tgt = "" if r.target_bs < 0 else r.target_bs
            f.write(f"{r.minute},{r.user_id},{r.mode},{r.serving_bs},{tgt},"
                    f"{r.rss_s_w:.6e},{r.rss_t_w:.6e},{r.ber:.6e},{r.rate_bps:.6e}\n")
