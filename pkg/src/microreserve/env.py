"""Claim-level reserving environment.

Each claim is an episode: from its notification period until one period
before settlement, the agent revises the outstanding-liability estimate
multiplicatively, ``OCL_j = OCL_{j-1} * exp(a)`` with the action clipped
to ``[-ln K, ln K]``. Rewards combine three parts:

* an accuracy score delivered with the final prediction, the discounted
  average of bounded symmetric errors ``h = 1 - sMAPE`` between the
  prediction path and the true outstanding amounts, scaled by ``C`` and
  importance-weighted so that high-liability periods dominate;
* a potential-based stability term on the implied ultimate
  ``UL = OCL + paid``, switched off in periods with payments;
* a smoothing penalty on the squared relative action size that ramps in
  over the first ``m_warmup`` predictions, also gated by payments.

Rollouts advance all claims in calendar order, so episodes interleave
exactly as an insurer would see them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .claims import Claim, Dataset
from .credibility import InitTables, initialise_claim
from .errors import ConfigError, DataError

PROFILES = ("minimal", "cas", "splice_full")
ONE_HOT_TYPES = ("Mi", "Ma", "P", "PMi", "PMa")


@dataclass(frozen=True)
class EnvConfig:
    k: float = 2.0  # per-period bound: estimates change by at most factor k
    gamma: float = 0.99
    c_acc: float = 5.0  # accuracy reward scale
    m_warmup: int = 10  # smoothing ramp length
    n_past: int = 5  # past-prediction slots in the state
    alpha_w: float = 1.0  # importance-weight temperature
    s_scale: float | None = None  # weight scale; resolved to mean training OCL
    state_profile: str = "splice_full"

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")
        if self.k <= 1.0:
            raise ConfigError("k must exceed 1")
        if self.c_acc <= 0:
            raise ConfigError("c_acc must be positive")
        if self.m_warmup < 1:
            raise ConfigError("m_warmup must be >= 1")
        if self.n_past < 0:
            raise ConfigError("n_past must be >= 0")
        if self.alpha_w < 0:
            raise ConfigError("alpha_w must be >= 0")
        if self.s_scale is not None and self.s_scale <= 0:
            raise ConfigError("s_scale must be positive")
        if self.state_profile not in PROFILES:
            raise ConfigError(f"unknown state profile {self.state_profile!r}")

    @property
    def ln_k(self) -> float:
        return math.log(self.k)


def state_dim(profile: str, n_past: int) -> int:
    if profile == "minimal":
        return 4
    if profile == "cas":
        return 5 + n_past
    if profile == "splice_full":
        return 5 + n_past + len(ONE_HOT_TYPES) + 4
    raise ConfigError(f"unknown state profile {profile!r}")


def currency_mask(profile: str, n_past: int) -> np.ndarray:
    """Boolean mask of state slots holding money amounts (log1p-scaled)."""
    mask = [False, False, True, True]  # ap, dp, prev_ocl, paid
    if profile in ("cas", "splice_full"):
        mask += [False]  # repdel
        mask += [True] * n_past
    if profile == "splice_full":
        mask += [False] * len(ONE_HOT_TYPES)
        mask += [False, False, False, True]  # n_pay, aq, dq, case
    return np.array(mask, dtype=bool)


def build_state(
    claim: Claim,
    t: int,
    prev_ocl: float,
    past_preds: list[float],
    cfg: EnvConfig,
) -> np.ndarray:
    """Observation for one claim at the end of calendar period t."""
    rec = claim.dev_records[t - claim.notification_period]
    assert rec.dev_period == t + 1 - claim.accident_period
    feats = [
        float(claim.accident_period),
        float(rec.dev_period),
        prev_ocl,
        rec.cum_paid,
    ]
    if cfg.state_profile in ("cas", "splice_full"):
        feats.append(float(claim.repdel))
        padded = [0.0] * max(cfg.n_past - len(past_preds), 0) + past_preds[-cfg.n_past :]
        feats.extend(padded)
    if cfg.state_profile == "splice_full":
        feats.extend(1.0 if typ in rec.txn_types else 0.0 for typ in ONE_HOT_TYPES)
        feats.append(float(rec.n_pay))
        feats.append(float((claim.accident_period - 1) % 4 + 1))
        feats.append(float((t - 1) % 4 + 1))
        feats.append(rec.case if rec.case is not None else 0.0)
    return np.array(feats, dtype=np.float64)


def apply_action(prev_ocl: float, action: float, k: float) -> float:
    """Next estimate prev_ocl * exp(a) with a clipped to [-ln k, ln k]."""
    if prev_ocl <= 0:
        raise ValueError("previous OCL estimate must be strictly positive")
    bound = math.log(k)
    return prev_ocl * math.exp(min(max(action, -bound), bound))


def clip_action(action: float, k: float) -> float:
    bound = math.log(k)
    return min(max(action, -bound), bound)


def smape_h(y: float, y_hat: float) -> float:
    """Bounded symmetric agreement score in [-1, 1]; 1 means exact.

    One minus the sMAPE summand |y_hat - y| / ((|y| + |y_hat|) / 2).
    Both arguments zero counts as perfect agreement.
    """
    denom = (abs(y) + abs(y_hat)) / 2.0
    if denom == 0.0:
        return 1.0
    return 1.0 - abs(y_hat - y) / denom


def reward_accuracy(
    ocl_path: "np.ndarray | list[float]",
    pred_path: "np.ndarray | list[float]",
    gamma: float,
    c: float,
    weights: "np.ndarray | list[float] | None" = None,
) -> float:
    """Terminal accuracy reward over the whole prediction path.

    c * sum_tau w_tau gamma^(tau-1) h(ocl_tau, pred_tau) / sum_tau gamma^(tau-1);
    the normaliser deliberately excludes the weights so that materiality
    differences between claims survive.
    """
    ocl = np.asarray(ocl_path, dtype=float)
    pred = np.asarray(pred_path, dtype=float)
    if ocl.size == 0 or ocl.shape != pred.shape:
        raise DataError("accuracy reward needs equal-length non-empty paths")
    if weights is None:
        w = np.ones_like(ocl)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != ocl.shape:
            raise DataError("weights must match path length")
    disc = gamma ** np.arange(ocl.size)
    h = np.array([smape_h(y, p) for y, p in zip(ocl, pred)])
    return float(c * np.sum(w * disc * h) / np.sum(disc))


def reward_stability(
    tau: int,
    ul_path: "list[float] | np.ndarray",
    action: float,
    payment: bool,
    gamma: float,
    k: float,
    horizon: int,
) -> float:
    """Stability shaping at periods-since-notification tau.

    ul_path holds the implied ultimates UL_0..UL_tau. The first step
    penalises the squared relative action; interior steps take the
    potential difference gamma*h(UL_tau, UL_{tau-1}) - h(UL_{tau-1},
    UL_{tau-2}); the final prediction step drops the forward term. Any
    payment in the period gates the whole component to zero.
    """
    if not (1 <= tau <= horizon - 1):
        raise DataError(f"tau {tau} outside 1..{horizon - 1}")
    if payment:
        return 0.0
    if tau == 1:
        return -((abs(action) / math.log(k)) ** 2)
    backward = smape_h(ul_path[tau - 1], ul_path[tau - 2])
    if tau <= horizon - 2:
        return gamma * smape_h(ul_path[tau], ul_path[tau - 1]) - backward
    return -backward


def reward_smoothing(
    action: float, m: int, m_warmup: int, k: float, payment: bool
) -> float:
    """Quadratic action penalty ramping from 1/m_warmup up to full size.

    m counts predictions already made for the claim; payments lift the
    penalty entirely for that period.
    """
    if payment:
        return 0.0
    ramp = min(1.0, (m + 1) / m_warmup)
    return -ramp * (abs(action) / math.log(k)) ** 2


def ocl_importance_weight(
    settled_in_train: bool,
    alpha: float,
    s: float,
    ocl_tau: float | None = None,
    p_tau: float | None = None,
    p_curr: float | None = None,
    ul0: float | None = None,
) -> float:
    """Materiality weight (OCL_tau / s)^alpha.

    Settled claims use the realised outstanding amount; open claims use
    the lower bound max(paid-so-far, initial ultimate) - paid-at-tau.
    Non-positive inner values weigh zero.
    """
    if s <= 0:
        raise ConfigError("weight scale s must be positive")
    if settled_in_train:
        if ocl_tau is None:
            raise DataError("settled weight needs the true OCL")
        inner = ocl_tau
    else:
        if p_tau is None or p_curr is None or ul0 is None:
            raise DataError("open-claim weight needs p_tau, p_curr and ul0")
        inner = max(p_curr, ul0) - p_tau
    if inner <= 0:
        return 0.0
    return (inner / s) ** alpha


def mean_training_ocl(dataset: Dataset, boundary: int) -> float:
    """Mean positive outstanding amount over settled claims' prediction periods."""
    total = 0.0
    n = 0
    for claim in dataset.settled_claims(by=boundary):
        ult = claim.ultimate
        for t in range(claim.notification_period, claim.settlement_period):
            rec = claim.dev_records[t - claim.notification_period]
            ocl = ult - rec.cum_paid
            if ocl > 0:
                total += ocl
                n += 1
    if n == 0:
        raise DataError("no settled prediction periods to compute the weight scale")
    return total / n


@dataclass
class RewardBreakdown:
    r_acc: float = 0.0
    r_stab: float = 0.0
    r_smooth: float = 0.0
    stab_gate: float = 1.0
    smooth_gate: float = 1.0
    weight: float = 1.0


@dataclass
class Transition:
    claim_no: str
    accident_period: int
    dev_period: int
    tau: int
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray | None
    done: bool
    pred_ocl: float
    breakdown: RewardBreakdown = field(default_factory=RewardBreakdown)


class ZeroPolicy:
    """Keeps every estimate at its initial value."""

    def act(self, state, explore=False, **_):
        return 0.0


class ScriptedPolicy:
    """Replays a fixed action per (claim_no, tau); used by golden replays."""

    def __init__(self, actions: dict[tuple[str, int], float]):
        self.actions = actions

    def act(self, state, explore=False, claim_no=None, tau=None, **_):
        return self.actions[(claim_no, tau)]


@dataclass
class _Tracker:
    ocl: float
    ul0: float
    preds: list[float] = field(default_factory=list)
    pred_records: list[tuple[int, int, float]] = field(default_factory=list)
    ul_path: list[float] = field(default_factory=list)
    pending: Transition | None = None
    pending_future_term: float = 0.0
    emitted: list[Transition] = field(default_factory=list)


@dataclass
class RolloutResult:
    transitions: list[Transition]
    predictions: dict[str, list[tuple[int, int, float]]]
    n_skipped: int

    def final_prediction(self, claim_no: str) -> float:
        return self.predictions[claim_no][-1][2]


def _initial_ocl(init, claim: Claim, cfg: EnvConfig) -> float:
    if isinstance(init, InitTables):
        _, ocl0 = initialise_claim(
            claim.accident_period,
            claim.paid_at(claim.notification_period),
            init,
            k=cfg.k,
        )
        return ocl0
    if isinstance(init, dict):
        return init[claim.claim_no]
    return init(claim)


def rollout_calendar(
    dataset: Dataset,
    policy,
    init,
    cfg: EnvConfig,
    explore: bool = False,
    boundary: int | None = None,
    on_transition=None,
) -> RolloutResult:
    """Advance every claim in calendar order, producing transitions.

    ``init`` is an InitTables, a {claim_no: OCL_0} mapping, or a callable
    claim -> OCL_0. Claims settling in their notification period make no
    predictions and are counted in ``n_skipped``. Open claims at the
    boundary keep their final prediction but that last step has no
    observable successor state, so it is not emitted as a transition.
    With ``explore=False`` and a deterministic policy the rollout is a
    pure function of its inputs.
    """
    if cfg.s_scale is None:
        raise ConfigError("s_scale must be resolved before rolling out")
    horizon = boundary if boundary is not None else dataset.max_calendar_period
    active = [c for c in dataset.claims if c.notification_period <= horizon]
    if not active:
        raise DataError("no claims notified inside the rollout window")

    schedule: dict[int, list[Claim]] = {}
    n_skipped = 0
    for claim in active:
        if not claim.dev_records:
            raise DataError(f"claim {claim.claim_no} has no development records")
        if claim.settled and claim.settlement_period == claim.notification_period:
            n_skipped += 1
            continue
        last = min(claim.settlement_period or horizon, horizon)
        for t in range(claim.notification_period, last + 1):
            schedule.setdefault(t, []).append(claim)

    trackers: dict[str, _Tracker] = {}
    transitions: list[Transition] = []
    predictions: dict[str, list[tuple[int, int, float]]] = {}

    def emit(txn: Transition) -> None:
        transitions.append(txn)
        if on_transition is not None:
            on_transition(txn)

    for t in sorted(schedule):
        for claim in sorted(schedule[t], key=lambda c: c.claim_no):
            tracker = trackers.get(claim.claim_no)
            if claim.settled and t == claim.settlement_period:
                _finalize_settlement(claim, tracker, cfg, emit)
                continue

            if tracker is None:
                ocl0 = _initial_ocl(init, claim, cfg)
                if ocl0 <= 0:
                    raise DataError(f"non-positive initial OCL for {claim.claim_no}")
                paid0 = claim.dev_records[0].cum_paid
                tracker = _Tracker(ocl=ocl0, ul0=ocl0 + paid0, ul_path=[ocl0 + paid0])
                trackers[claim.claim_no] = tracker

            tau = claim.psn_at(t)
            state = build_state(claim, t, tracker.ocl, tracker.preds, cfg)
            if tracker.pending is not None:
                tracker.pending.next_state = state
                emit(tracker.pending)
                tracker.emitted.append(tracker.pending)
                tracker.pending = None

            raw = policy.act(state, explore=explore, claim_no=claim.claim_no, tau=tau)
            action = clip_action(float(raw), cfg.k)
            new_ocl = apply_action(tracker.ocl, action, cfg.k)
            rec = claim.dev_records[t - claim.notification_period]
            payment = rec.has_payment

            tracker.ocl = new_ocl
            tracker.preds.append(new_ocl)
            tracker.pred_records.append((tau, t, new_ocl))
            tracker.ul_path.append(new_ocl + rec.cum_paid)

            if tau == 1:
                r_stab = 0.0 if payment else -((abs(action) / cfg.ln_k) ** 2)
                future_term = 0.0
            else:
                backward = smape_h(tracker.ul_path[tau - 1], tracker.ul_path[tau - 2])
                forward = cfg.gamma * smape_h(
                    tracker.ul_path[tau], tracker.ul_path[tau - 1]
                )
                r_stab = 0.0 if payment else forward - backward
                future_term = 0.0 if payment else forward
            r_smooth = reward_smoothing(action, tau - 1, cfg.m_warmup, cfg.k, payment)

            breakdown = RewardBreakdown(
                r_stab=r_stab,
                r_smooth=r_smooth,
                stab_gate=0.0 if payment else 1.0,
                smooth_gate=0.0 if payment else 1.0,
            )
            tracker.pending = Transition(
                claim_no=claim.claim_no,
                accident_period=claim.accident_period,
                dev_period=rec.dev_period,
                tau=tau,
                state=state,
                action=action,
                reward=r_stab + r_smooth,
                next_state=None,
                done=False,
                pred_ocl=new_ocl,
                breakdown=breakdown,
            )
            tracker.pending_future_term = future_term

    # Open claims: attach lower-bound importance weights to the log.
    for claim_no, tracker in trackers.items():
        claim = dataset.by_no(claim_no)
        predictions[claim_no] = tracker.pred_records
        if claim.settled and claim.settlement_period <= horizon:
            continue
        last_t = tracker.pred_records[-1][1]
        rec_curr = claim.dev_records[last_t - claim.notification_period]
        for txn in tracker.emitted:
            t_tau = claim.notification_period + txn.tau - 1
            p_tau = claim.dev_records[t_tau - claim.notification_period].cum_paid
            txn.breakdown.weight = ocl_importance_weight(
                settled_in_train=False,
                alpha=cfg.alpha_w,
                s=cfg.s_scale,
                p_tau=p_tau,
                p_curr=rec_curr.cum_paid,
                ul0=tracker.ul0,
            )

    return RolloutResult(
        transitions=transitions, predictions=predictions, n_skipped=n_skipped
    )


def _finalize_settlement(claim: Claim, tracker: _Tracker | None, cfg: EnvConfig, emit):
    """Close the episode: correct the last stability term and add r_acc."""
    if tracker is None or tracker.pending is None:
        return
    pending = tracker.pending
    pending.breakdown.r_stab -= tracker.pending_future_term
    pending.reward = pending.breakdown.r_stab + pending.breakdown.r_smooth

    ult = claim.ultimate
    horizon = claim.settlement_period - claim.notification_period + 1
    ocl_path = []
    weights = []
    for tau in range(1, horizon):
        t = claim.notification_period + tau - 1
        rec = claim.dev_records[t - claim.notification_period]
        true_ocl = max(ult - rec.cum_paid, 0.0)
        ocl_path.append(true_ocl)
        weights.append(
            ocl_importance_weight(
                settled_in_train=True, alpha=cfg.alpha_w, s=cfg.s_scale, ocl_tau=true_ocl
            )
        )
    r_acc = reward_accuracy(ocl_path, tracker.preds, cfg.gamma, cfg.c_acc, weights)

    pending.breakdown.r_acc = r_acc
    pending.reward += r_acc
    pending.done = True
    pending.next_state = None
    for txn, w in zip(tracker.emitted + [pending], weights):
        txn.breakdown.weight = w
    emit(pending)
    tracker.emitted.append(pending)
    tracker.pending = None


def export_transition_log(transitions: list[Transition], path: str) -> None:
    """CSV log feeding the action-histogram and audit reports."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "claim_no",
                "tau",
                "accident_period",
                "dev_period",
                "action",
                "exp_action",
                "r_acc",
                "r_stab",
                "r_smooth",
                "weight",
                "ocl_pred",
            ]
        )
        for txn in transitions:
            writer.writerow(
                [
                    txn.claim_no,
                    txn.tau,
                    txn.accident_period,
                    txn.dev_period,
                    repr(txn.action),
                    repr(math.exp(txn.action)),
                    repr(txn.breakdown.r_acc),
                    repr(txn.breakdown.r_stab),
                    repr(txn.breakdown.r_smooth),
                    repr(txn.breakdown.weight),
                    repr(txn.pred_ocl),
                ]
            )
