"""Supervised feed-forward benchmark.

Settled claims each contribute one training row per observed development
period (a claim with J development periods and reporting delay d gives
J - d rows). Features mirror the environment's state profile without the
model-generated slots (previous estimate, past predictions). The target
is the outstanding amount at that period; regression runs on the log1p
scale against an importance-weighted MSE, with weights (OCL / s)^alpha
and zero weight on zero-OCL rows. Early stopping uses an 80/20 split of
the training claims (split by claim, never by row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .claims import Claim, Dataset
from .env import ONE_HOT_TYPES
from .errors import ConfigError, DataError, NumericFault
from .nets import AdamState, FeatureScaler, Mlp, adam_step, backward, forward, init_mlp


@dataclass(frozen=True)
class FnnConfig:
    hidden: tuple[int, ...] = (64, 64)
    batch_size: int = 128
    dropout: float = 0.0
    lr: float = 1e-3
    alpha_w: float = 1.0
    s_scale: float | None = None  # resolved to the mean positive training OCL
    patience: int = 8
    max_epochs: int = 200
    state_profile: str = "splice_full"
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.alpha_w < 0:
            raise ConfigError("alpha_w must be >= 0")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")


def feature_dim(profile: str) -> int:
    if profile == "minimal":
        return 3  # ap, dp, paid
    if profile == "cas":
        return 4  # + repdel
    if profile == "splice_full":
        return 4 + len(ONE_HOT_TYPES) + 4  # + one-hot, n_pay, aq, dq, case
    raise ConfigError(f"unknown state profile {profile!r}")


def feature_currency_mask(profile: str) -> np.ndarray:
    mask = [False, False, True]  # ap, dp, paid
    if profile in ("cas", "splice_full"):
        mask += [False]
    if profile == "splice_full":
        mask += [False] * len(ONE_HOT_TYPES)
        mask += [False, False, False, True]
    return np.array(mask, dtype=bool)


def claim_period_features(claim: Claim, t: int, profile: str) -> np.ndarray:
    """Supervised feature vector for one claim-period."""
    rec = claim.dev_records[t - claim.notification_period]
    feats = [float(claim.accident_period), float(rec.dev_period), rec.cum_paid]
    if profile in ("cas", "splice_full"):
        feats.append(float(claim.repdel))
    if profile == "splice_full":
        feats.extend(1.0 if typ in rec.txn_types else 0.0 for typ in ONE_HOT_TYPES)
        feats.append(float(rec.n_pay))
        feats.append(float((claim.accident_period - 1) % 4 + 1))
        feats.append(float((t - 1) % 4 + 1))
        feats.append(rec.case if rec.case is not None else 0.0)
    return np.array(feats, dtype=np.float64)


@dataclass
class FnnRows:
    features: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,) true OCL in money units
    weights: np.ndarray  # (n,)
    claim_nos: list[str]
    s_scale: float


def importance_weight_supervised(ocl: float, alpha: float, s: float) -> float:
    if s <= 0:
        raise ConfigError("weight scale s must be positive")
    if ocl <= 0:
        return 0.0
    return (ocl / s) ** alpha


def build_training_rows(train: Dataset, cutoff: int, cfg: FnnConfig) -> FnnRows:
    """Rows from claims settled by the cutoff, one per development period."""
    settled = train.settled_claims(by=cutoff)
    if not settled:
        raise DataError("no settled claims before the cutoff")

    feats: list[np.ndarray] = []
    targets: list[float] = []
    claim_nos: list[str] = []
    for claim in settled:
        ult = claim.ultimate
        for t in range(claim.notification_period, claim.settlement_period + 1):
            rec = claim.dev_records[t - claim.notification_period]
            feats.append(claim_period_features(claim, t, cfg.state_profile))
            targets.append(max(ult - rec.cum_paid, 0.0))
            claim_nos.append(claim.claim_no)

    targets_arr = np.array(targets)
    s = cfg.s_scale
    if s is None:
        positive = targets_arr[targets_arr > 0]
        if positive.size == 0:
            raise DataError("all training targets are zero")
        s = float(positive.mean())
    weights = np.array(
        [importance_weight_supervised(y, cfg.alpha_w, s) for y in targets]
    )
    return FnnRows(
        features=np.stack(feats),
        targets=targets_arr,
        weights=weights,
        claim_nos=claim_nos,
        s_scale=s,
    )


def weighted_mse(preds, targets, weights) -> float:
    """sum w (pred - target)^2 / sum w."""
    p = np.asarray(preds, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    if p.shape != y.shape or p.shape != w.shape:
        raise DataError("preds, targets and weights must share a shape")
    total = w.sum()
    if total <= 0:
        raise DataError("weights sum to zero")
    return float(np.sum(w * (p - y) ** 2) / total)


@dataclass
class FnnModel:
    net: Mlp
    scaler: FeatureScaler
    cfg: FnnConfig
    s_scale: float
    epochs_run: int = 0
    history: list[tuple[int, float]] = field(default_factory=list)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Outstanding-amount predictions, floored at zero."""
        z = self.scaler.transform(features)
        out, _ = forward(self.net, z if z.ndim == 2 else z.reshape(1, -1))
        return np.maximum(np.expm1(np.clip(out[:, 0], None, 40.0)), 0.0)


def _split_by_claim(rows: FnnRows, rng: np.random.Generator):
    claim_ids = sorted(set(rows.claim_nos))
    perm = rng.permutation(len(claim_ids))
    n_val = max(1, int(round(0.2 * len(claim_ids)))) if len(claim_ids) > 1 else 0
    val_claims = {claim_ids[i] for i in perm[:n_val]}
    val_mask = np.array([cn in val_claims for cn in rows.claim_nos])
    return ~val_mask, val_mask


def train_fnn(rows: FnnRows, cfg: FnnConfig, seed: int | None = None) -> FnnModel:
    """Minibatch Adam on the weighted log-scale MSE with early stopping."""
    if rows.features.shape[0] < 2:
        raise DataError("too few rows to train on")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))

    mask = feature_currency_mask(cfg.state_profile)
    scaler = FeatureScaler.fit(rows.features, mask)
    x_all = scaler.transform(rows.features)
    y_all = np.log1p(rows.targets)
    w_all = rows.weights

    train_mask, val_mask = _split_by_claim(rows, rng)
    if w_all[train_mask].sum() <= 0 or train_mask.sum() == 0:
        raise DataError("training split carries no weight")
    x_tr, y_tr, w_tr = x_all[train_mask], y_all[train_mask], w_all[train_mask]
    has_val = val_mask.any() and w_all[val_mask].sum() > 0
    x_va, y_va, w_va = x_all[val_mask], y_all[val_mask], w_all[val_mask]

    hid = list(cfg.hidden)
    net = init_mlp(
        [rows.features.shape[1]] + hid + [1],
        ["relu"] * len(hid) + ["identity"],
        rng,
    )
    opt = AdamState.for_params(net.parameters(), cfg.lr)

    def val_loss() -> float:
        out, _ = forward(net, x_va)
        return weighted_mse(out[:, 0], y_va, w_va)

    model = FnnModel(net=net, scaler=scaler, cfg=cfg, s_scale=rows.s_scale)
    best = math.inf
    best_params = [p.copy() for p in net.parameters()]
    stale = 0
    n = x_tr.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb, wb = x_tr[idx], y_tr[idx], w_tr[idx]
            wsum = wb.sum()
            if wsum <= 0:
                continue
            out, cache = forward(net, xb, dropout=cfg.dropout, rng=rng)
            err = out[:, 0] - yb
            loss = float(np.sum(wb * err**2) / wsum)
            if not math.isfinite(loss):
                raise NumericFault("training loss diverged")
            upstream = (2.0 * wb * err / wsum)[:, None]
            grads, _ = backward(net, cache, upstream)
            adam_step(opt, net.parameters(), grads)
        model.epochs_run = epoch
        if not has_val:
            continue
        v = val_loss()
        model.history.append((epoch, v))
        if v < best - 1e-12:
            best = v
            best_params = [p.copy() for p in net.parameters()]
            stale = 0
        else:
            stale += 1
        if stale >= cfg.patience:
            break
    if has_val:
        for p, bp in zip(net.parameters(), best_params):
            p[...] = bp
    return model


def save_fnn(model: FnnModel, directory: str) -> None:
    import dataclasses
    import json
    import os

    from .nets import save_mlp

    os.makedirs(directory, exist_ok=True)
    save_mlp(model.net, os.path.join(directory, "net.json"))
    np.savez(
        os.path.join(directory, "scaler.npz"),
        shift=model.scaler.shift,
        scale=model.scaler.scale,
        currency=model.scaler.currency,
    )
    with open(os.path.join(directory, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"cfg": dataclasses.asdict(model.cfg), "s_scale": model.s_scale}, fh, indent=1
        )


def load_fnn(directory: str) -> FnnModel:
    import json
    import os

    from .nets import load_mlp

    with open(os.path.join(directory, "config.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["cfg"]["hidden"] = tuple(payload["cfg"]["hidden"])
    data = np.load(os.path.join(directory, "scaler.npz"))
    return FnnModel(
        net=load_mlp(os.path.join(directory, "net.json")),
        scaler=FeatureScaler(
            shift=data["shift"], scale=data["scale"], currency=data["currency"]
        ),
        cfg=FnnConfig(**payload["cfg"]),
        s_scale=payload["s_scale"],
    )


def predict_ocl_fnn(model: FnnModel, view: Dataset, at: int) -> dict[str, float]:
    """Predictions for every claim open at the valuation period."""
    preds: dict[str, float] = {}
    for claim in view.open_claims(at):
        feats = claim_period_features(claim, at, model.cfg.state_profile)
        preds[claim.claim_no] = float(model.predict(feats.reshape(1, -1))[0])
    return preds
