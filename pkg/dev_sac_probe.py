"""Probe SAC: degenerate-environment convergence then complexity-1 end-to-end."""

import sys
import time

import numpy as np

from microreserve.claims import Claim, Dataset, Transaction, censor, discretize
from microreserve.env import EnvConfig
from microreserve.sac import SacConfig, predict_ocl_sac, train_sac
from microreserve.evaluation import evaluate_predictions, true_ocl_map
from microreserve.simulator import preset, simulate_portfolio, with_seed


def degenerate_dataset(n_claims=150, periods=8, ocl=1000.0, seed=0):
    """Claims that pay nothing until a single final payment of `ocl`."""
    rng = np.random.default_rng(seed)
    claims = []
    for k in range(n_claims):
        ap = int(rng.integers(1, 25))
        notif = ap + 0.5
        settle = notif + periods
        txns = [
            Transaction(f"d{k}", notif, "Ma", 0.0, ap, claim_size=ocl, incurred=ocl, case_ocl=ocl),
            Transaction(f"d{k}", settle, "PMa", ocl, ap, claim_size=ocl, incurred=ocl, case_ocl=0.0),
        ]
        claims.append(
            Claim(
                claim_no=f"d{k}", accident_period=ap, notification_period=int(np.ceil(notif)),
                settlement_period=int(np.ceil(settle)), repdel=int(np.ceil(notif)) - ap,
                claim_size=ocl, transactions=txns,
            )
        )
    max_t = max(c.settlement_period for c in claims)
    return discretize(Dataset(claims=claims, max_calendar_period=max_t))


if "degenerate" in sys.argv or len(sys.argv) == 1:
    t0 = time.time()
    data = degenerate_dataset()
    env_cfg = EnvConfig(state_profile="minimal", s_scale=1000.0)
    sac_cfg = SacConfig(seed=1, warmup_steps=200, batch_size=64)
    init = {c.claim_no: 1000.0 for c in data.claims}
    agent, log = train_sac(data, init, env_cfg, sac_cfg)
    replay = predict_ocl_sac(agent, data, init, data.max_calendar_period)
    acts = [abs(t.action) for t in replay.transitions]
    print(f"degenerate: steps={len(log)} mean|a|={np.mean(acts):.4f} "
          f"max|a|={np.max(acts):.4f} elapsed={time.time()-t0:.1f}s")

if "full" in sys.argv:
    seed = int(sys.argv[sys.argv.index("full") + 1]) if len(sys.argv) > sys.argv.index("full") + 1 else 1
    t0 = time.time()
    T = 40
    data = discretize(simulate_portfolio(with_seed(preset("complexity1"), seed)))
    view = censor(data, T)
    from microreserve.credibility import build_init_tables

    tables = build_init_tables(view, T)
    env_cfg = EnvConfig(state_profile="splice_full")
    sac_cfg = SacConfig(seed=seed)
    agent, log = train_sac(view, tables, env_cfg, sac_cfg, boundary=T)
    t1 = time.time()
    replay = predict_ocl_sac(agent, view, tables, T)
    actuals = true_ocl_map(data, T)
    preds = {cn: replay.final_prediction(cn) for cn in actuals if cn in replay.predictions}
    rep = evaluate_predictions(preds, data, T)
    # also: what would pure initialisation give (zero actions)?
    from microreserve.env import ZeroPolicy, rollout_calendar
    import dataclasses
    z = rollout_calendar(view, ZeroPolicy(), tables, dataclasses.replace(env_cfg, s_scale=1.0), boundary=T)
    zpred = {cn: z.final_prediction(cn) for cn in actuals if cn in z.predictions}
    zrep = evaluate_predictions(zpred, data, T)
    psn_small = {k: v for k, v in rep.ratio_by_psn.items() if k <= 4}
    print(f"seed {seed}: ratio={rep.overall_ratio:.4f} (init-only {zrep.overall_ratio:.4f}) "
          f"rmse={rep.rmse_overall:.0f} psn1-4={psn_small} "
          f"train={t1-t0:.0f}s total={time.time()-t0:.0f}s steps={len(log)}")
