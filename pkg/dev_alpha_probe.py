"""Probe alpha_w settings on complexity-1 end-to-end runs."""

import sys
import time

from microreserve.claims import censor, discretize
from microreserve.credibility import build_init_tables
from microreserve.env import EnvConfig
from microreserve.evaluation import evaluate_predictions, true_ocl_map
from microreserve.sac import SacConfig, predict_ocl_sac, train_sac
from microreserve.simulator import preset, simulate_portfolio, with_seed

alpha = float(sys.argv[1])
seeds = [int(s) for s in sys.argv[2].split(",")]
T = 40
for seed in seeds:
    t0 = time.time()
    data = discretize(simulate_portfolio(with_seed(preset("complexity1"), seed)))
    view = censor(data, T)
    tables = build_init_tables(view, T)
    env_cfg = EnvConfig(state_profile="splice_full", alpha_w=alpha)
    agent, log = train_sac(view, tables, env_cfg, SacConfig(seed=seed), boundary=T)
    replay = predict_ocl_sac(agent, view, tables, T)
    actuals = true_ocl_map(data, T)
    preds = {cn: replay.final_prediction(cn) for cn in actuals if cn in replay.predictions}
    rep = evaluate_predictions(preds, data, T)
    psn = {k: round(float(v), 3) for k, v in rep.ratio_by_psn.items() if k <= 4}
    print(
        f"alpha={alpha} seed={seed}: ratio={rep.overall_ratio:.4f} rmse={rep.rmse_overall:.0f} "
        f"psn={psn} [{time.time()-t0:.0f}s]",
        flush=True,
    )
