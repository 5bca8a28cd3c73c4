import time

import numpy as np

from microreserve.chainladder import rbns_ocl
from microreserve.claims import build_triangle, discretize
from microreserve.evaluation import true_ocl_map
from microreserve.simulator import preset, simulate_portfolio, with_seed

T = 40
ratios = []
t0 = time.time()
for seed in range(1, 11):
    cfg = with_seed(preset("complexity1"), seed)
    data = discretize(simulate_portfolio(cfg))
    actuals = true_ocl_map(data, T)
    from microreserve.claims import censor

    view = censor(data, T)
    res = rbns_ocl(view, T)
    truth = sum(actuals.values())
    ratios.append(res.total_rbns_ocl / truth)
    print(
        f"seed {seed}: claims={len(data)} open={len(data.open_claims(T))} "
        f"ratio={ratios[-1]:.4f} clamped={res.n_clamped} ibnr_share={res.ibnr.sum()/res.ultimate_paid.sum():.4f}"
    )
print(f"mean ratio {np.mean(ratios):.4f}  elapsed {time.time()-t0:.1f}s")

# link-ratio stability of the paid triangle (complexity-1 design target)
cfg = with_seed(preset("complexity1"), 1)
data = discretize(simulate_portfolio(cfg))
tri = build_triangle(censor(data, T), "cum_paid", T)
v = tri.values
for j in range(0, 10):
    rows = ~np.isnan(v[:, j]) & ~np.isnan(v[:, j + 1]) & (v[:, j] > 0)
    r = v[rows, j + 1] / v[rows, j]
    print(f"col {j+1}: n={rows.sum()} mean={r.mean():.4f} cv={r.std()/r.mean():.4f}")
