"""
PSO, DE and the hybrid on small benchmark surfaces
==================================================

The mutation cost is piecewise constant in the redundant-packet count, which
starves plain PSO of gradient-like signal.  This script compares the three
optimisers on benchmark surfaces of the same shape and dumps one particle
trace.
"""

import csv
import tempfile
from pathlib import Path

import numpy as np

from advnids.search import SearchConfig, benchmark_suite, emit_trace, optimize, run_benchmarks

table = run_benchmarks(seeds=range(10))
print(f"{'benchmark':<12}" + "".join(f"{o:>12}" for o in ("pso", "pso-de", "de")))
for name, row in table.items():
    print(f"{name:<12}" + "".join(f"{row[o]:>12.3g}" for o in ("pso", "pso-de", "de")))

# %%
# Which step kind improved the global best?
fn, box = benchmark_suite()["ua_plateau"]
res = optimize(fn, box, SearchConfig(seed=0))
gains = {"pso": 0, "de": 0}
for step, (a, b) in zip(res.steps, zip(res.best_history, res.best_history[1:])):
    gains[step] += b < a
print("iterations by step kind:", {k: res.steps.count(k) for k in gains})
print("improving iterations:  ", gains)

# %%
# One trace row per particle per iteration; is_global_best marks the
# particle that set a new best during that iteration.
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "trace.csv"
    emit_trace(res, path)
    rows = list(csv.DictReader(path.open()))
best = [r for r in rows if r["is_global_best"] == "1"]
print(f"{len(rows)} rows, {len(best)} new-best events")
for r in best[-3:]:
    print(f"  iteration {r['iteration']:>2}: t_m={float(r['t_m']):.3f} n_c={float(r['n_c']):.2f} "
          f"s_c={float(r['s_c']):.0f} cost={float(r['cost']):.3g}")
spread = np.array([[float(r["t_m"]), float(r["n_c"])] for r in rows if r["iteration"] == "29"]).std(axis=0)
print("final spread of (t_m, n_c):", np.round(spread, 4))
