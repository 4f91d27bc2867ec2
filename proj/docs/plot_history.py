"""Plot best/mean fitness and per-generation time split from a search history.csv.

usage: python3 docs/plot_history.py history.csv [out.png]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

h = pd.read_csv(sys.argv[1])
out = sys.argv[2] if len(sys.argv) > 2 else "history.png"

fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.plot(h.generation, h.best_fitness.cummax(), label="best so far")
a.plot(h.generation, h.mean_fitness, label="pool mean")
a.set_xlabel("generation")
a.set_ylabel("validation accuracy")
a.legend()

cols = ["scratch_match_s", "incremental_match_s", "eval_s"]
bottom = None
for c in cols:
    b.bar(h.generation, h[c], bottom=bottom, label=c.removesuffix("_s"))
    bottom = h[c] if bottom is None else bottom + h[c]
b.set_xlabel("generation")
b.set_ylabel("seconds")
b.legend()
fig.tight_layout()
fig.savefig(out, dpi=120)
