"""Score prediction maps the way the evaluator does.

Four numbers per pair: structural similarity, dependency-weighted F,
alignment-based E, and plain MAE.  Perfect maps hit (1, 1, 1, 0); the
other rows show how each metric punishes a different failure mode.
"""

import numpy as np

from hginet.data import SynthSpec, make_pair
from hginet.metrics import evaluate_pair

pair = make_pair(SynthSpec(size=64, contrast=0.2, seed=9), 0)
gt = pair.mask

candidates = {
    "perfect": gt.astype(np.float64),
    "inverted": 1.0 - gt,
    "all background": np.zeros_like(gt),
    "all 0.5": np.full_like(gt, 0.5, dtype=np.float64),
    "blurry truth": np.clip(gt + 0.2 * np.random.default_rng(9).normal(size=gt.shape), 0, 1),
}

print(f"{'prediction':>16}  {'S':>7} {'Fw':>7} {'E':>7} {'MAE':>7}")
for name, pred in candidates.items():
    r = evaluate_pair(pred, gt)
    print(f"{name:>16}  {r.s_measure:7.4f} {r.weighted_f:7.4f} {r.mean_e:7.4f} {r.mae:7.4f}")

# MAE alone cannot tell "all background" from a real attempt when the
# object is small; the structure-aware scores can
print(f"\nforeground fraction of this pair: {gt.mean():.3f}")
