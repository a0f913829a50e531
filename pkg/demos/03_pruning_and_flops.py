"""Top-K token pruning arithmetic and the FLOPs accountant.

Shows retained-count arithmetic at the standard ratios, stable tie
breaking, and the prefill-FLOPs reduction report for a transformer spec.
"""

import numpy as np

from reconprune.flops import FLOP_CONVENTION, ModelSpec, pruning_report
from reconprune.prune_infer import prune, retained_count, top_k_indices

# retained counts at the published ratios for a 3249-token frame
for p in (0.25, 0.5, 0.75):
    print(f"N=3249, p={p}: keep M={retained_count(3249, p)}")

# ties break toward the lower original index, output stays in frame order
scores = np.array([0.3, 0.9, 0.3, 0.1, 0.9, 0.3])
print("scores       :", scores)
print("top-4 indices:", top_k_indices(scores, 4))

tokens = np.arange(12, dtype=np.float32).reshape(6, 2)
pos = np.zeros_like(tokens)
pruned = prune(tokens, pos, scores, p=0.5)
print("kept rows    :", pruned.kept_indices, "-> tokens preserved in order")

# prefill FLOPs, unpruned vs pruned, plus the pruner's own overhead
spec = ModelSpec(n_layers=28, hidden=128, intermediate=512, n_heads=4,
                 visual_tokens=3249)
report = pruning_report(spec, retained=812)
print()
print("convention:", FLOP_CONVENTION)
print(f"unpruned prefill : {report['flops_unpruned']:,} FLOPs")
print(f"pruned prefill   : {report['flops_pruned']:,} FLOPs")
print(f"pruner overhead  : {report['overhead']:,} FLOPs")
print(f"reduction        : {report['ratio']:.2f}x "
      f"({report['ratio_with_overhead']:.2f}x including overhead)")
