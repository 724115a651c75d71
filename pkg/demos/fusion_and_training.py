"""What the ToC fusion layer computes, and the linear head learning on it.

    python demos/fusion_and_training.py
"""

import numpy as np

from sarcasmcue.toc import CueFeatures, TrainConfig, fit, fuse, fuse_tensor, logits

l, c, e = np.array([2.0]), np.array([3.0, -1.0]), np.array([0.5])
T = fuse_tensor(l, c, e)
print("tensor shape", T.shape, "-> fused length", fuse(l, c, e).size)
print("corner entry (always 1):", T[-1, -1, -1])
print("l recovered from the slice with c and e at their constant slot:", T[:1, -1, -1])
print("l x c pairwise products:\n", T[:1, :2, -1])

# Eight samples, label carried by one coordinate of the linguistic embedding.
rng = np.random.default_rng(0)
y = np.tile([1.0, 0.0], 4)
lin = rng.normal(0, 0.3, (8, 4))
lin[:, 0] = np.where(y > 0, 2.0, -2.0)
feats = CueFeatures([f"s{i}" for i in range(8)], lin, rng.normal(0, 0.3, (8, 4)), rng.normal(0, 0.3, (8, 4)), y)

cfg = TrainConfig(learning_rate=0.1, epochs=30, early_stop_patience=0, d_l=3, d_c=3, d_e=3, seed=1)
weights, head, history = fit(feats, None, cfg)
for h in history[::6]:
    print(f"epoch {h['epoch']:2d}  loss {h['loss']:.4f}  train acc {h['train_accuracy']:.2f}")
print("final predictions", (logits(weights, head, feats.matrices) > 0).astype(int), "gold", y.astype(int))
