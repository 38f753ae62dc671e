# %% [markdown]
# Class weights and the two losses
#
# Rare labels get a large positive weight so that missing them costs more than
# wrongly flagging a common negative.

# %%
import numpy as np

from memegcn.dataio import LABEL_NAMES, MAMI_POSITIVES, MAMI_TRAIN_SIZE
from memegcn.model import ClassWeights, compute_class_weights, softmargin_loss, weighted_bce_loss

w = compute_class_weights(MAMI_POSITIVES, MAMI_TRAIN_SIZE)
for name, n_pos, wp, wn in zip(LABEL_NAMES, MAMI_POSITIVES, w.w_pos, w.w_neg):
    print(f"{name:>16}  positives={n_pos:5d}  w_pos={wp:.3f}  w_neg={wn:.3f}")

# %%
# A model that is unsure about everything (p = 0.5) on a sample that is only
# misogynous. The weighted loss sums the label terms; the soft-margin loss averages
# unweighted ones.
p = np.full(5, 0.5)
y = np.array([1, 0, 0, 0, 0])
print("weighted BCE :", weighted_bce_loss(p, y, w))
print("plain BCE    :", weighted_bce_loss(p, y, ClassWeights.uniform(5)))
print("soft-margin  :", softmargin_loss(np.zeros(5), y))

# %%
# Missing a violence positive versus missing a misogynous positive.
for j in (0, 4):
    y = np.zeros(5)
    y[j] = 1
    q = np.where(y == 1, 0.1, 0.01)
    print(f"miss {LABEL_NAMES[j]:>10}: weighted loss {weighted_bce_loss(q, y, w):.3f}")
