# %% [markdown]
# Label graph walkthrough
#
# Five labels, a handful of annotated samples, and the small graph network that
# turns label-word vectors into one classifier vector per label.

# %%
import numpy as np

from memegcn.dataio import LABEL_NAMES, build_node_features, synthetic_embeddings
from memegcn.labelgraph import build_adjacency, build_cooccurrence, gcn_forward
from memegcn.model import init_params

np.set_printoptions(precision=3, suppress=True)

# %%
# Columns follow LABEL_NAMES: misogynous, shaming, stereotype, objectification, violence.
labels = np.array([
    [1, 1, 0, 0, 0],
    [1, 0, 1, 1, 0],
    [1, 0, 1, 0, 1],
    [1, 0, 0, 1, 0],
    [0, 0, 0, 0, 0],
    [1, 1, 1, 0, 0],
])
counts = build_cooccurrence(labels)
print("co-occurrence counts\n", counts)

# %%
# Row i of the adjacency says: among samples carrying label i, which fraction also
# carries label j. The diagonal is dropped because each layer adds the node's own
# features back separately.
adj = build_adjacency(counts)
print("adjacency\n", adj.a)
print("every subtype implies misogynous:", np.all(adj.a[1:, 0] == 1.0))

# %%
# Node features are label-word vectors. A GloVe file would normally supply them;
# here a seeded stand-in table does.
nodes = build_node_features(synthetic_embeddings(seed=0, dim=8))
params = init_params(seed=0, fused_dim=12, node_dim=8, gcn_dims=(6, 4))
classifiers = gcn_forward(nodes, adj, params.gcn)
for name, row in zip(LABEL_NAMES, classifiers):
    print(f"{name:>16}", row)
