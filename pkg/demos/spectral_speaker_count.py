"""
Counting speakers from the eigengap
===================================

Auto-tuning spectral clustering picks both the affinity sparsity and the
number of clusters. Here it is run on direction clusters of known size.
"""

import numpy as np

from mcdiar.clustering import auto_spectral, cosine_affinity, nme_scan
from mcdiar.synthetic import blobs

rng = np.random.default_rng(4)
x, truth = blobs(rng, 4, per_cluster=25)

# ratio of neighbour count to eigengap; the smallest wins
for p, ratio, k in nme_scan(cosine_affinity(x))[:8]:
    print(f"p={p:2d}  ratio={ratio:8.3f}  k={k}")

labels = auto_spectral(x, seed=0)
print("clusters found:", len(set(labels)))
print("matches planted partition:",
      all(len(set(labels[truth == c])) == 1 for c in range(4)))
