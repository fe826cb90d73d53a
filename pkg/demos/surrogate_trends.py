"""How the synthetic counterparts drift from their sources as guidance grows.

Prints pixel MSE to the source image, then local-FID and per-class feature
diversity measured with a briefly pretrained encoder.

    python demos/surrogate_trends.py [epochs]
"""

import sys

import numpy as np

from mixview.dataset import DatasetSpec, make_dataset
from mixview.evalsuite import distribution_metrics
from mixview.trainer import MethodConfig, pretrain

KS = (2.0, 3.0, 6.0, 8.0, 12.0)
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

ds = make_dataset(DatasetSpec(n_per_class=50, guidance_scales=KS))
real = ds.train.images
for k in KS:
    mse = np.mean((ds.counterparts(k) - real) ** 2)
    print(f"k={k:>4g}  pixel MSE to source {mse:.4f}")

encoder = pretrain(MethodConfig(epochs=epochs, batch_size=100), ds).encoder
m = distribution_metrics(encoder, ds, KS, n_max=500)
print(f"\nreal diversity (mean over classes) {m['diversity_real']['mean']:.4f}")
for k in KS:
    key = f"{k:g}"
    print(f"k={k:>4g}  local-FID {m['fid_by_k'][key]:.4f}  "
          f"synthetic diversity {m['diversity_syn_by_k'][key]['mean']:.4f}")
