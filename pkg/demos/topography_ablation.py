"""Does station topography help? Train the four topography arms on one fold.

The synthetic world cools at 6.5 C per km of station elevation above the grid
cell, so the arms that see elevation should recover most of that signal.

    python demos/topography_ablation.py
"""

import numpy as np

from downcnp.config import SynthConfig
from downcnp.data import Dataset, make_block_folds, synth_generate
from downcnp.trainer import TrainConfig, run_ablation

world = synth_generate(SynthConfig(seed=0))
ds = Dataset(world.grids, world.stations["tmax"], "tmax")
fold = make_block_folds(len(ds), 5)[-1]
cfg = TrainConfig(epochs=20, batches_per_epoch=10, patience=5, seed=1)
model = dict(hidden_channels=32, n_resnet_blocks=4)

out = run_ablation(ds, cfg, [fold], model, ds.station_subset(world.train_ids), ds.station_subset(world.heldout),
                   workers=4)
print(f"{'arm':<10} {'median MAE':>10} {'median bias':>12}")
for arm, (report, _) in out.items():
    print(f"{arm:<10} {np.median(report.values('mae')):>10.3f} {np.median(report.values('mean_bias')):>12.3f}")
