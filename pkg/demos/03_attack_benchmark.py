"""Compare the surrogate (PGD) and margin (best-target) attackers: strength
per step budget and wall-clock cost, on a freshly trained small MLP."""

import time

from marginlab import (AttackConfig, DatasetSpec, ModelSpec, TrainConfig,
                       evaluate_robust, generate_dataset, run_training)

data = generate_dataset(DatasetSpec("gaussian_blobs", 300, 3, 0.35, 0))
test = generate_dataset(DatasetSpec("gaussian_blobs", 150, 3, 0.35, 7))
spec = ModelSpec("mlp", 2, 3, (8,))
cfg = TrainConfig("erm", epochs=10, lr=0.5, seed=0)
run = run_training(spec, data, cfg)
params = run.selection.last.params

print(f"{'steps':>6} {'pgd robust':>11} {'beta robust':>12} "
      f"{'pgd s':>8} {'beta s':>8}")
for steps in (1, 5, 10, 20, 40):
    row = [steps]
    for kind in ("pgd", "beta"):
        atk = AttackConfig(epsilon=0.1, norm="l_inf", steps=steps, box=True,
                           seed=0)
        t0 = time.perf_counter()
        out = evaluate_robust(spec, params, test, kind, atk)
        row.append((out["robust"], time.perf_counter() - t0))
    (_, (pr, pt), (br, bt)) = (None, row[1], row[2])
    print(f"{steps:>6} {pr:>11.3f} {br:>12.3f} {pt:>8.3f} {bt:>8.3f}")

oracle = evaluate_robust(spec, params, test, "grid_oracle",
                         AttackConfig(epsilon=0.1, norm="l_inf", steps=1,
                                      box=True, seed=0), resolution=41)
print(f"\nexhaustive grid-oracle robust accuracy: {oracle['robust']:.3f}")
