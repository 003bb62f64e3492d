"""Attacker-knowledge sweeps: noisy target probes vs noisy shadow data vs
shadow-dataset size, logistic regression throughout.

Usage: python scripts/demo_knowledge_sweeps.py [seed]
"""

import sys
import warnings

from membrinf import datakit as dk
from membrinf import pipeline as pl

warnings.filterwarnings("ignore", category=UserWarning)


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    blob = dk.synth_blobs(600, 32, 20, 0.45, 7)
    plan = dk.SplitPlan(fold_count=3, run_count=1, seed=0)
    base = dict(target_kind="lr", gen_kind="lr", attack_kind="lr")

    grid = [round(0.1 * i, 1) for i in range(11)]
    print("sigma  target-noise  shadow-noise")
    for sigma in grid:
        t = pl.run_attack_pipeline(
            blob, pl.PipelineConfig(**base, target_noise=sigma), plan, seed
        ).accuracy_mean
        s = pl.run_attack_pipeline(
            blob, pl.PipelineConfig(**base, shadow_noise=sigma), plan, seed
        ).accuracy_mean
        print(f"{sigma:>5.1f}  {t:>12.4f}  {s:>12.4f}")

    print("\nshadow-size sweep (no noise)")
    print("rows   accuracy")
    for size in (50, 100, 250, 500, 1000):
        cfg = pl.PipelineConfig(**base, shadow_size=size)
        acc = pl.run_attack_pipeline(blob, cfg, plan, seed).accuracy_mean
        print(f"{size:>5d}  {acc:.4f}")


if __name__ == "__main__":
    main()
