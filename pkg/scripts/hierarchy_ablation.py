"""H-LSTM against the flat LSTM baseline under the same epoch budget on simulator data."""

import argparse
import time
from dataclasses import replace

import torch

from balltraj.experiments import AblationConfig, hierarchy_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=AblationConfig.epochs)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(AblationConfig.seeds))
    ap.add_argument("--train-episodes", type=int, default=AblationConfig().train_data.n_episodes)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)
    base = AblationConfig()
    cfg = replace(base, epochs=args.epochs, seeds=tuple(args.seeds),
                  train_data=replace(base.train_data, n_episodes=args.train_episodes))
    t0 = time.monotonic()

    def show(seed, variant, rep):
        print(f"seed {seed} {variant.value:<8} {rep.table_row(variant.value)}  [{time.monotonic() - t0:.0f}s]",
              flush=True)

    res = hierarchy_ablation(cfg, show)
    print(f"H-LSTM beats LSTM on {res.wins()}/{len(res.reports)} seeds")


if __name__ == "__main__":
    main()
