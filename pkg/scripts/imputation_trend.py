"""Train an imputation H-LSTM on simulator data and report PE at masking rates 1.0, 0.95, 0.9, 0.8."""

import argparse

import torch

from balltraj.experiments import ImputationConfig, imputation_trend, strictly_decreasing


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=ImputationConfig().train.max_epochs)
    ap.add_argument("--plot", help="write the PE curve to this PNG")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)
    base = ImputationConfig()
    from dataclasses import replace

    cfg = replace(base, train=replace(base.train, max_epochs=args.epochs))
    reports, _ = imputation_trend(cfg, lambda e: print(f"epoch {e.epoch} loss {e.train['loss']:.3f}", flush=True)
                                  if e.epoch % 10 == 0 else None)
    print("masking | PE raw | PPA raw | PE pp | RL pp")
    for rate, r in reports.items():
        print(f"{rate:.2f} | {r['raw'].pe:.4f} | {r['raw'].ppa:.4f} | {r['pp'].pe:.4f} | {r['pp'].rl:.4f}")
    pes = [r["raw"].pe for r in reports.values()]
    print("strictly decreasing:", strictly_decreasing(pes))
    if args.plot:
        from balltraj.plotting import curve_figure, save

        rates = list(reports)
        fig = curve_figure(rates, {"raw": pes, "postprocessed": [r["pp"].pe for r in reports.values()]},
                           "masking rate", "PE (m)")
        print("wrote", save(fig, args.plot))


if __name__ == "__main__":
    main()
