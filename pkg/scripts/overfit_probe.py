"""Overfit the small H-LSTM on 10 simulator episodes and report when training PE < 1 m and PPA > 90%."""

import argparse

import torch

from balltraj.experiments import ProbeConfig, overfit_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--full", action="store_true", help="run all epochs instead of stopping at the target")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)
    cfg = ProbeConfig(stop_at_target=not args.full)

    def show(e):
        if e.epoch % 10 == 0 or e.epoch == 1:
            print(f"epoch {e.epoch:3d} loss {e.train['loss']:.3f} train PE {e.val.pe:.3f} PPA {e.val.ppa:.3f}",
                  flush=True)

    res = overfit_probe(cfg, show)
    print(f"target reached at epoch {res.reached_epoch}; {res.epochs_run} epochs in {res.seconds / 60:.1f} min")
    print(f"best training PE {res.best.pe:.3f} m, PPA {res.best.ppa:.3f}")


if __name__ == "__main__":
    main()
