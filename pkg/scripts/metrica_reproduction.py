"""Train on Metrica Sample Games 1-2 and evaluate on the second half of Game 3.

Needs the public Metrica sample data in CSV layout under $BALLTRAJ_DATA_ROOT
(or --root): one directory per game holding *RawTrackingData_Home_Team.csv,
*RawTrackingData_Away_Team.csv and *RawEventsData.csv.
"""

import argparse
import os
import time
from pathlib import Path

import numpy as np
import torch

from balltraj.config import LossWeights, ModelConfig, TrainConfig, Variant
from balltraj.datasets import DATA_ROOT_ENV, episode_windows, load_match, split, whole_windows
from balltraj.metrica import _find, read_team_file
from balltraj.training import evaluate_windows, save_checkpoint, train_model

PE_BOUND, PPA_BOUND = 6.0, 0.50


def second_half_start(game_dir: Path) -> float:
    times, periods, _, _ = read_team_file(_find(game_dir, "*Home_Team.csv"), ModelConfig().pitch)
    return float(times[np.flatnonzero(periods == 2)[0]])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--root", default=os.environ.get(DATA_ROOT_ENV))
    ap.add_argument("--train", nargs="+", default=["Sample_Game_1", "Sample_Game_2"])
    ap.add_argument("--test", default="Sample_Game_3")
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--small", action="store_true", help="CPU-sized model instead of the full widths")
    ap.add_argument("--out", default="metrica_h_lstm_rl.pt")
    ap.add_argument("--threads", type=int, default=os.cpu_count())
    args = ap.parse_args()
    if not args.root:
        raise SystemExit(f"set --root or ${DATA_ROOT_ENV} to the Metrica sample data directory")
    torch.set_num_threads(args.threads)
    root = Path(args.root)

    train_matches = [load_match(g, root / g, root / g, "metrica") for g in args.train]
    test_match = load_match(args.test, root / args.test, root / args.test, "metrica")
    half = second_half_start(root / args.test)
    test_match.episodes = [ep for ep in test_match.episodes if ep.start_time >= half]

    widths = dict(d_g=16, d_btr=32, lstm_hidden=64) if args.small else {}
    model_cfg = ModelConfig(Variant.H_LSTM, n_players=11, **widths)
    train_cfg = TrainConfig(max_epochs=args.epochs, weights=LossWeights(1.0, 20.0))
    episodes = [(m, ep) for m in train_matches for ep in m.episodes]
    tr, va, _ = split(episodes, (0.85, 0.15, 0.0), seed=0)

    def windows(pairs, whole=False):
        from balltraj.datasets import Match

        ms = [Match(m.name, [ep], m.events, True) for m, ep in pairs]
        return whole_windows(ms, 11) if whole else episode_windows(ms, 11, train_cfg.window, train_cfg.stride)

    t0 = time.monotonic()
    res = train_model(model_cfg, train_cfg, windows(tr), windows(va, whole=True),
                      on_epoch=lambda e: print(f"epoch {e.epoch} val PE {e.val_pe:.3f}", flush=True))
    save_checkpoint(args.out, res.model, model_cfg, train_cfg)
    rep = evaluate_windows(res.model, whole_windows([test_match], 11))
    print(f"trained in {(time.monotonic() - t0) / 60:.1f} min")
    print(rep.table_row("H-LSTM-RL"))
    ok = rep.pe <= PE_BOUND and rep.ppa >= PPA_BOUND
    print(f"PE <= {PE_BOUND} m and PPA >= {PPA_BOUND:.0%}: {'PASS' if ok else 'FAIL'}")


if __name__ == "__main__":
    main()
