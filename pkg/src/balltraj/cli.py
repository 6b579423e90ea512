"""Command-line entry points: train, predict, evaluate, annotate, impute, simulate."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .applications import PassEvent, PassReport, detect_passes, match_passes
from .config import (
    ConfigError,
    LossWeights,
    ModelConfig,
    PostprocessConfig,
    TrainConfig,
    Variant,
    _coerce,
    read_flat_config,
    run_tag,
)
from .datasets import (
    episode_windows,
    load_matches,
    split,
    whole_windows,
    write_possession,
    write_trajectory,
)
from .metrics import MetricsReport, evaluate_sequences
from .models import HierarchicalModel
from .postprocess import TouchAssignment, postprocess
from .tracking import TrackingError, mask_ball
from .training import (
    evaluate_windows,
    load_checkpoint,
    predict_window,
    save_checkpoint,
    set_seed,
    train_model,
    window_agent_positions,
)

log = logging.getLogger("balltraj")

MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"weights"}


def _variant(raw: str) -> Variant:
    key = raw.strip().upper().replace("-", "_")
    try:
        return Variant(key)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown variant {raw!r}; choose from "
                                          f"{', '.join(v.value for v in Variant)}") from None


def _embeddings(raw: str) -> tuple[str, ...]:
    return tuple(e for e in raw.replace(",", "+").upper().split("+") if e)


def _ablation(pairs: list[str] | None) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--ablate expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip().replace("-", "_")
        if k not in MODEL_KEYS:
            raise ConfigError(f"--ablate: unknown model setting {k!r}")
        if k == "embeddings":
            out[k] = _embeddings(v)
        elif k == "variant":
            out[k] = _variant(v).value
        else:
            out[k] = _coerce(v.strip())
    return out


def build_configs(args) -> tuple[ModelConfig, TrainConfig, PostprocessConfig]:
    """Config file values first, then explicit CLI flags on top."""
    values = read_flat_config(args.config) if getattr(args, "config", None) else {}
    model_kw = {k: v for k, v in values.items() if k in MODEL_KEYS}
    train_kw = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    pp_kw = {k: v for k, v in values.items() if k in {f.name for f in dataclasses.fields(PostprocessConfig)}}
    lam = {"lambda_real": values.get("lambda_real", 1.0), "lambda_ce": values.get("lambda_ce", 20.0)}
    unknown = set(values) - MODEL_KEYS - TRAIN_KEYS - set(pp_kw) - set(lam)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if isinstance(model_kw.get("embeddings"), str):
        model_kw["embeddings"] = _embeddings(model_kw["embeddings"])
    if isinstance(model_kw.get("variant"), str):
        model_kw["variant"] = _variant(model_kw["variant"])
    if args.variant is not None:
        model_kw["variant"] = args.variant
    if args.embeddings is not None:
        model_kw["embeddings"] = args.embeddings
    if args.masking is not None:
        model_kw["imputation"] = True
        train_kw["train_keep_probability"] = 1.0 - args.masking
    model_kw.update(_ablation(getattr(args, "ablate", None)))
    for k in ("n_players",):
        if getattr(args, k, None) is not None:
            model_kw[k] = getattr(args, k)
    if args.lambda_real is not None:
        lam["lambda_real"] = args.lambda_real
    if args.lambda_ce is not None:
        lam["lambda_ce"] = args.lambda_ce
    if args.seed is not None:
        train_kw["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        train_kw["max_epochs"] = args.epochs
    return ModelConfig(**model_kw), TrainConfig(weights=LossWeights(**lam), **train_kw), PostprocessConfig(**pp_kw)


def _load_model(path):
    model, cfg, payload = load_checkpoint(path)
    return model, cfg


def _pick_checkpoint(path: Path, ablate: dict) -> Path:
    """A checkpoint file, or the one in a directory whose config matches ``ablate``."""
    if path.is_file():
        return path
    for ck in sorted(path.glob("*.pt")):
        _, cfg, _ = load_checkpoint(ck)
        d = cfg.to_dict()
        if all((tuple(d[k]) if isinstance(d[k], list) else str(d[k])) == (v if isinstance(v, tuple) else str(v))
               for k, v in ablate.items()):
            return ck
    raise ConfigError(f"no checkpoint in {path} matches {ablate}")


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args) -> int:
    model_cfg, train_cfg, _ = build_configs(args)
    matches = load_matches(args.data, args.format)
    if not any(m.labelled for m in matches):
        raise TrackingError("training needs event files to label the ball")
    tr, va, _ = split(matches, (1 - 2 * args.holdout, args.holdout, args.holdout), train_cfg.seed) \
        if len(matches) >= 3 and args.holdout > 0 else (matches, [], [])
    if args.validation:
        va = load_matches(args.validation, args.format)
    train_w = episode_windows(tr, model_cfg.n_players, train_cfg.window, train_cfg.stride)
    val_w = whole_windows(va, model_cfg.n_players) if va else None
    if not train_w:
        raise TrackingError("no training windows (episodes shorter than the window length?)")
    tag = run_tag(model_cfg, train_cfg.weights)
    out = Path(args.out) if args.out else Path(f"{tag}.pt")
    log.info("training %s on %d windows (%d validation episodes)", tag, len(train_w), len(val_w or []))
    res = train_model(model_cfg, train_cfg, train_w, val_w, checkpoint_path=out,
                      on_epoch=lambda e: print(f"epoch {e.epoch} " + " ".join(
                          f"{k}={v:.4f}" for k, v in e.train.items()) + f" val_pe={e.val_pe:.4f}", flush=True))
    save_checkpoint(out, res.model, model_cfg, train_cfg, {"tag": tag, "best_epoch": res.best_epoch})
    print(f"{tag}: best validation PE {res.best_val_pe:.4f} at epoch {res.best_epoch}; saved {out}")
    return 0


def _postprocess_cfg(args) -> PostprocessConfig:
    return build_configs(args)[2] if getattr(args, "config", None) else PostprocessConfig()


def cmd_predict(args) -> int:
    model, cfg = _load_model(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pp = _postprocess_cfg(args)
    for w in whole_windows(load_matches(args.data, args.format), cfg.n_players):
        p = predict_window(model, w, seed=args.seed or 0)
        times = w.start_time + 0.1 * np.arange(len(w))
        ball = p.ball
        if args.postprocess:
            if p.probs is None:
                raise ConfigError(f"{cfg.tag} has no possession output to postprocess")
            assignment, ball = postprocess(p.probs, p.ball, window_agent_positions(w), pp, w.start_time)
            assignment.to_csv(out / f"{w.episode_id}_touches.csv", w.agent_set.ids)
        write_trajectory(out / f"{w.episode_id}_trajectory.csv", times, ball)
        if p.probs is not None:
            write_possession(out / f"{w.episode_id}_possession.csv", times, p.probs, w.agent_set.ids)
        print(f"{w.episode_id}: {len(w)} frames")
    return 0


def cmd_evaluate(args) -> int:
    ablate = _ablation(args.ablate)
    ck = _pick_checkpoint(Path(args.checkpoint), ablate)
    model, cfg = _load_model(ck)
    windows = whole_windows(load_matches(args.data, args.format), cfg.n_players)
    if not windows:
        raise TrackingError("no labelled episodes to evaluate")
    pp = _postprocess_cfg(args) if args.postprocess else None
    report = evaluate_windows(model, windows, pp)
    payload = torch.load(ck, map_location="cpu", weights_only=False)
    lam = (payload.get("train_config") or {}).get("lambda_real", 0.0)
    tag = run_tag(cfg, LossWeights(lam, 20.0), postprocess=bool(args.postprocess))
    print(report.to_text())
    print("model | PE | RL | PPA | TPA")
    print(report.table_row(tag))
    if args.csv:
        Path(args.csv).write_text(MetricsReport.csv_header(("model",)) + "\n" + report.to_csv_row((tag,)) + "\n")
    return 0


def write_passes(path: Path, passes: list[PassEvent]) -> None:
    lines = ["passer,receiver,t0,t1"] + [f"{p.passer},{p.receiver},{p.t0:.3f},{p.t1:.3f}" for p in passes]
    path.write_text("\n".join(lines) + "\n")


def _truth_passes(w, labels_touched) -> list[PassEvent]:
    return detect_passes(TouchAssignment(labels_touched, start_time=w.start_time), w.agent_set.ids, w.agent_set.n)


def true_touches(window) -> np.ndarray:
    """Per-frame toucher from labelled data: frames where the ball sits on the labelled agent."""
    pos = window_agent_positions(window)
    d = np.linalg.norm(pos[np.arange(len(window)), window.labels] - window.ball, axis=-1)
    return np.where(d < 1e-6, window.labels, -1)


def cmd_annotate(args) -> int:
    model, cfg = _load_model(args.checkpoint)
    if not isinstance(model, HierarchicalModel):
        raise ConfigError("pass annotation needs a hierarchical model with possession output")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pp = _postprocess_cfg(args)
    matches = load_matches(args.data, args.format)
    detected, truth = [], []
    for w in whole_windows(matches, cfg.n_players):
        obs = None
        if args.masking is not None:
            w = mask_ball(w, 1.0 - args.masking, args.seed or 0)
            obs = True
        p = predict_window(model, w, use_observations=bool(obs))
        assignment, _ = postprocess(p.probs, p.ball, window_agent_positions(w), pp, w.start_time)
        found = detect_passes(assignment, w.agent_set.ids, w.agent_set.n)
        write_passes(out / f"{w.episode_id}_passes.csv", found)
        detected += found
        if any(m.labelled for m in matches):
            truth += _truth_passes(w, true_touches(w))
    write_passes(out / "passes.csv", detected)
    print(f"{len(detected)} passes detected")
    if truth:
        rep = match_passes(detected, truth)
        print(" | ".join(PassReport.COLUMNS))
        print(" | ".join(f"{v:.4f}" for v in rep.values()))
    return 0


def cmd_impute(args) -> int:
    model, cfg = _load_model(args.checkpoint)
    if not cfg.imputation:
        raise ConfigError("checkpoint was not trained for imputation (train with --masking)")
    rate = args.masking if args.masking is not None else 0.8
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    windows = whole_windows(load_matches(args.data, args.format), cfg.n_players)
    preds, targets, players, probs, labels = [], [], [], [], []
    for i, w in enumerate(windows):
        w = mask_ball(w, 1.0 - rate, (args.seed or 0) * 100_003 + i)
        p = predict_window(model, w, use_observations=True)
        ball = p.ball
        if args.postprocess and p.probs is not None:
            _, ball = postprocess(p.probs, ball, window_agent_positions(w), _postprocess_cfg(args), w.start_time)
            ball[w.ball_mask] = w.ball[w.ball_mask]
        write_trajectory(out / f"{w.episode_id}_imputed.csv", w.start_time + 0.1 * np.arange(len(w)), ball)
        preds.append(ball), targets.append(w.ball), players.append(w.player_positions)
        if p.probs is not None:
            probs.append(p.probs), labels.append(w.labels)
    if windows:
        rep = evaluate_sequences(preds, targets, players, probs or None, labels or None, windows[0].agent_set.team_map)
        print(f"masking rate {rate}")
        print(rep.to_text())
    return 0


def cmd_simulate(args) -> int:
    from .sim import generate_match, save_match, script_library, simulate_dataset

    out = Path(args.out)
    if args.library:
        matches = [generate_match(s) for s in script_library()]
    else:
        matches = simulate_dataset(args.episodes, args.seed or 0, args.players, args.duration)
    for m in matches:
        save_match(m, out)
    print(f"wrote {len(matches)} matches to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, model_flags: bool = False):
    p.add_argument("--format", choices=("canonical", "metrica"), default="canonical")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--variant", type=_variant, default=None)
    p.add_argument("--embeddings", type=_embeddings, default=None, help="e.g. PPE+FPE+FPI")
    p.add_argument("--lambda-real", type=float, default=None)
    p.add_argument("--lambda-ce", type=float, default=None)
    p.add_argument("--masking", type=float, default=None, help="fraction of ball frames hidden")
    p.add_argument("--postprocess", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balltraj", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on labelled matches")
    p.add_argument("data", help="tracking file or directory (relative paths also tried under $BALLTRAJ_DATA_ROOT)")
    p.add_argument("--validation", help="separate validation data")
    p.add_argument("--holdout", type=float, default=0.15, help="validation/test fraction per split")
    p.add_argument("--out", help="checkpoint path (default: <tag>.pt)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--n-players", type=int, default=None)
    p.add_argument("--ablate", action="append", metavar="KEY=VALUE")
    _common(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("predict", cmd_predict, "ball trajectory, possession and touch CSVs"),
                              ("annotate", cmd_annotate, "pass events (and accuracy if events exist)"),
                              ("impute", cmd_impute, "fill masked ball frames")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("checkpoint")
        p.add_argument("data")
        p.add_argument("--out", default="out")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="PE / RL / PPA / TPA on labelled matches")
    p.add_argument("checkpoint", help="checkpoint file, or a directory to choose from with --ablate")
    p.add_argument("data")
    p.add_argument("--ablate", action="append", metavar="KEY=VALUE", help="e.g. embeddings=PPE+FPE")
    p.add_argument("--csv", help="also write the report as CSV")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="write synthetic matches as canonical CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--players", type=int, default=4, help="players per team, goalkeeper included")
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--library", action="store_true", help="write the named scenario library instead")
    _common(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    set_seed(args.seed or 0)
    try:
        return args.func(args)
    except (ConfigError, TrackingError, FileNotFoundError, argparse.ArgumentTypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
