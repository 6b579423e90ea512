"""Run a checkpoint on one simulator scenario and plot raw vs postprocessed ball paths and the score trace."""

import argparse

from balltraj.config import PostprocessConfig
from balltraj.losses import reality_loss
from balltraj.plotting import save, score_figure, trajectory_figure
from balltraj.postprocess import possession_scores, postprocess
from balltraj.sim import generate_match, script_library, simulate_random
from balltraj.tracking import whole_episode_window
from balltraj.training import load_checkpoint, predict_window, window_agent_positions


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("checkpoint")
    ap.add_argument("--scenario", default="random", choices=["random"] + [s.name for s in script_library()])
    ap.add_argument("--seed", type=int, default=0, help="simulator seed for the random scenario")
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()
    model, cfg, _ = load_checkpoint(args.checkpoint)
    if args.scenario == "random":
        m = simulate_random(args.seed, cfg.n_players, duration=20.0)
    else:
        m = generate_match(next(s for s in script_library() if s.name == args.scenario))
    if m.agent_set.n != cfg.n_players:
        raise SystemExit(f"{args.scenario} has {m.agent_set.n} players per team, the model expects {cfg.n_players}")
    w = whole_episode_window(m.episode, m.agent_set)
    p = predict_window(model, w)
    pos = window_agent_positions(w)
    assignment, rebuilt = postprocess(p.probs, p.ball, pos, PostprocessConfig())
    players = w.player_positions
    print(f"RL raw {float(reality_loss(p.ball, players)):.4f}  RL postprocessed {float(reality_loss(rebuilt, players)):.4f}")
    team_map = m.agent_set.team_map
    save(trajectory_figure(players, w.ball, p.ball, rebuilt, team_map, title=args.scenario),
         f"{args.out}/{args.scenario}_paths.png")
    save(score_figure(possession_scores(p.probs, p.ball, pos), assignment.touched),
         f"{args.out}/{args.scenario}_scores.png")
    print("figures in", args.out)


if __name__ == "__main__":
    main()
