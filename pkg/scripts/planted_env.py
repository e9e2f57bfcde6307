"""Train the DQN agent on a table-driven environment with one good head.

Pruning head ``--good`` pays +0.1, every other head -0.1, quitting 0. The
greedy rollout after training should prune exactly that head and quit.

    python scripts/planted_env.py --heads 6 --seeds 20
"""

import argparse
import time

from auber.dqn import AgentConfig
from auber.orchestrator import MockEnv, greedy_policy, train_agent
from auber.tensor import make_rng


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--heads", type=int, default=6)
    parser.add_argument("--good", type=int, default=3)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--episodes", type=int, default=300)
    parser.add_argument("--lr", type=float, default=AgentConfig.lr)
    args = parser.parse_args()

    rewards = [-0.1] * args.heads
    rewards[args.good] = 0.1
    cfg = AgentConfig(episodes=args.episodes, lr=args.lr)
    hits = 0
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        env = MockEnv(rewards)
        agent = train_agent(env, cfg, make_rng(seed))
        policy = greedy_policy(env, agent, make_rng(seed))
        hits += policy == [args.good]
        print(f"seed {seed:>2}: pruned {policy}", flush=True)
    print(f"{hits}/{args.seeds} seeds recovered [{args.good}] in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
