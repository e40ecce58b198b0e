"""Model-free, decentralized two-timescale learning (ON-SGSP) in self-play.

Every agent sees the same transition ``(x, a, r, y)`` and keeps its own
estimates: values for all agents, a gradient estimate ``xi`` for its own
actions and its own policy rows. Tables are plain Python lists because each
step touches a handful of scalars.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .config import SgspConfig
from .equilibrium import project_list
from .game import RNG_ALGORITHM, NumericalFailure
from .trace import RunTrace


class AgentLearner:
    def __init__(self, agent_id: int, n_agents: int, action_counts: Sequence[int], discount: float, config: SgspConfig):
        self.agent_id = agent_id
        self.n_agents = n_agents
        self.discount = discount
        self.alpha_prime = config.alpha_prime
        self.nu = config.nu
        n_states = len(action_counts)
        self.values = [[0.0] * n_states for _ in range(n_agents)]
        self.xi = [[0.0] * k for k in action_counts]
        self.policy = [[1.0 / k] * k for k in action_counts]
        self.state_visits = [0] * n_states
        self.action_visits = [[0] * k for k in action_counts]

    def act(self, x: int, rng: np.random.Generator, explore_delta: float = 0.0) -> int:
        row = self.policy[x]
        u = rng.random()
        if explore_delta > 0.0:
            u *= 1.0 + explore_delta * len(row)
            for a, p in enumerate(row):
                u -= p + explore_delta
                if u < 0.0:
                    return a
        else:
            for a, p in enumerate(row):
                u -= p
                if u < 0.0:
                    return a
        # rounding left a sliver of mass; fall back to the last supported action
        return max(a for a, p in enumerate(row) if p > 0.0 or explore_delta > 0.0)

    def observe(self, x: int, joint_action: Sequence[int], rewards: Sequence[float], y: int, b_n: float, c_n: float) -> None:
        """Value, gradient-estimate and policy updates for one observed transition."""
        beta = self.discount
        i = self.agent_id
        td = [rewards[j] + beta * vals[y] - vals[x] for j, vals in enumerate(self.values)]
        for j, vals in enumerate(self.values):
            vals[x] += c_n * td[j]
        a = joint_action[i]
        xi_row = self.xi[x]
        xi_new = xi_row[a] + c_n * (math.fsum(td) - xi_row[a])
        xi_row[a] = xi_new
        row = self.policy[x]
        scaled = -xi_new / self.nu
        sign = 1.0 if scaled > 1.0 else (-1.0 if scaled < -1.0 else scaled)
        if row[a] > 0.0 and sign != 0.0:
            row[a] -= b_n * row[a] ** self.alpha_prime * abs(td[i]) * sign
            self.policy[x] = project_list(row)
        self.state_visits[x] += 1
        self.action_visits[x][a] += 1
        if not (math.isfinite(xi_new) and all(math.isfinite(vals[x]) for vals in self.values)):
            raise NumericalFailure(f"agent {i}: non-finite estimate at state {x} after {self.state_visits[x]} visits")

    def policy_array(self) -> np.ndarray:
        width = max(len(r) for r in self.policy)
        out = np.zeros((len(self.policy), width))
        for x, r in enumerate(self.policy):
            out[x, : len(r)] = r
        return out

    def xi_array(self) -> np.ndarray:
        width = max(len(r) for r in self.xi)
        out = np.zeros((len(self.xi), width))
        for x, r in enumerate(self.xi):
            out[x, : len(r)] = r
        return out


def make_learners(env, config: SgspConfig) -> list[AgentLearner]:
    counts = [[env.n_actions(i, x) for x in range(env.n_states)] for i in range(env.n_agents)]
    return [AgentLearner(i, env.n_agents, counts[i], env.discount, config) for i in range(env.n_agents)]


def exploring(n: int, config: SgspConfig) -> bool:
    """Whether step ``n`` lies inside a delta-offset window (first steps of each period after the first)."""
    return config.perturb_delta > 0 and n >= config.perturb_period and n % config.perturb_period < config.perturb_window


class PolicyRecorder:
    """Shared snapshot logic for every on-line learner: policy change since the
    last snapshot, mean inter-agent distance over the window (when the env has
    one) and, optionally, every policy entry."""

    def __init__(self, env, trace: RunTrace, record_policy: bool | None = None):
        self.env = env
        self.trace = trace
        self.record_policy = env.n_states * 5 <= 64 if record_policy is None else record_policy
        self.track_distance = hasattr(env, "distance")
        self._last = None
        self._distance_sum = 0.0
        self._distance_count = 0

    def tick(self) -> None:
        if self.track_distance:
            self._distance_sum += self.env.distance()
            self._distance_count += 1

    def snapshot(self, n: int, current: list[np.ndarray]) -> None:
        trace = self.trace
        last = current if self._last is None else self._last
        change = max(float(np.abs(c - p).max()) for c, p in zip(current, last))
        self._last = current
        trace.record(n, "policy_change", change)
        if self.track_distance:
            if self._distance_count:
                trace.record(n, "distance", self._distance_sum / self._distance_count)
            else:
                trace.record(n, "distance", self.env.distance())
            self._distance_sum = 0.0
            self._distance_count = 0
        if self.record_policy:
            for i, p in enumerate(current):
                for x in range(p.shape[0]):
                    for a in range(self.env.n_actions(i, x)):
                        trace.record(n, f"pi/{i}/{x}/{a}", p[x, a])


class SelfPlayDriver:
    """Runs N learners against an environment, broadcasting every transition to all of them.

    ``freeze_policies`` keeps ``b(n) = 0`` so that only the critics learn.
    ``record_policy`` adds every policy entry to the trace at each snapshot.
    """

    def __init__(self, env, config: SgspConfig, rng: np.random.Generator, learners=None,
                 freeze_policies: bool = False, record_policy: bool | None = None):
        self.env = env
        self.config = config
        self.rng = rng
        self.agents = learners if learners is not None else make_learners(env, config)
        self.freeze_policies = freeze_policies
        self.state = env.reset(rng)
        self.steps = 0
        self.trace = RunTrace(metadata={"algorithm": "on-sgsp", "config": config.to_dict(), "rng": RNG_ALGORITHM})
        self.recorder = PolicyRecorder(env, self.trace, record_policy)
        self.recorder.snapshot(0, [a.policy_array() for a in self.agents])

    def run(self, max_steps: int) -> tuple[list[np.ndarray], list[list[list[float]]], RunTrace]:
        cfg = self.config
        env, rng, agents, recorder = self.env, self.rng, self.agents, self.recorder
        x = self.state
        for _ in range(max_steps):
            self.steps += 1
            n = self.steps
            delta = cfg.perturb_delta if exploring(n, cfg) else 0.0
            joint = [agent.act(x, rng, delta) for agent in agents]
            recorder.tick()
            rewards, y = env.step(joint, rng)
            b_n = 0.0 if self.freeze_policies else cfg.step_b(n)
            c_n = cfg.step_c(n)
            for agent in agents:
                agent.observe(x, joint, rewards, y, b_n, c_n)
            x = y
            if n % cfg.snapshot_every == 0:
                recorder.snapshot(n, [a.policy_array() for a in agents])
        self.state = x
        policies = [a.policy_array() for a in agents]
        self.trace.final = {
            "steps": self.steps,
            "policy": policies,
            "values": [a.values for a in agents],
        }
        return policies, [a.values for a in agents], self.trace


def run_selfplay(driver: SelfPlayDriver, max_steps: int):
    return driver.run(max_steps)
