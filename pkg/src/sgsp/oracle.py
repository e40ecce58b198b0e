"""Independent checks: explicit joint-action enumeration, value iteration,
best responses and finite differences.

Nothing here calls the vectorized evaluation helpers used by the solvers;
expectations are rebuilt from the raw game tables with explicit loops.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .game import ConfigurationError, NumericalFailure, StochasticGame


def joint_actions(game: StochasticGame, x: int):
    return itertools.product(*(range(int(c)) for c in game.action_counts[x]))


def joint_prob(pi: Sequence[np.ndarray], x: int, joint: Sequence[int], skip: int | None = None) -> float:
    prob = 1.0
    for k, a in enumerate(joint):
        if k != skip:
            prob *= float(pi[k][x, a])
    return prob


def brute_force_chain(game: StochasticGame, pi: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """``P_pi`` and ``R_pi`` by enumerating joint actions one at a time."""
    n_s, n = game.n_states, game.n_agents
    p_pi = np.zeros((n_s, n_s))
    r_pi = np.zeros((n, n_s))
    for x in range(n_s):
        for joint in joint_actions(game, x):
            w = joint_prob(pi, x, joint)
            for y in range(n_s):
                p_pi[x, y] += w * game.transitions[(x, *joint, y)]
            for i in range(n):
                r_pi[i, x] += w * game.rewards[(i, x, *joint)]
    return p_pi, r_pi


def brute_force_q(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int, x: int, a_i: int) -> float:
    total = 0.0
    for joint in joint_actions(game, x):
        if joint[agent] != a_i:
            continue
        w = joint_prob(pi, x, joint, skip=agent)
        nxt = sum(game.transitions[(x, *joint, y)] * v[agent][y] for y in range(game.n_states))
        total += w * (game.rewards[(agent, x, *joint)] + game.discount * nxt)
    return total


def value_iteration_fixed_policy(
    game: StochasticGame, pi: Sequence[np.ndarray], tol: float = 1e-10, max_sweeps: int = 1_000_000
) -> np.ndarray:
    """Iterate ``v <- R_pi + beta P_pi v`` until the sup-norm change is at most
    ``tol (1 - beta) / beta``, which bounds the error by ``tol``."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    beta = game.discount
    p_pi, r_pi = brute_force_chain(game, pi)
    v = np.zeros_like(r_pi)
    threshold = tol * (1 - beta) / beta
    for _ in range(max_sweeps):
        new = r_pi + beta * v @ p_pi.T
        change = np.abs(new - v).max()
        v = new
        if change <= threshold:
            return v
    raise NumericalFailure(f"value iteration did not converge in {max_sweeps} sweeps")


def rollout_value(game: StochasticGame, pi: Sequence[np.ndarray], agent: int, x: int, horizon: int) -> float:
    """Discounted return along a deterministic chain under deterministic ``pi``."""
    total, scale = 0.0, 1.0
    for _ in range(horizon):
        joint = tuple(int(np.argmax(pi[k][x])) for k in range(game.n_agents))
        total += scale * game.rewards[(agent, x, *joint)]
        x = int(np.argmax(game.transitions[(x, *joint)]))
        scale *= game.discount
    return total


def response_mdp(game: StochasticGame, agent: int, pi: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Single-agent MDP faced by ``agent`` when all others follow ``pi``.

    Returns transitions ``(S, A_i, S)`` and rewards ``(S, A_i)``; infeasible
    actions get reward ``-inf``.
    """
    n_s = game.n_states
    n_a = game.max_actions[agent]
    trans = np.zeros((n_s, n_a, n_s))
    rew = np.full((n_s, n_a), -np.inf)
    for x in range(n_s):
        rew[x, : game.action_counts[x, agent]] = 0.0
        for joint in joint_actions(game, x):
            w = joint_prob(pi, x, joint, skip=agent)
            a = joint[agent]
            trans[x, a] += w * game.transitions[(x, *joint)]
            rew[x, a] += w * game.rewards[(agent, x, *joint)]
    return trans, rew


def best_response(
    game: StochasticGame, agent: int, pi: Sequence[np.ndarray], tol: float = 1e-12, max_sweeps: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal value and a deterministic maximizer against the other agents' ``pi``.

    ``pi[agent]`` is ignored. Ties go to the lowest action index.
    """
    trans, rew = response_mdp(game, agent, pi)
    beta = game.discount
    v = np.zeros(game.n_states)
    threshold = tol * (1 - beta) / beta
    for _ in range(max_sweeps):
        q = rew + beta * trans @ v
        new = q.max(axis=1)
        change = np.abs(new - v).max()
        v = new
        if change <= threshold:
            break
    else:
        raise NumericalFailure("best-response value iteration did not converge")
    q = rew + beta * trans @ v
    greedy = np.argmax(q >= q.max(axis=1, keepdims=True) - 1e-12, axis=1)
    policy = np.zeros((game.n_states, game.max_actions[agent]))
    policy[np.arange(game.n_states), greedy] = 1.0
    return v, policy


def policy_value(game: StochasticGame, pi: Sequence[np.ndarray]) -> np.ndarray:
    p_pi, r_pi = brute_force_chain(game, pi)
    return np.linalg.solve(np.eye(game.n_states) - game.discount * p_pi, r_pi.T).T


def is_nash(game: StochasticGame, pi: Sequence[np.ndarray], tol: float) -> tuple[bool, float]:
    """Largest unilateral gain over agents and states, and whether it is within ``tol``."""
    if tol < 0:
        raise ConfigurationError("tol must be >= 0")
    values = policy_value(game, pi)
    gain = -np.inf
    for i in range(game.n_agents):
        br, _ = best_response(game, i, pi)
        gain = max(gain, float((br - values[i]).max()))
    return gain <= tol, gain


def brute_force_objective(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]) -> float:
    total = 0.0
    for x in range(game.n_states):
        for joint in joint_actions(game, x):
            w = joint_prob(pi, x, joint)
            for j in range(game.n_agents):
                nxt = sum(game.transitions[(x, *joint, y)] * v[j][y] for y in range(game.n_states))
                total += w * (v[j][x] - game.rewards[(j, x, *joint)] - game.discount * nxt)
    return total


def finite_diff_grad(
    game: StochasticGame,
    v: np.ndarray,
    pi: Sequence[np.ndarray],
    agent: int,
    x: int,
    a_i: int,
    h: float = 1e-5,
    objective: Callable | None = None,
) -> float:
    """Central difference of the objective in one raw policy coordinate (no re-projection)."""
    if h <= 0:
        raise ConfigurationError("h must be positive")
    objective = objective or brute_force_objective
    plus = [np.array(p, dtype=float) for p in pi]
    minus = [np.array(p, dtype=float) for p in pi]
    plus[agent][x, a_i] += h
    minus[agent][x, a_i] -= h
    return (objective(game, v, plus) - objective(game, v, minus)) / (2 * h)


def stage_best_response_gaps(a: np.ndarray, b: np.ndarray, row: np.ndarray, col: np.ndarray) -> tuple[float, float]:
    """How much each player could gain by deviating in a bimatrix game."""
    row_payoffs = a @ col
    col_payoffs = row @ b
    return float(row_payoffs.max() - row @ row_payoffs), float(col_payoffs.max() - col_payoffs @ col)
