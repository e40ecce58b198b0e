"""Finite discounted stochastic games and exact (model-based) evaluation.

Policies are lists with one ``(n_states, max_actions_i)`` array per agent;
entries for actions that are infeasible in a state are kept at zero.
Values are ``(n_agents, n_states)`` arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RNG_ALGORITHM = "numpy.random.Generator/PCG64"

_ROW_TOL = 1e-12
_LOAD_RENORMALIZE_TOL = 1e-9
_POLICY_TOL = 1e-9
_RESIDUAL_TOL = 1e-10


class GameStructureError(ValueError):
    """Malformed game, policy or value data (shapes, probabilities, actions)."""


class ConfigurationError(ValueError):
    """Invalid parameter supplied to an algorithm or builder."""


class NumericalFailure(RuntimeError):
    """A computation produced non-finite numbers or missed its tolerance."""


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class StochasticGame:
    """Dense tabular N-player discounted stochastic game.

    ``transitions`` has shape ``(S, A_1, ..., A_N, S)`` and ``rewards`` has
    shape ``(N, S, A_1, ..., A_N)``, where ``A_i`` is the largest action count
    of agent ``i`` over all states. ``action_counts[x, i]`` is the number of
    actions agent ``i`` has in state ``x``; actions are ``0..count-1``.
    Entries for infeasible joint actions are ignored.
    """

    action_counts: np.ndarray
    transitions: np.ndarray
    rewards: np.ndarray
    discount: float
    state_labels: tuple = field(default=())
    _cum_rows: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        counts = np.asarray(self.action_counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 1:
            raise GameStructureError("action_counts must be a non-empty (states, agents) table")
        if np.any(counts < 1):
            raise GameStructureError("every agent needs at least one action in every state")
        if not 0.0 < self.discount < 1.0:
            raise GameStructureError(f"discount must lie strictly inside (0, 1), got {self.discount}")
        n_states, n_agents = counts.shape
        max_actions = tuple(int(m) for m in counts.max(axis=0))
        trans = np.asarray(self.transitions, dtype=float)
        rew = np.asarray(self.rewards, dtype=float)
        if trans.shape != (n_states, *max_actions, n_states):
            raise GameStructureError(
                f"transitions shape {trans.shape} != {(n_states, *max_actions, n_states)}"
            )
        if rew.shape != (n_agents, n_states, *max_actions):
            raise GameStructureError(f"rewards shape {rew.shape} != {(n_agents, n_states, *max_actions)}")
        masks = [np.arange(m)[None, :] < counts[:, [i]] for i, m in enumerate(max_actions)]
        joint = _joint_mask(masks)
        rows = trans[joint]
        if not np.all(np.isfinite(rows)) or np.any(rows < 0):
            raise GameStructureError("transition probabilities must be finite and nonnegative")
        if np.any(np.abs(rows.sum(axis=-1) - 1.0) > _ROW_TOL):
            raise GameStructureError("transition rows must sum to 1")
        if not np.all(np.isfinite(rew[:, joint])):
            raise GameStructureError("rewards must be finite")
        trans = np.where(joint[..., None], trans, 0.0)
        rew = np.where(joint[None], rew, 0.0)
        trans.setflags(write=False)
        rew.setflags(write=False)
        counts.setflags(write=False)
        for m in masks:
            m.setflags(write=False)
        object.__setattr__(self, "action_counts", counts)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "rewards", rew)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "_masks", masks)
        object.__setattr__(self, "_joint", joint)

    @property
    def n_agents(self) -> int:
        return self.action_counts.shape[1]

    @property
    def n_states(self) -> int:
        return self.action_counts.shape[0]

    @property
    def max_actions(self) -> tuple[int, ...]:
        return self.transitions.shape[1:-1]

    @property
    def action_masks(self) -> list[np.ndarray]:
        """Per agent, a boolean ``(S, A_i)`` table of feasible actions."""
        return self._masks

    @property
    def joint_mask(self) -> np.ndarray:
        return self._joint

    @property
    def reward_bound(self) -> float:
        """Largest absolute single-stage reward over feasible joint actions."""
        return float(np.abs(self.rewards).max())

    def n_actions(self, agent: int, state: int) -> int:
        return int(self.action_counts[state, agent])

    def uniform_policy(self) -> list[np.ndarray]:
        return [m / m.sum(axis=1, keepdims=True) for m in self._masks]


def _joint_mask(masks: Sequence[np.ndarray]) -> np.ndarray:
    n_states = masks[0].shape[0]
    joint = np.ones((n_states,) + tuple(m.shape[1] for m in masks), dtype=bool)
    for i, m in enumerate(masks):
        joint = joint & _expand(m, i, len(masks))
    return joint


def _expand(table: np.ndarray, agent: int, n_agents: int) -> np.ndarray:
    """Reshape an ``(S, A_i)`` table to broadcast against ``(S, A_1..A_N)``."""
    shape = [table.shape[0]] + [1] * n_agents
    shape[agent + 1] = table.shape[1]
    return table.reshape(shape)


def check_policy(game: StochasticGame, pi: Sequence[np.ndarray], tol: float = _POLICY_TOL) -> list[np.ndarray]:
    """Validate a policy profile and return it as a list of float arrays."""
    if len(pi) != game.n_agents:
        raise GameStructureError(f"policy has {len(pi)} agents, game has {game.n_agents}")
    out = []
    for i, (p, mask) in enumerate(zip(pi, game.action_masks)):
        p = np.asarray(p, dtype=float)
        if p.shape != mask.shape:
            raise GameStructureError(f"agent {i} policy shape {p.shape} != {mask.shape}")
        if np.any(p[~mask] != 0.0):
            raise GameStructureError(f"agent {i} puts mass on infeasible actions")
        if np.any(p < -tol) or np.any(p > 1 + tol):
            raise GameStructureError(f"agent {i} has probabilities outside [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > tol):
            raise GameStructureError(f"agent {i} policy rows do not sum to 1")
        out.append(p)
    return out


def check_shapes(game: StochasticGame, pi: Sequence[np.ndarray], v: np.ndarray | None = None) -> None:
    """Structural checks only; probabilities may lie off the simplex."""
    if len(pi) != game.n_agents:
        raise GameStructureError(f"policy has {len(pi)} agents, game has {game.n_agents}")
    for i, (p, mask) in enumerate(zip(pi, game.action_masks)):
        if np.shape(p) != mask.shape:
            raise GameStructureError(f"agent {i} policy shape {np.shape(p)} != {mask.shape}")
    if v is not None and np.shape(v) != (game.n_agents, game.n_states):
        raise GameStructureError(f"values shape {np.shape(v)} != {(game.n_agents, game.n_states)}")


def joint_policy(game: StochasticGame, pi: Sequence[np.ndarray], exclude: int | None = None) -> np.ndarray:
    """``prod_k pi^k(x, a^k)`` over all agents except ``exclude``, shape ``(S, A_1..A_N)``."""
    n = game.n_agents
    w = np.ones((game.n_states,) + game.max_actions)
    for k in range(n):
        if k != exclude:
            w = w * _expand(np.asarray(pi[k], dtype=float), k, n)
    return w


def continuation(game: StochasticGame, v: np.ndarray) -> np.ndarray:
    """``r^j(x, a) + beta * sum_y p(y|x, a) v^j(y)``, shape ``(N, S, A_1..A_N)``."""
    future = np.tensordot(game.transitions, np.asarray(v, dtype=float), axes=([-1], [1]))
    return game.rewards + game.discount * np.moveaxis(future, -1, 0)


def marginalize(game: StochasticGame, table: np.ndarray, pi: Sequence[np.ndarray], agent: int) -> np.ndarray:
    """Expectation of an ``(S, A_1..A_N)`` table over every agent but ``agent``."""
    w = joint_policy(game, pi, exclude=agent)
    axes = tuple(k + 1 for k in range(game.n_agents) if k != agent)
    return (table * w).sum(axis=axes)


def induced_chain(game: StochasticGame, pi: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Markov chain ``P_pi`` (S x S) and expected rewards ``R_pi`` (N x S) under ``pi``."""
    pi = check_policy(game, pi)
    w = joint_policy(game, pi)
    axes = tuple(range(1, game.n_agents + 1))
    p_pi = (w[..., None] * game.transitions).sum(axis=axes)
    r_pi = (game.rewards * w[None]).sum(axis=tuple(a + 1 for a in axes))
    return p_pi, r_pi


def exact_value(game: StochasticGame, pi: Sequence[np.ndarray], discount: float | None = None) -> np.ndarray:
    """Solve ``(I - beta P_pi) v^i = R^i_pi`` for every agent.

    ``discount`` overrides the game's discount factor, allowing 0.
    """
    beta = game.discount if discount is None else float(discount)
    if not 0.0 <= beta < 1.0:
        raise ConfigurationError(f"discount must lie in [0, 1), got {beta}")
    p_pi, r_pi = induced_chain(game, pi)
    lhs = np.eye(game.n_states) - beta * p_pi
    v = np.linalg.solve(lhs, r_pi.T).T
    residual = np.abs(v @ lhs.T - r_pi).max()
    if not np.all(np.isfinite(v)) or residual > _RESIDUAL_TOL * max(1.0, np.abs(r_pi).max()):
        raise NumericalFailure(f"policy evaluation residual {residual:.3e} exceeds tolerance")
    return v


def q_values(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int) -> np.ndarray:
    """Marginal Q-values ``Q^i_{pi^-i}(x, a^i)`` for all states, shape ``(S, A_i)``."""
    check_shapes(game, pi, v)
    cont = continuation(game, v)[agent]
    return np.where(game.action_masks[agent], marginalize(game, cont, pi, agent), 0.0)


def bellman_errors(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int) -> np.ndarray:
    """``g^i_{x, a^i} = Q^i(x, a^i) - v^i(x)``, zero on infeasible actions."""
    q = q_values(game, v, pi, agent)
    return np.where(game.action_masks[agent], q - np.asarray(v)[agent][:, None], 0.0)


def _check_action(game: StochasticGame, agent: int, x: int, a_i: int) -> None:
    if not 0 <= agent < game.n_agents:
        raise GameStructureError(f"no agent {agent}")
    if not 0 <= x < game.n_states:
        raise GameStructureError(f"no state {x}")
    if not 0 <= a_i < game.action_counts[x, agent]:
        raise GameStructureError(f"action {a_i} infeasible for agent {agent} in state {x}")


def q_value(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int, x: int, a_i: int) -> float:
    _check_action(game, agent, x, a_i)
    return float(q_values(game, v, pi, agent)[x, a_i])


def bellman_error(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int, x: int, a_i: int) -> float:
    _check_action(game, agent, x, a_i)
    return float(bellman_errors(game, v, pi, agent)[x, a_i])


def sample_step(game: StochasticGame, x: int, joint_action: Sequence[int], rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Draw the next state from ``p(.|x, a)``; the reward vector is deterministic."""
    if len(joint_action) != game.n_agents:
        raise GameStructureError(f"expected {game.n_agents} actions, got {len(joint_action)}")
    for i, a in enumerate(joint_action):
        _check_action(game, i, x, a)
    key = (x, *joint_action)
    cum = game._cum_rows.get(key)
    if cum is None:
        cum = np.cumsum(game.transitions[key])
        game._cum_rows[key] = cum
    y = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    y = min(y, game.n_states - 1)
    return y, game.rewards[(slice(None), x, *joint_action)].copy()


# -- JSON serialization ------------------------------------------------------


def game_to_dict(game: StochasticGame) -> dict:
    """Joint actions are indexed row-major over per-state action counts (agent 0 slowest)."""
    transitions, rewards = [], []
    for x in range(game.n_states):
        counts = tuple(int(c) for c in game.action_counts[x])
        t_rows, r_rows = [], []
        for joint in np.ndindex(*counts):
            row = game.transitions[(x, *joint)]
            t_rows.append({str(y): float(row[y]) for y in np.flatnonzero(row)})
            r_rows.append([float(r) for r in game.rewards[(slice(None), x, *joint)]])
        transitions.append(t_rows)
        rewards.append(r_rows)
    labels = list(game.state_labels) if game.state_labels else list(range(game.n_states))
    return {
        "n_agents": game.n_agents,
        "states": labels,
        "actions": game.action_counts.tolist(),
        "discount": game.discount,
        "transitions": transitions,
        "rewards": rewards,
    }


def game_from_dict(doc: dict) -> StochasticGame:
    try:
        n_agents = int(doc["n_agents"])
        states = list(doc["states"])
        counts = np.asarray(doc["actions"], dtype=np.int64)
        discount = float(doc["discount"])
        t_doc, r_doc = doc["transitions"], doc["rewards"]
    except (KeyError, TypeError, ValueError) as exc:
        raise GameStructureError(f"malformed game document: {exc}") from exc
    n_states = len(states)
    if counts.shape != (n_states, n_agents):
        raise GameStructureError(f"actions table shape {counts.shape} != {(n_states, n_agents)}")
    if len(t_doc) != n_states or len(r_doc) != n_states:
        raise GameStructureError("transitions/rewards must have one entry per state")
    max_actions = tuple(int(m) for m in counts.max(axis=0))
    trans = np.zeros((n_states, *max_actions, n_states))
    rew = np.zeros((n_agents, n_states, *max_actions))
    for x in range(n_states):
        shape = tuple(int(c) for c in counts[x])
        n_joint = int(np.prod(shape))
        if len(t_doc[x]) != n_joint or len(r_doc[x]) != n_joint:
            raise GameStructureError(f"state {x}: expected {n_joint} joint actions")
        for j, joint in enumerate(np.ndindex(*shape)):
            row = np.zeros(n_states)
            for y, prob in t_doc[x][j].items():
                row[int(y)] = float(prob)
            total = row.sum()
            if abs(total - 1.0) > _LOAD_RENORMALIZE_TOL:
                raise GameStructureError(f"state {x} joint action {j}: probabilities sum to {total!r}")
            # only rescale rows whose drift would fail the constructor's check
            trans[(x, *joint)] = row if abs(total - 1.0) <= _ROW_TOL else row / total
            r = r_doc[x][j]
            if len(r) != n_agents:
                raise GameStructureError(f"state {x} joint action {j}: expected {n_agents} rewards")
            rew[(slice(None), x, *joint)] = r
    return StochasticGame(counts, trans, rew, discount, state_labels=tuple(states))


def save_game(game: StochasticGame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1))


def load_game(path: str | Path) -> StochasticGame:
    return game_from_dict(json.loads(Path(path).read_text()))


def policy_to_list(game: StochasticGame, pi: Sequence[np.ndarray]) -> list:
    """Ragged nested lists ``[agent][state][action]`` holding only feasible actions."""
    return [
        [[float(p) for p in pi[i][x, : game.action_counts[x, i]]] for x in range(game.n_states)]
        for i in range(game.n_agents)
    ]


def policy_from_list(game: StochasticGame, doc: list) -> list[np.ndarray]:
    if len(doc) != game.n_agents:
        raise GameStructureError(f"policy has {len(doc)} agents, game has {game.n_agents}")
    pi = []
    for i, rows in enumerate(doc):
        if len(rows) != game.n_states:
            raise GameStructureError(f"agent {i} policy has {len(rows)} states")
        p = np.zeros(game.action_masks[i].shape)
        for x, row in enumerate(rows):
            if len(row) != game.action_counts[x, i]:
                raise GameStructureError(f"agent {i} state {x}: expected {game.action_counts[x, i]} probabilities")
            p[x, : len(row)] = row
        pi.append(p)
    return check_policy(game, pi)


def random_game(
    rng: np.random.Generator,
    n_agents: int = 2,
    n_states: int = 3,
    n_actions: int | Sequence[int] = 2,
    discount: float = 0.8,
    reward_scale: float = 1.0,
) -> StochasticGame:
    """Game with Dirichlet transitions and uniform rewards, used by tests and examples."""
    counts = np.broadcast_to(np.asarray(n_actions, dtype=np.int64), (n_agents,))
    counts = np.tile(counts, (n_states, 1))
    shape = (n_states, *counts[0])
    trans = rng.dirichlet(np.ones(n_states), size=shape)
    rew = rng.uniform(-reward_scale, reward_scale, size=(n_agents, *shape))
    return StochasticGame(counts, trans, rew, discount)


def random_policy(game: StochasticGame, rng: np.random.Generator) -> list[np.ndarray]:
    pi = []
    for mask in game.action_masks:
        p = np.where(mask, rng.exponential(size=mask.shape), 0.0)
        pi.append(p / p.sum(axis=1, keepdims=True))
    return pi
