"""Benchmark games: the single-state Hart game and the Stick-Together Game (STG).

Model-free learners talk to environments through a small interface:
``reset(rng) -> state``, ``step(joint_action, rng) -> (rewards, next_state)``,
``n_actions(agent, state)``, plus ``n_agents``/``n_states`` attributes.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .game import ConfigurationError, GameStructureError, StochasticGame, sample_step

# Payoffs (row player, column player) indexed by [a^1][a^2].
HART_PAYOFFS = (
    ((1, 0), (0, 1), (1, 0)),
    ((0, 1), (1, 0), (1, 0)),
    ((0, 1), (0, 1), (1, 1)),
)
HART_PURE_NE = ((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
HART_MIXED_NE = ((0.5, 0.5, 0.0), (0.5, 0.5, 0.0))

# stay, then unit moves; the first entry must stay (0, 0)
MOVES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


def build_hart_game(discount: float = 0.8) -> StochasticGame:
    payoffs = np.asarray(HART_PAYOFFS, dtype=float)
    rewards = np.moveaxis(payoffs, -1, 0)[:, None]
    transitions = np.ones((1, 3, 3, 1))
    return StochasticGame(np.array([[3, 3]]), transitions, rewards, discount, state_labels=("x",))


class GameEnv:
    """Generative-model view of a tabular game, starting from ``start_state``
    (or a uniformly random state when ``None``)."""

    def __init__(self, game: StochasticGame, start_state: int | None = None):
        self.game = game
        self.n_agents = game.n_agents
        self.n_states = game.n_states
        self.discount = game.discount
        self.start_state = start_state
        self._counts = game.action_counts.tolist()
        self.state = 0

    def n_actions(self, agent: int, state: int) -> int:
        return self._counts[state][agent]

    def reset(self, rng: np.random.Generator) -> int:
        if self.start_state is None:
            self.state = int(rng.integers(self.n_states))
        else:
            self.state = self.start_state
        return self.state

    def step(self, joint_action: Sequence[int], rng: np.random.Generator) -> tuple[list[float], int]:
        y, reward = sample_step(self.game, self.state, tuple(joint_action), rng)
        self.state = y
        return reward.tolist(), y


class StgKernel:
    """Per-agent grid dynamics of the Stick-Together Game on an ``M x M`` grid.

    Cells are indexed ``row * M + col``. An action moves toward
    ``target = s + a``; the next cell is drawn from the on-grid neighbourhood
    ``U(s)`` (including ``s``) with weight ``2 ** -|s' - target|_1``.
    """

    def __init__(self, size: int):
        if size < 2:
            raise ConfigurationError(f"grid size must be at least 2, got {size}")
        self.size = size
        self.n_cells = size * size
        self.actions: list[list[tuple[int, int]]] = []
        self.outcomes: list[list[list[int]]] = []
        self.probs: list[list[list[float]]] = []
        self.cum_probs: list[list[list[float]]] = []
        for cell in range(self.n_cells):
            r, c = divmod(cell, size)
            moves = [m for m in MOVES if self.on_grid(r + m[0], c + m[1])]
            neigh = [(r + m[0], c + m[1]) for m in MOVES if self.on_grid(r + m[0], c + m[1])]
            outs, probs, cums = [], [], []
            for m in moves:
                tr, tc = r + m[0], c + m[1]
                weights = [2.0 ** -(abs(nr - tr) + abs(nc - tc)) for nr, nc in neigh]
                total = math.fsum(weights)
                p = [w / total for w in weights]
                outs.append([nr * size + nc for nr, nc in neigh])
                probs.append(p)
                cums.append(list(np.cumsum(p)))
            self.actions.append(moves)
            self.outcomes.append(outs)
            self.probs.append(probs)
            self.cum_probs.append(cums)

    def on_grid(self, r: int, c: int) -> bool:
        return 0 <= r < self.size and 0 <= c < self.size

    def position(self, cell: int) -> tuple[int, int]:
        return divmod(cell, self.size)

    def distance(self, cell1: int, cell2: int) -> int:
        r1, c1 = divmod(cell1, self.size)
        r2, c2 = divmod(cell2, self.size)
        return abs(r1 - r2) + abs(c1 - c2)

    def transition_row(self, cell: int, action: int) -> dict[int, float]:
        return dict(zip(self.outcomes[cell][action], self.probs[cell][action]))

    def sample(self, cell: int, action: int, u: float) -> int:
        cum = self.cum_probs[cell][action]
        for k, edge in enumerate(cum):
            if u < edge:
                return self.outcomes[cell][action][k]
        return self.outcomes[cell][action][-1]


def stg_reward(distance: float) -> float:
    return 1.0 - math.exp(distance)


def build_stg(size: int, discount: float = 0.8) -> StochasticGame:
    """Tabular STG over joint states ``cell1 * M^2 + cell2``.

    The table has ``M^4 * 25 * M^4`` entries; intended for ``M <= 4``.
    """
    kernel = StgKernel(size)
    n_cells = kernel.n_cells
    n_states = n_cells * n_cells
    counts = np.zeros((n_states, 2), dtype=np.int64)
    trans = np.zeros((n_states, 5, 5, n_states))
    rewards = np.zeros((2, n_states, 5, 5))
    per_agent = [np.zeros((len(kernel.actions[c]), n_cells)) for c in range(n_cells)]
    for c in range(n_cells):
        for a, row in enumerate(per_agent[c]):
            row[kernel.outcomes[c][a]] = kernel.probs[c][a]
    labels = []
    for c1 in range(n_cells):
        for c2 in range(n_cells):
            x = c1 * n_cells + c2
            n1, n2 = len(kernel.actions[c1]), len(kernel.actions[c2])
            counts[x] = (n1, n2)
            q1, q2 = per_agent[c1], per_agent[c2]
            trans[x, :n1, :n2] = (q1[:, None, :, None] * q2[None, :, None, :]).reshape(n1, n2, n_states)
            rewards[:, x, :n1, :n2] = stg_reward(kernel.distance(c1, c2))
            labels.append((kernel.position(c1), kernel.position(c2)))
    return StochasticGame(counts, trans, rewards, discount, state_labels=tuple(labels))


class StgEnv:
    """Procedural STG environment; the state never needs a dense table."""

    def __init__(self, size: int, discount: float = 0.8):
        self.kernel = StgKernel(size)
        self.size = size
        self.discount = discount
        self.n_agents = 2
        self.n_states = self.kernel.n_cells**2
        self.cells = (0, 0)

    @property
    def state(self) -> int:
        return self.cells[0] * self.kernel.n_cells + self.cells[1]

    def n_actions(self, agent: int, state: int) -> int:
        cell = divmod(state, self.kernel.n_cells)[agent]
        return len(self.kernel.actions[cell])

    def distance(self) -> int:
        return self.kernel.distance(*self.cells)

    def positions(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return self.kernel.position(self.cells[0]), self.kernel.position(self.cells[1])

    def reset(self, rng: np.random.Generator) -> int:
        self.cells = (int(rng.integers(self.kernel.n_cells)), int(rng.integers(self.kernel.n_cells)))
        return self.state

    def _move(self, joint_action: Sequence[int], rng: np.random.Generator) -> float:
        c1, c2 = self.cells
        n1 = self.kernel.sample(c1, joint_action[0], rng.random())
        n2 = self.kernel.sample(c2, joint_action[1], rng.random())
        reward = stg_reward(self.kernel.distance(c1, c2))
        self.cells = (n1, n2)
        return reward

    def step(self, joint_action: Sequence[int], rng: np.random.Generator) -> tuple[list[float], int]:
        reward = self._move(joint_action, rng)
        return [reward, reward], self.state


def delta_index(pos1: tuple[int, int], pos2: tuple[int, int], size: int) -> int:
    return abs(pos1[0] - pos2[0]) * size + abs(pos1[1] - pos2[1])


class DeltaEnv:
    """STG seen through the coordinate-wise distance ``(|dr|, |dc|)`` between agents.

    Learners get ``M^2`` aggregated states and the full five-move action set in
    every state; moves that would leave the grid are executed as "stay". The
    joint positions still evolve underneath.
    """

    def __init__(self, stg: StgEnv):
        self.base = stg
        self.size = stg.size
        self.discount = stg.discount
        self.n_agents = 2
        self.n_states = stg.size * stg.size

    @property
    def state(self) -> int:
        return delta_index(*self.base.positions(), self.size)

    def n_actions(self, agent: int, state: int) -> int:
        return len(MOVES)

    def distance(self) -> int:
        return self.base.distance()

    def reset(self, rng: np.random.Generator) -> int:
        self.base.reset(rng)
        return self.state

    def _feasible(self, cell: int, move: int) -> int:
        wanted = MOVES[move]
        acts = self.base.kernel.actions[cell]
        return acts.index(wanted) if wanted in acts else 0

    def step(self, joint_action: Sequence[int], rng: np.random.Generator) -> tuple[list[float], int]:
        c1, c2 = self.base.cells
        mapped = (self._feasible(c1, joint_action[0]), self._feasible(c2, joint_action[1]))
        reward = self.base._move(mapped, rng)
        return [reward, reward], self.state


def wrap_delta(stg: StgEnv) -> DeltaEnv:
    return DeltaEnv(stg)


def avg_distance(window: Iterable) -> float:
    """Mean L1 distance over a window of position pairs ``((r1, c1), (r2, c2))``
    or of precomputed distances."""
    total = 0.0
    count = 0
    for item in window:
        if isinstance(item, (int, float, np.integer, np.floating)):
            total += float(item)
        else:
            (r1, c1), (r2, c2) = item
            total += abs(r1 - r2) + abs(c1 - c2)
        count += 1
    if count == 0:
        raise GameStructureError("avg_distance needs a non-empty window")
    return total / count
