"""Comparison learners: NashQ and Friend-Q, plus the bimatrix Nash solver NashQ needs.

Both learners explore epsilon-greedily with ``eps = 0.1 / sqrt(visits(x))``
and emit the same trace metrics as the ON-SGSP self-play driver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SgspConfig
from .game import RNG_ALGORITHM, ConfigurationError, NumericalFailure
from .on_sgsp import PolicyRecorder
from .trace import RunTrace

EPSILON = 0.1
_NE_TOL = 1e-9


def epsilon(visits: int) -> float:
    return EPSILON / math.sqrt(max(visits, 1))


def best_response_gaps(A: np.ndarray, B: np.ndarray, p: np.ndarray, q: np.ndarray) -> tuple[float, float]:
    row = A @ q
    col = p @ B
    return float(row.max() - p @ row), float(col.max() - col @ q)


def _solve_support(M: np.ndarray, rows, cols) -> np.ndarray | None:
    """Mixed strategy on ``cols`` making every row in ``rows`` indifferent under ``M``."""
    sub = M[list(rows)][:, list(cols)]
    k = len(cols)
    lhs = np.zeros((len(rows) + 1, k + 1))
    lhs[:-1, :k] = sub
    lhs[:-1, k] = -1.0
    lhs[-1, :k] = 1.0
    rhs = np.zeros(len(rows) + 1)
    rhs[-1] = 1.0
    if len(rows) == k:
        try:
            sol = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    else:
        sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.abs(lhs @ sol - rhs).max() > _NE_TOL or sol[:k].min() < -_NE_TOL:
        return None
    return np.clip(sol[:k], 0.0, None)


def _support_pairs(m: int, k: int):
    """Equal-size supports first (enough for nondegenerate games), then the
    unequal ones degenerate games may need; smaller sizes before larger."""
    equal = [(s, s) for s in range(1, min(m, k) + 1)]
    unequal = sorted(
        ((s, t) for s in range(1, m + 1) for t in range(1, k + 1) if s != t), key=lambda st: (max(st), sum(st), st)
    )
    for s, t in equal + unequal:
        for rows in itertools.combinations(range(m), s):
            for cols in itertools.combinations(range(k), t):
                yield rows, cols


def bimatrix_nash(A, B) -> tuple[np.ndarray, np.ndarray]:
    """First Nash equilibrium found by support enumeration (see ``_support_pairs``
    for the order; lexicographic within a size), verified to 1e-9."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape != B.shape or min(A.shape) < 1:
        raise ConfigurationError(f"payoff matrices must share a 2-d shape, got {A.shape} and {B.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ConfigurationError("payoffs must be finite")
    m, k = A.shape
    # pure equilibria are by far the common case; check them all at once
    pure = (A >= A.max(axis=0, keepdims=True) - _NE_TOL) & (B >= B.max(axis=1, keepdims=True) - _NE_TOL)
    hits = np.argwhere(pure)
    if len(hits):
        p = np.zeros(m)
        q = np.zeros(k)
        p[hits[0][0]] = 1.0
        q[hits[0][1]] = 1.0
        return p, q
    for rows, cols in _support_pairs(m, k):
        if len(rows) == 1 and len(cols) == 1:
            continue
        q_s = _solve_support(A, rows, cols)
        if q_s is None:
            continue
        p_s = _solve_support(B.T, cols, rows)
        if p_s is None:
            continue
        p = np.zeros(m)
        q = np.zeros(k)
        p[list(rows)] = p_s / p_s.sum()
        q[list(cols)] = q_s / q_s.sum()
        if max(best_response_gaps(A, B, p, q)) <= _NE_TOL:
            return p, q
    raise NumericalFailure("support enumeration found no verified equilibrium")


@dataclass
class JointQTable:
    """Per-state tables ``q[x][j]`` over the joint action space at ``x``."""

    q: list

    @classmethod
    def zeros(cls, env) -> "JointQTable":
        tables = []
        for x in range(env.n_states):
            counts = tuple(env.n_actions(i, x) for i in range(env.n_agents))
            tables.append(np.zeros((env.n_agents, *counts)))
        return cls(tables)

    def max_abs(self) -> float:
        return max(float(np.abs(t).max()) for t in self.q)


def _padded(env, rows_per_agent) -> list[np.ndarray]:
    out = []
    for i, rows in enumerate(rows_per_agent):
        width = max(env.n_actions(i, x) for x in range(env.n_states))
        arr = np.zeros((env.n_states, width))
        for x, r in enumerate(rows):
            arr[x, : len(r)] = r
        out.append(arr)
    return out


def _sample(row: np.ndarray, u: float) -> int:
    cum = np.cumsum(row)
    return min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(row) - 1)


def _explore_or(x_visits: int, k: int, rng: np.random.Generator, greedy) -> int:
    if rng.random() < epsilon(x_visits):
        return int(rng.integers(k))
    return greedy()


def nashq_run(env, config: SgspConfig, rng: np.random.Generator, max_steps: int | None = None):
    """Two-agent NashQ with learning rate ``1 / n(x, a)``.

    Each agent's greedy behaviour is its component of the selected stage-game
    equilibrium of ``(Q^1(x), Q^2(x))``; both agents see the same data, so a
    single shared pair of tables stands in for the two identical copies.
    """
    if env.n_agents != 2:
        raise ConfigurationError("nashq_run supports exactly 2 agents")
    max_steps = config.max_iters if max_steps is None else max_steps
    beta = env.discount
    table = JointQTable.zeros(env)
    counts = [np.zeros(t.shape[1:], dtype=np.int64) for t in table.q]
    visits = [0] * env.n_states
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def equilibrium(x: int):
        if x not in cache:
            cache[x] = bimatrix_nash(table.q[x][0], table.q[x][1])
        return cache[x]

    def policies():
        eqs = [equilibrium(x) for x in range(env.n_states)]
        return _padded(env, [[e[0] for e in eqs], [e[1] for e in eqs]])

    trace = RunTrace(metadata={"algorithm": "nashq", "config": config.to_dict(), "rng": RNG_ALGORITHM})
    recorder = PolicyRecorder(env, trace)
    recorder.snapshot(0, policies())
    x = env.reset(rng)
    for n in range(1, max_steps + 1):
        strat = equilibrium(x)
        joint = tuple(
            _explore_or(visits[x], len(strat[i]), rng, lambda i=i: _sample(strat[i], rng.random())) for i in range(2)
        )
        recorder.tick()
        rewards, y = env.step(joint, rng)
        visits[x] += 1
        counts[x][joint] += 1
        alpha = 1.0 / counts[x][joint]
        p, q = equilibrium(y)
        q_x = table.q[x]
        for j in range(2):
            target = rewards[j] + beta * float(p @ table.q[y][j] @ q)
            q_x[(j, *joint)] += alpha * (target - q_x[(j, *joint)])
        if not np.all(np.isfinite(q_x)):
            raise NumericalFailure(f"nashq: non-finite Q at state {x}, step {n}")
        cache.pop(x, None)
        x = y
        if n % config.snapshot_every == 0:
            recorder.snapshot(n, policies())
    final = policies()
    trace.final = {"steps": max_steps, "policy": final}
    return final, trace


def friendq_run(env, config: SgspConfig, rng: np.random.Generator, max_steps: int | None = None):
    """Friend-Q: every agent backs up ``max_a' Q^j(y, a')`` over joint actions
    and greedily plays its own component of that argmax (first in row-major order)."""
    max_steps = config.max_iters if max_steps is None else max_steps
    beta = env.discount
    n_agents = env.n_agents
    table = JointQTable.zeros(env)
    visits = [0] * env.n_states

    def greedy(x: int, i: int) -> int:
        t = table.q[x][i]
        return int(np.unravel_index(int(np.argmax(t)), t.shape)[i])

    def policies():
        rows = []
        for i in range(n_agents):
            per_state = []
            for x in range(env.n_states):
                r = np.zeros(env.n_actions(i, x))
                r[greedy(x, i)] = 1.0
                per_state.append(r)
            rows.append(per_state)
        return _padded(env, rows)

    trace = RunTrace(metadata={"algorithm": "friendq", "config": config.to_dict(), "rng": RNG_ALGORITHM})
    recorder = PolicyRecorder(env, trace)
    recorder.snapshot(0, policies())
    x = env.reset(rng)
    for n in range(1, max_steps + 1):
        joint = tuple(
            _explore_or(visits[x], env.n_actions(i, x), rng, lambda i=i: greedy(x, i)) for i in range(n_agents)
        )
        recorder.tick()
        rewards, y = env.step(joint, rng)
        visits[x] += 1
        c_n = config.step_c(n)
        q_x, q_y = table.q[x], table.q[y]
        for j in range(n_agents):
            target = rewards[j] + beta * float(q_y[j].max())
            q_x[(j, *joint)] += c_n * (target - q_x[(j, *joint)])
        if not np.all(np.isfinite(q_x)):
            raise NumericalFailure(f"friendq: non-finite Q at state {x}, step {n}")
        x = y
        if n % config.snapshot_every == 0:
            recorder.snapshot(n, policies())
    final = policies()
    trace.final = {"steps": max_steps, "policy": final}
    return final, trace
