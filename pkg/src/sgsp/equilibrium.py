"""Objective, feasibility, SG-SP certificate and policy descent directions.

The objective is the aggregate expected negative Bellman error

    f(v, pi) = sum_j sum_x sum_a pi(x, a) [v^j(x) - r^j(x, a) - beta E_y v^j(y)]

with ``pi(x, a)`` the product of all agents' probabilities. On valid policies
this equals ``sum_i sum_x sum_{a^i} pi^i(x, a^i) [-g^i_{x, a^i}]``; writing
``v^j(x)`` under the joint product makes ``f`` multilinear in the policy
coordinates, so that ``-sum_j g^j_{x, a^i}`` is its exact partial derivative.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .game import (
    ConfigurationError,
    GameStructureError,
    StochasticGame,
    bellman_errors,
    check_shapes,
    continuation,
    joint_policy,
    marginalize,
)

DEFAULT_NU = 1e-4
DEFAULT_ALPHA = 0.5


def objective_f(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]) -> float:
    check_shapes(game, pi, v)
    v = np.asarray(v, dtype=float)
    w = joint_policy(game, pi)
    gap = v.reshape(v.shape + (1,) * game.n_agents) - continuation(game, v)
    return float((w[None] * gap).sum())


def all_bellman_errors(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [bellman_errors(game, v, pi, i) for i in range(game.n_agents)]


def feasibility(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]) -> float:
    """Largest violation of nonnegativity, normalization and ``g <= 0``."""
    check_shapes(game, pi, v)
    worst = -np.inf
    for i, (p, g) in enumerate(zip(pi, all_bellman_errors(game, v, pi))):
        mask = game.action_masks[i]
        p = np.asarray(p, dtype=float)
        worst = max(worst, float((-p[mask]).max()), float(np.abs(p.sum(axis=1) - 1.0).max()), float(g[mask].max()))
    return worst


@dataclass
class SgspReport:
    objective: float
    max_constraint_violation: float
    max_sgsp_violation: float
    tol: float
    certified: bool
    per_entry: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def sgsp_check(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], tol: float) -> SgspReport:
    """Feasibility plus complementarity ``pi^i(x, a^i) g^i_{x, a^i} = 0`` at tolerance ``tol``."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    errors = all_bellman_errors(game, v, pi)
    entries = []
    worst = 0.0
    for i, (p, g) in enumerate(zip(pi, errors)):
        p = np.asarray(p, dtype=float)
        for x, a in zip(*np.nonzero(game.action_masks[i])):
            entries.append((i, int(x), int(a), float(g[x, a]), float(p[x, a])))
        worst = max(worst, float(np.abs(p * g).max()))
    violation = feasibility(game, v, pi)
    return SgspReport(
        objective=objective_f(game, v, pi),
        max_constraint_violation=violation,
        max_sgsp_violation=worst,
        tol=tol,
        certified=bool(violation <= tol and worst <= tol),
        per_entry=entries,
    )


def grad_f_all(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]) -> list[np.ndarray]:
    """``df/dpi^i(x, a^i) = -sum_j g^j_{x, a^i}`` for every agent, zero on infeasible actions."""
    check_shapes(game, pi, v)
    v = np.asarray(v, dtype=float)
    cont = continuation(game, v)
    grads = []
    for i in range(game.n_agents):
        total = np.zeros(game.action_masks[i].shape)
        for j in range(game.n_agents):
            total += marginalize(game, cont[j], pi, i) - v[j][:, None]
        grads.append(np.where(game.action_masks[i], -total, 0.0))
    return grads


def grad_f(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], agent: int, x: int, a_i: int) -> float:
    if not 0 <= a_i < game.action_counts[x, agent]:
        raise GameStructureError(f"action {a_i} infeasible for agent {agent} in state {x}")
    return float(grad_f_all(game, v, pi)[agent][x, a_i])


def bsgn(x, nu: float = DEFAULT_NU):
    """Sign function made continuous by a linear ramp on ``[-nu, nu]``."""
    if nu <= 0:
        raise ConfigurationError(f"nu must be positive, got {nu}")
    out = np.clip(np.asarray(x, dtype=float) / nu, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def project_simplex(weights) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise GameStructureError("project_simplex needs a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise GameStructureError("project_simplex needs finite input")
    return project_rows(w[None, :])[0]


def project_rows(values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Project every row onto the simplex over its ``mask``-ed coordinates."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    u = -np.sort(-np.where(mask, values, -np.inf), axis=1)
    finite = np.isfinite(u)
    cssv = np.cumsum(np.where(finite, u, 0.0), axis=1) - 1.0
    ind = np.arange(1, values.shape[1] + 1)
    cond = finite & (u - cssv / ind > 0)
    rho = cond.sum(axis=1)
    theta = cssv[np.arange(values.shape[0]), rho - 1] / rho
    return np.where(mask, np.maximum(values - theta[:, None], 0.0), 0.0)


def project_list(row: list[float]) -> list[float]:
    """Pure-Python simplex projection for the short rows of online updates."""
    u = sorted(row, reverse=True)
    css = 0.0
    theta = 0.0
    for k, val in enumerate(u, start=1):
        css += val
        t = (css - 1.0) / k
        if val - t > 0:
            theta = t
    return [max(p - theta, 0.0) for p in row]


def descent_directions(
    game: StochasticGame,
    v: np.ndarray,
    pi: Sequence[np.ndarray],
    alpha_prime: float = DEFAULT_ALPHA,
    nu: float = DEFAULT_NU,
) -> list[np.ndarray]:
    """Per-coordinate policy moves ``-pi^alpha' |g^i| bsgn(df/dpi^i)`` for all agents."""
    if alpha_prime < 0.5:
        raise ConfigurationError(f"alpha_prime must be >= 0.5, got {alpha_prime}")
    if nu <= 0:
        raise ConfigurationError(f"nu must be positive, got {nu}")
    errors = all_bellman_errors(game, v, pi)
    grads = grad_f_all(game, v, pi)
    out = []
    for p, g, d in zip(pi, errors, grads):
        weight = np.power(np.maximum(np.asarray(p, dtype=float), 0.0), alpha_prime)
        out.append(-weight * np.abs(g) * np.clip(d / nu, -1.0, 1.0))
    return out


def descent_direction(
    game: StochasticGame,
    v: np.ndarray,
    pi: Sequence[np.ndarray],
    agent: int,
    x: int,
    a_i: int,
    alpha_prime: float = DEFAULT_ALPHA,
    nu: float = DEFAULT_NU,
) -> float:
    if not 0 <= a_i < game.action_counts[x, agent]:
        raise GameStructureError(f"action {a_i} infeasible for agent {agent} in state {x}")
    return float(descent_directions(game, v, pi, alpha_prime, nu)[agent][x, a_i])
