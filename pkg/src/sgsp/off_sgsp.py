"""Model-based two-timescale actor-critic (OFF-SGSP).

Each iteration does a synchronous critic sweep on the values and an actor
sweep on the policies, both computed from the same ``(v_n, pi_n)``.
"""

from __future__ import annotations

import logging
import time
from typing import Sequence

import numpy as np

from .config import SgspConfig
from .equilibrium import objective_f, project_rows, sgsp_check
from .game import (
    RNG_ALGORITHM,
    ConfigurationError,
    NumericalFailure,
    StochasticGame,
    check_policy,
    check_shapes,
    continuation,
    joint_policy,
)
from .trace import RunTrace

log = logging.getLogger(__name__)


def _marginals(game: StochasticGame, cont: np.ndarray, pi: Sequence[np.ndarray], agent: int) -> np.ndarray:
    """Every agent's continuation value marginalized over all agents but ``agent``: ``(N, S, A_agent)``."""
    w = joint_policy(game, pi, exclude=agent)
    axes = tuple(k + 2 for k in range(game.n_agents) if k != agent)
    return (cont * w[None]).sum(axis=axes)


def _sweep_terms(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray]):
    """Bellman errors ``g^i`` and gradients ``-sum_j g^j`` from a single continuation pass."""
    cont = continuation(game, v)
    errors, grads = [], []
    for i in range(game.n_agents):
        gap = _marginals(game, cont, pi, i) - v[:, :, None]
        mask = game.action_masks[i]
        errors.append(np.where(mask, gap[i], 0.0))
        grads.append(np.where(mask, -gap.sum(axis=0), 0.0))
    return errors, grads


def _critic(v: np.ndarray, pi: Sequence[np.ndarray], errors: list[np.ndarray], c_n: float) -> np.ndarray:
    drift = np.stack([(p * g).sum(axis=1) for p, g in zip(pi, errors)])
    return v + c_n * drift


def _actor(game, pi, errors, grads, b_n: float, alpha_prime: float, nu: float) -> list[np.ndarray]:
    out = []
    for i, (p, g, d) in enumerate(zip(pi, errors, grads)):
        step = np.power(p, alpha_prime) * np.abs(g) * np.clip(d / nu, -1.0, 1.0)
        out.append(project_rows(p - b_n * step, game.action_masks[i]))
    return out


def critic_step(game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], c_n: float) -> np.ndarray:
    """``v^i(x) += c_n * sum_{a^i} pi^i(x, a^i) g^i_{x, a^i}`` for all agents and states."""
    if not 0.0 < c_n <= 1.0:
        raise ConfigurationError(f"c_n must lie in (0, 1], got {c_n}")
    v = np.asarray(v, dtype=float)
    check_shapes(game, pi, v)
    errors, _ = _sweep_terms(game, v, pi)
    return _critic(v, pi, errors, c_n)


def actor_step(
    game: StochasticGame, v: np.ndarray, pi: Sequence[np.ndarray], b_n: float, config: SgspConfig
) -> list[np.ndarray]:
    """Move every coordinate along its descent direction, then project each row."""
    v = np.asarray(v, dtype=float)
    pi = check_policy(game, pi)
    errors, grads = _sweep_terms(game, v, pi)
    return _actor(game, pi, errors, grads, b_n, config.alpha_prime, config.nu)


def perturb(pi: Sequence[np.ndarray], delta: float, masks: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """The delta-offset policy ``(pi + delta) / sum(pi + delta)`` over feasible actions."""
    if delta < 0:
        raise ConfigurationError(f"delta must be >= 0, got {delta}")
    out = []
    for i, p in enumerate(pi):
        p = np.asarray(p, dtype=float)
        mask = np.ones(p.shape, dtype=bool) if masks is None else masks[i]
        shifted = np.where(mask, p + delta, 0.0)
        out.append(shifted / shifted.sum(axis=-1, keepdims=True))
    return out


def run_off_sgsp(
    game: StochasticGame,
    init_v: np.ndarray,
    init_pi: Sequence[np.ndarray],
    config: SgspConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[np.ndarray], RunTrace]:
    """Run OFF-SGSP until ``config.max_iters`` or convergence.

    Convergence means an SG-SP certificate at ``convergence_tol`` together
    with ``|f| <= convergence_tol``, checked every ``snapshot_every`` iterations.

    Every ``perturb_period`` iterations the policy is replaced by its
    ``perturb_delta``-offset version. ``rng`` is accepted for interface
    symmetry; the iteration itself is deterministic.
    """
    v = np.array(init_v, dtype=float)
    check_shapes(game, init_pi, v)
    pi = check_policy(game, [np.array(p, dtype=float) for p in init_pi])
    trace = RunTrace(
        metadata={"algorithm": "off-sgsp", "config": config.to_dict(), "rng": RNG_ALGORITHM},
    )
    start = time.perf_counter()

    def snapshot(n: int) -> bool:
        report = sgsp_check(game, v, pi, config.convergence_tol)
        trace.record(n, "f", report.objective)
        trace.record(n, "max_sgsp_violation", report.max_sgsp_violation)
        trace.record(n, "max_constraint_violation", report.max_constraint_violation)
        trace.record(n, "wall_clock_ms", 1000 * (time.perf_counter() - start))
        return report.certified and abs(report.objective) <= config.convergence_tol

    converged = snapshot(0)
    n = 0
    while n < config.max_iters and not converged:
        n += 1
        errors, grads = _sweep_terms(game, v, pi)
        v_next = _critic(v, pi, errors, config.step_c(n))
        pi = _actor(game, pi, errors, grads, config.step_b(n), config.alpha_prime, config.nu)
        v = v_next
        if not np.all(np.isfinite(v)):
            trace.final = {"aborted_at": n}
            raise NumericalFailure(f"off-sgsp values diverged at iteration {n}")
        if n % config.snapshot_every == 0 or n == config.max_iters:
            converged = snapshot(n)
            log.debug("off-sgsp n=%d f=%.6g", n, trace.rows[-4][2])
        # a converged run stops on the unperturbed point
        if not converged and config.perturb_delta > 0 and n % config.perturb_period == 0:
            pi = perturb(pi, config.perturb_delta, game.action_masks)
    trace.final = {
        "iterations": n,
        "converged": converged,
        "objective": objective_f(game, v, pi),
        "values": v,
        "policy": pi,
    }
    return v, pi, trace
