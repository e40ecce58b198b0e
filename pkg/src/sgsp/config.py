"""Step-size schedules and solver configuration shared by both SGSP algorithms."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from .game import ConfigurationError


@dataclass(frozen=True)
class StepSchedule:
    """``warm_value`` for ``n < warmup``, ``scale / n**exponent`` afterwards."""

    warm_value: float
    exponent: float
    warmup: int = 1000
    scale: float = 1.0

    def __call__(self, n: int) -> float:
        if n < self.warmup:
            return self.warm_value
        return self.scale / n**self.exponent

    def diverges(self) -> bool:
        return self.exponent <= 1.0

    def square_summable(self) -> bool:
        return self.exponent > 0.5


def satisfies_two_timescale(policy: StepSchedule, value: StepSchedule) -> bool:
    """Both sums diverge, squares converge and policy/value steps -> 0."""
    return (
        policy.diverges()
        and value.diverges()
        and policy.square_summable()
        and value.square_summable()
        and policy.exponent > value.exponent
    )


# Policy on the slow timescale, values on the fast one.
DEFAULT_POLICY_STEPS = StepSchedule(0.2, 1.0)
DEFAULT_VALUE_STEPS = StepSchedule(0.1, 0.75)
# The schedule pair exactly as printed alongside the experiments.
PAPER_POLICY_STEPS = StepSchedule(0.2, 0.75)
PAPER_VALUE_STEPS = StepSchedule(0.1, 1.0)


@dataclass(frozen=True)
class SgspConfig:
    max_iters: int = 100_000
    step_b: StepSchedule = field(default=DEFAULT_POLICY_STEPS)
    step_c: StepSchedule = field(default=DEFAULT_VALUE_STEPS)
    nu: float = 1e-4
    alpha_prime: float = 0.5
    perturb_period: int = 1000
    perturb_delta: float = 0.05
    # on-line exploration: steps of each period that act with the delta-offset policy
    perturb_window: int = 100
    convergence_tol: float = 0.05
    snapshot_every: int = 1000

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be >= 0")
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")
        if self.alpha_prime < 0.5:
            raise ConfigurationError("alpha_prime must be >= 0.5")
        if self.perturb_period < 1 or self.snapshot_every < 1:
            raise ConfigurationError("perturb_period and snapshot_every must be positive")
        if self.perturb_delta < 0 or not 0 <= self.perturb_window <= self.perturb_period:
            raise ConfigurationError("need perturb_delta >= 0 and 0 <= perturb_window <= perturb_period")
        if self.convergence_tol <= 0:
            raise ConfigurationError("convergence_tol must be positive")

    @classmethod
    def paper_timescales(cls, **kwargs) -> "SgspConfig":
        return cls(step_b=PAPER_POLICY_STEPS, step_c=PAPER_VALUE_STEPS, **kwargs)

    def with_(self, **kwargs) -> "SgspConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SgspConfig":
        doc = dict(doc)
        for key in ("step_b", "step_c"):
            if key in doc and isinstance(doc[key], dict):
                doc[key] = StepSchedule(**doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
