"""Antithetic natural-evolution-strategies optimizer.

Each iteration draws N Gaussian directions, evaluates the objective at
theta +/- sigma * eps_i (2N candidate evaluations), and forms the search
gradient

    g = (1 / (N * sigma)) * sum_i [J(theta + sigma eps_i) - J(theta - sigma eps_i)] * eps_i

followed by the update theta <- clip(theta - alpha * g, 0, 255). The
estimator's expectation is twice the smoothed gradient (the antithetic 1/2
is deliberately absent and absorbed into alpha). Candidate evaluations may
run concurrently; every candidate owns a derived rng stream and the gradient
reduction runs in a fixed order, so results are bit-identical regardless of
the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .patch import Patch, VALUE_MAX, VALUE_MIN
from .rng import RngStream

PLATEAU_MIN_IMPROVEMENT = 1e-4

Objective = Callable[[np.ndarray, RngStream], float]


@dataclass(frozen=True)
class NesConfig:
    population_n: int = 20
    sigma: float = 0.1
    alpha: float = 0.02
    iterations: int = 150
    early_stop_loss: float | None = None
    plateau_window: int | None = None
    seed: int = 0
    parallelism: int = 1
    checkpoint_every: int = 50

    def __post_init__(self) -> None:
        if self.population_n < 1:
            raise ValueError("population_n must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be strictly positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be strictly positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be at least 1")


@dataclass
class OptState:
    theta: np.ndarray
    iteration: int = 0
    best_loss: float = math.inf
    best_theta: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list)
    candidate_evals: int = 0
    oracle_queries: int = 0


@dataclass(frozen=True)
class OptResult:
    best_theta: np.ndarray
    best_loss: float
    loss_history: tuple[float, ...]
    iterations_completed: int
    candidate_evals: int
    oracle_queries: int
    status: str  # completed | early_stop_loss | plateau | aborted
    error: str | None = None


class PartialEvaluationError(Exception):
    """A candidate evaluation failed; the iteration was abandoned without
    mutating optimizer state."""

    def __init__(self, iteration: int, candidate: int, cause: Exception):
        super().__init__(
            f"iteration {iteration}, candidate {candidate}: evaluation failed: {cause}"
        )
        self.iteration = iteration
        self.candidate = candidate
        self.cause = cause


def _clip(theta: np.ndarray) -> np.ndarray:
    return np.clip(theta, VALUE_MIN, VALUE_MAX)


def _evaluate_direction_pairs(
    theta: np.ndarray,
    objective: Objective,
    cfg: NesConfig,
    rng: RngStream,
    iteration: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate all 2N candidates; returns (eps, losses[2N]) with losses
    ordered (J+_1, J-_1, J+_2, J-_2, ...)."""
    n = cfg.population_n
    eps = rng.derive(0).generator().standard_normal((n,) + theta.shape)
    jobs = []
    for i in range(n):
        for sign_idx, sign in enumerate((1.0, -1.0)):
            cand = _clip(theta + sign * cfg.sigma * eps[i])
            jobs.append((2 * i + sign_idx, cand, rng.derive(1, i, sign_idx)))

    losses = np.empty(2 * n, dtype=np.float64)

    def run(job):
        idx, cand, stream = job
        try:
            return idx, float(objective(cand, stream))
        except Exception as exc:
            raise PartialEvaluationError(iteration, idx, exc) from exc

    if cfg.parallelism == 1:
        for job in jobs:
            idx, loss = run(job)
            losses[idx] = loss
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            for idx, loss in pool.map(run, jobs):
                losses[idx] = loss
    return eps, losses


def _gradient_from_pairs(eps: np.ndarray, losses: np.ndarray, cfg: NesConfig) -> np.ndarray:
    g = np.zeros_like(eps[0])
    for i in range(cfg.population_n):
        g += (losses[2 * i] - losses[2 * i + 1]) * eps[i]
    g /= cfg.population_n * cfg.sigma
    return g


def estimate_gradient(
    theta: np.ndarray, objective: Objective, cfg: NesConfig, rng: RngStream
) -> np.ndarray:
    """Antithetic search-gradient estimate at theta (assumed clipped)."""
    eps, losses = _evaluate_direction_pairs(theta, objective, cfg, rng, iteration=-1)
    return _gradient_from_pairs(eps, losses, cfg)


def step(state: OptState, objective: Objective, cfg: NesConfig) -> OptState:
    """One optimizer iteration: estimate the gradient around state.theta,
    update with clipping, and record counters/history. Raises
    PartialEvaluationError (state untouched) if any evaluation fails."""
    rng = RngStream(cfg.seed).derive(state.iteration)
    eps, losses = _evaluate_direction_pairs(
        state.theta, objective, cfg, rng, iteration=state.iteration
    )
    g = _gradient_from_pairs(eps, losses, cfg)
    mean_loss = float(losses.mean())

    next_state = OptState(
        theta=_clip(state.theta - cfg.alpha * g),
        iteration=state.iteration + 1,
        best_loss=state.best_loss,
        best_theta=state.best_theta,
        loss_history=state.loss_history + [mean_loss],
        candidate_evals=state.candidate_evals + 2 * cfg.population_n,
        oracle_queries=state.oracle_queries
        + 2 * cfg.population_n * getattr(objective, "queries_per_eval", 0),
    )
    if mean_loss < next_state.best_loss:
        next_state.best_loss = mean_loss
        next_state.best_theta = state.theta.copy()
    return next_state


def _plateaued(history: list[float], window: int) -> bool:
    if len(history) < 2 * window:
        return False
    recent = min(history[-window:])
    earlier = min(history[: len(history) - window])
    return earlier - recent <= PLATEAU_MIN_IMPROVEMENT


def optimize(
    initial: Patch | np.ndarray,
    objective: Objective,
    cfg: NesConfig,
    sink: Callable[[OptState], None] | None = None,
) -> OptResult:
    """Run the full optimization loop.

    Accepts either a Patch (returned best parameters keep its physical size)
    or a raw parameter array. Emits a checkpoint to ``sink`` every
    ``cfg.checkpoint_every`` iterations and after the final one. On an oracle
    hard failure the best parameters so far are returned with an aborted
    status instead of raising.
    """
    patch_template = initial if isinstance(initial, Patch) else None
    theta0 = initial.values if isinstance(initial, Patch) else np.asarray(initial, dtype=np.float64)
    state = OptState(theta=_clip(theta0.astype(np.float64)))

    status = "completed"
    error = None
    for _ in range(cfg.iterations):
        try:
            state = step(state, objective, cfg)
        except PartialEvaluationError as exc:
            status = "aborted"
            error = str(exc)
            break
        if sink is not None and (
            state.iteration % cfg.checkpoint_every == 0 or state.iteration == cfg.iterations
        ):
            sink(state)
        if cfg.early_stop_loss is not None and state.best_loss <= cfg.early_stop_loss:
            status = "early_stop_loss"
            break
        if cfg.plateau_window is not None and _plateaued(state.loss_history, cfg.plateau_window):
            status = "plateau"
            break

    best_theta = state.best_theta if state.best_theta is not None else state.theta
    if patch_template is not None:
        best_theta_out: np.ndarray | Patch = replace_values(patch_template, best_theta)
    else:
        best_theta_out = best_theta
    return OptResult(
        best_theta=best_theta_out,
        best_loss=state.best_loss,
        loss_history=tuple(state.loss_history),
        iterations_completed=state.iteration,
        candidate_evals=state.candidate_evals,
        oracle_queries=state.oracle_queries,
        status=status,
        error=error,
    )


def replace_values(template: Patch, values: np.ndarray) -> Patch:
    return Patch(values, template.physical_width, template.physical_height)
