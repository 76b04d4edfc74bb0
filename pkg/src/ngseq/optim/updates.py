"""The four parameter updates: SGD, HF, DSAG-HF and natural gradient.

Every update takes an `Objective`, the current parameters, a batch of whole
utterances, the method's config and the mutable `OptimizerState`, and
returns the new parameters plus an `UpdateRecord`. Second-order updates
share one code path: sample the curvature batch, build the operator, solve
with CG, backtrack if the batch loss went up, then adapt λ.
"""

from __future__ import annotations

import logging
import time
from typing import Any, Callable, Dict, Protocol, Sequence

import numpy as np

from ngseq.curvature import CurvatureOperator, EmpiricalFisherOperator
from ngseq.errors import CGAbort, ConfigurationError
from ngseq.optim.cg import CGResult, cg_solve
from ngseq.optim.config import OptimizerConfig, OptimizerMethod, OptimizerState, UpdateRecord
from ngseq.optim.objective import Objective

logger = logging.getLogger(__name__)

_RHO_HIGH = 0.75
_RHO_LOW = 0.25
_DAMPING_FACTOR = 1.5
_ABORT_FACTOR = 10.0


class UpdateFn(Protocol):
    def __call__(
        self,
        objective: Objective,
        theta: np.ndarray,
        batch: Sequence[Any],
        cfg: OptimizerConfig,
        state: OptimizerState,
    ) -> tuple[np.ndarray, UpdateRecord]: ...


OPTIMIZER_REGISTRY: Dict[str, UpdateFn] = {}


def register_optimizer(method: OptimizerMethod | str) -> Callable[[UpdateFn], UpdateFn]:
    """Function decorator to register an update rule under *method*."""

    def decorator(fn: UpdateFn) -> UpdateFn:
        OPTIMIZER_REGISTRY[str(OptimizerMethod(method))] = fn
        return fn

    return decorator


def get_optimizer(method: OptimizerMethod | str) -> UpdateFn:
    if str(method) not in OPTIMIZER_REGISTRY:
        raise ConfigurationError(
            f"Unknown optimizer: {method}. Available: {available_methods()}"
        )
    return OPTIMIZER_REGISTRY[str(method)]


def available_methods() -> list[str]:
    return sorted(OPTIMIZER_REGISTRY.keys())


def clip_per_layer(grad: np.ndarray, slices: Sequence[slice], threshold: float) -> np.ndarray:
    """Rescale every layer block whose norm exceeds *threshold* down to it."""
    out = np.array(grad, dtype=np.float64, copy=True)
    for sl in slices:
        norm = float(np.linalg.norm(out[sl]))
        if norm > threshold:
            out[sl] *= threshold / norm
    return out


@register_optimizer(OptimizerMethod.SGD)
def sgd_update(
    objective: Objective,
    theta: np.ndarray,
    batch: Sequence[Any],
    cfg: OptimizerConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, UpdateRecord]:
    """θ ← θ − lr · clip(∇F) with per-layer norm clipping."""
    start = time.perf_counter()
    state.update_index += 1
    ev = objective.evaluate(theta, batch)
    step = -cfg.learning_rate * clip_per_layer(
        ev.gradient, objective.layer_slices(), cfg.clip_threshold
    )
    new_theta = theta + step
    loss_after = objective.loss(new_theta, batch)
    record = UpdateRecord(
        index=state.update_index,
        method=str(OptimizerMethod.SGD),
        loss_before=ev.loss,
        loss_after=loss_after,
        step_norm=float(np.linalg.norm(step)),
        damping=0.0,
        cg_iterations=0,
        wall_clock=time.perf_counter() - start,
        num_utterances=len(batch),
        gradient_evaluations=2 * len(batch),
    )
    logger.debug(
        "sgd update %d: loss %.6g -> %.6g", record.index, record.loss_before, record.loss_after
    )
    return new_theta, record


def _adapt_damping(damping: float, rho: float | None, cfg: OptimizerConfig) -> float:
    if rho is None or rho < _RHO_LOW:
        damping *= _DAMPING_FACTOR
    elif rho > _RHO_HIGH:
        damping /= _DAMPING_FACTOR
    return float(min(max(damping, cfg.damping_min), cfg.damping_max))


def _second_order_update(
    method: OptimizerMethod,
    objective: Objective,
    theta: np.ndarray,
    batch: Sequence[Any],
    cfg: OptimizerConfig,
    state: OptimizerState,
    build: Callable[[Sequence[Any], float], CurvatureOperator],
    redamp: Callable[[CurvatureOperator, Sequence[Any], float], CurvatureOperator],
    direction: Callable[[np.ndarray], np.ndarray | None] = lambda b: None,
) -> tuple[np.ndarray, UpdateRecord, np.ndarray]:
    start = time.perf_counter()
    state.update_index += 1
    index = state.update_index
    ev = objective.evaluate(theta, batch)
    b = -ev.gradient
    gradient_evaluations = len(batch)

    def record(**kwargs: Any) -> UpdateRecord:
        base = dict(
            index=index,
            method=str(method),
            loss_before=ev.loss,
            loss_after=ev.loss,
            step_norm=0.0,
            damping=state.damping,
            cg_iterations=0,
            num_utterances=len(batch),
            gradient_evaluations=gradient_evaluations,
        )
        base.update(kwargs)
        return UpdateRecord(wall_clock=time.perf_counter() - start, **base)

    if not np.any(b):
        return theta, record(), b

    curvature_batch = objective.sample_curvature(batch, state.rng)
    gradient_evaluations += len(curvature_batch)
    op = build(curvature_batch, state.damping)
    init = direction(b)
    result: CGResult | None = None
    products = 0
    for attempt in range(2):
        try:
            result = cg_solve(op, b, cfg.cg, direction=init)
            break
        except CGAbort as exc:
            products += exc.iteration + 1
            if attempt == 1:
                logger.warning(
                    "%s update %d skipped after second CG abort (%s); damping kept at %.3g",
                    method, index, exc, state.damping,
                )
                rec = record(
                    skipped=True,
                    accepted=False,
                    curvature_products=products * len(curvature_batch),
                )
                return theta, rec, b
            state.damping = min(state.damping * _ABORT_FACTOR, cfg.damping_max)
            logger.warning(
                "%s update %d: CG aborted (%s); damping raised to %.3g",
                method, index, exc, state.damping,
            )
            op = redamp(op, curvature_batch, state.damping)
    assert result is not None
    products += result.products

    delta = result.delta
    predicted = -result.model_value
    loss_full = objective.loss(theta + delta, batch)
    gradient_evaluations += len(batch)
    rho = (ev.loss - loss_full) / predicted if predicted > 0 else None

    step, loss_after, backtracks, accepted = delta, loss_full, 0, True
    if cfg.backtracking:
        while loss_after > ev.loss and backtracks < cfg.max_backtracks:
            step = 0.5 * step
            backtracks += 1
            loss_after = objective.loss(theta + step, batch)
            gradient_evaluations += len(batch)
        if loss_after > ev.loss:
            logger.warning(
                "%s update %d rejected: loss %.6g -> %.6g after %d halvings",
                method, index, ev.loss, loss_after, backtracks,
            )
            step, loss_after, accepted = np.zeros_like(delta), ev.loss, False

    used_damping = state.damping
    state.damping = _adapt_damping(state.damping, rho, cfg)
    if state.damping != used_damping:
        logger.debug("%s update %d: damping %.3g -> %.3g (rho=%s)", method, index, used_damping, state.damping, rho)
    rec = record(
        loss_after=loss_after,
        step_norm=float(np.linalg.norm(step)),
        damping=used_damping,
        cg_iterations=result.iterations,
        accepted=accepted,
        backtracks=backtracks,
        rho=rho,
        curvature_products=products * len(curvature_batch),
    )
    logger.info(
        "%s update %d: loss %.6g -> %.6g, |Δθ|=%.3g, λ=%.3g, cg=%d",
        method, index, rec.loss_before, rec.loss_after, rec.step_norm, used_damping, rec.cg_iterations,
    )
    return theta + step, rec, b


def _gauss_newton_builders(objective: Objective, theta: np.ndarray):
    def build(curvature_batch: Sequence[Any], damping: float) -> CurvatureOperator:
        return objective.gauss_newton(theta, curvature_batch, damping)

    def redamp(op: CurvatureOperator, curvature_batch: Sequence[Any], damping: float) -> CurvatureOperator:
        return op.with_damping(damping)

    return build, redamp


@register_optimizer(OptimizerMethod.HF)
def hf_update(
    objective: Objective,
    theta: np.ndarray,
    batch: Sequence[Any],
    cfg: OptimizerConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, UpdateRecord]:
    """Solve (G + λI)Δθ = −∇F with CG on the Gauss-Newton matrix G."""
    build, redamp = _gauss_newton_builders(objective, theta)
    new_theta, rec, _ = _second_order_update(
        OptimizerMethod.HF, objective, theta, batch, cfg, state, build, redamp
    )
    return new_theta, rec


@register_optimizer(OptimizerMethod.DSAG_HF)
def dsag_hf_update(
    objective: Objective,
    theta: np.ndarray,
    batch: Sequence[Any],
    cfg: OptimizerConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, UpdateRecord]:
    """HF with CG started from a blend of the current and previous gradients.

    The init direction is μ·previous_blend + (1 − μ)·(−∇F), rescaled to the
    norm of the current gradient. `state.blend` holds the previous blend and
    is cleared by `OptimizerState.reset_epoch`.
    """
    mu = cfg.blend_weight
    blended: list[np.ndarray] = []

    def direction(b: np.ndarray) -> np.ndarray:
        if state.blend is None:
            d = b
        else:
            d = mu * state.blend + (1.0 - mu) * b
            norm = float(np.linalg.norm(d))
            if norm > 0.0:
                d = d * (float(np.linalg.norm(b)) / norm)
            else:
                d = b
        blended.append(d)
        return d

    build, redamp = _gauss_newton_builders(objective, theta)
    new_theta, rec, b = _second_order_update(
        OptimizerMethod.DSAG_HF, objective, theta, batch, cfg, state, build, redamp, direction
    )
    if blended:
        state.blend = blended[-1]
    elif np.any(b):
        state.blend = b
    return new_theta, rec


@register_optimizer(OptimizerMethod.NG)
def ng_update(
    objective: Objective,
    theta: np.ndarray,
    batch: Sequence[Any],
    cfg: OptimizerConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, UpdateRecord]:
    """Solve (λÎ + εI)Δθ = −∇F, Î the empirical Fisher of the MMI gradients.

    The training criterion may be MMI, MPE or sMBR; Î is always built from
    per-utterance MMI gradients. λ is the trust-region multiplier and is
    adapted like the HF damping.
    """

    def build(curvature_batch: Sequence[Any], scale: float) -> CurvatureOperator:
        return objective.fisher(theta, curvature_batch, scale, cfg.fisher_floor)

    def redamp(op: CurvatureOperator, curvature_batch: Sequence[Any], scale: float) -> CurvatureOperator:
        if isinstance(op, EmpiricalFisherOperator):
            return op.with_scale(scale)
        return build(curvature_batch, scale)

    new_theta, rec, _ = _second_order_update(
        OptimizerMethod.NG, objective, theta, batch, cfg, state, build, redamp
    )
    return new_theta, rec
