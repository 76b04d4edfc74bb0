"""What an optimizer needs from the thing it minimises."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol, Sequence, runtime_checkable

import numpy as np

from ngseq.curvature import (
    CurvatureOperator,
    DenseOperator,
    EmpiricalFisherOperator,
    FisherKappa,
    GaussNewtonOperator,
    HessianMode,
    build_fisher_gradients,
    prepare_curvature_batch,
    sample_curvature_batch,
)
from ngseq.errors import UsageError
from ngseq.lattice.criteria import CriterionKind, CriterionOutput, combine, utterance_term
from ngseq.lattice.model import UtteranceExample
from ngseq.net.network import Network, backward, forward
from ngseq.parallel import map_ordered


@dataclass(frozen=True)
class Evaluation:
    """Minimisation-form loss and gradient on one batch."""

    loss: float
    gradient: np.ndarray
    output: CriterionOutput | None = None


@runtime_checkable
class Objective(Protocol):
    @property
    def num_params(self) -> int: ...

    def layer_slices(self) -> list[slice]: ...
    def evaluate(self, theta: np.ndarray, batch: Sequence[Any]) -> Evaluation: ...
    def loss(self, theta: np.ndarray, batch: Sequence[Any]) -> float: ...
    def sample_curvature(
        self, batch: Sequence[Any], rng: np.random.Generator
    ) -> Sequence[Any]: ...
    def gauss_newton(
        self, theta: np.ndarray, curvature_batch: Sequence[Any], damping: float
    ) -> CurvatureOperator: ...
    def fisher(
        self, theta: np.ndarray, curvature_batch: Sequence[Any], scale: float, floor: float
    ) -> CurvatureOperator: ...


class SequenceObjective:
    """A network trained with a lattice criterion (or frame cross entropy)."""

    def __init__(
        self,
        net: Network,
        criterion: CriterionKind | str,
        kappa: float,
        *,
        log_priors: np.ndarray | None = None,
        hessian_mode: HessianMode | str = HessianMode.PSD,
        fisher_kappa: FisherKappa | str = FisherKappa.CRITERION,
        curvature_fraction: float = 0.01,
        curvature_minimum: int = 4,
        workers: int = 1,
    ) -> None:
        self.net = net
        self.criterion = CriterionKind(criterion)
        self.kappa = float(kappa)
        if self.kappa <= 0:
            raise UsageError(f"acoustic scale must be positive, got {kappa}")
        self.log_priors = log_priors
        self.hessian_mode = HessianMode(hessian_mode)
        self.fisher_kappa = FisherKappa(fisher_kappa)
        self.curvature_fraction = curvature_fraction
        self.curvature_minimum = curvature_minimum
        self.workers = workers

    @property
    def num_params(self) -> int:
        return self.net.num_params

    def layer_slices(self) -> list[slice]:
        return self.net.layer_slices()

    def _normalizer(self, batch: Sequence[UtteranceExample]) -> float | None:
        if self.criterion is CriterionKind.CE:
            return float(sum(u.num_frames for u in batch))
        return None

    def criterion_output(
        self, theta: np.ndarray, batch: Sequence[UtteranceExample]
    ) -> CriterionOutput:
        if not batch:
            raise UsageError("objective evaluated on an empty batch")

        def one(utt: UtteranceExample):
            outputs = forward(self.net, theta, utt.frames).outputs
            return utterance_term(self.criterion, utt, outputs, self.kappa, log_priors=self.log_priors)

        terms = map_ordered(one, batch, self.workers)
        return combine(self.criterion, terms, self.kappa, self._normalizer(batch))

    def evaluate(self, theta: np.ndarray, batch: Sequence[UtteranceExample]) -> Evaluation:
        if not batch:
            raise UsageError("objective evaluated on an empty batch")

        def one(utt: UtteranceExample):
            record = forward(self.net, theta, utt.frames)
            term = utterance_term(
                self.criterion, utt, record.outputs, self.kappa, log_priors=self.log_priors
            )
            return term, backward(self.net, theta, record, term.gradient)

        results = map_ordered(one, batch, self.workers)
        output = combine(self.criterion, [t for t, _ in results], self.kappa, self._normalizer(batch))
        grad = np.zeros(self.num_params)
        for _, g in results:
            grad += g
        grad *= self.criterion.sign / output.normalizer
        return Evaluation(loss=output.loss, gradient=grad, output=output)

    def loss(self, theta: np.ndarray, batch: Sequence[UtteranceExample]) -> float:
        return self.criterion_output(theta, batch).loss

    def sample_curvature(
        self, batch: Sequence[UtteranceExample], rng: np.random.Generator
    ) -> list[UtteranceExample]:
        return sample_curvature_batch(batch, self.curvature_fraction, self.curvature_minimum, rng)

    def gauss_newton(
        self, theta: np.ndarray, curvature_batch: Sequence[UtteranceExample], damping: float
    ) -> GaussNewtonOperator:
        cached = prepare_curvature_batch(
            self.net,
            theta,
            curvature_batch,
            self.criterion,
            self.kappa,
            log_priors=self.log_priors,
            workers=self.workers,
        )
        return GaussNewtonOperator(
            self.net, theta, cached, damping=damping, mode=self.hessian_mode, workers=self.workers
        )

    def fisher(
        self,
        theta: np.ndarray,
        curvature_batch: Sequence[UtteranceExample],
        scale: float,
        floor: float,
    ) -> EmpiricalFisherOperator:
        kappa = self.kappa if self.fisher_kappa is FisherKappa.CRITERION else 1.0
        grads = build_fisher_gradients(
            self.net, theta, curvature_batch, kappa, log_priors=self.log_priors, workers=self.workers
        )
        return EmpiricalFisherOperator(grads, scale=scale, floor=floor)


class QuadraticObjective:
    """f(θ) = ½θᵀAθ − cᵀθ with a fixed SPD matrix; the batch is ignored.

    Both curvature hooks return A itself, so one Newton step with exact CG
    reaches the minimiser A⁻¹c.
    """

    def __init__(self, matrix: np.ndarray, linear: np.ndarray, *, num_layers: int = 1) -> None:
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.linear = np.asarray(linear, dtype=np.float64)
        if self.matrix.shape != (self.linear.size, self.linear.size):
            raise UsageError(f"matrix {self.matrix.shape} does not match vector {self.linear.shape}")
        bounds = np.linspace(0, self.linear.size, num_layers + 1).astype(int)
        self._slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def num_params(self) -> int:
        return int(self.linear.size)

    def layer_slices(self) -> list[slice]:
        return list(self._slices)

    def minimiser(self) -> np.ndarray:
        return np.linalg.solve(self.matrix, self.linear)

    def loss(self, theta: np.ndarray, batch: Sequence[Any] = ()) -> float:
        return float(0.5 * theta @ self.matrix @ theta - self.linear @ theta)

    def evaluate(self, theta: np.ndarray, batch: Sequence[Any] = ()) -> Evaluation:
        return Evaluation(loss=self.loss(theta), gradient=self.matrix @ theta - self.linear)

    def sample_curvature(self, batch: Sequence[Any], rng: np.random.Generator) -> Sequence[Any]:
        return batch

    def gauss_newton(
        self, theta: np.ndarray, curvature_batch: Sequence[Any], damping: float
    ) -> CurvatureOperator:
        return DenseOperator(self.matrix, damping=damping)

    def fisher(
        self, theta: np.ndarray, curvature_batch: Sequence[Any], scale: float, floor: float
    ) -> CurvatureOperator:
        return DenseOperator(scale * self.matrix, damping=floor)
