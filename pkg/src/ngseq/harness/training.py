"""CE pre-training followed by sequence training with one optimizer.

One epoch is one pass over the training utterances in a fresh utterance-level
order. Second-order methods split the pass into ``ceil(1 / batch_fraction)``
update batches, SGD into chunks of ``batch_size`` utterances. Frames are
never shuffled across utterances.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from ngseq.errors import ConfigurationError, NumericError, TrainingAborted
from ngseq.harness.metrics import MetricsLog, SplitEvaluation, write_summary
from ngseq.harness.run_config import RunConfig
from ngseq.harness.task import Dataset, generate_task
from ngseq.lattice.criteria import CriterionKind, criterion_accuracy
from ngseq.lattice.decode import viterbi_decode
from ngseq.lattice.loss import levenshtein
from ngseq.lattice.model import UtteranceExample
from ngseq.net.checkpoint import save_checkpoint
from ngseq.net.network import Network, forward
from ngseq.optim.config import OptimizerState, UpdateRecord
from ngseq.optim.objective import SequenceObjective
from ngseq.optim.updates import get_optimizer

logger = logging.getLogger(__name__)

SUMMARY_KEYS = (
    "method",
    "epochs",
    "updates",
    "train_accuracy",
    "validation_accuracy",
    "validation_token_error_rate",
    "train_criterion",
    "validation_criterion",
)


class UpdateListener(Protocol):
    def emit_update(self, record: UpdateRecord, method: str) -> None: ...
    def emit_epoch(self, row: dict[str, Any]) -> None: ...


@dataclass(frozen=True)
class TrainingResult:
    net: Network
    theta: np.ndarray
    theta_ce: np.ndarray
    metrics: MetricsLog
    summary: dict[str, Any]


def frame_accuracy(net: Network, theta: np.ndarray, utts: Sequence[UtteranceExample]) -> float:
    correct = 0
    total = 0
    for utt in utts:
        outputs = forward(net, theta, utt.frames).outputs
        correct += int(np.sum(np.argmax(outputs, axis=1) == np.asarray(utt.reference.states)))
        total += utt.num_frames
    return correct / max(total, 1)


def corpus_token_error_rate(
    net: Network,
    theta: np.ndarray,
    utts: Sequence[UtteranceExample],
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    symbol_map: np.ndarray | None = None,
) -> float:
    """Total edit distance of the lattice best paths over total reference symbols."""
    errors = 0
    words = 0
    for utt in utts:
        outputs = forward(net, theta, utt.frames).outputs
        best = viterbi_decode(
            utt.denominator, outputs, kappa, log_priors=log_priors, symbol_map=symbol_map
        )
        errors += levenshtein(best.symbols, utt.reference.symbols)
        words += len(utt.reference.symbols)
    return errors / max(words, 1)


def evaluate_split(
    objective: SequenceObjective,
    theta: np.ndarray,
    utts: Sequence[UtteranceExample],
    symbol_map: np.ndarray | None = None,
) -> SplitEvaluation:
    output = objective.criterion_output(theta, utts)
    return SplitEvaluation(
        criterion=output.value,
        loss=output.loss,
        accuracy=criterion_accuracy(output, utts),
        token_error_rate=corpus_token_error_rate(
            objective.net,
            theta,
            utts,
            objective.kappa,
            log_priors=objective.log_priors,
            symbol_map=symbol_map,
        ),
        frame_accuracy=frame_accuracy(objective.net, theta, utts),
    )


def _check_finite(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise NumericError(f"{what} is not finite ({value})")


def ce_pretrain(
    net: Network,
    theta: np.ndarray,
    dataset: Dataset,
    epochs: int,
    lr: float,
    *,
    batch_size: int = 8,
    rng: np.random.Generator | None = None,
    metrics: MetricsLog | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Plain minibatch SGD on mean frame cross entropy against the reference states."""
    theta = net.check_theta(theta).copy()
    if epochs == 0:
        return theta
    rng = rng if rng is not None else np.random.default_rng(0)
    objective = SequenceObjective(net, CriterionKind.CE, 1.0, workers=workers)
    train = dataset.train
    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train))
        total, frames = 0.0, 0
        for lo in range(0, len(order), batch_size):
            batch = [train[int(i)] for i in order[lo : lo + batch_size]]
            ev = objective.evaluate(theta, batch)
            if not math.isfinite(ev.loss) or not np.all(np.isfinite(ev.gradient)):
                raise TrainingAborted(f"CE pre-training diverged in epoch {epoch}", metrics)
            theta = theta - lr * ev.gradient
            n = sum(u.num_frames for u in batch)
            total += ev.loss * n
            frames += n
        accuracy = frame_accuracy(net, theta, dataset.validation)
        logger.info(
            "CE epoch %d: train CE %.4f, validation frame accuracy %.3f",
            epoch, total / frames, accuracy,
        )
        if metrics is not None:
            metrics.append_ce(epoch, total / frames, accuracy, time.perf_counter() - start)
    return theta


def _update_batches(run: RunConfig, order: np.ndarray) -> list[np.ndarray]:
    if run.optimizer.is_second_order:
        chunks = np.array_split(order, run.updates_per_epoch())
    else:
        size = run.optimizer.batch_size
        chunks = [order[lo : lo + size] for lo in range(0, order.size, size)]
    return [c for c in chunks if c.size]


def _summary_row(method: str, epochs: int, updates: int, train: SplitEvaluation, valid: SplitEvaluation) -> dict[str, Any]:
    return {
        "method": method,
        "epochs": epochs,
        "updates": updates,
        "train_accuracy": train.accuracy,
        "validation_accuracy": valid.accuracy,
        "validation_token_error_rate": valid.token_error_rate,
        "train_criterion": train.criterion,
        "validation_criterion": valid.criterion,
    }


def _write_outputs(out: Path | None, metrics: MetricsLog, summary: dict[str, Any] | None) -> None:
    if out is None:
        return
    metrics.write_csv(out / "metrics.csv")
    if summary is not None:
        write_summary(out / "summary.json", summary)


def train(
    run: RunConfig,
    *,
    dataset: Dataset | None = None,
    listener: UpdateListener | None = None,
) -> TrainingResult:
    """CE pre-training, then `run.epochs` epochs of sequence training.

    With an output directory set, writes ``ce.npz``, ``final.npz``,
    ``metrics.csv`` and ``summary.json`` there. On an optimizer failure the
    partial metrics are flushed and `TrainingAborted` is raised.
    """
    dataset = dataset if dataset is not None else generate_task(run.task)
    if dataset.config.feature_dim != run.task.feature_dim or dataset.num_states != run.task.num_states:
        raise ConfigurationError("dataset shape does not match the run's task config")
    init_seed, ce_seed, order_seed, curvature_seed = np.random.SeedSequence(run.seed).spawn(4)
    net = Network(run.layer_dims)
    theta0 = net.init_parameters(np.random.default_rng(init_seed))
    metrics = MetricsLog()
    out = run.output_dir
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    try:
        theta_ce = ce_pretrain(
            net,
            theta0,
            dataset,
            run.ce_epochs,
            run.ce_learning_rate,
            batch_size=run.ce_batch_size,
            rng=np.random.default_rng(ce_seed),
            metrics=metrics,
            workers=run.workers,
        )
    except TrainingAborted:
        _write_outputs(out, metrics, None)
        raise
    if out is not None:
        save_checkpoint(out / "ce.npz", net, theta_ce)

    priors = dataset.log_priors if run.use_priors else None
    objective = SequenceObjective(
        net,
        run.criterion,
        run.kappa,
        log_priors=priors,
        hessian_mode=run.optimizer.hessian_mode,
        fisher_kappa=run.optimizer.fisher_kappa,
        curvature_fraction=run.optimizer.curvature_fraction,
        curvature_minimum=run.optimizer.curvature_minimum,
        workers=run.workers,
    )
    method = str(run.method)
    update = get_optimizer(run.method)
    state = OptimizerState.initial(run.optimizer, np.random.default_rng(curvature_seed))
    order_rng = np.random.default_rng(order_seed)

    def evaluate(epoch: int, started: float) -> tuple[SplitEvaluation, SplitEvaluation]:
        train_eval = evaluate_split(objective, theta, dataset.train, dataset.symbol_map)
        valid_eval = evaluate_split(objective, theta, dataset.validation, dataset.symbol_map)
        row = metrics.append_epoch(
            epoch, method, train_eval, valid_eval, time.perf_counter() - started
        )
        if listener is not None:
            listener.emit_epoch(row)
        logger.info(
            "%s epoch %d: train %s %.4f (acc %.4f), validation acc %.4f, TER %.4f",
            method, epoch, run.criterion, train_eval.criterion, train_eval.accuracy,
            valid_eval.accuracy, valid_eval.token_error_rate,
        )
        return train_eval, valid_eval

    theta = theta_ce
    baseline = evaluate(0, time.perf_counter())
    ce_row = _summary_row("ce", run.ce_epochs, 0, *baseline)
    final = baseline

    for epoch in range(1, run.epochs + 1):
        started = time.perf_counter()
        order = order_rng.permutation(len(dataset.train))
        try:
            for chunk in _update_batches(run, order):
                batch = [dataset.train[int(i)] for i in chunk]
                theta, record = update(objective, theta, batch, run.optimizer, state)
                _check_finite(record.loss_after, f"loss after update {record.index}")
                metrics.append_update(epoch, record)
                if listener is not None:
                    listener.emit_update(record, method)
            state.reset_epoch()
            final = evaluate(epoch, started)
        except NumericError as exc:
            logger.error("%s training aborted in epoch %d: %s", method, epoch, exc)
            _write_outputs(out, metrics, None)
            raise TrainingAborted(f"{method} training aborted: {exc}", metrics) from exc

    # only CE pre-training ran
    reported = method if run.epochs > 0 else "ce"
    row = _summary_row(reported, run.epochs, metrics.num_updates, *final)
    compute = metrics.compute
    total = compute["gradient_evaluations"] + compute["curvature_products"]
    summary: dict[str, Any] = {
        **row,
        "criterion": str(run.criterion),
        "seed": run.seed,
        "ce_baseline": ce_row,
        "compute": {
            **compute,
            "curvature_fraction": compute["curvature_products"] / total if total else 0.0,
        },
    }
    if out is not None:
        save_checkpoint(out / "final.npz", net, theta)
    _write_outputs(out, metrics, summary)
    return TrainingResult(net, theta, theta_ce, metrics, summary)
