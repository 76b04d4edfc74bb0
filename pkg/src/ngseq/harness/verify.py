"""Property checks of the training code, from the brute-force oracles up to seeded training runs.

Every check is registered under a name and returns a `CheckResult`; the CLI
runs all of them (or a named subset) and renders one table row per check.
"""

from __future__ import annotations

import functools
import logging
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from ngseq.curvature import (
    HessianMode,
    build_fisher_gradients,
    fisher_apply,
    gn_apply,
    prepare_curvature_batch,
)
from ngseq.errors import ConfigurationError, NgseqError
from ngseq.harness.compare import (
    STABLE_METHODS,
    MatrixRuns,
    convergence_trend,
    replay_mismatches,
    rising_updates,
    train_matrix,
)
from ngseq.harness.metrics import RowType
from ngseq.harness.presets import get_preset
from ngseq.harness.run_config import RunConfig
from ngseq.harness.task import Dataset, SyntheticTaskConfig, generate_task
from ngseq.lattice.criteria import CriterionKind, mbr_utterance, mmi_utterance
from ngseq.lattice.forward_backward import acoustic_loglikes, forward_backward
from ngseq.lattice.model import LossLevel
from ngseq.net.network import Network
from ngseq.optim.cg import CGConfig, CGInit, cg_solve
from ngseq.optim.diagnostics import eigen_diagnostic
from ngseq.optim.objective import SequenceObjective
from ngseq.oracle import (
    enumerate_paths,
    enumeration_statistics,
    explicit_fisher,
    explicit_gn,
    fd_gradient,
    fd_hessian,
    kl_quadratic_check,
    path_log_posterior,
)

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-5
OPERATOR_TOL = 1e-10
LATTICE_TOL = 1e-10
LINEAR_HESSIAN_TOL = 1e-4
CG_TOL = 1e-8
KL_SHRINK = 5.0
GRADIENT_SEEDS = 10
TREND_SEEDS = 5
TREND_PRESET = "small-data"
DETERMINISM_PRESET = "tiny"

TINY_TASK = SyntheticTaskConfig(
    num_states=4,
    num_symbols=2,
    feature_dim=3,
    min_length=6,
    max_length=10,
    num_train=6,
    num_validation=2,
    min_segment=2,
    max_segment=3,
    confusion=0.7,
    max_paths=64,
)
TINY_HIDDEN = (4,)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    detail: str = ""
    seconds: float = 0.0


CheckFn = Callable[[int], CheckResult]

CHECK_REGISTRY: Dict[str, CheckFn] = {}


def register_check(name: str) -> Callable[[CheckFn], CheckFn]:
    """Function decorator to register a property check under *name*."""

    def decorator(fn: CheckFn) -> CheckFn:
        CHECK_REGISTRY[name] = fn
        return fn

    return decorator


def available_checks() -> list[str]:
    return sorted(CHECK_REGISTRY.keys())


def tiny_setup(seed: int, *, hidden: tuple[int, ...] = TINY_HIDDEN, num_train: int | None = None):
    """A tiny dataset plus a randomly initialised network small enough for dense oracles."""
    task = TINY_TASK if num_train is None else _with(TINY_TASK, num_train=num_train)
    dataset = generate_task(_with(task, seed=seed))
    net = Network((task.feature_dim, *hidden, task.num_states))
    theta = net.init_parameters(np.random.default_rng(seed + 1))
    return dataset, net, theta


def _with(cfg: SyntheticTaskConfig, **changes) -> SyntheticTaskConfig:
    data = cfg.to_mapping()
    data.update(changes)
    return SyntheticTaskConfig(**data)


def _relative(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    scale = max(float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale


def _branching(dataset: Dataset) -> list:
    return [u for u in dataset.train if u.denominator.count_paths() > 1]


@register_check("gradients")
def check_gradients(seed: int) -> CheckResult:
    """Analytic CE, MMI, MPE and sMBR gradients against central differences."""
    worst = 0.0
    details = []
    for offset in range(GRADIENT_SEEDS):
        dataset, net, theta = tiny_setup(seed + offset)
        batch = list(dataset.train[:3])
        for kind in CriterionKind:
            objective = SequenceObjective(net, kind, 0.5, log_priors=dataset.log_priors)
            analytic = objective.evaluate(theta, batch).gradient
            numeric = fd_gradient(lambda th: objective.loss(th, batch), theta)
            err = _relative(analytic, numeric, floor=1e-6)
            if err > worst:
                worst = err
                details = [f"worst {kind} (seed {seed + offset})"]
    details.append(f"{GRADIENT_SEEDS} networks per criterion")
    return CheckResult("gradients", worst < GRADIENT_TOL, worst, "; ".join(details))


@register_check("lattice")
def check_lattice(seed: int) -> CheckResult:
    """Z, γ, F_MMI and F_MBR from forward-backward against path enumeration."""
    dataset, _, _ = tiny_setup(seed, num_train=50)
    rng = np.random.default_rng(seed)
    kappa = 0.5
    worst = 0.0
    for utt in dataset.train:
        acts = rng.standard_normal((utt.num_frames, dataset.num_states))
        post = forward_backward(utt.denominator, acoustic_loglikes(acts), kappa)
        paths = enumerate_paths(utt.denominator, acts, kappa)
        stats = enumeration_statistics(paths, utt.num_frames, dataset.num_states)
        errors = [
            abs(post.log_z - stats.log_z),
            float(np.max(np.abs(post.gamma - stats.gamma))),
            float(np.max(np.abs(post.gamma.sum(axis=1) - 1.0))),
            abs(mmi_utterance(utt, acts, kappa).value - path_log_posterior(paths, utt.numerator_arcs)),
        ]
        for level in LossLevel:
            lat = utt.lattice_for(level)
            annotated = enumerate_paths(lat, acts, kappa)
            ann_stats = enumeration_statistics(annotated, utt.num_frames, dataset.num_states)
            expected = float(np.dot(ann_stats.posteriors, [p.loss for p in annotated]))
            errors.append(abs(mbr_utterance(utt, acts, kappa, level).value - expected))
        worst = max(worst, *errors)
    return CheckResult(
        "lattice", worst < LATTICE_TOL, worst, f"{len(dataset.train)} lattices"
    )


@register_check("gauss-newton")
def check_gauss_newton(seed: int) -> CheckResult:
    """Matrix-free GN products against the explicit matrix, and PSD of the clipped form."""
    dataset, net, theta = tiny_setup(seed)
    batch = list(dataset.train[:3])
    rng = np.random.default_rng(seed)
    worst = 0.0
    min_eig = np.inf
    for kind in (CriterionKind.MMI, CriterionKind.MPE, CriterionKind.SMBR):
        try:
            dense = explicit_gn(net, theta, batch, kind, 0.5)
        except NgseqError as exc:
            return CheckResult("gauss-newton", False, np.inf, str(exc))
        cached = prepare_curvature_batch(net, theta, batch, kind, 0.5)
        for _ in range(20):
            v = rng.standard_normal(net.num_params)
            product = gn_apply(net, theta, cached, 0.0, v)
            worst = max(worst, _relative(product, dense.matrix @ v))
        psd = explicit_gn(net, theta, batch, kind, 0.5, mode=HessianMode.PSD, cross_check=False)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(psd.matrix)[0]))
    passed = worst < OPERATOR_TOL and min_eig >= -1e-10
    return CheckResult("gauss-newton", passed, worst, f"min PSD eigenvalue {min_eig:.2e}")


@register_check("fisher")
def check_fisher(seed: int) -> CheckResult:
    """Empirical Fisher products against the explicit matrix, and its rank."""
    dataset, net, theta = tiny_setup(seed)
    batch = list(dataset.train[:3])
    rng = np.random.default_rng(seed)
    dense = explicit_fisher(net, theta, batch, 0.5)
    grads = build_fisher_gradients(net, theta, batch, 0.5)
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal(net.num_params)
        worst = max(worst, _relative(fisher_apply(grads, 0.0, v), dense.matrix @ v))
    rank = int(np.linalg.matrix_rank(dense.matrix))
    passed = worst < OPERATOR_TOL and rank <= len(batch)
    return CheckResult("fisher", passed, worst, f"rank {rank} for {len(batch)} utterances")


@register_check("linear-hessian")
def check_linear_hessian(seed: int) -> CheckResult:
    """On a network without hidden layers the CE Gauss-Newton matrix is the Hessian."""
    dataset, net, theta = tiny_setup(seed, hidden=())
    batch = list(dataset.train[:2])
    objective = SequenceObjective(net, CriterionKind.CE, 1.0)
    dense = explicit_gn(net, theta, batch, CriterionKind.CE, 1.0)
    hessian = fd_hessian(lambda th: objective.loss(th, batch), theta)
    err = _relative(dense.matrix, hessian)
    return CheckResult("linear-hessian", err < LINEAR_HESSIAN_TOL, err)


@register_check("cg")
def check_cg(seed: int) -> CheckResult:
    """Exact CG solves in n steps with a non-increasing model, matching the eigen solution."""
    rng = np.random.default_rng(seed)
    n = 12
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = (q * rng.uniform(1.0, 10.0, n)) @ q.T
    a = 0.5 * (a + a.T)
    b = rng.standard_normal(n)
    result = cg_solve(a, b, CGConfig(max_iters=n, residual_tol=1e-14, init=CGInit.ZERO))
    residual = float(np.linalg.norm(a @ result.delta - b))
    steps = np.diff(result.model_values)
    monotone = bool(np.all(steps <= 1e-12))
    eigen_err = float(np.max(np.abs(eigen_diagnostic(a, b).delta - result.delta)))
    passed = residual < CG_TOL and monotone and eigen_err < CG_TOL and result.iterations <= n
    return CheckResult(
        "cg",
        passed,
        max(residual, eigen_err),
        f"{result.iterations} iterations, residual {residual:.1e}",
    )


@register_check("kl-remainder")
def check_kl_remainder(seed: int) -> CheckResult:
    """KL minus its Fisher quadratic form shrinks faster than the step squared."""
    shrink = np.inf
    for offset in range(5):
        dataset, net, theta = tiny_setup(seed + offset)
        batch = _branching(dataset)[:3]
        if not batch:
            continue
        rng = np.random.default_rng(seed + offset)
        direction = rng.standard_normal(net.num_params)
        direction /= np.linalg.norm(direction)
        gaps = []
        for scale in (1e-1, 1e-2):
            check = kl_quadratic_check(net, theta, scale * direction, batch, 0.5)
            gaps.append(check.remainder / scale**2)
        ratio = gaps[0] / gaps[1] if gaps[1] > 0 else np.inf
        shrink = min(shrink, ratio)
    return CheckResult("kl-remainder", shrink >= KL_SHRINK, 1.0 / shrink, f"min shrink {shrink:.1f}×")


def preset_run(name: str) -> RunConfig:
    """The run config a preset describes, without config files or environment overrides."""
    # ngseq.config imports this package
    from ngseq.config import run_config_from_mapping

    data = get_preset(name)
    optimizer = data.pop("optimizer", {})
    return run_config_from_mapping(data, preset_optimizer=optimizer)


@functools.cache
def trend_matrix(seed: int) -> MatrixRuns:
    """The seeded method matrix shared by the trend and stability checks."""
    seeds = [seed + offset for offset in range(TREND_SEEDS)]
    logger.info("training the %s matrix on seeds %s", TREND_PRESET, seeds)
    return train_matrix(preset_run(TREND_PRESET), seeds)


@register_check("trend")
def check_trend(seed: int) -> CheckResult:
    """Sequence training beats CE, and NG matches HF with fewer updates."""
    report = convergence_trend(trend_matrix(seed))
    return CheckResult("trend", report.passed, report.update_ratio, report.describe())


@register_check("stability")
def check_stability(seed: int) -> CheckResult:
    """No HF or NG update in the trend matrix raises its batch loss."""
    matrix = trend_matrix(seed)
    rising = rising_updates(matrix)
    checked = sum(len(r.result.metrics.rows_of(RowType.UPDATE)) for r in matrix.runs if r.method in STABLE_METHODS)
    if not rising:
        return CheckResult("stability", True, 0.0, f"{checked} updates")
    worst = max(rise for _, rise in rising)
    names = ", ".join(name for name, _ in rising[:3])
    return CheckResult("stability", False, worst, f"{len(rising)} of {checked} updates raised the loss: {names}")


@register_check("determinism")
def check_determinism(seed: int) -> CheckResult:
    """Two runs with one seed and config write identical logs and checkpoints."""
    run = preset_run(DETERMINISM_PRESET).replace(seed=seed)
    with tempfile.TemporaryDirectory(prefix="ngseq-replay-") as td:
        mismatches = replay_mismatches(run, Path(td))
    detail = f"differs: {', '.join(mismatches)}" if mismatches else "metrics, summary and checkpoints identical"
    return CheckResult("determinism", not mismatches, float(len(mismatches)), detail)


def run_checks(names: list[str] | None = None, seed: int = 0) -> list[CheckResult]:
    names = available_checks() if not names else names
    unknown = [n for n in names if n not in CHECK_REGISTRY]
    if unknown:
        raise ConfigurationError(f"Unknown check: {unknown}. Available: {available_checks()}")
    results = []
    for name in names:
        start = time.perf_counter()
        try:
            result = CHECK_REGISTRY[name](seed)
        except NgseqError as exc:
            result = CheckResult(name, False, float("inf"), str(exc))
        elapsed = time.perf_counter() - start
        result = CheckResult(result.name, result.passed, result.max_error, result.detail, elapsed)
        logger.info("check %s: %s (max error %.3e)", name, "ok" if result.passed else "FAILED", result.max_error)
        results.append(result)
    return results
