"""Gauss-Newton and empirical Fisher curvature products."""

from __future__ import annotations

from ngseq.curvature.fisher import EmpiricalFisherOperator, build_fisher_gradients, fisher_apply
from ngseq.curvature.gauss_newton import (
    CurvatureBatch,
    GaussNewtonOperator,
    gn_apply,
    loss_hessian_apply,
    prepare_curvature_batch,
    psd_frame_hessians,
    symmetrized_frame_hessians,
)
from ngseq.curvature.operator import (
    CurvatureKind,
    CurvatureOperator,
    DenseOperator,
    FisherKappa,
    HessianMode,
    curvature_sample_size,
    sample_curvature_batch,
)

__all__ = [
    "CurvatureBatch",
    "CurvatureKind",
    "CurvatureOperator",
    "DenseOperator",
    "EmpiricalFisherOperator",
    "FisherKappa",
    "GaussNewtonOperator",
    "HessianMode",
    "build_fisher_gradients",
    "curvature_sample_size",
    "fisher_apply",
    "gn_apply",
    "loss_hessian_apply",
    "prepare_curvature_batch",
    "psd_frame_hessians",
    "sample_curvature_batch",
    "symmetrized_frame_hessians",
]
