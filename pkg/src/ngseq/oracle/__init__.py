"""Brute-force references: dense matrices, finite differences, enumeration, KL."""

from __future__ import annotations

from ngseq.oracle.dense import (
    MAX_ORACLE_PARAMS,
    DenseOperator,
    explicit_fisher,
    explicit_gn,
    explicit_jacobian,
    frame_loss_hessian,
    outer_product_matrix,
    probe_operator,
    read_matrix,
    write_matrix,
)
from ngseq.oracle.enumeration import (
    MAX_PATHS,
    EnumeratedPath,
    EnumerationStats,
    enumerate_paths,
    enumeration_statistics,
    path_log_posterior,
)
from ngseq.oracle.finite_diff import fd_directional, fd_gradient, fd_hessian
from ngseq.oracle.kl import KLCheck, exact_fisher, exact_fisher_quadratic, exact_kl, kl_quadratic_check

__all__ = [
    "DenseOperator",
    "EnumeratedPath",
    "EnumerationStats",
    "KLCheck",
    "MAX_ORACLE_PARAMS",
    "MAX_PATHS",
    "enumerate_paths",
    "enumeration_statistics",
    "exact_fisher",
    "exact_fisher_quadratic",
    "exact_kl",
    "explicit_fisher",
    "explicit_gn",
    "explicit_jacobian",
    "fd_directional",
    "fd_gradient",
    "fd_hessian",
    "frame_loss_hessian",
    "kl_quadratic_check",
    "outer_product_matrix",
    "path_log_posterior",
    "probe_operator",
    "read_matrix",
    "write_matrix",
]
