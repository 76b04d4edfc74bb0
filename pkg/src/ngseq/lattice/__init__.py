"""Lattices, forward-backward and sequence criteria."""

from __future__ import annotations

from ngseq.lattice.criteria import (
    CriterionKind,
    CriterionOutput,
    UtteranceStats,
    criterion_accuracy,
    cross_entropy,
    mbr_criterion,
    mmi_criterion,
    utterance_term,
)
from ngseq.lattice.decode import ViterbiResult, viterbi_decode
from ngseq.lattice.forward_backward import (
    PosteriorSet,
    acoustic_loglikes,
    expected_losses,
    forward_backward,
)
from ngseq.lattice.io import format_lattice, parse_lattice, read_lattice, write_lattice
from ngseq.lattice.loss import annotate_local_loss, levenshtein, token_error_rate
from ngseq.lattice.model import (
    Arc,
    Lattice,
    LossLevel,
    Reference,
    UtteranceExample,
    locate_path,
    path_symbols,
)

__all__ = [
    "Arc",
    "CriterionKind",
    "CriterionOutput",
    "Lattice",
    "LossLevel",
    "PosteriorSet",
    "Reference",
    "UtteranceExample",
    "UtteranceStats",
    "ViterbiResult",
    "acoustic_loglikes",
    "annotate_local_loss",
    "criterion_accuracy",
    "cross_entropy",
    "expected_losses",
    "format_lattice",
    "forward_backward",
    "levenshtein",
    "locate_path",
    "mbr_criterion",
    "mmi_criterion",
    "parse_lattice",
    "path_symbols",
    "read_lattice",
    "token_error_rate",
    "utterance_term",
    "viterbi_decode",
    "write_lattice",
]
