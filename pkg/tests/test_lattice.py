from __future__ import annotations

import tests._path_setup  # noqa: F401

import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from ngseq.errors import DataError, UsageError
from ngseq.lattice import (
    Arc,
    Lattice,
    LossLevel,
    Reference,
    acoustic_loglikes,
    annotate_local_loss,
    expected_losses,
    format_lattice,
    forward_backward,
    levenshtein,
    locate_path,
    parse_lattice,
    path_symbols,
    read_lattice,
    token_error_rate,
    viterbi_decode,
    write_lattice,
)
from tests._fixtures import NUM_STATES, chain_lattice, diamond_lattice, skip_lattice


class LatticeModelTest(unittest.TestCase):
    def test_counts_paths(self) -> None:
        self.assertEqual(diamond_lattice().count_paths(), 4)
        self.assertEqual(chain_lattice().count_paths(), 1)
        self.assertEqual(skip_lattice().count_paths(), 3)

    def test_rejects_arc_whose_labels_do_not_cover_its_span(self) -> None:
        with self.assertRaises(DataError):
            Lattice((0, 2, 3), (Arc(0, 1, (0,), 0.0), Arc(1, 2, (1,), 0.0)), 0, 2)

    def test_rejects_lattice_without_complete_path(self) -> None:
        with self.assertRaises(DataError):
            Lattice((0, 1, 2), (Arc(0, 1, (0,), 0.0),), 0, 2)

    def test_rejects_partial_loss_annotation(self) -> None:
        with self.assertRaises(DataError):
            Lattice((0, 1, 2), (Arc(0, 1, (0,), 0.0, 1.0), Arc(1, 2, (1,), 0.0)), 0, 2)

    def test_rejects_empty_lattice(self) -> None:
        with self.assertRaises(UsageError):
            Lattice((0, 1), (), 0, 1)

    def test_locate_path_finds_reference_arcs(self) -> None:
        self.assertEqual(locate_path(diamond_lattice(), (1, 1, 3)), (1, 3))
        self.assertEqual(locate_path(skip_lattice(), (0, 1, 3, 3)), (0, 4))
        with self.assertRaises(DataError):
            locate_path(diamond_lattice(), (2, 2, 2))

    def test_path_symbols_collapse_repeats(self) -> None:
        self.assertEqual(path_symbols((0, 0, 1, 1, 0)), (0, 1, 0))
        symbol_map = np.array([0, 0, 1, 1])
        self.assertEqual(path_symbols((0, 1, 2, 3), symbol_map), (0, 1))
        self.assertEqual(Reference.from_states((2, 3, 0), symbol_map).symbols, (1, 0))


class ForwardBackwardTest(unittest.TestCase):
    def test_uniform_acoustics_leave_only_transition_weights(self) -> None:
        lat = diamond_lattice()
        ll = acoustic_loglikes(np.zeros((3, NUM_STATES)))
        post = forward_backward(lat, ll, 1.0)

        expected_z = math.log((1 + math.exp(-0.5)) * (1 + math.exp(-0.2))) + 3 * math.log(0.25)
        self.assertAlmostEqual(post.log_z, expected_z, places=12)
        self.assertAlmostEqual(post.log_z_backward, expected_z, places=12)
        p_first = 1.0 / (1.0 + math.exp(-0.5))
        np.testing.assert_allclose(post.gamma[0], [p_first, 1 - p_first, 0, 0], atol=1e-12)
        np.testing.assert_allclose(post.gamma.sum(axis=1), 1.0, atol=1e-12)

    def test_kappa_scales_every_score(self) -> None:
        lat = skip_lattice()
        ll = acoustic_loglikes(np.random.default_rng(0).standard_normal((4, NUM_STATES)))
        full = forward_backward(lat, ll, 1.0)
        half = forward_backward(lat, ll, 0.5)
        np.testing.assert_allclose(half.arc_scores, 0.5 * full.arc_scores)

    def test_log_priors_are_subtracted(self) -> None:
        acts = np.random.default_rng(1).standard_normal((3, NUM_STATES))
        priors = np.log(np.array([0.1, 0.2, 0.3, 0.4]))
        np.testing.assert_allclose(
            acoustic_loglikes(acts, priors), acoustic_loglikes(acts) - priors, atol=1e-14
        )

    def test_single_path_has_unit_arc_posteriors(self) -> None:
        lat = chain_lattice()
        post = forward_backward(lat, acoustic_loglikes(np.zeros((3, NUM_STATES))), 0.7)
        np.testing.assert_allclose(post.arc_posteriors, 1.0)

    def test_rejects_non_positive_kappa_and_short_activations(self) -> None:
        lat = diamond_lattice()
        with self.assertRaises(UsageError):
            forward_backward(lat, np.zeros((3, NUM_STATES)), 0.0)
        with self.assertRaises(UsageError):
            forward_backward(lat, np.zeros((2, NUM_STATES)), 1.0)

    def test_expected_losses_average_over_paths(self) -> None:
        lat = annotate_local_loss(diamond_lattice(), (0, 0, 2), LossLevel.STATE)
        post = forward_backward(lat, acoustic_loglikes(np.zeros((3, NUM_STATES))), 1.0)
        c, c_avg = expected_losses(lat, post)
        p1 = math.exp(-0.5) / (1 + math.exp(-0.5))
        p3 = math.exp(-0.2) / (1 + math.exp(-0.2))
        self.assertAlmostEqual(c_avg, 2 * p1 + p3, places=12)
        # every path through arc 1 pays its 2 frame errors plus the expected second segment
        self.assertAlmostEqual(c[1], 2 + p3, places=12)
        self.assertAlmostEqual(c[2], 2 * p1, places=12)


class LocalLossTest(unittest.TestCase):
    def test_state_level_counts_frame_errors(self) -> None:
        lat = annotate_local_loss(diamond_lattice(), Reference.from_states((0, 1, 2)), LossLevel.STATE)
        self.assertEqual([a.loss for a in lat.arcs], [1.0, 1.0, 0.0, 1.0])
        self.assertIs(lat.loss_level, LossLevel.STATE)

    def test_phone_level_uses_majority_agreement(self) -> None:
        lat = annotate_local_loss(skip_lattice(), (0, 1, 2, 3), "phone")
        # arc 4 spans (1, 3, 3) against (1, 2, 3): 2 of 3 frames agree
        self.assertEqual([a.loss for a in lat.arcs], [0.0, 0.0, 1.0, 1.0, 0.0])

    def test_reference_length_must_match(self) -> None:
        with self.assertRaises(DataError):
            annotate_local_loss(diamond_lattice(), (0, 0), LossLevel.STATE)

    def test_levenshtein_and_token_error_rate(self) -> None:
        self.assertEqual(levenshtein("kitten", "sitting"), 3)
        self.assertEqual(levenshtein((), (1, 2)), 2)
        self.assertEqual(token_error_rate((1, 2, 3), (1, 2, 3)), 0.0)
        self.assertAlmostEqual(token_error_rate((1, 3), (1, 2, 3)), 1 / 3)


class ViterbiTest(unittest.TestCase):
    def test_picks_highest_scoring_path(self) -> None:
        acts = np.full((3, NUM_STATES), -5.0)
        acts[0:2, 1] = 5.0
        acts[2, 2] = 5.0
        best = viterbi_decode(diamond_lattice(), acts, 1.0)
        self.assertEqual(best.arcs, (1, 2))
        self.assertEqual(best.labels, (1, 1, 2))
        self.assertEqual(best.symbols, (1, 2))

    def test_transition_weights_decide_flat_acoustics(self) -> None:
        best = viterbi_decode(diamond_lattice(), np.zeros((3, NUM_STATES)), 1.0)
        self.assertEqual(best.arcs, (0, 2))


class LatticeFormatTest(unittest.TestCase):
    def test_write_then_read_preserves_annotated_lattice(self) -> None:
        lat = annotate_local_loss(skip_lattice(), (0, 1, 2, 2), LossLevel.STATE)
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "u.lat"
            write_lattice(lat, path)
            again = read_lattice(path)
        self.assertEqual(again.times, lat.times)
        self.assertEqual(again.arcs, lat.arcs)
        self.assertIs(again.loss_level, LossLevel.STATE)

    def test_comments_and_blank_lines_are_ignored(self) -> None:
        text = "# produced by hand\n\n" + format_lattice(diamond_lattice())
        self.assertEqual(parse_lattice(text).count_paths(), 4)

    def test_rejects_wrong_magic(self) -> None:
        with self.assertRaises(DataError):
            parse_lattice("other-format 1\n")

    def test_rejects_arc_count_mismatch(self) -> None:
        lines = format_lattice(diamond_lattice()).splitlines()
        with self.assertRaisesRegex(DataError, "declares 4 arcs"):
            parse_lattice(lines[:-1], source="cut.lat")

    def test_rejects_malformed_arc_line(self) -> None:
        text = format_lattice(chain_lattice()).replace("A 1 2 2 0.0 -", "A 1 2 x 0.0 -")
        with self.assertRaisesRegex(DataError, "malformed"):
            parse_lattice(text)

    def test_missing_file(self) -> None:
        with self.assertRaises(DataError):
            read_lattice(Path("/nonexistent/u.lat"))


if __name__ == "__main__":
    unittest.main()
