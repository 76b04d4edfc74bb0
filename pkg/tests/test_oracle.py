from __future__ import annotations

import tests._path_setup  # noqa: F401

import tempfile
import unittest
from pathlib import Path

import numpy as np

from ngseq.errors import DataError, UsageError
from ngseq.harness.verify import tiny_setup
from ngseq.lattice import CriterionKind, acoustic_loglikes, forward_backward
from ngseq.net import Network, forward, rop
from ngseq.oracle import (
    MAX_ORACLE_PARAMS,
    DenseOperator,
    enumerate_paths,
    enumeration_statistics,
    exact_fisher,
    explicit_fisher,
    explicit_gn,
    explicit_jacobian,
    fd_gradient,
    fd_hessian,
    kl_quadratic_check,
    outer_product_matrix,
    path_log_posterior,
    probe_operator,
    read_matrix,
    write_matrix,
)
from tests._fixtures import NUM_STATES, diamond_lattice, skip_lattice, tiny_batch, tiny_net


class EnumerationTest(unittest.TestCase):
    def test_statistics_agree_with_forward_backward(self) -> None:
        acts = np.random.default_rng(0).standard_normal((4, NUM_STATES))
        lat = skip_lattice()
        paths = enumerate_paths(lat, acts, 0.7)
        stats = enumeration_statistics(paths, 4, NUM_STATES)
        post = forward_backward(lat, acoustic_loglikes(acts), 0.7)
        self.assertEqual(len(paths), 3)
        self.assertAlmostEqual(stats.log_z, post.log_z, places=12)
        np.testing.assert_allclose(stats.gamma, post.gamma, atol=1e-12)
        self.assertAlmostEqual(float(stats.posteriors.sum()), 1.0, places=12)
        self.assertIsNone(stats.c_avg)

    def test_entropy_is_below_uniform_bound(self) -> None:
        lat = diamond_lattice()
        paths = enumerate_paths(lat, np.zeros((3, NUM_STATES)), 1.0)
        # transition weights 0 / -0.5 and 0 / -0.2 make the paths non-uniform
        stats = enumeration_statistics(paths, 3, NUM_STATES)
        self.assertGreater(stats.entropy, 0.0)
        self.assertLess(stats.entropy, np.log(4))

    def test_entropy_rises_as_kappa_falls(self) -> None:
        kappas = (1.0, 0.5, 0.1)
        checked = 0
        for seed in range(4):
            dataset, net, theta = tiny_setup(seed)
            for utt in dataset.train:
                if utt.denominator.count_paths() < 2:
                    continue
                acts = forward(net, theta, utt.frames).outputs
                entropies = []
                for kappa in kappas:
                    paths = enumerate_paths(utt.denominator, acts, kappa)
                    entropies.append(enumeration_statistics(paths, utt.num_frames, dataset.num_states).entropy)
                spread = np.ptp([p.score for p in enumerate_paths(utt.denominator, acts, 1.0)])
                if spread < 1e-9:
                    continue
                self.assertLess(entropies[0], entropies[1])
                self.assertLess(entropies[1], entropies[2])
                self.assertLessEqual(entropies[2], np.log(utt.denominator.count_paths()) + 1e-12)
                checked += 1
        self.assertGreater(checked, 0)

    def test_path_limit(self) -> None:
        with self.assertRaises(UsageError):
            enumerate_paths(diamond_lattice(), np.zeros((3, NUM_STATES)), 1.0, max_paths=3)

    def test_log_posterior_of_missing_path(self) -> None:
        paths = enumerate_paths(diamond_lattice(), np.zeros((3, NUM_STATES)), 1.0)
        self.assertLess(path_log_posterior(paths, (0, 2)), 0.0)
        with self.assertRaises(UsageError):
            path_log_posterior(paths, (0, 1))


class FiniteDifferenceTest(unittest.TestCase):
    def test_gradient_and_hessian_of_a_cubic(self) -> None:
        a = np.array([[2.0, 0.5], [0.5, 1.0]])

        def fn(x: np.ndarray) -> float:
            return float(0.5 * x @ a @ x + x[0] ** 3)

        x = np.array([0.3, -0.7])
        np.testing.assert_allclose(fd_gradient(fn, x), a @ x + [3 * x[0] ** 2, 0.0], atol=1e-7)
        np.testing.assert_allclose(fd_hessian(fn, x), a + np.diag([6 * x[0], 0.0]), atol=1e-5)

    def test_rejects_non_positive_step(self) -> None:
        with self.assertRaises(UsageError):
            fd_gradient(lambda x: 0.0, np.zeros(2), eps=0.0)


class DenseMatrixTest(unittest.TestCase):
    def setUp(self) -> None:
        self.net, self.theta = tiny_net(seed=6)
        self.batch = tiny_batch()

    def test_jacobian_agrees_with_rop(self) -> None:
        frames = self.batch[0].frames
        jac = explicit_jacobian(self.net, self.theta, frames)
        v = np.random.default_rng(1).standard_normal(self.net.num_params)
        record = forward(self.net, self.theta, frames)
        np.testing.assert_allclose(np.einsum("tdp,p->td", jac, v), rop(self.net, self.theta, record, v), atol=1e-12)

    def test_explicit_gn_cross_check_passes(self) -> None:
        for kind in CriterionKind:
            op = explicit_gn(self.net, self.theta, self.batch, kind, 0.5, damping=0.1)
            self.assertEqual(op.damping, 0.1)
            self.assertEqual(op.matrix.shape, (self.net.num_params, self.net.num_params))

    def test_empirical_fisher_rank_and_exact_fisher_psd(self) -> None:
        empirical = explicit_fisher(self.net, self.theta, self.batch, 0.5)
        exact = exact_fisher(self.net, self.theta, self.batch, 0.5)
        self.assertLessEqual(np.linalg.matrix_rank(empirical.matrix), len(self.batch))
        self.assertGreaterEqual(np.linalg.eigvalsh(exact.matrix)[0], -1e-10)

    def test_probe_and_outer_product(self) -> None:
        m = np.array([[2.0, 1.0], [1.0, 3.0]])
        np.testing.assert_array_equal(probe_operator(DenseOperator(m)), m)
        g = [np.array([1.0, 0.0]), np.array([0.0, 2.0])]
        np.testing.assert_allclose(outer_product_matrix(g), np.diag([0.5, 2.0]))

    def test_size_guard(self) -> None:
        net = Network((30, 30, 4))
        self.assertGreater(net.num_params, MAX_ORACLE_PARAMS)
        with self.assertRaises(UsageError):
            explicit_jacobian(net, np.zeros(net.num_params), np.zeros((2, 30)))

    def test_matrix_file_format(self) -> None:
        m = np.random.default_rng(2).standard_normal((3, 2))
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "m.txt"
            write_matrix(path, m)
            self.assertTrue(path.read_text().startswith("ngseq-matrix 1 3 2\n"))
            np.testing.assert_array_equal(read_matrix(path), m)
            path.write_text("ngseq-matrix 1 3 2\n1 2\n", encoding="utf-8")
            with self.assertRaises(DataError):
                read_matrix(path)
        with self.assertRaises(DataError):
            read_matrix(Path("/nonexistent/m.txt"))


class KLTest(unittest.TestCase):
    def test_quadratic_form_is_second_order_accurate(self) -> None:
        net, theta = tiny_net(seed=8)
        batch = tiny_batch()
        direction = np.random.default_rng(8).standard_normal(net.num_params)
        direction /= np.linalg.norm(direction)
        coarse = kl_quadratic_check(net, theta, 1e-1 * direction, batch, 0.5)
        fine = kl_quadratic_check(net, theta, 1e-2 * direction, batch, 0.5)
        self.assertGreater(fine.exact_kl, 0.0)
        self.assertAlmostEqual(fine.ratio, 1.0, delta=0.1)
        self.assertGreater((coarse.remainder / 1e-2) / (fine.remainder / 1e-4), 5.0)

    def test_zero_step_has_zero_divergence(self) -> None:
        net, theta = tiny_net(seed=9)
        check = kl_quadratic_check(net, theta, np.zeros(net.num_params), tiny_batch(), 0.5)
        self.assertEqual(check.exact_kl, 0.0)
        self.assertEqual(check.ratio, 1.0)


if __name__ == "__main__":
    unittest.main()
