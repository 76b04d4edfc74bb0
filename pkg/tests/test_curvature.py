from __future__ import annotations

import tests._path_setup  # noqa: F401

import unittest

import numpy as np

from ngseq.curvature import (
    DenseOperator,
    EmpiricalFisherOperator,
    GaussNewtonOperator,
    HessianMode,
    build_fisher_gradients,
    curvature_sample_size,
    fisher_apply,
    gn_apply,
    loss_hessian_apply,
    prepare_curvature_batch,
    psd_frame_hessians,
    sample_curvature_batch,
)
from ngseq.errors import ConfigurationError, UsageError
from ngseq.lattice import CriterionKind
from ngseq.oracle import explicit_fisher, explicit_gn, frame_loss_hessian
from tests._fixtures import NUM_STATES, tiny_batch, tiny_net


class FrameLossHessianTest(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(3)
        self.gamma = rng.dirichlet(np.ones(NUM_STATES))
        losses = rng.uniform(0, 2, NUM_STATES)
        self.gamma_hat = self.gamma * (losses - np.dot(self.gamma, losses))
        self.u = rng.standard_normal(NUM_STATES)

    def test_matrix_free_product_matches_dense_block(self) -> None:
        for mode in (HessianMode.SYMMETRIZED, HessianMode.UNSYMMETRIZED, HessianMode.PSD):
            dense = frame_loss_hessian(self.gamma, self.gamma_hat, mode) * (0.25 / 3)
            got = loss_hessian_apply(self.gamma, self.gamma_hat, 0.5, 3, self.u, mode)
            np.testing.assert_allclose(got, dense @ self.u, atol=1e-12, err_msg=str(mode))

    def test_mmi_block_is_softmax_covariance(self) -> None:
        block = frame_loss_hessian(self.gamma, self.gamma, HessianMode.SYMMETRIZED)
        np.testing.assert_allclose(block, np.diag(self.gamma) - np.outer(self.gamma, self.gamma), atol=1e-14)
        self.assertGreaterEqual(np.linalg.eigvalsh(block)[0], -1e-14)

    def test_psd_blocks_have_no_negative_eigenvalues(self) -> None:
        frames = np.vstack([self.gamma, self.gamma[::-1]])
        hats = np.vstack([self.gamma_hat, -self.gamma_hat[::-1]])
        for block in psd_frame_hessians(frames, hats):
            self.assertGreaterEqual(np.linalg.eigvalsh(block)[0], -1e-12)

    def test_identity_mode_ignores_statistics(self) -> None:
        got = loss_hessian_apply(self.gamma, self.gamma_hat, 0.5, 3, self.u, "identity")
        np.testing.assert_array_equal(got, self.u)

    def test_shape_mismatch_is_usage_error(self) -> None:
        with self.assertRaises(UsageError):
            loss_hessian_apply(self.gamma, self.gamma_hat[:2], 0.5, 1, self.u)


class GaussNewtonOperatorTest(unittest.TestCase):
    def setUp(self) -> None:
        self.net, self.theta = tiny_net(seed=2)
        self.batch = tiny_batch()
        self.rng = np.random.default_rng(11)

    def test_products_match_explicit_matrix(self) -> None:
        for kind in (CriterionKind.MMI, CriterionKind.MPE, CriterionKind.SMBR, CriterionKind.CE):
            dense = explicit_gn(self.net, self.theta, self.batch, kind, 0.5, cross_check=False)
            cached = prepare_curvature_batch(self.net, self.theta, self.batch, kind, 0.5)
            for _ in range(3):
                v = self.rng.standard_normal(self.net.num_params)
                np.testing.assert_allclose(
                    gn_apply(self.net, self.theta, cached, 0.0, v),
                    dense.matrix @ v,
                    rtol=1e-9,
                    atol=1e-12,
                    err_msg=str(kind),
                )

    def test_psd_mode_is_positive_semidefinite(self) -> None:
        dense = explicit_gn(self.net, self.theta, self.batch, CriterionKind.SMBR, 0.5, mode=HessianMode.PSD)
        self.assertGreaterEqual(np.linalg.eigvalsh(dense.matrix)[0], -1e-10)

    def test_operator_is_symmetric_and_damped(self) -> None:
        cached = prepare_curvature_batch(self.net, self.theta, self.batch, CriterionKind.MPE, 0.5)
        op = GaussNewtonOperator(self.net, self.theta, cached, damping=0.3)
        u = self.rng.standard_normal(self.net.num_params)
        v = self.rng.standard_normal(self.net.num_params)
        self.assertAlmostEqual(float(u @ (op @ v)), float(v @ (op @ u)), places=10)
        undamped = op.with_damping(0.0)
        np.testing.assert_allclose(op.apply(v), undamped.apply(v) + 0.3 * v, atol=1e-12)
        self.assertEqual(op.damping, 0.3)

    def test_products_are_linear(self) -> None:
        u = self.rng.standard_normal(self.net.num_params)
        v = self.rng.standard_normal(self.net.num_params)
        for kind in (CriterionKind.MMI, CriterionKind.MPE, CriterionKind.SMBR):
            cached = prepare_curvature_batch(self.net, self.theta, self.batch, kind, 0.5)
            op = GaussNewtonOperator(self.net, self.theta, cached, damping=0.1)
            for alpha, beta in ((2.0, -0.5), (-3.0, 0.25)):
                np.testing.assert_allclose(
                    op.apply(alpha * u + beta * v),
                    alpha * op.apply(u) + beta * op.apply(v),
                    rtol=1e-10,
                    atol=1e-10,
                    err_msg=str(kind),
                )

    def test_cached_batch_is_tied_to_parameters(self) -> None:
        cached = prepare_curvature_batch(self.net, self.theta, self.batch, CriterionKind.MMI, 0.5)
        with self.assertRaises(UsageError):
            GaussNewtonOperator(self.net, self.theta + 0.01, cached)

    def test_sequence_criteria_normalise_by_utterances(self) -> None:
        seq = prepare_curvature_batch(self.net, self.theta, self.batch, CriterionKind.MMI, 0.5)
        ce = prepare_curvature_batch(self.net, self.theta, self.batch, CriterionKind.CE, 0.5)
        self.assertEqual(seq.normalizer, 3.0)
        self.assertEqual(ce.normalizer, float(sum(u.num_frames for u in self.batch)))
        self.assertEqual(ce.kappa, 1.0)

    def test_rejects_negative_damping(self) -> None:
        cached = prepare_curvature_batch(self.net, self.theta, self.batch, CriterionKind.MMI, 0.5)
        with self.assertRaises(UsageError):
            GaussNewtonOperator(self.net, self.theta, cached, damping=-1.0)


class EmpiricalFisherTest(unittest.TestCase):
    def setUp(self) -> None:
        self.net, self.theta = tiny_net(seed=4)
        self.batch = tiny_batch()
        self.grads = build_fisher_gradients(self.net, self.theta, self.batch, 0.5)

    def test_products_match_explicit_matrix(self) -> None:
        dense = explicit_fisher(self.net, self.theta, self.batch, 0.5)
        v = np.random.default_rng(0).standard_normal(self.net.num_params)
        np.testing.assert_allclose(fisher_apply(self.grads, 0.0, v), dense.matrix @ v, rtol=1e-9, atol=1e-12)

    def test_products_are_linear(self) -> None:
        rng = np.random.default_rng(7)
        u = rng.standard_normal(self.net.num_params)
        v = rng.standard_normal(self.net.num_params)
        op = EmpiricalFisherOperator(self.grads, scale=2.0, floor=1e-4)
        for alpha, beta in ((2.0, -0.5), (-3.0, 0.25)):
            np.testing.assert_allclose(
                op.apply(alpha * u + beta * v), alpha * op.apply(u) + beta * op.apply(v), rtol=1e-10, atol=1e-10
            )
            np.testing.assert_allclose(
                fisher_apply(self.grads, 0.0, alpha * u + beta * v),
                alpha * fisher_apply(self.grads, 0.0, u) + beta * fisher_apply(self.grads, 0.0, v),
                rtol=1e-10,
                atol=1e-10,
            )

    def test_rank_is_bounded_by_utterance_count(self) -> None:
        dense = explicit_fisher(self.net, self.theta, self.batch, 0.5)
        self.assertLessEqual(np.linalg.matrix_rank(dense.matrix), len(self.batch))

    def test_scale_and_floor(self) -> None:
        op = EmpiricalFisherOperator(self.grads, scale=2.0, floor=1e-3)
        v = np.random.default_rng(1).standard_normal(self.net.num_params)
        np.testing.assert_allclose(op.apply(v), 2.0 * fisher_apply(self.grads, 0.0, v) + 1e-3 * v)
        rescaled = op.with_scale(4.0)
        self.assertEqual(rescaled.scale, 4.0)
        self.assertEqual(op.scale, 2.0)
        self.assertEqual(rescaled.damping, 1e-3)
        self.assertEqual(op.num_utterances, 3)

    def test_rejects_empty_gradients_and_bad_scale(self) -> None:
        with self.assertRaises(UsageError):
            fisher_apply([], 0.0, np.zeros(3))
        with self.assertRaises(UsageError):
            EmpiricalFisherOperator(self.grads, scale=0.0)


class DenseOperatorAndSamplingTest(unittest.TestCase):
    def test_dense_operator_checks_symmetry(self) -> None:
        with self.assertRaises(UsageError):
            DenseOperator(np.array([[1.0, 2.0], [0.0, 1.0]]))
        op = DenseOperator(np.eye(2) * 3.0, damping=1.0)
        np.testing.assert_allclose(op @ np.ones(2), [4.0, 4.0])
        np.testing.assert_allclose(op.damped_matrix(), np.eye(2) * 4.0)
        self.assertAlmostEqual(op.quadratic_form(np.array([1.0, 0.0])), 4.0)

    def test_sample_size_respects_fraction_and_minimum(self) -> None:
        self.assertEqual(curvature_sample_size(100, 0.02, 1), 2)
        self.assertEqual(curvature_sample_size(100, 0.02, 5), 5)
        self.assertEqual(curvature_sample_size(3, 0.5, 10), 3)
        with self.assertRaises(ConfigurationError):
            curvature_sample_size(10, 0.0, 1)
        with self.assertRaises(ConfigurationError):
            curvature_sample_size(10, 0.5, 0)

    def test_sample_is_ordered_subset_and_reproducible(self) -> None:
        pool = list(range(20))
        first = sample_curvature_batch(pool, 0.25, 1, np.random.default_rng(5))
        again = sample_curvature_batch(pool, 0.25, 1, np.random.default_rng(5))
        self.assertEqual(first, again)
        self.assertEqual(len(first), 5)
        self.assertEqual(first, sorted(set(first)))
        with self.assertRaises(UsageError):
            sample_curvature_batch([], 0.5, 1, np.random.default_rng(0))


if __name__ == "__main__":
    unittest.main()
