"""Problem builders, the 3-D gradient operator, and dataset ingestion."""

import numpy as np
import pytest
import scipy.sparse as sp

from pdcd.blocks import BlockVector
from pdcd.diagnostics import objective_value
from pdcd.functions import BoxIndicator, GroupL21, HyperplaneIndicator, QuadraticSmooth, ScaledL1
from pdcd.problems import (
    ProblemSpec,
    build_lasso,
    build_svm_dual,
    build_toy_counterexample,
    build_tv_l1,
    gradient_operator_3d,
    read_libsvm,
    svm_class_weights,
    synth_classification,
    synth_regression,
)

from helpers import (
    dense_oracle,
    lasso_objective,
    random_blockvector,
    two_point_svm,
    write_libsvm,
)


class TestGradientOperator:
    def test_line_volume_matrix(self):
        M, group_dims = gradient_operator_3d((3, 1, 1))
        want = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
        np.testing.assert_array_equal(dense_oracle(M), want)
        assert group_dims == (1, 1)

    def test_every_row_couples_two_voxels(self):
        M, _ = gradient_operator_3d((2, 2, 2))
        assert M.p == 12
        assert np.all(M.multiplicities == 2)
        dense = dense_oracle(M)
        np.testing.assert_array_equal(np.sum(dense != 0, axis=1), np.full(12, 2))
        np.testing.assert_array_equal(dense.sum(axis=1), np.zeros(12))

    def test_group_layout(self):
        _, group_dims = gradient_operator_3d((2, 2, 2))
        # voxel (a,b,c) owns one row per axis with room; the far corner
        # owns none and is absent from the group list
        assert group_dims == (3, 2, 2, 1, 2, 1, 1)
        M, gd = gradient_operator_3d((4, 3, 2))
        assert len(gd) == 4 * 3 * 2 - 1
        assert sum(gd) == M.p

    def test_adjoint_identity(self):
        M, _ = gradient_operator_3d((3, 2, 2))
        dense = dense_oracle(M)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = random_blockvector(rng, M.primal_dims)
            y = random_blockvector(rng, M.dual_dims)
            lhs = float(y.to_flat() @ (dense @ x.to_flat()))
            rhs = float(M.adjoint_apply(y).to_flat() @ x.to_flat())
            assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)
            np.testing.assert_allclose(M.apply(x).to_flat(), dense @ x.to_flat(), atol=1e-14)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="three positive extents"):
            gradient_operator_3d((2, 2))
        with pytest.raises(ValueError, match="three positive extents"):
            gradient_operator_3d((2, 0, 2))


class TestTvBuilder:
    @staticmethod
    def _instance(r, dims=(2, 2, 2), seed=0):
        rng = np.random.default_rng(seed)
        nvox = int(np.prod(dims))
        A = rng.standard_normal((5, nvox))
        b = rng.standard_normal(5)
        return A, b, build_tv_l1(A, b, 0.4, r, dims)

    def test_weight_split(self):
        _, _, prob = self._instance(0.3)
        assert prob.g.alpha == pytest.approx(0.4 * 0.3)
        assert prob.h.alpha == pytest.approx(0.4 * 0.7)
        assert prob.kind == "tv_l1"
        assert prob.meta["volume_dims"] == (2, 2, 2)

    def test_constant_volume_has_zero_tv(self):
        A, b, prob = self._instance(0.5)
        x = BlockVector([np.full(1, 1.7)] * 8)
        assert np.max(np.abs(prob.M.apply(x).to_flat())) == 0.0
        resid = A @ np.full(8, 1.7) - b
        want = 0.5 * float(resid @ resid) + 0.4 * 0.5 * 8 * 1.7
        assert objective_value(prob, x) == pytest.approx(want, rel=1e-13)

    def test_r_one_is_lasso(self):
        A, b, prob = self._instance(1.0)
        assert prob.h.alpha == 0.0
        rng = np.random.default_rng(3)
        for _ in range(20):
            xf = rng.standard_normal(8)
            x = BlockVector([np.array([v]) for v in xf])
            assert objective_value(prob, x) == pytest.approx(
                lasso_objective(A, b, 0.4, xf), rel=1e-12
            )

    def test_validation(self):
        A = np.zeros((3, 8))
        b = np.zeros(3)
        with pytest.raises(ValueError, match="r must lie"):
            build_tv_l1(A, b, 0.1, 1.5, (2, 2, 2))
        with pytest.raises(ValueError, match="alpha"):
            build_tv_l1(A, b, -0.1, 0.5, (2, 2, 2))
        with pytest.raises(ValueError, match="voxels"):
            build_tv_l1(np.zeros((3, 7)), b, 0.1, 0.5, (2, 2, 2))

    def test_sparse_design_accepted(self):
        A = sp.random(6, 8, density=0.4, random_state=0, format="csr")
        prob = build_tv_l1(A, np.zeros(6), 0.2, 0.5, (2, 2, 2))
        x = BlockVector([np.full(1, 1.0)] * 8)
        assert np.isfinite(objective_value(prob, x))


class TestLassoBuilder:
    def test_objective_matches_oracle(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((6, 10))
        b = rng.standard_normal(6)
        prob = build_lasso(A, b, 0.25)
        assert prob.kind == "lasso"
        assert prob.M.p == 0
        for _ in range(10):
            xf = rng.standard_normal(10)
            x = BlockVector([np.array([v]) for v in xf])
            assert objective_value(prob, x) == pytest.approx(
                lasso_objective(A, b, 0.25, xf), rel=1e-12
            )


class TestToyBuilder:
    def test_minimizer_and_curvatures(self):
        prob = build_toy_counterexample()
        np.testing.assert_allclose(prob.meta["x_star"], np.full(3, 1.0 / 3.0))
        x = BlockVector([np.array([v]) for v in prob.meta["x_star"]])
        assert objective_value(prob, x) == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(prob.f.beta, np.ones(3))
        assert prob.f.lipschitz == pytest.approx(3.0, rel=1e-12)


class TestSvmBuilder:
    def test_term_wiring(self):
        A, b, C, lam, _, _ = two_point_svm()
        prob = build_svm_dual(A, b, C, lam)
        assert prob.kind == "svm_dual"
        assert isinstance(prob.g, BoxIndicator)
        assert isinstance(prob.h, HyperplaneIndicator)
        assert prob.M.all_single

    def test_curvature_is_column_norm_over_lam(self):
        A, b = synth_classification(2, 15, 4)
        lam = 0.7
        prob = build_svm_dual(A, b, 1.0, lam)
        want = np.sum(A * A, axis=0) / lam
        np.testing.assert_allclose(prob.f.beta, want, rtol=1e-12)

    def test_objective_hand_value(self):
        A, b, C, lam, _, _ = two_point_svm()
        prob = build_svm_dual(A, b, C, lam)
        t = 0.4
        x = BlockVector([np.array([t]), np.array([t])])
        w = A @ (b * np.array([t, t]))
        want = 0.5 / lam * float(w @ w) - 2 * t
        assert objective_value(prob, x) == pytest.approx(want, abs=1e-12)

    def test_validation(self):
        A = np.zeros((2, 4))
        with pytest.raises(ValueError, match="labels"):
            build_svm_dual(A, np.ones(3), 1.0, 0.5)
        with pytest.raises(ValueError, match="positive"):
            build_svm_dual(A, np.ones(4), 0.0, 0.5)


class TestReadLibsvm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((6, 4))
        X[rng.random((6, 4)) < 0.3] = 0.0
        X[0, :] = 0.0  # a sample with no features at all
        y = np.where(rng.random(6) < 0.5, 1.0, -1.0)
        path = tmp_path / "data.txt"
        write_libsvm(path, X, y)
        A, b = read_libsvm(path, n_features=4)
        assert sp.issparse(A)
        np.testing.assert_allclose(A.toarray(), X, atol=1e-12)
        np.testing.assert_array_equal(b, y)

    def test_zero_one_labels_mapped(self, tmp_path):
        path = tmp_path / "zo.txt"
        path.write_text("1 1:2.0\n0 2:3.0\n1 1:-1.0\n")
        _, b = read_libsvm(path)
        np.testing.assert_array_equal(b, [1.0, -1.0, 1.0])

    def test_blank_lines_and_comments_skipped(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# header\n\n+1 1:1.0\n\n-1 2:2.0\n")
        A, b = read_libsvm(path)
        assert A.shape == (2, 2)
        np.testing.assert_array_equal(b, [1.0, -1.0])

    @pytest.mark.parametrize(
        "content,msg",
        [
            ("abc 1:1.0\n", "line 1: bad label"),
            ("+1 1:1.0\n-1 nonsense\n", "line 2: expected index:value"),
            ("+1 1:x\n", "line 1: expected index:value"),
            ("+1 0:1.0\n", "1-based"),
            ("+1 1:1.0 1:2.0\n", "repeated feature 1"),
            ("+1 1:inf\n", "non-finite"),
            ("", "no samples"),
            ("+1 1:1.0\n2 1:1.0\n", "labels must be within"),
        ],
    )
    def test_malformed_inputs(self, tmp_path, content, msg):
        path = tmp_path / "bad.txt"
        path.write_text(content)
        with pytest.raises(ValueError, match=msg):
            read_libsvm(path)

    def test_n_features_too_small(self, tmp_path):
        path = tmp_path / "wide.txt"
        path.write_text("+1 5:1.0\n")
        with pytest.raises(ValueError, match="exceeds n_features"):
            read_libsvm(path, n_features=3)

    def test_n_features_pads(self, tmp_path):
        path = tmp_path / "narrow.txt"
        path.write_text("+1 2:1.0\n-1 1:3.0\n")
        A, _ = read_libsvm(path, n_features=6)
        assert A.shape == (2, 6)


class TestSynthData:
    def test_regression_deterministic_and_sparse(self):
        A1, b1, x1 = synth_regression(9, 12, 50, sparsity=0.1, noise=0.0)
        A2, b2, x2 = synth_regression(9, 12, 50, sparsity=0.1, noise=0.0)
        np.testing.assert_array_equal(A1, A2)
        np.testing.assert_array_equal(b1, b2)
        np.testing.assert_array_equal(x1, x2)
        assert A1.shape == (12, 50)
        assert int(np.sum(x1 != 0)) == 5
        np.testing.assert_allclose(b1, A1 @ x1, atol=1e-15)

    def test_regression_noise_changes_b_only(self):
        A1, b1, x1 = synth_regression(4, 10, 20, noise=0.0)
        A2, b2, x2 = synth_regression(4, 10, 20, noise=0.05)
        np.testing.assert_array_equal(A1, A2)
        np.testing.assert_array_equal(x1, x2)
        assert np.max(np.abs(b1 - b2)) > 0

    def test_classification_shapes_and_balance(self):
        A, b = synth_classification(7, 21, 5)
        assert A.shape == (5, 21)
        assert set(np.unique(b)) == {-1.0, 1.0}
        assert abs(int(np.sum(b > 0)) - int(np.sum(b < 0))) <= 1
        A2, b2 = synth_classification(7, 21, 5)
        np.testing.assert_array_equal(A, A2)
        np.testing.assert_array_equal(b, b2)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            synth_regression(0, 0, 5)
        with pytest.raises(ValueError):
            synth_classification(0, 1, 3)


class TestClassWeights:
    def test_balances_total_weight(self):
        b = np.array([1.0] * 3 + [-1.0] * 7)
        C = svm_class_weights(b, c_max=2.0)
        np.testing.assert_allclose(C[:3], np.full(3, 2.0))
        np.testing.assert_allclose(C[3:], np.full(7, 2.0 * 3 / 7))
        assert float(np.sum(C[:3])) == pytest.approx(float(np.sum(C[3:])))

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both labels"):
            svm_class_weights(np.ones(4))


class TestProblemSpecValidation:
    def test_f_block_mismatch(self):
        rng = np.random.default_rng(0)
        from pdcd.blocks import BlockLinearOperator

        M = BlockLinearOperator((2, 2), (1,), {(0, 0): rng.standard_normal((1, 2))})
        f = QuadraticSmooth(rng.standard_normal((3, 4)), np.zeros(3), block_dims=(1, 3))
        with pytest.raises(ValueError, match="primal blocks"):
            ProblemSpec(f, ScaledL1(0.1), ScaledL1(0.1), M)

    def test_h_partition_mismatch(self):
        rng = np.random.default_rng(0)
        from pdcd.blocks import BlockLinearOperator

        M = BlockLinearOperator(
            (2,), (1, 1), {(0, 0): rng.standard_normal((1, 2)), (1, 0): rng.standard_normal((1, 2))}
        )
        f = QuadraticSmooth(rng.standard_normal((3, 2)), np.zeros(3), block_dims=(2,))
        with pytest.raises(ValueError, match="group sizes cover"):
            ProblemSpec(f, ScaledL1(0.1), GroupL21(0.1, (3,)), M)

        class Overlapping(ScaledL1):
            def prox_groups(self, count):
                return [(j, j) for j in range(count)]

        with pytest.raises(ValueError, match="partition"):
            ProblemSpec(f, ScaledL1(0.1), Overlapping(0.1), M)

    def test_groups_for_primal(self):
        prob = build_tv_l1(np.zeros((2, 8)), np.zeros(2), 0.1, 0.5, (2, 2, 2))
        owner = {}
        for t, grp in enumerate(prob.dual_groups):
            for j in grp:
                owner[j] = t
        for i in range(prob.n):
            want = tuple(sorted({owner[j] for j in prob.M.col_support[i]}))
            assert prob.groups_for_primal[i] == want
