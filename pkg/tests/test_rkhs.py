import numpy as np
import pytest

from sobnat.errors import SingularProbeSet
from sobnat.kernel import EXACT_CONSTANT, KernelSpec, gram, point_kernel
from sobnat.losses import SQUARED
from sobnat.rkhs import (
    KernelExpansion,
    check_basis_orthonormality,
    evaluate,
    evaluate_batch,
    functional_gd,
    projection_kernel,
    rkhs_inner,
)

EXACT_1D = KernelSpec(input_dim=1, constant_mode=EXACT_CONSTANT)
UNIT_1D = KernelSpec(input_dim=1)


class TestEvaluate:
    def test_empty_expansion_is_zero(self):
        f = KernelExpansion.zero(UNIT_1D, output_dim=3)
        np.testing.assert_array_equal(evaluate(f, [0.7]), np.zeros(3))

    def test_single_center_at_itself(self):
        v = np.array([2.0, -1.0])
        f = KernelExpansion(EXACT_1D, np.array([[0.4]]), v.reshape(1, -1))
        np.testing.assert_allclose(evaluate(f, [0.4]), v / 4.0)

    def test_two_centers_hand_sum(self):
        centers = np.array([[0.0], [1.5]])
        coeffs = np.array([[1.0], [-2.0]])
        f = KernelExpansion(EXACT_1D, centers, coeffs)
        x = np.array([0.6])
        expected = 0.0
        for t in range(2):
            r = abs(centers[t, 0] - x[0])
            expected += np.exp(-r) * (1 + r) / 4.0 * coeffs[t, 0]
        np.testing.assert_allclose(evaluate(f, x), [expected])


class TestFunctionalGD:
    def test_zero_steps(self):
        f = functional_gd(np.array([[0.0]]), np.array([1.0]), SQUARED, 0, 0.1, UNIT_1D)
        assert f.centers.shape[0] == 0
        np.testing.assert_array_equal(evaluate(f, [0.0]), [0.0])

    def test_single_step_squared_loss(self):
        # From f0 = 0 the loss gradient at (x1, y1) is -y1, so one step gives
        # f1(x) = eta * d(|x1 - x|) * y1.
        x1, y1, eta = 0.5, 3.0, 0.05
        f = functional_gd(np.array([[x1]]), np.array([y1]), SQUARED, 1, eta, EXACT_1D)
        for x in (-1.0, 0.5, 2.0):
            r = abs(x - x1)
            np.testing.assert_allclose(
                evaluate(f, [x]), [eta * np.exp(-r) * (1 + r) / 4.0 * y1]
            )

    def test_centers_are_visited_points(self):
        xs = np.linspace(0.0, 4.0, 5).reshape(-1, 1)
        ys = np.sin(xs[:, 0])
        f = functional_gd(xs, ys, SQUARED, 12, 0.1, UNIT_1D)
        assert f.centers.shape[0] == 12
        np.testing.assert_array_equal(f.centers[:5], xs)
        np.testing.assert_array_equal(f.centers[5:10], xs)

    def test_residual_nonincreasing_across_passes(self):
        xs = np.linspace(0.0, 4.0, 5).reshape(-1, 1)
        ys = np.array([0.0, 1.0, 0.5, -1.0, 2.0])
        residuals = []
        for passes in range(1, 11):
            f = functional_gd(xs, ys, SQUARED, 5 * passes, 0.2, UNIT_1D)
            preds = evaluate_batch(f, xs)[:, 0]
            residuals.append(float(np.sum((preds - ys) ** 2)))
        assert all(b <= a + 1e-12 for a, b in zip(residuals, residuals[1:]))

    def test_full_batch_mode(self):
        xs = np.array([[0.0], [1.0]])
        ys = np.array([1.0, -1.0])
        f = functional_gd(xs, ys, SQUARED, 3, 0.1, UNIT_1D, mode="full_batch")
        assert f.centers.shape[0] == 6  # every step appends the whole batch


class TestRkhsInner:
    def test_inner_with_zero(self):
        f = KernelExpansion(UNIT_1D, np.array([[1.0]]), np.array([[2.0]]))
        zero = KernelExpansion.zero(UNIT_1D, output_dim=1)
        assert rkhs_inner(f, zero) == 0.0

    def test_single_center_norm(self):
        f = KernelExpansion(EXACT_1D, np.array([[0.0]]), np.array([[1.0]]))
        assert rkhs_inner(f, f) == pytest.approx(0.25)

    def test_symmetry_and_bilinearity(self):
        rng = np.random.default_rng(0)
        f = KernelExpansion(UNIT_1D, rng.normal(size=(3, 1)), rng.normal(size=(3, 2)))
        g = KernelExpansion(UNIT_1D, rng.normal(size=(4, 1)), rng.normal(size=(4, 2)))
        assert rkhs_inner(f, g) == pytest.approx(rkhs_inner(g, f))
        g2 = KernelExpansion(UNIT_1D, g.centers, 2.5 * g.coeffs)
        assert rkhs_inner(f, g2) == pytest.approx(2.5 * rkhs_inner(f, g))

    def test_reproducing_property(self):
        # <d(|x - .|) e_j, f> = f_j(x) for random expansions.
        rng = np.random.default_rng(1)
        f = KernelExpansion(UNIT_1D, rng.normal(size=(4, 1)), rng.normal(size=(4, 3)))
        for _ in range(5):
            x = rng.normal(size=1)
            j = rng.integers(0, 3)
            coeff = np.zeros((1, 3))
            coeff[0, j] = 1.0
            rep = KernelExpansion(UNIT_1D, x.reshape(1, 1), coeff)
            assert rkhs_inner(rep, f) == pytest.approx(evaluate(f, x)[j], abs=1e-12)

    def test_positive_norm_for_distinct_centers(self):
        rng = np.random.default_rng(2)
        f = KernelExpansion(UNIT_1D, np.array([[0.0], [1.0], [2.5]]), rng.normal(size=(3, 1)))
        assert rkhs_inner(f, f) > 0


class TestBasisOrthonormality:
    def test_single_constant_function(self):
        basis = [lambda x: np.array([3.7])]
        probes = np.array([[-1.0], [0.5], [2.0]])
        g = check_basis_orthonormality(basis, probes)
        np.testing.assert_allclose(g, [[1.0]], atol=1e-10)

    def test_linear_and_constant(self):
        basis = [lambda x: np.array([x[0]]), lambda x: np.array([1.0])]
        probes = np.array([[-1.0], [0.0], [1.0]])
        g = check_basis_orthonormality(basis, probes)
        np.testing.assert_allclose(g, np.eye(2), atol=1e-8)

    def test_invertible_recombination_stays_orthonormal(self):
        rng = np.random.default_rng(4)
        mix = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        funcs = [
            lambda x: np.array([1.0]),
            lambda x: np.array([x[0]]),
            lambda x: np.array([x[0] ** 2]),
        ]
        basis = [
            (lambda row: lambda x: sum(row[k] * funcs[k](x) for k in range(3)))(mix[i])
            for i in range(3)
        ]
        probes = np.linspace(-1.5, 1.5, 7).reshape(-1, 1)
        g = check_basis_orthonormality(basis, probes)
        np.testing.assert_allclose(g, np.eye(3), atol=1e-8)

    def test_singular_probe_set(self):
        basis = [lambda x: np.array([x[0]]), lambda x: np.array([1.0])]
        with pytest.raises(SingularProbeSet):
            check_basis_orthonormality(basis, np.array([[2.0]]))
        dependent = [lambda x: np.array([x[0]]), lambda x: np.array([2.0 * x[0]])]
        with pytest.raises(SingularProbeSet):
            check_basis_orthonormality(dependent, np.array([[-1.0], [0.0], [1.0]]))


class TestProjectionKernel:
    def test_rank_one(self):
        # One parameter, scalar output: K_f(x, x') = dphi(x) dphi(x') / |dphi|^2.
        jac_x = np.array([[1.4]])
        jac_xp = np.array([[-0.3]])
        ginv = np.array([[1.0 / 2.0]])
        np.testing.assert_allclose(
            projection_kernel(jac_x, jac_xp, ginv), [[1.4 * -0.3 / 2.0]]
        )

    def test_identity_metric_gives_ntk_form(self):
        rng = np.random.default_rng(5)
        jac_x = rng.normal(size=(4, 2))
        jac_xp = rng.normal(size=(4, 2))
        got = projection_kernel(jac_x, jac_xp, np.eye(4))
        expected = sum(np.outer(jac_x[i], jac_xp[i]) for i in range(4))
        np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_kernel_machine_reproduces_gram(self):
        rng = np.random.default_rng(6)
        spec = KernelSpec(input_dim=1, jitter=0.0)
        pts = rng.normal(size=(5, 1))
        g = gram(pts, spec)
        k, kinv = g.values, g.inverse
        for i in range(5):
            for j in range(5):
                got = projection_kernel(k[:, i : i + 1], k[:, j : j + 1], kinv)
                np.testing.assert_allclose(got, [[k[i, j]]], atol=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        jac_x = rng.normal(size=(3, 2))
        jac_xp = rng.normal(size=(3, 2))
        ginv = np.eye(3) * 0.7
        a = projection_kernel(jac_x, jac_xp, ginv)
        b = projection_kernel(jac_xp, jac_x, ginv)
        np.testing.assert_allclose(a, b.T, atol=1e-14)


def test_point_kernel_radial_symmetry():
    rng = np.random.default_rng(8)
    spec = KernelSpec(input_dim=3)
    for _ in range(10):
        x, y = rng.normal(size=3), rng.normal(size=3)
        r = np.linalg.norm(x - y)
        assert point_kernel(r, spec) == point_kernel(np.linalg.norm(y - x), spec)
