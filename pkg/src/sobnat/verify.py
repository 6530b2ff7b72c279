"""Self-contained verification suites behind the ``verify`` CLI command.

Each suite returns a list of (check name, passed, detail) triples; the CLI
prints one line per check and exits nonzero if anything failed.  The checks
mirror the package's core oracles: closed-form kernel vs quadrature, finite
differences vs backprop, metric exactness on kernel machines, automatic
basis orthonormality, Kronecker-factor consistency, the two-layer quadrature
metric, flatness invariance, and the descent guarantees.
"""

from __future__ import annotations

import numpy as np
import scipy.integrate

from . import kfac, kernel, linalg, metric, network, rkhs, riemann
from .flatness import FlatnessQuery, GridSampler, Reparam, epsilon_flatness, invariance_check

__all__ = ["SUITES", "run_suites"]


def _kernel_suite():
    checks = []
    spec = kernel.KernelSpec(input_dim=1, constant_mode=kernel.EXACT_CONSTANT)
    checks.append(("kernel_d0_quarter", kernel.point_kernel(0.0, spec) == 0.25, "d(0) == 1/4"))
    worst = 0.0
    for r in (0.0, 0.5, 1.0, 2.0, 5.0):
        quad, _ = scipy.integrate.quad(
            lambda xi: np.cos(r * xi) / (1.0 + xi * xi) ** 2, -200.0, 200.0, limit=400
        )
        worst = max(worst, abs(quad / (2.0 * np.pi) - kernel.point_kernel(r, spec)))
    checks.append(("kernel_matches_fourier_quadrature", worst <= 1e-6, f"max err {worst:.3g}"))
    g = kernel.gram(np.array([[0.0], [1.0], [2.0]]), spec)
    sym = np.allclose(g.values, g.values.T) and np.allclose(np.diag(g.values), g.d0)
    checks.append(("gram_symmetric_constant_diagonal", sym, "diag d(0), symmetric"))
    return checks


def _gradcheck_suite():
    checks = []
    gen = np.random.default_rng(11)
    worst = 0.0
    for _ in range(5):
        dims = [int(gen.integers(1, 4)), int(gen.integers(2, 5)), int(gen.integers(1, 3))]
        net = network.MlpNetwork.create(dims, ["tanh", "identity"], gen)
        x = gen.normal(size=(4, dims[0]))
        j = network.param_jacobian(net, x)
        theta = net.params_vector()
        h = 1e-5
        for i in range(net.num_params):
            e = np.zeros_like(theta)
            e[i] = h
            up = network.forward(net.with_params_vector(theta + e), x).outputs
            dn = network.forward(net.with_params_vector(theta - e), x).outputs
            fd = (up - dn).reshape(-1) / (2 * h)
            denom = max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, float(np.max(np.abs(j[i] - fd))) / denom)
    checks.append(("param_jacobian_vs_finite_difference", worst <= 1e-5, f"max rel err {worst:.3g}"))
    return checks


def _exactness_suite():
    checks = []
    gen = np.random.default_rng(3)
    spec = kernel.KernelSpec(input_dim=2, jitter=0.0)
    pts = gen.normal(size=(6, 2))
    g = kernel.gram(pts, spec)
    est = metric.estimate_metric(g.values, 1, g)
    err = float(np.max(np.abs(est.values - g.values)))
    checks.append(("metric_exact_on_kernel_machine", err <= 1e-10, f"max err {err:.3g}"))
    j = gen.normal(size=(5, 8))
    gn = metric.estimate_metric(j, 1, None)
    checks.append(
        ("metric_identity_kernel_is_gauss_newton", np.array_equal(gn.values, j @ j.T), "J J^T")
    )
    return checks


def _orthonormality_suite():
    checks = []
    gen = np.random.default_rng(5)
    net = network.MlpNetwork.create([1, 1, 1], ["tanh", "identity"], gen)
    probes = np.linspace(-2.0, 2.0, 9).reshape(-1, 1)
    basis = [
        (lambda i: lambda x: _tangent_value(net, x, i))(i) for i in range(net.num_params)
    ]
    gram_matrix = rkhs.check_basis_orthonormality(basis, probes)
    err = float(np.max(np.abs(gram_matrix - np.eye(net.num_params))))
    checks.append(("ntk_tangent_basis_orthonormal", err <= 1e-8, f"max err {err:.3g}"))
    return checks


def _tangent_value(net, x, i):
    j = network.param_jacobian(net, np.atleast_2d(x))
    return j[i].reshape(net.output_dim)


def _kfac_suite():
    checks = []
    gen = np.random.default_rng(7)
    net = network.MlpNetwork.create([1, 2, 1], ["identity", "identity"], gen)
    x = np.full((4, 1), 0.7)  # identical inputs make the statistics factorize
    cache = network.forward(net, x)
    network.output_jacobians(net, cache)
    factors = kfac.compute_factors(cache, None)
    j = network.param_jacobian(net, x)
    dense = metric.estimate_metric(j, 1, None).values
    offset, worst = 0, 0.0
    for (a, s), spec in zip(factors, net.layers):
        size = spec.out_dim * (spec.in_dim + 1)
        block = dense[offset : offset + size, offset : offset + size]
        worst = max(worst, float(np.max(np.abs(np.kron(s, a) - block))))
        offset += size
    checks.append(("kron_block_matches_dense_block", worst <= 1e-10, f"max err {worst:.3g}"))
    m = gen.normal(size=(3, 3))
    a_inv = m @ m.T + np.eye(3)
    m = gen.normal(size=(2, 2))
    s_inv = m @ m.T + np.eye(2)
    v = gen.normal(size=(2, 3))
    direct = (np.kron(s_inv, a_inv) @ v.reshape(-1)).reshape(v.shape)
    kp = float(np.max(np.abs(direct - linalg.kron_precondition(a_inv, s_inv, v))))
    checks.append(("kron_precondition_matches_explicit", kp <= 1e-12, f"max err {kp:.3g}"))
    return checks


def _quadrature_suite():
    checks = []
    w1, w2 = 0.8, -1.3
    net = network.MlpNetwork(
        [network.LayerSpec(1, 1, "identity"), network.LayerSpec(1, 1, "identity")],
        [np.array([[w1, 0.0]]), np.array([[w2, 0.0]])],
    )
    g = metric.exact_pullback_quadrature(net, "gaussian", nodes_per_dim=40).values
    expected = np.array(
        [
            [w2**2, 0.0, w1 * w2, 0.0],
            [0.0, w2**2, 0.0, w2],
            [w1 * w2, 0.0, w1**2, 0.0],
            [0.0, w2, 0.0, 1.0],
        ]
    )
    err = float(np.max(np.abs(g - expected)))
    ok = err <= 1e-8 and abs(g[0, 2]) > 1e-3
    checks.append(("two_layer_pullback_cross_term", ok, f"max err {err:.3g}"))
    return checks


def _flatness_suite():
    checks = []
    query = FlatnessQuery(
        loss=lambda w: float(w[0] ** 2),
        minimum=np.zeros(1),
        epsilon=0.04,
        metric=lambda w: np.array([[1.0]]),
        metric_source="rkhs_projected",
        sampler=GridSampler(resolution=801, half_width=0.5),
    )
    vol = epsilon_flatness(query).volume
    checks.append(("quadratic_band_volume", abs(vol - 0.4) <= 0.01, f"volume {vol:.4f}"))
    disc = invariance_check(query, Reparam.scaling(2.0, 1))
    checks.append(("pullback_invariant_under_scaling", disc <= 0.02, f"discrepancy {disc:.3g}"))
    euclid = FlatnessQuery(
        loss=query.loss, minimum=np.zeros(1), epsilon=0.04, metric=None,
        metric_source="euclidean", sampler=query.sampler,
    )
    disc_e = invariance_check(euclid, Reparam.scaling(2.0, 1))
    checks.append(("euclidean_flatness_not_invariant", disc_e >= 0.25, f"discrepancy {disc_e:.3g}"))
    return checks


def _riemann_suite():
    checks = []
    gen = np.random.default_rng(2)
    ok_decrease = True
    for _ in range(25):
        m = gen.normal(size=(3, 3))
        problem = riemann.RiemannProblem.quadratic(m @ m.T + 0.5 * np.eye(3))
        x = gen.normal(size=3)
        if problem.f(x) - problem.f(riemann.grad_step(problem, x)) < riemann.prog(problem, x) - 1e-10:
            ok_decrease = False
    checks.append(("per_step_decrease_at_least_prog", ok_decrease, "25 random quadratics"))
    problem = riemann.RiemannProblem.quadratic(np.diag([4.0, 1.0]), np.diag([2.0, 3.0]))
    x = np.array([1.0, -2.0])
    same = np.array_equal(
        riemann.grad_step(problem, x),
        riemann.mirror_step(problem, x, problem.compat_C * problem.lipschitz_L),
    )
    checks.append(("mirror_step_equals_grad_step", same, "alpha = C L"))
    try:
        riemann.verify_rate(problem, np.array([3.0, -1.5]), 200)
        checks.append(("rate_bound_holds", True, "2 L C R^2 / T"))
    except riemann.RateViolation as exc:  # pragma: no cover - failure path
        checks.append(("rate_bound_holds", False, str(exc)))
    return checks


SUITES = {
    "kernel": _kernel_suite,
    "gradcheck": _gradcheck_suite,
    "exactness": _exactness_suite,
    "orthonormality": _orthonormality_suite,
    "kfac": _kfac_suite,
    "quadrature": _quadrature_suite,
    "flatness": _flatness_suite,
    "riemann": _riemann_suite,
}


def run_suites(names=None):
    """Run the requested suites (all by default); returns (results, ok)."""
    selected = list(SUITES) if not names else list(names)
    results = []
    for name in selected:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        for check, passed, detail in SUITES[name]():
            results.append((name, check, passed, detail))
    return results, all(r[2] for r in results)
