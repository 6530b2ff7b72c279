"""RKHS function arithmetic: kernel expansions, functional gradient descent,
inner products, projected kernels, and the basis-orthonormality check.

Functions are stored in representer form only -- a list of centers x_t with
one coefficient vector per center, evaluating to

    f(x) = sum_t d(|x - x_t|) * coeffs[t].

Functional gradient descent keeps iterates in this class exactly: each step
appends the visited point as a new center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .errors import DimensionMismatch, SingularProbeSet
from .kernel import KernelSpec, point_kernel

__all__ = [
    "KernelExpansion",
    "evaluate",
    "functional_gd",
    "rkhs_inner",
    "check_basis_orthonormality",
    "projection_kernel",
]


@dataclass(frozen=True)
class KernelExpansion:
    """An RKHS function sum_t d(|x - x_t|) c_t with values in R^m."""

    spec: KernelSpec
    centers: np.ndarray  # (T, n)
    coeffs: np.ndarray  # (T, m)

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        if centers.size == 0:
            centers = centers.reshape(0, self.spec.input_dim)
        if coeffs.size == 0:
            coeffs = coeffs.reshape(0, max(coeffs.shape[-1] if coeffs.ndim else 1, 1))
        if centers.shape[0] != coeffs.shape[0]:
            raise DimensionMismatch(
                f"{centers.shape[0]} centers but {coeffs.shape[0]} coefficient rows"
            )
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def output_dim(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def zero(cls, spec: KernelSpec, output_dim: int) -> "KernelExpansion":
        return cls(spec, np.zeros((0, spec.input_dim)), np.zeros((0, output_dim)))

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)


def evaluate(f: KernelExpansion, x) -> np.ndarray:
    """Evaluate the expansion at a single point; returns an m-vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != f.spec.input_dim:
        raise DimensionMismatch(f"point has dimension {x.shape[0]}, expected {f.spec.input_dim}")
    if f.centers.shape[0] == 0:
        return np.zeros(f.output_dim)
    r = np.sqrt(np.sum((f.centers - x) ** 2, axis=1))
    return point_kernel(r, f.spec) @ f.coeffs


def evaluate_batch(f: KernelExpansion, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if f.centers.shape[0] == 0:
        return np.zeros((xs.shape[0], f.output_dim))
    diff = xs[:, None, :] - f.centers[None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=2))
    return point_kernel(r, f.spec) @ f.coeffs


def functional_gd(
    xs,
    ys,
    loss: str,
    steps: int,
    lr,
    spec: KernelSpec,
    mode: str = "cyclic",
) -> KernelExpansion:
    """Gradient descent in the RKHS starting from f_0 = 0.

    Each step evaluates the loss gradient at the current iterate and appends
    the visited point(s) as centers with coefficient -eta_t * dL/dz, so after
    T steps f_T(x) = -sum_t eta_t d(|x_t - x|) dL/dz(f_{t-1}(x_t), y_t).

    ``mode`` is "cyclic" (one data point per step, cycling through the set,
    the form stated for a stream of samples) or "full_batch" (every step
    touches all points at once).  ``lr`` is a float or a callable step -> eta.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.asarray(ys, dtype=np.float64)
    if loss == losses.SQUARED:
        if ys.ndim == 1:
            ys = ys.reshape(-1, 1)
        output_dim = ys.shape[1]
    else:  # class labels
        output_dim = int(np.max(ys)) + 1 if ys.size else 1

    eta = lr if callable(lr) else (lambda t: lr)
    centers = []
    coeffs = []

    def current(x):
        if not centers:
            return np.zeros(output_dim)
        c = np.asarray(centers)
        r = np.sqrt(np.sum((c - x) ** 2, axis=1))
        return point_kernel(r, spec) @ np.asarray(coeffs)

    for t in range(steps):
        if mode == "cyclic":
            i = t % xs.shape[0]
            z = current(xs[i])
            g = losses.loss_grad_z(z, ys[i : i + 1], loss)[0]
            centers.append(xs[i])
            coeffs.append(-eta(t) * g)
        elif mode == "full_batch":
            z = np.array([current(x) for x in xs])
            g = losses.loss_grad_z(z, ys, loss)
            for i in range(xs.shape[0]):
                centers.append(xs[i])
                coeffs.append(-eta(t) * g[i])
        else:
            raise ValueError(f"unknown mode {mode!r}")

    if not centers:
        return KernelExpansion.zero(spec, output_dim)
    return KernelExpansion(spec, np.asarray(centers), np.asarray(coeffs))


def rkhs_inner(f: KernelExpansion, g: KernelExpansion) -> float:
    """RKHS inner product, summed over output components.

    <f, g> = sum_{a,b} d(|x_a - x'_b|) (c_a . c'_b) by the reproducing
    property applied to both expansions.
    """
    if f.output_dim != g.output_dim:
        raise DimensionMismatch("expansions have different output dimensions")
    if f.centers.shape[0] == 0 or g.centers.shape[0] == 0:
        return 0.0
    diff = f.centers[:, None, :] - g.centers[None, :, :]
    k = point_kernel(np.sqrt(np.sum(diff * diff, axis=2)), f.spec)
    return float(np.sum(k * (f.coeffs @ g.coeffs.T)))


def _basis_matrix(basis, probes) -> np.ndarray:
    """Stack basis values at probes into M[(probe, comp), i] = b_i(p)."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    columns = []
    for b in basis:
        vals = np.asarray([np.atleast_1d(np.asarray(b(p), dtype=np.float64)) for p in probes])
        columns.append(vals.reshape(-1))
    return np.column_stack(columns)


def check_basis_orthonormality(basis, probes, rcond: float = 1e-10) -> np.ndarray:
    """Gram of a basis under the kernel the basis itself induces.

    For K(x, x') = sum_i b_i(x) (x) b_i(x'), every basis of the spanned space
    is orthonormal in the induced RKHS, so the returned Gram must be the
    identity.  Representer coefficients are recovered by least squares over
    the probe set; the probes only need to expose linear independence.

    Raises SingularProbeSet when they do not.
    """
    m = _basis_matrix(basis, probes)  # (mP, D)
    dim = m.shape[1]
    u, sing, _ = np.linalg.svd(m, full_matrices=False)
    if sing.shape[0] < dim or sing[-1] <= rcond * max(sing[0], 1.0):
        raise SingularProbeSet(
            f"basis of dimension {dim} has numerical rank "
            f"{int(np.sum(sing > rcond * max(sing[0], 1.0)))} over the probe set"
        )
    # G = M M^T is the probe Gram of {K(p, .)}; coefficients C solve G C = M,
    # and the RKHS Gram is M^T C = M^T G^+ M = W^T W with W = S^-1 U^T M,
    # the numerically stable factorization of the least-squares solve.
    w = (u.T @ m) / sing[:, None]
    return w.T @ w


def projection_kernel(jac_x: np.ndarray, jac_xp: np.ndarray, gtilde_inverse: np.ndarray) -> np.ndarray:
    """Projected reproducing kernel K_f(x, x') of the tangent space.

    jac_x, jac_xp hold the tangent basis values at the two points as (P, m)
    arrays (row i = dphi/dtheta_i evaluated there); gtilde_inverse is the
    inverse metric in the same inner product.  Returns the (m, m) matrix

        K_f(x, x')_{cd} = ginv^{ij} dphi^c/dtheta_i(x) dphi^d/dtheta_j(x').
    """
    jac_x = np.atleast_2d(np.asarray(jac_x, dtype=np.float64))
    jac_xp = np.atleast_2d(np.asarray(jac_xp, dtype=np.float64))
    ginv = np.atleast_2d(np.asarray(gtilde_inverse, dtype=np.float64))
    p = ginv.shape[0]
    if ginv.shape[0] != ginv.shape[1]:
        raise DimensionMismatch("gtilde_inverse must be square")
    if jac_x.shape[0] != p or jac_xp.shape[0] != p:
        raise DimensionMismatch(
            f"tangent values have {jac_x.shape[0]}/{jac_xp.shape[0]} rows, metric is {p}x{p}"
        )
    return jac_x.T @ ginv @ jac_xp
