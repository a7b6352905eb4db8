"""Seeded random sampling of Garding-cone eigenvalues and matrices.

All samplers take an explicit numpy Generator; `generator(seed)` builds one
on the counter-based Philox engine so identical seeds give identical streams
regardless of how many draws other code has made.
"""

from __future__ import annotations

import numpy as np

from . import cones

__all__ = [
    "generator",
    "gamma_eigenvalues",
    "orthogonal_matrices",
    "conjugate_by_rotations",
    "gamma_matrices",
    "psd_matrices",
    "boundary_biased_eigenvalues",
    "boundary_biased_matrices",
]


def generator(seed):
    """Counter-based RNG; reproducible and insensitive to draw interleaving."""
    return np.random.Generator(np.random.Philox(seed))


def gamma_eigenvalues(rng, count, n, k, margin=0.0, max_rounds=2000):
    """Rejection-sample eigenvalue vectors uniform on [-1, 2]^n inside Gamma_k.

    `margin` shrinks the cone: kept samples satisfy min_j sigma_j > margin.
    The box [-1, 2]^n deliberately straddles the cone boundary so accepted
    samples cover it rather than clustering at the positive orthant.
    """
    out = np.empty((0, n))
    chunk = max(1024, 2 * count)
    for _ in range(max_rounds):
        lam = rng.uniform(-1.0, 2.0, size=(chunk, n))
        keep = lam[cones.cone_margin(lam, k) > margin]
        if keep.size:
            out = np.concatenate([out, keep])
        if len(out) >= count:
            return out[:count]
    raise RuntimeError(
        f"cone rejection sampler starved: Gamma_{k} in dimension {n} "
        f"with margin {margin} accepted {len(out)}/{count}"
    )


def orthogonal_matrices(rng, count, n):
    """Rotations from QR of Gaussian matrices, R-diagonal sign-fixed."""
    a = rng.standard_normal((count, n, n))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d[d == 0.0] = 1.0
    return q * d[:, None, :]


def conjugate_by_rotations(rng, lam):
    """Q diag(lam) Q^T for a fresh rotation per row; exactly symmetric."""
    count, n = lam.shape
    q = orthogonal_matrices(rng, count, n)
    m = np.einsum("bij,bj,bkj->bik", q, lam, q)
    return 0.5 * (m + m.swapaxes(-1, -2))


def gamma_matrices(rng, count, n, k, margin=0.0):
    """Symmetric matrices with eigenvalues sampled from Gamma_k."""
    lam = gamma_eigenvalues(rng, count, n, k, margin=margin)
    return conjugate_by_rotations(rng, lam)


def psd_matrices(rng, count, n, eig_low=0.0, eig_high=1.0):
    """Symmetric positive semi-definite matrices with uniform eigenvalues."""
    lam = rng.uniform(eig_low, eig_high, size=(count, n))
    return conjugate_by_rotations(rng, lam)


def boundary_biased_eigenvalues(rng, count, n, k, margin_low=1e-9, margin_high=1e-6):
    """Eigenvalue vectors pulled to within [margin_low, margin_high] of the
    Gamma_k boundary.

    Starts from comfortably interior samples and bisects along lambda - s*e
    (the all-ones ray exits every Gamma_k) until the cone margin lands near a
    per-sample log-uniform target.  Samples that miss the window, including
    anything below 1e-12 where limiting behavior is not specified, are
    dropped.
    """
    lam = gamma_eigenvalues(rng, count, n, k, margin=1e-3)
    target = 10.0 ** rng.uniform(np.log10(margin_low), np.log10(margin_high), count)
    e = np.ones(n)

    def margins(s):
        return cones.cone_margin(lam - s[:, None] * e, k)

    s_lo = np.zeros(count)
    s_hi = np.full(count, 1.0)
    for _ in range(30):  # sigma_1 drops by n*s, so s <= (sigma_1)/n <= 2n/n
        need = margins(s_hi) > target
        if not need.any():
            break
        s_hi[need] *= 2.0
    for _ in range(80):
        mid = 0.5 * (s_lo + s_hi)
        above = margins(mid) > target
        s_lo = np.where(above, mid, s_lo)
        s_hi = np.where(above, s_hi, mid)
    pulled = lam - s_lo[:, None] * e
    m = cones.cone_margin(pulled, k)
    keep = (m > 1e-12) & (m < 10.0 * margin_high)
    return pulled[keep]


def boundary_biased_matrices(rng, count, n, k, margin_low=1e-9, margin_high=1e-6):
    """Matrix version of boundary_biased_eigenvalues (rotation-conjugated)."""
    lam = boundary_biased_eigenvalues(rng, count, n, k, margin_low, margin_high)
    if not len(lam):
        return np.empty((0, n, n))
    return conjugate_by_rotations(rng, lam)
