"""Elementary symmetric functions of Hermitian spectra and the Gamma_2 cone.

Conventions used throughout the package:

* A Hermitian matrix ``M`` stores the coefficients of a real (1,1)-form with
  the first index barred: ``M[a, b] = M_{a-bar, b}``.  Hermitian symmetry is
  ``M == M.conj().T`` entrywise (``conj(M_{a-bar b}) = M_{b-bar a}``).
* Spectra are real vectors sorted in non-increasing order.
* The generalized spectrum of a pencil ``(A, g)`` with ``g > 0`` is computed
  by symmetric whitening ``g^{-1/2} A g^{-1/2}`` so that it stays real in
  floating point.
* Derivative tensors of ``sigma_2^{1/2}`` are returned in the coordinate
  basis with the same ``[a, b] = [a-bar, b]`` layout as their argument, so
  that the contraction against a complex Hessian field is a plain
  elementwise product-sum.

All functions are pure and accept trailing batch dimensions where noted.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ConeError(ValueError):
    """Argument spectrum lies outside the admissible cone Gamma_2."""


class ConeStatus(NamedTuple):
    in_cone: bool
    margin: float


class FTensor(NamedTuple):
    """First derivative of sigma_2^(1/2) and its metric trace."""

    tensor: np.ndarray
    trace: float


def sigma_k(lam, k: int):
    """k-th elementary symmetric function of ``lam`` along the last axis.

    Vectorized over leading dimensions; ``k`` must satisfy ``1 <= k <= n``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} out of range for spectrum length {n}")
    e = np.zeros(lam.shape[:-1] + (k + 1,), dtype=float)
    e[..., 0] = 1.0
    for i in range(n):
        top = min(i + 1, k)
        for j in range(top, 0, -1):
            e[..., j] += lam[..., i] * e[..., j - 1]
    return e[..., k]


def sigma1_sigma2(lam):
    """(sigma_1, sigma_2) in one pass; batch-friendly."""
    lam = np.asarray(lam, dtype=float)
    s1 = lam.sum(axis=-1)
    s2 = 0.5 * (s1 * s1 - (lam * lam).sum(axis=-1))
    return s1, s2


def cone_margin(lam):
    """min(sigma_1, sigma_2); positive exactly on Gamma_2. Batch-friendly."""
    s1, s2 = sigma1_sigma2(lam)
    return np.minimum(s1, s2)


def cone_check(lam) -> ConeStatus:
    """Membership of a single spectrum in Gamma_2 = {sigma_1 > 0, sigma_2 > 0}."""
    m = float(cone_margin(lam))
    return ConeStatus(in_cone=m > 0.0, margin=m)


def in_gamma2(lam) -> np.ndarray:
    """Boolean Gamma_2 membership, batch-friendly."""
    return cone_margin(lam) > 0.0


def _inv_sqrt_pd(g: np.ndarray) -> np.ndarray:
    """Inverse square root of a positive-definite Hermitian matrix."""
    w, u = np.linalg.eigh(np.asarray(g))
    if w.min() <= 0.0:
        raise ValueError("matrix is not positive definite")
    return (u * w ** -0.5) @ u.conj().T


def generalized_spectrum(a, g) -> np.ndarray:
    """Eigenvalues of the pencil (a, g), sorted non-increasing.

    ``a`` may carry leading batch dimensions; ``g`` is a single positive
    definite Hermitian matrix shared across the batch.
    """
    a = np.asarray(a)
    w = _inv_sqrt_pd(g)
    b = w @ a @ w
    lam = np.linalg.eigvalsh(b)
    return lam[..., ::-1]


def pencil_sigma12(a, g_inv):
    """(sigma_1, sigma_2) of the pencil (a, g) from matrix invariants.

    Avoids eigendecompositions: sigma_1 = tr(g^-1 a) and
    sigma_2 = ((tr m)^2 - tr(m^2))/2 with m = g^-1 a.  Batch-friendly and
    the workhorse for per-grid-point admissibility scans.
    """
    m = np.asarray(g_inv) @ np.asarray(a)
    s1 = np.einsum("...aa->...", m).real
    s2 = 0.5 * (s1 * s1 - np.einsum("...ab,...ba->...", m, m).real)
    return s1, s2


def sigma2_gradient(lam):
    """Gradient of sigma_2: (d sigma_2 / d lam_p)_p = sigma_1 - lam_p."""
    lam = np.asarray(lam, dtype=float)
    return lam.sum(axis=-1, keepdims=True) - lam


def _pencil_eig(a, g):
    w = _inv_sqrt_pd(g)
    lam, u = np.linalg.eigh(w @ np.asarray(a) @ w)
    return w, lam, u


def F_tensor(a, g) -> FTensor:
    """First derivative tensor of sigma_2^(1/2) at a Gamma_2 pencil.

    Returns ``F`` with ``F[a, b] = d sigma_2^(1/2) / d g'_{a-bar b}`` in the
    coordinate basis (eigenbasis assembly ``F^{ij-bar} = delta_ij f_i`` with
    ``f_p = (sigma_1 - lam_p) / (2 sigma_2^(1/2))``, rotated back), plus the
    trace ``F. g = (n-1) sigma_1 / (2 sigma_2^(1/2))``.
    """
    w, lam, u = _pencil_eig(a, g)
    s1, s2 = sigma1_sigma2(lam)
    if min(s1, s2) <= 0.0:
        raise ConeError(f"pencil spectrum outside Gamma_2 (sigma1={s1}, sigma2={s2})")
    f = (s1 - lam) / (2.0 * np.sqrt(s2))
    v = w @ u
    tensor = np.conj((v * f) @ v.conj().T)
    return FTensor(tensor=tensor, trace=float(f.sum()))


def second_derivative_form(a, t, g) -> float:
    """Quadratic form of the second derivative of sigma_2^(1/2).

    Evaluates ``F^{jk-bar, lm-bar} T_{k-bar j} conj(T)_{m-bar l}`` for a
    Hermitian direction ``t`` at a Gamma_2 pencil ``(a, g)``.  In the
    eigenbasis the off-diagonal weight is the difference quotient
    ``(f_p - f_q)/(lam_p - lam_q)``, which for sigma_2^(1/2) collapses to the
    constant ``-1/(2 sigma_2^(1/2))`` (its own limit at eigenvalue ties, so
    no tie threshold is required).  Non-positive on Gamma_2 by concavity.
    """
    w, lam, u = _pencil_eig(a, g)
    s1, s2 = sigma1_sigma2(lam)
    if min(s1, s2) <= 0.0:
        raise ConeError(f"pencil spectrum outside Gamma_2 (sigma1={s1}, sigma2={s2})")
    root = np.sqrt(s2)
    st = u.conj().T @ (w @ np.asarray(t) @ w) @ u
    d = np.diag(st).real
    n = lam.size
    fpq = (1.0 - np.eye(n)) / (2.0 * root) - np.outer(s1 - lam, s1 - lam) / (4.0 * root**3)
    offdiag_sq = np.abs(st) ** 2
    offdiag_sq = offdiag_sq.sum() - np.trace(offdiag_sq).real
    return float(d @ fpq @ d - offdiag_sq / (2.0 * root))


def garding_pairing(lam, mu):
    """Both sides of Garding's inequality for sigma_2 on Gamma_2 pairs.

    Returns ``(lhs, rhs)`` with ``lhs = sum_i (sigma_1(lam) - lam_i) mu_i``
    and ``rhs = 2 sqrt(sigma_2(lam) sigma_2(mu))``; callers assert
    ``lhs >= rhs`` (equality iff ``mu`` is proportional to ``lam``).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    for name, vec in (("lam", lam), ("mu", mu)):
        if not np.all(in_gamma2(vec)):
            raise ConeError(f"{name} outside Gamma_2")
    lhs = (sigma2_gradient(lam) * mu).sum(axis=-1)
    rhs = 2.0 * np.sqrt(sigma_k(lam, 2) * sigma_k(mu, 2))
    return lhs, rhs


def sample_gamma2_spectra(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Rejection-sample ``size`` spectra from Gamma_2, sorted non-increasing.

    Draws from a unit-shifted normal so the samples populate both the deep
    cone and its neighborhood of the boundary.
    """
    out = np.empty((size, n))
    have = 0
    while have < size:
        cand = rng.normal(loc=1.0, scale=1.0, size=(2 * (size - have) + 16, n))
        keep = cand[in_gamma2(cand)]
        take = min(size - have, keep.shape[0])
        out[have : have + take] = keep[:take]
        have += take
    return -np.sort(-out, axis=-1)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-ish unitary from the QR of a complex Gaussian matrix."""
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def sample_gamma2_hermitian(rng: np.random.Generator, n: int, g=None) -> np.ndarray:
    """Random Hermitian matrix whose pencil spectrum w.r.t. ``g`` is in Gamma_2."""
    lam = sample_gamma2_spectra(rng, n, 1)[0]
    u = random_unitary(rng, n)
    b = (u * lam) @ u.conj().T
    b = 0.5 * (b + b.conj().T)
    if g is None:
        return b
    w, uu = np.linalg.eigh(np.asarray(g))
    g_sqrt = (uu * np.sqrt(w)) @ uu.conj().T
    a = g_sqrt @ b @ g_sqrt
    return 0.5 * (a + a.conj().T)


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """Random Hermitian matrix with O(scale) entries (no cone constraint)."""
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (z + z.conj().T)
