"""Problem data and the Fu-Yau residual in divergence and scalar form.

The equation on the flat torus, written along the continuity path with
parameter ``t``, is

    Psi(t,u) * vol = i ddbar(e^u omega - t alpha e^{-u} rho) ^ omega^{n-2}
                     + n alpha (i ddbar u)^2 ^ omega^{n-2} + t mu vol

and equivalently, through the deformed Hermitian form

    g'_{k-bar j} = e^u g_{k-bar j} + t alpha e^{-u} rho_{k-bar j}
                   + 2 n alpha u_{k-bar j},

the scalar 2-Hessian equation ``sigma_2(lambda') = w^2`` whose right-hand
side is assembled in :func:`rhs_w2`.  Both residuals are pointwise
proportional: ``sigma_2(lambda') - w^2 = (2 n alpha / (n-2)!) Psi``.

Every ``rho``-coupled coefficient carries ``t alpha`` (and the source
carries ``t mu``) so the two forms stay equivalent at every point of the
path, not only at ``t = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import NamedTuple

import numpy as np

from . import forms
from .grid import TorusGrid
from .symfunc import pencil_sigma12


class DegenerateEquationError(RuntimeError):
    """w^2 lost positivity somewhere: the scalar equation degenerated."""


class Admissibility(NamedTuple):
    margin: float
    worst_point: tuple


@dataclass(eq=False)
class ProblemData:
    """One Fu-Yau instance: (grid, g, rho, mu, alpha, M0).

    ``g`` is the constant positive-definite background metric, ``rho`` a
    smooth real (1,1)-form as a Hermitian coefficient field, ``mu`` a
    mean-zero source field, ``alpha < 0`` the slope, and ``M0`` the mass
    normalization ``integral(e^u) = M0``.  Instances are treated as
    immutable; derived geometric quantities are cached on first use.
    """

    grid: TorusGrid
    g: np.ndarray
    rho: np.ndarray
    mu: np.ndarray
    alpha: float
    M0: float
    mu_defect: float = field(default=0.0)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def kappa_c(self) -> float:
        return self.n * (self.n - 1) / 2.0

    # -- cached geometry ----------------------------------------------------

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def omega(self) -> forms.Form:
        return forms.form_from_hermitian(self.grid, self.g)

    @cached_property
    def omega_nm2(self) -> forms.Form:
        """omega^{n-2}; the unit (0,0)-form when n = 2."""
        if self.n == 2:
            return forms.Form(self.grid, 0, 0, {((), ()): np.asarray(1.0 + 0.0j)})
        return forms.form_power(self.omega, self.n - 2)

    @cached_property
    def vol(self) -> complex:
        return complex(forms.top_component(forms.volume_form(self.omega)))

    @cached_property
    def trg_rho(self) -> np.ndarray:
        return np.einsum("ab,...ba->...", self.ginv, self.rho).real

    @cached_property
    def sigma2_rho(self) -> np.ndarray:
        return pencil_sigma12(self.rho, self.ginv)[1]

    @cached_property
    def tilde_rho(self) -> np.ndarray:
        """Contravariant trace-minus tensor of rho (layout [j,k] = rho-tilde^{j k-bar})."""
        tr = self.trg_rho[..., None, None]
        return np.einsum("ab,...bc,cd->...ad", self.ginv, tr * self.g - self.rho, self.ginv)

    @cached_property
    def delbar_rho(self) -> forms.Form:
        return forms.del_bar(forms.form_from_hermitian(self.grid, self.rho))

    @cached_property
    def delta_omega_rho(self) -> np.ndarray:
        """Laplacian of rho: i ddbar rho ^ omega^{n-2} / ((n-2)! vol)."""
        T = forms.wedge(
            forms.i_del_delbar(forms.form_from_hermitian(self.grid, self.rho)),
            self.omega_nm2,
        )
        return forms.top_ratio(T, self.vol) / factorial(self.n - 2)


def make_problem(grid: TorusGrid, g, rho, mu, alpha: float, M0: float) -> ProblemData:
    """Validate and normalize raw problem data.

    ``mu`` is mean-corrected so its normalized integral is exactly zero in
    floating point; the original defect is recorded on the instance.
    """
    g = np.asarray(g, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    mu = np.asarray(mu, dtype=float)
    if alpha >= 0:
        raise ValueError(f"slope alpha must be negative, got {alpha}")
    if M0 <= 0:
        raise ValueError(f"normalization M0 must be positive, got {M0}")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise ValueError("background metric g is not positive definite")
    if rho.shape != grid.shape + (grid.n, grid.n):
        raise ValueError(f"rho shape {rho.shape} does not match grid")
    if mu.shape != grid.shape:
        raise ValueError(f"mu shape {mu.shape} does not match grid")
    herm_defect = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if herm_defect > 1e-10 * (1.0 + np.max(np.abs(rho))):
        raise ValueError(f"rho is not Hermitian (defect {herm_defect:.3e})")
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    defect = float(np.mean(mu))
    mu = mu - defect
    return ProblemData(grid=grid, g=g, rho=rho, mu=mu, alpha=float(alpha),
                       M0=float(M0), mu_defect=defect)


# ---------------------------------------------------------------------------
# pointwise assembly


def gprime(u, t: float, P: ProblemData) -> np.ndarray:
    """Deformed Hermitian form g' at (t, u); Hermitian by construction."""
    eu = np.exp(u)[..., None, None]
    gp = eu * P.g + (t * P.alpha) * np.exp(-u)[..., None, None] * P.rho
    gp = gp + (2 * P.n * P.alpha) * P.grid.complex_hessian(u)
    return gp


def admissibility(u, t: float, P: ProblemData) -> Admissibility:
    """Minimum Gamma_2 margin of g' over the grid and its worst point."""
    margin = cone_margin_field(u, t, P)
    flat = int(np.argmin(margin))
    return Admissibility(margin=float(margin.flat[flat]),
                         worst_point=tuple(np.unravel_index(flat, P.grid.shape)))


def cone_margin_field(u, t: float, P: ProblemData) -> np.ndarray:
    """Pointwise min(sigma_1, sigma_2) of the pencil (g', g)."""
    s1, s2 = pencil_sigma12(gprime(u, t, P), P.ginv)
    return np.minimum(s1, s2)


def grad_norm_sq(u, P: ProblemData) -> np.ndarray:
    """|Du|^2 with respect to the background metric."""
    du = P.grid.grad_holo(u)
    return np.einsum("jk,...j,...k->...", P.ginv, du, np.conj(du)).real


def pairing_du_rho(u, P: ProblemData) -> np.ndarray:
    """Re< del u, delbar rho >: i del u ^ delbar rho ^ omega^{n-2} / ((n-2)! vol)."""
    T = forms.wedge(forms.wedge(forms.del_scalar(P.grid, u), P.delbar_rho), P.omega_nm2)
    return forms.top_ratio(T * 1j, P.vol) / factorial(P.n - 2)


# ---------------------------------------------------------------------------
# residuals


def residual_divergence(u, t: float, P: ProblemData) -> np.ndarray:
    """Divergence-form residual Psi(t, u), assembled with the form kernel."""
    eu = np.exp(u)
    S = eu[..., None, None] * P.g - (t * P.alpha) * np.exp(-u)[..., None, None] * P.rho
    T = forms.i_del_delbar(forms.form_from_hermitian(P.grid, S))
    hu = forms.form_from_hermitian(P.grid, P.grid.complex_hessian(u))
    T = T + (P.n * P.alpha) * forms.wedge(hu, hu)
    out = forms.top_ratio(forms.wedge(T, P.omega_nm2), P.vol)
    return out + t * P.mu


def sigma2_gprime(u, t: float, P: ProblemData) -> np.ndarray:
    """sigma_2 of the generalized spectrum of g', from matrix invariants."""
    return pencil_sigma12(gprime(u, t, P), P.ginv)[1]


def sigma2_expansion(u, t: float, P: ProblemData) -> np.ndarray:
    """Direct expansion of sigma_2(lambda') in u, Du, DDu and rho data.

    Algebraically identical to :func:`sigma2_gprime`; exercised by tests as
    the reconstruction identity.
    """
    a = P.alpha
    ta = t * a
    n = P.n
    eu, emu = np.exp(u), np.exp(-u)
    hu = P.grid.complex_hessian(u)
    s2_hu = pencil_sigma12(hu, P.ginv)[1]
    trg_hu = np.einsum("ab,...ba->...", P.ginv, hu).real
    rho_hu = np.einsum("...jk,...kj->...", P.tilde_rho, hu).real
    out = P.kappa_c * eu**2 + ta**2 * emu**2 * P.sigma2_rho + (2 * n * a) ** 2 * s2_hu
    out += ta * (n - 1) * P.trg_rho
    out += 2 * n * a * ((n - 1) * eu * trg_hu + ta * emu * rho_hu)
    return out


def rhs_w2(u, t: float, P: ProblemData) -> np.ndarray:
    """Right-hand side w^2 of the scalar equation sigma_2(lambda') = w^2.

    rho-coupled coefficients carry ``t alpha`` and the source ``t mu``,
    matching the continuity path.  Strictly positive for alpha < 0 once the
    normalization dominates the rho and mu terms.
    """
    a = P.alpha
    ta = t * a
    n = P.n
    kc = P.kappa_c
    eu, emu = np.exp(u), np.exp(-u)
    du = P.grid.grad_holo(u)
    grad_sq = np.einsum("jk,...j,...k->...", P.ginv, du, np.conj(du)).real
    rho_grad = np.einsum("...jk,...j,...k->...", P.tilde_rho, du, np.conj(du)).real
    out = kc * eu**2 - 4 * a * kc * eu * grad_sq
    out += 2 * n * a * ta * emu * rho_grad
    out -= 4 * n * a * ta * emu * pairing_du_rho(u, P)
    out += ta**2 * emu**2 * P.sigma2_rho
    out += 2 * n * a * ta * emu * P.delta_omega_rho
    out += ta * (n - 1) * P.trg_rho
    out -= (2 * n * a / factorial(n - 2)) * t * P.mu
    return out


def w_field(u, t: float, P: ProblemData) -> np.ndarray:
    """w = sqrt(w^2); raises if the equation degenerated anywhere."""
    w2 = rhs_w2(u, t, P)
    wmin = float(w2.min())
    if wmin <= 0.0:
        raise DegenerateEquationError(
            f"w^2 reached {wmin:.6e}: scalar equation degenerate (alpha={P.alpha})"
        )
    return np.sqrt(w2)


def residual_scalar(u, t: float, P: ProblemData) -> np.ndarray:
    """Scalar-form residual sigma_2(lambda') - w^2."""
    return sigma2_gprime(u, t, P) - rhs_w2(u, t, P)


def scalar_form_factor(P: ProblemData) -> float:
    """Proportionality constant: residual_scalar = factor * residual_divergence."""
    return 2.0 * P.n * P.alpha / factorial(P.n - 2)
