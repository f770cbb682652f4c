"""Linearized operator, its adjoint, and the constrained Newton step.

The linearization of the divergence-form residual at a base iterate
``(u, t)`` is

    L(h) * vol = i ddbar(h e^u omega + t alpha h e^{-u} rho) ^ omega^{n-2}
                 + 2 n alpha (i ddbar u) ^ (i ddbar h) ^ omega^{n-2},

which is the exact Gateaux derivative of the discrete residual (pointwise
exponentials and spectral derivatives are both differentiated exactly).
Its principal part is the g-tilde weighted complex Laplacian with

    gtilde = (tr_g g') g - g',

positive definite while the iterate is admissible, and the formal adjoint
in the unit-volume inner product is pointwise

    L*(psi) = (n-2)! g^{i k-bar} g^{p j-bar} gtilde_{k-bar p} D_i D_{j-bar} psi.

Newton steps solve the bordered saddle system (one Lagrange multiplier
against the weight e^u, which removes the one-dimensional kernel without
computing it) with restarted GMRES, preconditioned by the Fourier inverse
of the constant-coefficient proxy of the principal part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse.linalg

from . import forms
from .grid import _fftn, _ifftn
from .model import ProblemData, cone_margin_field, residual_divergence


def gtilde(u, t: float, P: ProblemData) -> np.ndarray:
    """Ellipticity tensor (tr_g g') g - g' of the base iterate."""
    from .model import gprime

    gp = gprime(u, t, P)
    tr = np.einsum("ab,...ba->...", P.ginv, gp).real
    return tr[..., None, None] * P.g - gp


@dataclass(eq=False)
class LinearizedSystem:
    """Frozen coefficient fields of L and L* at one base iterate."""

    u: np.ndarray
    t: float
    P: ProblemData
    S: np.ndarray = field(init=False)
    hess_u_wedge: forms.Form = field(init=False)
    gtilde: np.ndarray = field(init=False)
    coeff_contra: np.ndarray = field(init=False)

    def __post_init__(self):
        P, u, t = self.P, self.u, self.t
        eu = np.exp(u)[..., None, None]
        emu = np.exp(-u)[..., None, None]
        self.S = eu * P.g + (t * P.alpha) * emu * P.rho
        hu_form = forms.form_from_hermitian(P.grid, P.grid.complex_hessian(u))
        self.hess_u_wedge = forms.wedge(hu_form, P.omega_nm2)
        self.gtilde = gtilde(u, t, P)
        self.coeff_contra = np.einsum(
            "ik,...kp,pj->...ij", P.ginv, self.gtilde, P.ginv
        )

    def min_gtilde_eigenvalue(self) -> float:
        """Smallest pencil eigenvalue of gtilde over the grid (ellipticity)."""
        from .symfunc import generalized_spectrum

        lam = generalized_spectrum(self.gtilde, self.P.g)
        return float(lam[..., -1].min())


def apply_L(h, sys: LinearizedSystem) -> np.ndarray:
    """Linearized operator via the exterior-algebra kernel."""
    P = sys.P
    hS = h[..., None, None] * sys.S
    T = forms.wedge(forms.i_del_delbar(forms.form_from_hermitian(P.grid, hS)), P.omega_nm2)
    out = forms.top_ratio(T, P.vol)
    hh = forms.form_from_hermitian(P.grid, P.grid.complex_hessian(h))
    quad = forms.top_ratio(forms.wedge(hh, sys.hess_u_wedge), P.vol)
    return out + (2 * P.n * P.alpha) * quad


def apply_L_expanded(h, sys: LinearizedSystem) -> np.ndarray:
    """Expanded form: principal part + first-order + zeroth-order terms.

    Agrees with :func:`apply_L` up to aliasing of the coefficient products;
    used as a cross-check, not in the solve path.
    """
    P = sys.P
    nm2_fact = factorial(P.n - 2)
    hess_h = P.grid.complex_hessian(h)
    principal = nm2_fact * np.einsum("...ij,...ji->...", sys.coeff_contra, hess_h).real
    S_form = forms.form_from_hermitian(P.grid, sys.S)
    dbar_S = forms.del_bar(S_form)
    first = forms.top_ratio(
        forms.wedge(forms.wedge(forms.del_scalar(P.grid, h) * 1j, dbar_S), P.omega_nm2),
        P.vol,
    )
    zot = forms.top_ratio(forms.wedge(forms.i_del_delbar(S_form), P.omega_nm2), P.vol)
    return principal + 2.0 * first + zot * h


def apply_Lstar(psi, sys: LinearizedSystem) -> np.ndarray:
    """Pointwise adjoint operator; kernel contains the constants exactly."""
    hess = sys.P.grid.complex_hessian(psi)
    return factorial(sys.P.n - 2) * np.einsum(
        "...ij,...ji->...", sys.coeff_contra, hess
    ).real


# ---------------------------------------------------------------------------
# bordered Newton step


@dataclass
class NewtonOptions:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_newton: int = 25
    lin_rtol: float = 1e-10
    lin_maxiter: int = 300
    theta_keep: float = 0.1
    armijo_c: float = 1e-4
    s_min: float = 2.0**-20


@dataclass
class NewtonOutcome:
    u: np.ndarray
    step: float
    res_before: float
    res_after: float
    margin_after: float
    lin_iters: int
    ok: bool
    fail_reason: str = ""


@dataclass
class NewtonResult:
    u: np.ndarray
    iters: int
    res_norm: float
    margin: float
    lin_iters_total: int
    ok: bool
    fail_reason: str = ""
    history: list = field(default_factory=list)


def _project_mass(u, P: ProblemData):
    """Restore integral(e^u) = M0 exactly with a constant shift."""
    return u + np.log(P.M0 / np.mean(np.exp(u)))


class _BorderedOperator:
    """Matrix-free bordered system [L, e^u; <., e^u>, 0] and its preconditioner."""

    def __init__(self, sys: LinearizedSystem):
        self.sys = sys
        P = sys.P
        self.shape_grid = P.grid.shape
        self.m = P.grid.num_points
        self.eu = np.exp(sys.u)
        self.w0 = float(np.mean(self.eu))
        # constant-coefficient proxy of the principal part: Fourier symbol
        # -(n-2)! c q(k) with c the mean gtilde scale and q the metric symbol
        c = float(np.mean(np.einsum("ab,...ba->...", P.ginv, sys.gtilde).real)) / P.n
        q = np.zeros(P.grid.shape)
        for i in range(P.n):
            for j in range(P.n):
                q = q + (P.ginv[i, j] * P.grid.zeta(i) * np.conj(P.grid.zeta(j))).real
        # modes annihilated by every derivative symbol (Nyquist corners) get a
        # benign unit symbol; the constant mode is handled by the border block
        q = np.where(q == 0.0, 1.0, q)
        sym = -factorial(P.n - 2) * c * q
        sym.flat[0] = 1.0
        self.symbol = sym

    def matvec(self, vec):
        h = vec[: self.m].reshape(self.shape_grid)
        lam = vec[self.m]
        top = apply_L(h, self.sys) + lam * self.eu
        bottom = np.mean(h * self.eu)
        return np.concatenate([top.ravel(), [bottom]])

    def precond(self, vec):
        r = vec[: self.m].reshape(self.shape_grid)
        s = vec[self.m]
        r_hat = _fftn(r)
        r0_mean = r_hat.flat[0].real / self.m
        h_hat = r_hat / self.symbol
        h_hat.flat[0] = (s / self.w0) * self.m
        h = _ifftn(h_hat).real
        lam = r0_mean / self.w0
        return np.concatenate([h.ravel(), [lam]])

    def as_linear_operators(self):
        n_tot = self.m + 1
        A = scipy.sparse.linalg.LinearOperator((n_tot, n_tot), matvec=self.matvec)
        M = scipy.sparse.linalg.LinearOperator((n_tot, n_tot), matvec=self.precond)
        return A, M


def solve_linearized(sys: LinearizedSystem, rhs, opts: NewtonOptions):
    """Solve L(h) + lam e^u = rhs, <h, e^u> = 0 by preconditioned GMRES."""
    op = _BorderedOperator(sys)
    b = np.concatenate([np.asarray(rhs).ravel(), [0.0]])
    if not np.any(b):
        return np.zeros(op.shape_grid), 0.0, 0, True
    A, M = op.as_linear_operators()
    count = {"iters": 0}

    def cb(_):
        count["iters"] += 1

    restart = 60
    outer = max(1, -(-opts.lin_maxiter // restart))  # maxiter counts outer cycles
    x, info = scipy.sparse.linalg.gmres(
        A, b, M=M, rtol=opts.lin_rtol, atol=0.0, restart=restart,
        maxiter=outer, callback=cb, callback_type="pr_norm",
    )
    h = x[: op.m].reshape(op.shape_grid)
    lam = float(x[op.m])
    return h, lam, count["iters"], info == 0


def residual_floor(u, P: ProblemData) -> float:
    """Roundoff floor of the residual assembly at iterate ``u``.

    Spectral second derivatives of e^u-sized fields carry relative FFT noise
    amplified by the squared wavenumber range, so the max-norm residual
    cannot be driven below this level.
    """
    eps = np.finfo(float).eps
    return 4.0 * eps * float(np.max(np.exp(u))) * P.grid.N**2 * P.n**2 * max(1.0, abs(P.alpha))


def cone_linesearch(u, h, t: float, P: ProblemData, res0: float, margin0: float,
                    opts: NewtonOptions, tol: float = 0.0):
    """Largest dyadic step that keeps the cone margin and decreases the residual.

    Trials are mass-projected before evaluation.  Returns
    ``(s, u_new, res_new, margin_new, reason)`` with ``s = 0`` and a reason
    ('cone margin' or 'armijo') when no admissible step exists.
    """
    if not np.any(h):
        return 1.0, u, res0, margin0, ""
    s = 1.0
    floor = max(0.5 * opts.abs_tol, tol)
    last_reason = ""
    while s >= opts.s_min:
        trial = _project_mass(u + s * h, P)
        margin = cone_margin_field(trial, t, P)
        mmin = float(margin.min())
        if mmin <= opts.theta_keep * margin0:
            last_reason = "cone margin"
            s *= 0.5
            continue
        res = float(np.max(np.abs(residual_divergence(trial, t, P))))
        if res <= max((1.0 - opts.armijo_c * s) * res0, floor):
            return s, trial, res, mmin, ""
        last_reason = "armijo"
        s *= 0.5
    return 0.0, u, res0, margin0, last_reason or "exhausted"


def newton_step(u, t: float, P: ProblemData, opts: NewtonOptions = None,
                tol: float = 0.0) -> NewtonOutcome:
    """One constrained Newton step from an admissible iterate."""
    opts = opts or NewtonOptions()
    res_field = residual_divergence(u, t, P)
    res0 = float(np.max(np.abs(res_field)))
    margin0 = float(cone_margin_field(u, t, P).min())
    sys = LinearizedSystem(u, t, P)
    h, _lam, lin_iters, lin_ok = solve_linearized(sys, -res_field, opts)
    s, u_new, res_new, margin_new, reason = cone_linesearch(
        u, h, t, P, res0, margin0, opts, tol=tol
    )
    if s == 0.0:
        if not lin_ok:
            reason = f"linear solve stagnated; line search: {reason}"
        return NewtonOutcome(u=u, step=0.0, res_before=res0, res_after=res0,
                             margin_after=margin0, lin_iters=lin_iters, ok=False,
                             fail_reason=reason)
    return NewtonOutcome(u=u_new, step=s, res_before=res0, res_after=res_new,
                         margin_after=margin_new, lin_iters=lin_iters, ok=True)


def newton_solve(u, t: float, P: ProblemData, opts: NewtonOptions = None) -> NewtonResult:
    """Newton iteration at fixed t until the residual tolerance is met.

    Always takes at least one step, so a predictor that already solves the
    equation costs exactly one (trivial) iteration.
    """
    opts = opts or NewtonOptions()
    u = _project_mass(np.asarray(u, dtype=float), P)
    res_entry = float(np.max(np.abs(residual_divergence(u, t, P))))
    tol = max(opts.abs_tol, opts.rel_tol * res_entry, residual_floor(u, P))
    history = []
    lin_total = 0
    res = res_entry
    stalls = 0
    for it in range(1, opts.max_newton + 1):
        out = newton_step(u, t, P, opts, tol=tol)
        lin_total += out.lin_iters
        history.append(
            {"iter": it, "res": out.res_after, "step": out.step,
             "margin": out.margin_after, "lin_iters": out.lin_iters}
        )
        if not out.ok:
            return NewtonResult(u=u, iters=it, res_norm=res, margin=out.margin_after,
                                lin_iters_total=lin_total, ok=False,
                                fail_reason=out.fail_reason, history=history)
        stalls = stalls + 1 if out.res_after > 0.5 * out.res_before else 0
        u, res = out.u, out.res_after
        if res <= tol:
            return NewtonResult(u=u, iters=it, res_norm=res, margin=out.margin_after,
                                lin_iters_total=lin_total, ok=True, history=history)
        if stalls >= 3:
            return NewtonResult(u=u, iters=it, res_norm=res, margin=out.margin_after,
                                lin_iters_total=lin_total, ok=False,
                                fail_reason="stagnation near roundoff floor",
                                history=history)
    return NewtonResult(u=u, iters=opts.max_newton, res_norm=res,
                        margin=float(cone_margin_field(u, t, P).min()),
                        lin_iters_total=lin_total, ok=False,
                        fail_reason="newton iteration limit", history=history)
