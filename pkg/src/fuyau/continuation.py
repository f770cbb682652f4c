"""Continuity-method driver and the a-priori-estimate monitors.

The path marches the deformation parameter from the trivial solution
``u = log M0`` at ``t = 0`` to the target equation at ``t = 1`` with
adaptive steps: halve on Newton failure, grow by 1.5 after easy successes,
never exceeding the step cap.  Every accepted state is admissible, mass
normalized, and converged to the Newton tolerance; the per-state record
carries the estimate monitors (sup/inf bounds, gradient and Hessian
ratios, sigma_2 floor) plus the defect of the exact integral identity that
underlies the supremum bounds.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from math import factorial
from typing import NamedTuple

import numpy as np

from . import forms
from .linearized import NewtonOptions, newton_solve
from .model import (
    ProblemData,
    cone_margin_field,
    gprime,
    grad_norm_sq,
    residual_divergence,
    sigma2_gprime,
)


@dataclass
class Diagnostics:
    """Numerical echoes of the a priori estimates at one path state."""

    sup_eu_over_M0: float
    M0_sup_e_minus_u: float
    sup_grad_sq: float
    c2_ratio: float
    min_sigma2: float
    min_cone_margin: float

    def to_dict(self) -> dict:
        return asdict(self)


class IdentityCheck(NamedTuple):
    """Defect of the integration-by-parts identity at one state."""

    defect: float
    scale: float
    lhs: float
    rhs: float
    positivity_min: float


@dataclass
class PathSchedule:
    dt_init: float = 0.05
    dt_min: float = 1e-6
    dt_max: float = 0.1
    grow: float = 1.5
    easy_iters: int = 3
    newton: NewtonOptions = field(default_factory=NewtonOptions)


@dataclass
class SolveReport:
    success: bool
    records: list = field(default_factory=list)
    final_t: float = 0.0
    final_res: float = float("nan")
    fail_reason: str = ""
    schedule: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "final_t": self.final_t,
            "final_res": self.final_res,
            "fail_reason": self.fail_reason,
            "schedule": self.schedule,
            "wall_time": self.wall_time,
            "records": self.records,
        }


class PathError(RuntimeError):
    """Continuation stalled; carries the last good state and partial report."""

    def __init__(self, message: str, t: float, u, report: SolveReport):
        super().__init__(message)
        self.t = t
        self.u = u
        self.report = report


def compute_diagnostics(u, t: float, P: ProblemData) -> Diagnostics:
    """Evaluate every estimate monitor by grid extrema and spectral gradients."""
    eu = np.exp(u)
    grad_sq = grad_norm_sq(u, P)
    sup_grad = float(grad_sq.max())
    hess = P.grid.complex_hessian(u)
    w = _inv_sqrt(P)
    white = np.einsum("ab,...bc,cd->...ad", w, hess, w)
    hess_norm = np.sqrt(np.einsum("...ab,...ab->...", white, np.conj(white)).real)
    s2 = sigma2_gprime(u, t, P)
    margin = cone_margin_field(u, t, P)
    return Diagnostics(
        sup_eu_over_M0=float(eu.max()) / P.M0,
        M0_sup_e_minus_u=P.M0 * float(np.exp(-u).max()),
        sup_grad_sq=sup_grad,
        c2_ratio=float(hess_norm.max()) / (1.0 + sup_grad),
        min_sigma2=float(s2.min()),
        min_cone_margin=float(margin.min()),
    )


def _inv_sqrt(P: ProblemData) -> np.ndarray:
    w, v = np.linalg.eigh(P.g)
    return (v * w**-0.5) @ v.conj().T


def verify_integral_identity(u, k: float, P: ProblemData, t: float = 1.0) -> IdentityCheck:
    """Defect of the exact integration-by-parts identity at a solved state.

    Both sides are evaluated with the exterior-algebra kernel exactly as
    the identity is stated (path substitution applied for t < 1):

      (k/2) Int e^{-ku} {e^u w + a e^{-u} rho} ^ i du ^ dbar-u ^ w^{n-2}
        = -(k/2) Int e^{-ku} i du ^ dbar-u ^ w' ^ w^{n-2}
          - Int e^{-ku} t mu
          + (a - a/(k+1)) Int e^{-(k+1)u} i ddbar rho ^ w^{n-2}

    with ``a = t alpha``.  For exact solutions the identity holds exactly;
    discretely the defect is set by the solver tolerance plus aliasing, and
    decays spectrally under grid refinement.  Also returns the grid minimum
    of the cone-positivity integrand ``i du ^ dbar-u ^ w' ^ w^{n-2}``.
    """
    if k < 2:
        raise ValueError("identity requires k >= 2 for the e^{-ku} form")
    a = t * P.alpha
    grid = P.grid
    emu = np.exp(-u)
    eku = np.exp(-k * u)
    du = forms.del_scalar(grid, u)
    dbu = forms.delbar_scalar(grid, u)
    grad_form = forms.wedge(du, dbu) * 1j

    weighted = (np.exp((1.0 - k) * u))[..., None, None] * P.g \
        + a * (np.exp(-(k + 1.0) * u))[..., None, None] * P.rho
    lhs_form = forms.wedge(forms.wedge(forms.form_from_hermitian(grid, weighted), grad_form),
                           P.omega_nm2)
    lhs = (k / 2.0) * grid.integrate(forms.top_ratio(lhs_form, P.vol))

    gp_form = forms.form_from_hermitian(grid, gprime(u, t, P))
    pos_field = forms.top_ratio(
        forms.wedge(forms.wedge(grad_form, gp_form), P.omega_nm2), P.vol
    )
    term1 = -(k / 2.0) * grid.integrate(eku * pos_field)
    term2 = -grid.integrate(eku * t * P.mu)
    ddbar_rho = forms.i_del_delbar(forms.form_from_hermitian(grid, P.rho))
    rho_term_field = forms.top_ratio(forms.wedge(ddbar_rho, P.omega_nm2), P.vol)
    term3 = (a - a / (k + 1.0)) * grid.integrate(np.exp(-(k + 1.0) * u) * rho_term_field)
    rhs = term1 + term2 + term3
    scale = max(abs(lhs), abs(term1), abs(term2), abs(term3), 1e-300)
    return IdentityCheck(defect=abs(lhs - rhs), scale=scale, lhs=lhs, rhs=rhs,
                         positivity_min=float((eku * pos_field).min()))


def _record(t, result, dt, P, wall, identity_k: float = 2.0) -> dict:
    diag = compute_diagnostics(result.u, t, P)
    ident = verify_integral_identity(result.u, identity_k, P, t=t)
    return {
        "t": t,
        "dt": dt,
        "newton_iters": result.iters,
        "lin_iters": result.lin_iters_total,
        "res": result.res_norm,
        "constraint_defect": abs(float(np.mean(np.exp(result.u))) - P.M0) / P.M0,
        "diagnostics": diag.to_dict(),
        "identity_defect": ident.defect,
        "identity_scale": ident.scale,
        "positivity_min": ident.positivity_min,
        "wall": wall,
    }


def run_path(P: ProblemData, schedule: PathSchedule = None, start=None,
             checkpoint=None):
    """March t from 0 to 1; returns ``(u, SolveReport)`` or raises PathError.

    ``start`` optionally resumes from a state ``(t0, u0)``; ``checkpoint``
    is an optional callable ``(t, u)`` invoked after every accepted step.
    """
    schedule = schedule or PathSchedule()
    t_start = time.perf_counter()
    report = SolveReport(success=False, schedule={
        "dt_init": schedule.dt_init, "dt_min": schedule.dt_min,
        "dt_max": schedule.dt_max, "grow": schedule.grow,
        "abs_tol": schedule.newton.abs_tol, "rel_tol": schedule.newton.rel_tol,
    })

    if start is None:
        t = 0.0
        u = np.full(P.grid.shape, np.log(P.M0))
        res0 = newton_solve(u, 0.0, P, schedule.newton)
        if not res0.ok:
            raise PathError(f"trivial state rejected: {res0.fail_reason}", 0.0, u, report)
        u = res0.u
        step_wall = time.perf_counter() - t_start
        report.records.append(_record(0.0, res0, 0.0, P, step_wall))
    else:
        t, u = start
        u = np.asarray(u, dtype=float)

    dt = schedule.dt_init
    while t < 1.0 - 1e-14:
        dt_try = min(dt, 1.0 - t)
        w0 = time.perf_counter()
        result = newton_solve(u, t + dt_try, P, schedule.newton)
        wall = time.perf_counter() - w0
        if result.ok:
            t = t + dt_try
            u = result.u
            report.records.append(_record(t, result, dt_try, P, wall))
            if checkpoint is not None:
                checkpoint(t, u)
            if result.iters <= schedule.easy_iters:
                dt = min(dt * schedule.grow, schedule.dt_max)
        else:
            dt = 0.5 * dt_try
            if dt < schedule.dt_min:
                report.final_t = t
                report.final_res = result.res_norm
                report.fail_reason = f"step underflow at t={t:.6f}: {result.fail_reason}"
                report.wall_time = time.perf_counter() - t_start
                raise PathError(report.fail_reason, t, u, report)

    report.success = True
    report.final_t = 1.0
    report.final_res = report.records[-1]["res"]
    report.wall_time = time.perf_counter() - t_start
    return u, report
