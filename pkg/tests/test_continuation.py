import numpy as np
import pytest

from conftest import perturbed_log_field, small_problem
from fuyau import continuation as cont
from fuyau import model
from fuyau.grid import TorusGrid
from fuyau.linearized import NewtonOptions, newton_solve
from fuyau.problems import default_u_star, manufactured_problem, preset


class TestDiagnostics:
    def test_trivial_state(self):
        P = small_problem(seed=1, rho_sup=0.3)
        u = np.full(P.grid.shape, np.log(P.M0))
        d = cont.compute_diagnostics(u, 0.0, P)
        assert d.sup_eu_over_M0 == pytest.approx(1.0, abs=1e-12)
        assert d.M0_sup_e_minus_u == pytest.approx(1.0, abs=1e-12)
        assert d.sup_grad_sq == pytest.approx(0.0, abs=1e-18)
        assert d.c2_ratio == pytest.approx(0.0, abs=1e-12)
        assert d.min_cone_margin == pytest.approx(2 * P.M0, rel=1e-10)

    def test_closed_form_bump(self):
        P = small_problem(seed=2, N=16)
        x1 = np.broadcast_to(P.grid.axis_coordinate(0), P.grid.shape)
        u = np.log(P.M0) + 0.1 * np.sin(x1)
        d = cont.compute_diagnostics(u, 0.0, P)
        assert d.sup_eu_over_M0 == pytest.approx(np.exp(0.1), rel=1e-10)
        assert d.M0_sup_e_minus_u == pytest.approx(np.exp(0.1), rel=1e-10)
        # |Du|^2 = |d/dz u|^2 = (0.1 cos x1 / 2)^2 at g = I
        assert d.sup_grad_sq == pytest.approx(0.0025, rel=1e-10)

    def test_shift_equivariance(self):
        P = small_problem(seed=3)
        u = perturbed_log_field(P, seed=3, amplitude=0.2)
        d0 = cont.compute_diagnostics(u, 1.0, P)
        # north-shift of u alone is equivariant only with shifted data, so
        # shift the whole problem: rho and mu move with the same roll
        shift = dict(shift=3, axis=1)
        P2 = model.make_problem(P.grid, P.g, np.roll(P.rho, axis=1, shift=3),
                                np.roll(P.mu, axis=1, shift=3), P.alpha, P.M0)
        d1 = cont.compute_diagnostics(np.roll(u, **shift), 1.0, P2)
        for a, b in zip(d0.to_dict().values(), d1.to_dict().values()):
            assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


class TestIntegralIdentity:
    def test_trivial_state_zero_defect(self):
        P = small_problem(seed=4, mu_sup=0.0, rho_sup=0.0)
        u = np.full(P.grid.shape, np.log(P.M0))
        chk = cont.verify_integral_identity(u, 2.0, P, t=0.0)
        assert chk.defect < 1e-12

    def test_low_k_rejected(self):
        P = small_problem(seed=5)
        with pytest.raises(ValueError):
            cont.verify_integral_identity(np.zeros(P.grid.shape), 1.0, P)

    def test_solved_state_small_defect_and_positivity(self):
        P = small_problem(seed=6, N=16, M0=100.0, mu_sup=0.3)
        u0 = np.full(P.grid.shape, np.log(P.M0))
        result = newton_solve(u0, 1.0, P, NewtonOptions(rel_tol=1e-12))
        assert result.ok
        chk = cont.verify_integral_identity(result.u, 2.0, P, t=1.0)
        assert chk.defect <= 1e-6 * chk.scale
        assert chk.positivity_min >= -1e-10 * chk.scale

    def test_defect_nonzero_off_solution(self):
        # the identity uses the equation: a generic field violates it
        P = small_problem(seed=7, N=16, M0=50.0, mu_sup=0.4)
        u = perturbed_log_field(P, seed=7, amplitude=0.3)
        chk = cont.verify_integral_identity(u, 2.0, P, t=1.0)
        assert chk.defect > 1e-8 * chk.scale


class TestRunPath:
    def test_trivial_preset_path(self):
        P = preset("trivial", N=8).build()
        u, report = cont.run_path(P)
        assert report.success
        assert report.final_t == 1.0
        assert np.max(np.abs(u - np.log(P.M0))) < 1e-12
        for rec in report.records:
            assert rec["res"] <= 1e-10
            assert rec["newton_iters"] == 1
            assert rec["diagnostics"]["min_cone_margin"] > 0.0

    def test_generic_instance_reaches_one(self):
        P = small_problem(seed=8, N=8, M0=200.0, mu_sup=0.4)
        u, report = cont.run_path(P)
        assert report.success
        res_final = float(np.max(np.abs(model.residual_divergence(u, 1.0, P))))
        assert res_final <= 1e-8
        for rec in report.records:
            assert rec["diagnostics"]["min_cone_margin"] > 0.0
            assert rec["constraint_defect"] <= 1e-8
        d = report.records[-1]["diagnostics"]
        b2 = d["M0_sup_e_minus_u"]
        assert d["min_sigma2"] >= 0.5 * P.kappa_c * (P.M0 / b2) ** 2

    def test_manufactured_round_trip(self):
        spec = preset("generic", seed=9, N=16)
        grid = TorusGrid(spec.n, spec.N)
        P, u_star, info = manufactured_problem(spec, default_u_star(grid, spec.M0, 0.05))
        assert abs(info["stokes_defect"]) < 1e-10
        u, report = cont.run_path(P)
        assert report.success
        assert np.max(np.abs(u - u_star)) <= 1e-6

    def test_checkpoint_and_resume(self):
        P = small_problem(seed=10, N=8, M0=100.0)
        saved = []
        u, report = cont.run_path(P, checkpoint=lambda t, u: saved.append((t, u.copy())))
        assert saved and saved[-1][0] == 1.0
        t_mid, u_mid = saved[len(saved) // 2]
        assert t_mid < 1.0
        u2, report2 = cont.run_path(P, start=(t_mid, u_mid))
        assert report2.success
        assert np.max(np.abs(u2 - u)) < 1e-7

    def test_path_failure_below_threshold(self):
        # tiny normalization with a strong rho drives the iterate to the
        # cone boundary: the path must fail cleanly with the last good state
        P = small_problem(seed=11, N=8, M0=0.05, rho_sup=1.0, alpha=-2.0)
        schedule = cont.PathSchedule(dt_min=1e-3)
        with pytest.raises(cont.PathError) as exc:
            cont.run_path(P, schedule)
        err = exc.value
        assert err.t < 1.0
        assert err.report.records
        assert "step underflow" in str(err)
        margin = model.cone_margin_field(err.u, err.t, P).min()
        assert margin > 0.0
