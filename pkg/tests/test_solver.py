"""Reaction step, diffusion kernel, receiver integration, and full solver."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from reactmc import (ReleaseSchedule, build_kernel, compute_cr,
                     diffusion_step, observe, reaction_step,
                     receiver_weights, shell_measure)
from reactmc.config import RadialField, table1_defaults
from reactmc.solver import (SolverState, first_order_step, initial_state,
                            inject, reaction_step_backward_only,
                            reaction_step_forward_only, split_step,
                            total_mass)


def ode_reaction(ca, cb, kf, kb, dt, rtol=1e-12):
    """Independent fine-step integration of dC/dt = kb - kf*cA*cB."""
    scale = max(ca, cb, math.sqrt(kb / kf) if kf > 0 else 0.0, 1.0)

    def rhs(t, y):
        rate = kb - kf * (y[0] * scale) * (y[1] * scale)
        return [rate / scale, rate / scale]

    sol = solve_ivp(rhs, (0.0, dt), [ca / scale, cb / scale],
                    method="LSODA", rtol=rtol, atol=1e-14)
    return sol.y[0, -1] * scale, sol.y[1, -1] * scale


class TestReactionStep:
    def test_equilibrium_fixed_point(self):
        out = reaction_step(1e21, 1e21, kf=1e-17, kb=1e25, dt=1e-3)
        assert out[0] == pytest.approx(1e21, rel=1e-12)
        assert out[1] == pytest.approx(1e21, rel=1e-12)

    def test_no_partner_forward_inert(self):
        assert reaction_step(1e21, 0.0, kf=1e-17, kb=0.0, dt=1.0) == \
            (pytest.approx(1e21), pytest.approx(0.0))

    def test_against_ode_oracle(self):
        got = reaction_step(2e21, 1e21, kf=1e-17, kb=1e25, dt=1e-6)
        want = ode_reaction(2e21, 1e21, 1e-17, 1e25, 1e-6, rtol=1e-12)
        assert got[0] == pytest.approx(want[0], rel=1e-8)
        assert got[1] == pytest.approx(want[1], rel=1e-8)

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            reaction_step(-1.0, 1.0, 1e-17, 1e25, 1e-6)

    @given(ca=st.floats(1e18, 1e24), cb=st.floats(1e18, 1e24),
           kf=st.floats(1e-19, 1e-15), kb=st.floats(1e22, 1e27),
           dt=st.floats(1e-8, 1e-3))
    def test_difference_preserved(self, ca, cb, kf, kb, dt):
        ca2, cb2 = reaction_step(ca, cb, kf, kb, dt)
        assert ca2 - cb2 == pytest.approx(ca - cb, rel=1e-9, abs=1e6)
        assert ca2 >= 0 and cb2 >= 0

    def test_long_step_reaches_equilibrium(self):
        kf, kb = 1e-17, 1e25
        for start in ((5e21, 3e21), (5e21, 5e21)):
            ca, cb = reaction_step(*start, kf, kb, dt=10.0)
            assert ca - cb == pytest.approx(start[0] - start[1], rel=1e-9)
            assert ca * cb == pytest.approx(kb / kf, rel=1e-6)

    def test_forward_limit_of_general_step(self):
        got = reaction_step(2e21, 1e21, 1e-17, kb=1e12, dt=1e-5)
        want = reaction_step_forward_only(2e21, 1e21, 1e-17, 1e-5)
        assert got[0] == pytest.approx(want[0], rel=1e-3)
        assert got[1] == pytest.approx(want[1], rel=1e-3)


class TestForwardOnly:
    def test_equal_concentration_branch(self):
        got = reaction_step_forward_only(1e21, 1e21, kf=1e-17, dt=1e-4)
        assert got[0] == pytest.approx(5e20, rel=1e-12)
        assert got[1] == pytest.approx(5e20, rel=1e-12)

    def test_no_partner(self):
        assert reaction_step_forward_only(3e20, 0.0, 1e-17, 1e-4) == \
            (pytest.approx(3e20), pytest.approx(0.0))

    def test_branch_continuity(self):
        ca = 1e21
        near = reaction_step_forward_only(ca * (1 + 1e-6), ca, 1e-17, 1e-4)
        zero = reaction_step_forward_only(ca, ca, 1e-17, 1e-4)
        assert near[0] == pytest.approx(zero[0], rel=1e-4)

    def test_against_ode_oracle(self):
        got = reaction_step_forward_only(4e21, 1.5e21, 1e-17, 1e-5)
        want = ode_reaction(4e21, 1.5e21, 1e-17, 0.0, 1e-5)
        assert got[0] == pytest.approx(want[0], rel=1e-8)


class TestBackwardOnly:
    def test_from_zero(self):
        assert reaction_step_backward_only(0.0, 0.0, 1e25, 1e-6) == \
            (pytest.approx(1e19), pytest.approx(1e19))

    def test_identity_at_zero_rate(self):
        assert reaction_step_backward_only(5.0, 7.0, 0.0, 1e-6) == (5.0, 7.0)

    def test_linear_growth(self):
        got = reaction_step_backward_only(1e20, 5e19, 1e25, 2e-6)
        assert got == (pytest.approx(1.2e20), pytest.approx(7e19))


@pytest.fixture(scope="module")
def kernel_cfg():
    return table1_defaults().replace(dr=10e-9, r_max=2e-6)


class TestKernel:
    def test_uniform_fixed_point(self, kernel_cfg):
        kern = build_kernel(kernel_cfg, "a")
        field = RadialField(kernel_cfg.radii,
                            np.full(kernel_cfg.n_cells, 1e20), 0.0)
        out = diffusion_step(field, kern)
        np.testing.assert_allclose(out.conc, 1e20, rtol=1e-12)

    def test_entries_nonnegative(self, kernel_cfg):
        kern = build_kernel(kernel_cfg, "a")
        assert kern.matrix.toarray().min() >= 0.0

    def test_point_mass_matches_gaussian(self, defaults):
        # cell width well below the step length so the source acts as a point
        cfg = defaults.replace(dt=10e-6, dr=5e-9, r_max=2e-6,
                               integration_radius=None)
        kern = build_kernel(cfg, "a")
        conc = np.zeros(cfg.n_cells)
        v0 = 4.0 / 3.0 * math.pi * cfg.dr**3
        n = 1e4
        conc[0] = n / v0
        out = diffusion_step(RadialField(cfg.radii, conc, 0.0), kern)
        s = cfg.diff_a * cfg.dt
        r = cfg.radii
        want = n / (4 * math.pi * s) ** 1.5 * np.exp(-r**2 / (4 * s))
        sel = (r > cfg.dr) & (r <= 3 * math.sqrt(2 * s))
        np.testing.assert_allclose(out.conc[sel], want[sel], rtol=0.01)

    def test_semigroup(self, defaults):
        cfg = defaults.replace(dr=5e-9, r_max=2e-6, integration_radius=None)
        kern1 = build_kernel(cfg, "a")
        kern2 = build_kernel(cfg.replace(dt=2 * cfg.dt), "a")
        conc = np.exp(-((cfg.radii - 0.5e-6) / 0.1e-6) ** 2)
        field = RadialField(cfg.radii, conc, 0.0)
        two = diffusion_step(diffusion_step(field, kern1), kern1)
        one = diffusion_step(field, kern2)
        measure = shell_measure(cfg)
        l1_diff = np.sum(np.abs(two.conc - one.conc) * measure)
        assert l1_diff <= 1e-3 * np.sum(one.conc * measure)

    def test_mass_conserved(self, kernel_cfg):
        cfg = kernel_cfg
        kern = build_kernel(cfg, "a")
        conc = np.exp(-((cfg.radii - 0.4e-6) / 0.1e-6) ** 2)
        field = RadialField(cfg.radii, conc, 0.0)
        before = total_mass(field, cfg)
        after = total_mass(diffusion_step(field, kern), cfg)
        assert after == pytest.approx(before, rel=1e-3)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_lower_dimensions_preserve_uniform(self, kernel_cfg, dim):
        cfg = kernel_cfg.replace(dim=dim)
        kern = build_kernel(cfg, "b")
        field = RadialField(cfg.radii, np.full(cfg.n_cells, 3.0), 0.0)
        np.testing.assert_allclose(diffusion_step(field, kern).conc, 3.0,
                                   rtol=1e-12)


class TestObserve:
    def test_uniform_equilibrium_count(self, defaults):
        field = RadialField(defaults.radii,
                            np.full(defaults.n_cells, 1e21), 0.0)
        assert observe(field, defaults) == pytest.approx(0.5236, rel=1e-3)

    def test_zero_field(self, defaults):
        field = RadialField(defaults.radii,
                            np.zeros(defaults.n_cells), 0.0)
        assert observe(field, defaults) == 0.0

    def test_linear_field_vs_monte_carlo(self, defaults):
        cfg = defaults
        slope = 1e21 / cfg.r_max
        field = RadialField(cfg.radii, slope * cfg.radii, 0.0)
        got = observe(field, cfg)
        rng = np.random.default_rng(0)
        n = 400_000
        pts = rng.uniform(-1, 1, (n, 3)) * cfg.rx_radius
        inside = np.sum(pts**2, axis=1) <= cfg.rx_radius**2
        pts = pts[inside] + np.array([cfg.distance, 0, 0])
        vol = 8 * cfg.rx_radius**3 * np.mean(inside)
        mc = np.mean(slope * np.linalg.norm(pts, axis=1)) * vol
        assert got == pytest.approx(mc, rel=0.005)

    def test_weights_sum_to_receiver_volume(self, defaults):
        w = receiver_weights(defaults)
        assert w.sum() == pytest.approx(defaults.rx_volume, rel=1e-9)


class TestInject:
    def test_innermost_cell_increment(self, defaults):
        state = initial_state(defaults)
        sched = ReleaseSchedule(releases_a=((200e-6, 5e3),))
        out = inject(state, sched, 200e-6, defaults)
        v0 = 4.0 / 3.0 * math.pi * defaults.dr**3
        assert out.field_a.conc[0] == pytest.approx(5e3 / v0, rel=1e-12)
        assert out.field_b.conc[0] == 0.0

    def test_off_schedule_identity(self, defaults):
        state = initial_state(defaults)
        sched = ReleaseSchedule(releases_a=((200e-6, 5e3),))
        out = inject(state, sched, 100e-6, defaults)
        assert np.all(out.field_a.conc == state.field_a.conc)

    def test_injected_mass_exact(self, defaults):
        state = initial_state(defaults)
        sched = ReleaseSchedule(releases_a=((0.0, 5e3),),
                                releases_b=((0.0, 2e3),))
        out = inject(state, sched, 0.0, defaults)
        assert total_mass(out.field_a, defaults) == pytest.approx(5e3,
                                                                  rel=1e-12)
        assert total_mass(out.field_b, defaults) == pytest.approx(2e3,
                                                                  rel=1e-12)


class TestComputeCr:
    def test_free_diffusion_matches_analytic(self, defaults):
        cfg = defaults.replace(kf=0.0, kb=0.0, t_max=300e-6,
                               init_conc_a=0.0, init_conc_b=0.0)
        resp = compute_cr(cfg, ReleaseSchedule(releases_a=((0.0, 5e3),)))
        d, diff = cfg.distance, cfg.diff_a
        t_peak = d**2 / (6 * diff)
        got, _ = resp.at(t_peak)
        want = cfg.rx_volume * 5e3 / (4 * math.pi * diff * t_peak) ** 1.5 \
            * math.exp(-d**2 / (4 * diff * t_peak))
        assert got == pytest.approx(want, rel=0.02)

    def test_release_beyond_horizon_rejected(self, defaults):
        cfg = defaults.replace(t_max=100e-6)
        with pytest.raises(Exception):
            compute_cr(cfg, ReleaseSchedule(releases_a=((200e-6, 5e3),)))

    def test_simultaneous_reactive_release_rejected(self, defaults):
        sched = ReleaseSchedule(releases_a=((100e-6, 5e3),),
                                releases_b=((100e-6, 5e3),))
        with pytest.raises(Exception):
            compute_cr(defaults, sched)

    def test_csv_format(self, tmp_path, coarse):
        resp = compute_cr(coarse.replace(init_conc_a=0.0, init_conc_b=0.0),
                          ReleaseSchedule(releases_a=((0.0, 5e3),)))
        path = tmp_path / "cr.csv"
        resp.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,ybar_a,ybar_b"
        assert len(lines) == len(resp.times) + 1


class TestFirstOrderStep:
    def test_uniform_field_identity(self, coarse):
        cfg = coarse.replace(kf=0.0, kb=0.0, init_conc_a=1e20,
                             init_conc_b=1e20)
        state = initial_state(cfg)
        out = first_order_step(state, cfg)
        np.testing.assert_allclose(out.field_a.conc, 1e20, rtol=1e-9)

    def test_matches_split_path_at_small_dt(self, defaults):
        # Common smooth start: a release diffused for a few steps. The
        # explicit path runs at dt/4 = 0.1 us — its stability bound
        # D*dt/dr^2 <= 1/6 conflicts with the kernel accuracy rule
        # dr <= sqrt(2*D*dt) at a shared step — over the same horizon.
        dt = 4e-7
        cfg = defaults.replace(dt=dt, dr=math.sqrt(2e-10 * dt),
                               r_max=1.0e-6, init_conc_a=1e20,
                               init_conc_b=1e20)
        cfg_euler = cfg.replace(dt=dt / 4)
        kern_a = build_kernel(cfg, "a")
        kern_b = build_kernel(cfg, "b")
        state = inject(initial_state(cfg),
                       ReleaseSchedule(releases_a=((0.0, 500.0),)), 0.0, cfg)
        for _ in range(50):
            state = split_step(state, cfg, kern_a, kern_b)
        euler = split = state
        for _ in range(125):                       # 50 us horizon
            split = split_step(split, cfg, kern_a, kern_b)
        for _ in range(500):
            euler = first_order_step(euler, cfg_euler)
        measure = shell_measure(cfg)
        for sp, eu in ((split.field_a, euler.field_a),
                       (split.field_b, euler.field_b)):
            l1 = np.sum(np.abs(sp.conc - eu.conc) * measure)
            assert l1 <= 0.02 * np.sum(sp.conc * measure)
