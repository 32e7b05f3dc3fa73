import numpy as np
import pytest

from tbbsim.errors import InsufficientPopulationError
from tbbsim.model import (Controls, LossOptions, MeanFieldState, ModelParams,
                          DEFAULT_PARAMS, ground_state, lambda_of_big_g)
from tbbsim.dynamics import (ControlTarget, IntegratorOptions, Schedule,
                             Trajectory, detect_transitions, estimate_lambda,
                             hysteresis_run, integrate, schedule_eval)
from tbbsim.steady import steady_states


def const(target, v):
    return Schedule.constant(target, v)


ETA = ControlTarget.ETA
LAM = ControlTarget.LAMBDA


class TestSchedules:
    def test_constant(self):
        s = const(ETA, 7.0)
        assert schedule_eval(s, 0.0) == 7.0
        assert schedule_eval(s, 123.4) == 7.0

    def test_ramp_midpoint(self):
        s = Schedule.ramp_cycle(ETA, 0.0, 10.0, 2.0, 1.0, 3)
        assert schedule_eval(s, 1.0) == 5.0
        assert schedule_eval(s, 2.0) == 10.0
        assert schedule_eval(s, 2.5) == 5.0
        assert schedule_eval(s, 3.0 + 1.0) == 5.0  # second cycle
        assert schedule_eval(s, 9.5) == 0.0        # hold after last cycle

    def test_square_wave_starts_high(self):
        s = Schedule.square_wave(LAM, 0.0, 0.1, 4.0, 0.5)
        assert schedule_eval(s, 0.0) == 0.1
        assert schedule_eval(s, 3.0) == 0.0
        assert schedule_eval(s, 4.0) == 0.1

    def test_piecewise_clamps(self):
        s = Schedule.piecewise(ETA, [(1.0, 2.0), (3.0, 6.0)])
        assert schedule_eval(s, 0.0) == 2.0
        assert schedule_eval(s, 2.0) == 4.0
        assert schedule_eval(s, 10.0) == 6.0

    def test_bad_knots_rejected(self):
        with pytest.raises(ValueError):
            Schedule.piecewise(ETA, [(1.0, 2.0), (1.0, 3.0)])


class TestIntegrate:
    def test_empty_cavity_ring_up(self):
        p = ModelParams(n_atoms=0.0, delta_C=0.6)
        eta = 2.0
        t_end = 5.0 / p.kappa
        traj = integrate(MeanFieldState(), p, const(ETA, eta),
                         const(LAM, 0.0), t_end=t_end)
        alpha = complex(traj.states[-1, 0], traj.states[-1, 1])
        pole = 1j * p.delta_C - p.kappa
        exact = (eta / -pole) * (1 - np.exp(pole * t_end))
        assert abs(alpha - exact) / abs(exact) < 1e-6

    def test_population_conserved_without_loss(self):
        p = DEFAULT_PARAMS
        traj = integrate(ground_state(p), p, const(ETA, 100.0),
                         const(LAM, 1e-3), t_end=2000.0)
        drift = np.abs(traj.total_population - p.n_atoms).max()
        assert drift <= 1e-10 * p.n_atoms

    def test_return_to_stable_branch_after_perturbation(self):
        p = DEFAULT_PARAMS
        c = Controls(eta=370.0, lam=1e6)
        branch = steady_states(p, c)[0]
        y = branch.state.to_vector()
        rng = np.random.default_rng(0)
        y_pert = y * (1 + 1e-6 * rng.standard_normal(7))
        slowest = max(e.real for e in branch.eigenvalues)
        t_end = 50.0 / abs(slowest)
        traj = integrate(MeanFieldState.from_vector(y_pert), p,
                         const(ETA, c.eta), const(LAM, c.lam), t_end=t_end,
                         opts=IntegratorOptions(rtol=1e-10, atol=1e-12))
        scale = np.linalg.norm(y)
        assert np.linalg.norm(traj.states[-1] - y) <= 1e-6 * scale

    def test_runaway_breakdown_without_repump(self):
        p = DEFAULT_PARAMS
        traj = integrate(ground_state(p, seed_alpha=1e-8), p,
                         const(ETA, 236.0), const(LAM, 0.0), t_end=3e4)
        T = traj.transmittance_trace
        assert T[0] < 0.05 and T[-1] > 0.9
        events = detect_transitions(traj)
        assert [e.direction for e in events] == ["up"]

    def test_exponential_decay_with_loss_only(self):
        # with n_e = 0 and no drive/repump, n_g and n_f only see trap loss
        p = DEFAULT_PARAMS
        loss = LossOptions(enabled=True, rate_g=1e-3, rate_e=2e-3,
                           rate_f=5e-3)
        initial = MeanFieldState(n_e=0.0, n_g=500.0, n_f=300.0)
        t_end = 800.0
        traj = integrate(initial, p, const(ETA, 0.0), const(LAM, 0.0),
                         loss=loss, t_end=t_end,
                         opts=IntegratorOptions(rtol=1e-11, atol=1e-13))
        ne, ng, nf = traj.states[-1, 4:7]
        assert ne == pytest.approx(0.0, abs=1e-10)
        assert ng == pytest.approx(500.0 * np.exp(-loss.rate_g * t_end),
                                   rel=1e-8)
        assert nf == pytest.approx(300.0 * np.exp(-loss.rate_f * t_end),
                                   rel=1e-8)

    def test_excited_decay_combines_spontaneous_and_loss(self):
        # pure n_e initial condition: rate is 2(gamma+Gamma) + rate_e
        p = DEFAULT_PARAMS
        loss = LossOptions(enabled=True, rate_g=0.0, rate_e=2e-3,
                           rate_f=0.0)
        t_end = 2.0
        traj = integrate(MeanFieldState(n_e=100.0), p, const(ETA, 0.0),
                         const(LAM, 0.0), loss=loss, t_end=t_end,
                         opts=IntegratorOptions(rtol=1e-11, atol=1e-13))
        rate = 2.0 * (p.gamma + p.Gamma) + loss.rate_e
        assert traj.states[-1, 4] == pytest.approx(
            100.0 * np.exp(-rate * t_end), rel=1e-8)

    def test_terminal_state_matches_unique_branch(self):
        p = DEFAULT_PARAMS
        c = Controls(eta=50.0, lam=1e-3)
        (branch,) = steady_states(p, c)
        t_end = 40.0 / abs(branch.max_re_eigenvalue)
        traj = integrate(ground_state(p, seed_alpha=1e-8), p,
                         const(ETA, c.eta), const(LAM, c.lam), t_end=t_end,
                         opts=IntegratorOptions(rtol=1e-10, atol=1e-12))
        y_ss = branch.state.to_vector()
        err = np.linalg.norm(traj.states[-1] - y_ss) / np.linalg.norm(y_ss)
        assert err <= 1e-6

    def test_tolerance_refinement_converges(self):
        p = DEFAULT_PARAMS
        args = (ground_state(p, seed_alpha=1e-8), p, const(ETA, 200.0),
                const(LAM, 1e-3))
        coarse = integrate(*args, t_end=5000.0,
                           opts=IntegratorOptions(rtol=1e-8, atol=1e-10))
        fine = integrate(*args, t_end=5000.0,
                         opts=IntegratorOptions(rtol=5e-9, atol=5e-11))
        scale = np.linalg.norm(fine.states[-1])
        assert np.linalg.norm(coarse.states[-1] - fine.states[-1]) <= \
            1e-5 * scale


class TestTransitions:
    def _traj(self, t, T):
        t = np.asarray(t, float)
        n = len(t)
        return Trajectory(times=t, states=np.zeros((n, 7)),
                          controls_trace=np.ones((n, 2)),
                          transmittance_trace=np.asarray(T, float),
                          params=DEFAULT_PARAMS)

    def test_monotone_rise_single_up_event(self):
        t = np.linspace(0, 1, 101)
        traj = self._traj(t, t)
        events = detect_transitions(traj, 0.1, 0.5)
        assert len(events) == 1
        assert events[0].direction == "up"
        assert events[0].time == pytest.approx(0.5, abs=0.01)

    def test_square_trace_alternating_events(self):
        period = 2.0
        t = np.linspace(0, 10, 2001)
        T = (np.floor(2 * t / period) % 2 == 0).astype(float)
        events = detect_transitions(self._traj(t, T))
        dirs = [e.direction for e in events]
        assert dirs == ["down", "up"] * (len(dirs) // 2)
        gaps = np.diff([e.time for e in events])
        assert np.allclose(gaps, period / 2, atol=0.02)

    def test_band_sitter_produces_no_events(self):
        t = np.linspace(0, 1, 50)
        events = detect_transitions(self._traj(t, 0.3 + 0.1 * np.sin(9 * t)))
        assert events == []


class TestHysteresis:
    def test_ramp_below_fold_has_no_loop(self):
        # cycle 1 carries the start-up transient; cycle 2 should close
        p = DEFAULT_PARAMS
        ramp = Schedule.ramp_cycle(ETA, 20.0, 120.0, 1500.0, 500.0, 2)
        rec = hysteresis_run(p, ramp, Controls(eta=0.0, lam=1e6))
        assert rec.loop_areas[1] <= 1e-3

    def test_slower_ramp_shrinks_residual_loop(self):
        p = DEFAULT_PARAMS
        fixed = Controls(eta=0.0, lam=1e6)
        fast = hysteresis_run(
            p, Schedule.ramp_cycle(ETA, 20.0, 120.0, 1500.0, 500.0, 2),
            fixed)
        slow = hysteresis_run(
            p, Schedule.ramp_cycle(ETA, 20.0, 120.0, 6000.0, 2000.0, 2),
            fixed)
        assert slow.loop_areas[1] < fast.loop_areas[1]

    def test_bistable_crossing_yields_positive_loop(self):
        p = DEFAULT_PARAMS
        ramp = Schedule.ramp_cycle(ETA, 250.0, 480.0, 4000.0, 1500.0, 2)
        rec = hysteresis_run(p, ramp, Controls(eta=0.0, lam=1e6))
        assert all(a > 1e-3 for a in rec.loop_areas)


class TestLambdaEstimator:
    def _decay_traj(self, lam, n0=1000.0, t_end=10.0, n=400):
        t = np.linspace(0.0, t_end, n)
        states = np.zeros((n, 7))
        states[:, 6] = n0 * np.exp(-lam * t)
        return Trajectory(times=t, states=states,
                          controls_trace=np.zeros((n, 2)),
                          transmittance_trace=np.zeros(n),
                          params=DEFAULT_PARAMS,
                          meta={"n_total0": n0})

    def test_pure_exponential(self):
        traj = self._decay_traj(lam=0.01, t_end=1.0)
        lam_hat = estimate_lambda(traj, (0.0, 1.0), DEFAULT_PARAMS)
        assert lam_hat == pytest.approx(0.01, abs=1e-4)

    def test_full_model_pulse_self_consistency(self):
        p = DEFAULT_PARAMS
        lam_hi = lambda_of_big_g(0.44, p.Gamma)
        period = 60000.0
        traj = integrate(
            ground_state(p, seed_alpha=1e-8), p, const(ETA, 236.0),
            Schedule.square_wave(LAM, 0.0, lam_hi, period, 0.5),
            t_end=1.3 * period, opts=IntegratorOptions(n_samples=6000))
        # the repumper switches back on at t = period; N_f is near N there
        t0 = period
        window = (t0, t0 + 0.05 / lam_hi)
        lam_hat = estimate_lambda(traj, window, p)
        assert lam_hat == pytest.approx(lam_hi, rel=0.05)

    def test_empty_shelved_population_rejected(self):
        traj = self._decay_traj(lam=0.01)
        traj.states[:, 6] = 1e-9
        with pytest.raises(InsufficientPopulationError):
            estimate_lambda(traj, (0.0, 1.0), DEFAULT_PARAMS)
