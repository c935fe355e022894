import numpy as np
import pytest

from phc_noma import bayes
from phc_noma.framing import (
    FrameLayout,
    assemble_frame,
    build_interleaver,
    gen_sp,
    gen_vp,
    spread,
)
from phc_noma.model import PhysicalParams, photons_from_energy_dbj
from phc_noma.rngutil import stream
from phc_noma.simulate import TrialConfig, build_scenario, run_synchronization
from phc_noma.sync import (
    SyncParams,
    SyncResult,
    SyncUser,
    candidate_delays,
    denoise,
    extract_window,
    pick_delay,
    sp_correlate,
    synchronize,
    verify_vp,
)


class TestDenoise:
    def test_exact_background(self):
        assert np.all(denoise(np.full(10, 2.0), 2.0) == 0.0)

    def test_subtraction_may_go_negative(self):
        assert np.array_equal(denoise(np.array([5.0, 0.0, 2.0]), 1.0), [4.0, -1.0, 1.0])

    def test_unbiased_at_rate(self):
        rng = stream(0, "photons")
        counts = rng.poisson(2.0 + 3.0, size=10**6)
        assert np.mean(denoise(counts, 2.0)) == pytest.approx(3.0, abs=0.02)


class TestSpCorrelate:
    L_p = 511

    def test_noise_free_fixed_point(self):
        sp = gen_sp(0, self.L_p)
        amp = 7.3
        r_tilde = np.concatenate([np.zeros(100), amp * sp, np.zeros(400)])
        R = sp_correlate(r_tilde, sp, amplitude=amp)
        assert R[100] == pytest.approx(1.0, abs=1e-9)

    def test_zero_input(self):
        sp = gen_sp(0, self.L_p)
        assert np.all(sp_correlate(np.zeros(1000), sp, 1.0) == 0.0)

    def test_offpeak_bound(self):
        # brute force across all lags of the periodic extension
        sp = gen_sp(0, self.L_p)
        r_tilde = 5.0 * np.concatenate([sp, sp])
        R = sp_correlate(r_tilde, sp, amplitude=5.0)
        offpeak = np.delete(R, [0, self.L_p])
        assert np.abs(offpeak).max() <= 2.0 / 511 + 1e-6


class TestCandidates:
    def test_threshold_and_dedup(self):
        R = np.zeros(100)
        R[[10, 12, 50]] = [0.9, 0.8, 0.95]
        c = candidate_delays(R, 0.75, K_m=5, dedup_halfwidth=5)
        assert c.offsets == [10, 50]

    def test_cap(self):
        R = np.zeros(100)
        R[[10, 30, 50, 70]] = [0.9, 0.92, 0.94, 0.96]
        c = candidate_delays(R, 0.75, K_m=2, dedup_halfwidth=5)
        assert c.offsets == [50, 70]

    def test_empty_allowed(self):
        assert candidate_delays(np.zeros(50), 0.75, 3, 5).offsets == []

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(1)
        R = rng.random(500)
        lo = set(candidate_delays(R, 0.6, 50, 3).offsets)
        hi = set(candidate_delays(R, 0.8, 50, 3).offsets)
        assert hi <= lo

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            candidate_delays(np.zeros(5), 1.5, 1, 1)


class TestPickDelay:
    def test_single_candidate(self):
        assert pick_delay([42], (0.0, 1.0)) == 42

    def test_map_choice(self):
        # density(10) = exp(-(10-12)^2/2) > density(20) = exp(-(20-12)^2/2)
        assert pick_delay([10, 20], (12.0, 1.0)) == 10

    def test_tie_breaks_small(self):
        assert pick_delay([10, 14], (12.0, 1.0)) == 10

    def test_excluded_and_empty(self):
        assert pick_delay([10, 20], (12.0, 1.0), excluded={10}) == 20
        assert pick_delay([10], (12.0, 1.0), excluded={10}) is None

    def test_scale_invariance(self):
        # argmax of the density is invariant to the (positive) normalization
        cands = [3, 9, 17, 40]
        for d2 in (0.5, 1.0, 7.0):
            assert pick_delay(cands, (11.0, d2)) == pick_delay(cands, (11.0, 1.0))


class TestExtractWindow:
    def _oracle(self, buffer, base, xi, L_s):
        # literal index enumeration of the two delay cases: the window covers
        # slots base+xi .. base+xi+L_s-1, reaching into the previous frame
        # span when xi < 0 and into the next when xi >= 0
        idx = [base + xi + l for l in range(L_s)]
        return buffer[idx]

    def test_aligned(self):
        buf = np.arange(100.0)
        assert np.array_equal(extract_window(buf, 40, 0, 20), buf[40:60])

    def test_positive_offset(self):
        buf = np.arange(100.0)
        got = extract_window(buf, 20, 7, 20)
        assert np.array_equal(got, self._oracle(buf, 20, 7, 20))
        assert got[0] == 27

    def test_negative_offset(self):
        buf = np.arange(100.0)
        got = extract_window(buf, 20, -7, 20)
        assert np.array_equal(got, self._oracle(buf, 20, -7, 20))
        assert got[0] == 13

    def test_out_of_buffer(self):
        with pytest.raises(IndexError):
            extract_window(np.arange(30.0), 20, 5, 20)


def small_layout():
    return FrameLayout(L_b=64, N_c=10, L_q=320, L_p=511, L_g=10)


def build_single_user_window(layout, n_s, n_b, gain=1.0, noiseless=True, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 2, layout.L_b, dtype=np.int8)
    vp = gen_vp(1, layout.n_vp_bits)
    il = build_interleaver(3, layout.L_c)
    frame = assemble_frame(data, layout, vp, gen_sp(0, layout.L_p), il)
    rates = n_b + n_s * gain * frame.symbols.astype(float)
    window = rates if noiseless else np.random.default_rng(seed + 1).poisson(rates).astype(float)
    return window, il, vp


class TestVerifyVp:
    lay = small_layout()

    def test_noise_free_fixed_point(self):
        window, il, vp = build_single_user_window(self.lay, 20.0, 2.0)
        R, rho = verify_vp(window, il, self.lay, spread(vp, self.lay.N_c), 20.0, 0.3, 2.0)
        assert R == pytest.approx(1.0, abs=1e-9)
        assert rho == 1

    def test_offset_by_one_decorrelates(self):
        # shifting the window by one slot scrambles the deinterleaved VP
        hits = 0
        trials = 100
        for t in range(trials):
            rng = np.random.default_rng(1000 + t)
            data = rng.integers(0, 2, self.lay.L_b, dtype=np.int8)
            vp = gen_vp(1, self.lay.n_vp_bits)
            il = build_interleaver(t, self.lay.L_c)
            frame = assemble_frame(data, self.lay, vp, gen_sp(0, self.lay.L_p), il)
            rates = 2.0 + 20.0 * frame.symbols.astype(float)
            counts = rng.poisson(rates).astype(float)
            shifted = np.concatenate([counts[1:], [2.0]])
            R, rho = verify_vp(shifted, il, self.lay, spread(vp, self.lay.N_c), 20.0, 0.3, 2.0)
            hits += (R >= 0.3)
        assert hits <= 1  # < 0.3 with probability > 0.99

    def test_wrong_interleaver_decorrelates(self):
        lay = FrameLayout()  # full-size VP: L_q = 320
        window, il, vp = build_single_user_window(lay, 20.0, 2.0)
        other = build_interleaver(999, lay.L_c)
        R, rho = verify_vp(window, other, lay, spread(vp, lay.N_c), 20.0, 0.3, 2.0)
        assert abs(R) < 0.1
        assert rho == 0


def two_user_trial_config(seed=1, trial=0, eb=-166.0, alpha=1.0):
    return TrialConfig(
        seed=seed,
        trial=trial,
        K=2,
        M=2,
        frames=1,
        eb_dbj=eb,
        alpha=alpha,
        layout=FrameLayout(),
        params=PhysicalParams(),
    )


class TestSynchronize:
    def test_two_users_two_groups_delays_recovered(self):
        # end-to-end Monte Carlo with known ground truth
        good = 0
        trials = 100
        for t in range(trials):
            cfg = two_user_trial_config(trial=t)
            sc = build_scenario(cfg)
            trace = run_synchronization(sc)
            ok = all(
                trace.alpha_hat[k, 0] == 1 and trace.xi_hat[k, 0] == sc.delays[k]
                for k in range(2)
            )
            good += ok
        assert good >= 95

    def test_inactive_user_rarely_false_alarms(self):
        false_alarm_trials = 0
        trials = 100
        for t in range(trials):
            cfg = two_user_trial_config(trial=t, alpha=0.5)
            sc = build_scenario(cfg)
            trace = run_synchronization(sc)
            if np.any((trace.alpha_hat[:, 0] == 1) & ~sc.active[:, 0]):
                false_alarm_trials += 1
        assert false_alarm_trials <= 1  # alpha_hat = 0 in >= 99/100 trials

    def test_never_reports_delay_without_verification(self):
        cfg = two_user_trial_config()
        sc = build_scenario(cfg)
        trace = run_synchronization(sc)
        assert np.all((trace.xi_hat >= 0) == (trace.alpha_hat == 1))

    def test_deterministic_replay(self):
        cfg = two_user_trial_config(trial=7)
        a = run_synchronization(build_scenario(cfg))
        b = run_synchronization(build_scenario(cfg))
        assert np.array_equal(a.alpha_hat, b.alpha_hat)
        assert np.array_equal(a.xi_hat, b.xi_hat)

    def test_sync_result_invariant_enforced(self):
        with pytest.raises(ValueError):
            SyncResult(
                alpha_hat=np.array([1]),
                xi_hat=np.array([-1]),
                xi_fine=np.array([np.nan]),
                rho_hat=np.array([1]),
                rounds_used=np.array([1]),
            )

    def test_table3_rounds_bound(self):
        cfg = two_user_trial_config()
        sc = build_scenario(cfg)
        trace = run_synchronization(sc)
        assert np.all(trace.rounds <= cfg.T_in) and cfg.T_in == 4
