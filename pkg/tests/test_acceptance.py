"""End-to-end acceptance battery: one test per shipping criterion.

Each test pins the documented tolerance and asserts its own runtime budget,
so a verbose run prints one pass/fail line per criterion.
"""

import json
import time

import numpy as np
import pytest

from stereoacuity import gamma_cal, observer as obs, psi, rds, sessions
from stereoacuity.agreement import bland_altman, icc_2k, spearman
from stereoacuity.geometry import (
    DEFAULT_PROFILE,
    extent_to_visual_angle,
    pixels_to_arcsec,
)

from . import oracles


def _under(t0: float, budget_s: float) -> None:
    elapsed = time.perf_counter() - t0
    assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds the {budget_s:.0f}s budget"


# 1. The 17-entry gray table under gamma 2.2 reproduces the documented levels.
def test_gray_lookup_table_golden_values():
    t0 = time.perf_counter()
    golden = (0.0, 0.283, 0.388, 0.467, 0.532, 0.589, 0.640, 0.686, 0.729,
              0.769, 0.807, 0.843, 0.877, 0.909, 0.941, 0.971, 1.0)
    lut = gamma_cal.build_luminance_lut(17, 2.2)
    np.testing.assert_allclose(lut.gray, golden, atol=1e-3)
    _under(t0, 1.0)


# 2. Pixel-offset -> arc-second conversions on the default display profile.
def test_geometry_conversion_golden_values():
    t0 = time.perf_counter()
    assert pixels_to_arcsec(0.1, DEFAULT_PROFILE) == pytest.approx(16.63, abs=0.05)
    assert pixels_to_arcsec(10.0, DEFAULT_PROFILE) == pytest.approx(1663.0, abs=1.0)
    assert pixels_to_arcsec(4.59, DEFAULT_PROFILE) == pytest.approx(763.3, abs=0.5)
    assert extent_to_visual_angle(86.0, DEFAULT_PROFILE) == pytest.approx(12.27, abs=0.01)
    _under(t0, 1.0)


# 3. The piecewise whole-pixel correction offset is exact at its breakpoints.
def test_correction_offset_exact_values():
    t0 = time.perf_counter()
    expected = {0.1: 3, 4.99: 3, 5.0: -3, 5.99: -3, 6.0: -4, 6.99: -4, 7.0: -5, 10.0: -5}
    for o1, o2 in expected.items():
        assert rds.compute_correction_offset(o1) == o2, o1
    _under(t0, 1.0)


# 4. Calibration recovers the true gamma: +/-0.02 noiseless through the full
#    keypress pipeline, +/-0.1 with +/-1/255 uniform match noise over 100 seeds.
def test_gamma_recovery_tolerances():
    t0 = time.perf_counter()
    for gamma_true in (1.8, 2.2, 2.6):
        observer = obs.Observer(obs.ObserverModel(seed=0, agc_gamma_true=gamma_true))
        session, _ = obs.run_agc_session(observer)
        assert gamma_cal.fit_gamma(session) == pytest.approx(gamma_true, abs=0.02)

    pairs = [
        gamma_cal.trial_intensities(gamma_cal.new_gamma_session(), i)[:2]
        for i in range(1, 16)
    ]
    i_high = [h for h, _ in pairs]
    i_low = [l for _, l in pairs]
    for gamma_true in (1.8, 2.2, 2.6):
        for seed in range(100):
            observer = obs.Observer(
                obs.ObserverModel(
                    seed=seed, agc_gamma_true=gamma_true, agc_noise_amplitude=1.0 / 255.0
                )
            )
            i_new = [observer.respond_agc(h, l) for h, l in pairs]
            fitted = gamma_cal.fit_gamma_from_matches(i_new, i_high, i_low)
            assert fitted == pytest.approx(gamma_true, abs=0.1), (gamma_true, seed)
    _under(t0, 10.0)


def _random_small_config(rng) -> psi.PsiConfig:
    def draw(lo, hi, n):
        while True:
            vals = np.unique(rng.uniform(lo, hi, size=n))
            if len(vals) == n:
                return vals

    while True:
        na, nb, nl = rng.integers(1, 6), rng.integers(1, 4), rng.integers(1, 3)
        if na * nb * nl <= 30:
            break
    return psi.PsiConfig(
        alpha_grid=draw(0.1, 10.0, na),
        beta_grid=draw(2.0, 14.0, nb),
        lambda_grid=draw(0.0, 0.04, nl),
        candidate_x=draw(0.1, 10.0, int(rng.integers(2, 9))),
        n_trials=8,
    )


# 5. Posterior update, expected entropy, and argmin selection agree with direct
#    enumeration on small grids across 1000 randomized cases.
def test_engine_matches_enumeration_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240406)
    for _ in range(1000):
        cfg = _random_small_config(rng)
        state = psi.new_state(cfg)
        ref = oracles.uniform_posterior(cfg.alpha_grid, cfg.beta_grid, cfg.lambda_grid)
        for _ in range(int(rng.integers(0, 5))):
            x = float(rng.choice(cfg.candidate_x))
            r = int(rng.integers(0, 2))
            state = psi.posterior_update(state, x, r)
            ref = oracles.posterior_update(ref, x, r)
            np.testing.assert_allclose(
                state.posterior, [m for _, _, _, m in ref], rtol=0.0, atol=1e-12
            )
        for x in cfg.candidate_x:
            assert psi.expected_entropy(state, float(x)) == pytest.approx(
                oracles.expected_entropy(ref, float(x)), abs=1e-12
            )
        impl_x = psi.select_next_intensity(state)
        ref_x = oracles.select_next(ref, cfg.candidate_x)
        if impl_x != ref_x:
            # exact ties (e.g. a point-mass posterior) may break either way;
            # both picks must still attain the minimum to within tolerance
            assert oracles.expected_entropy(ref, impl_x) == pytest.approx(
                oracles.expected_entropy(ref, ref_x), abs=1e-12
            )
    _under(t0, 30.0)


# 6. Engine invariants over 100 simulated staircases: the posterior stays
#    normalized, replaying responses in any order gives the same posterior, and
#    the chosen stimulus never has higher expected entropy than the current one.
def test_engine_invariants_hold_across_simulated_sessions():
    t0 = time.perf_counter()
    cfg = obs.reduced_psi_config()
    for i in range(100):
        draw = np.random.default_rng(9000 + i)
        model = obs.ObserverModel(
            true_alpha_px=float(draw.uniform(0.3, 9.0)),
            true_beta=float(draw.uniform(2.2, 8.0)),
            true_lambda=float(draw.uniform(0.0, 0.04)),
            seed=i,
        )
        observer = obs.Observer(model)
        state = psi.new_state(cfg)
        while not state.finished:
            h_now = psi.posterior_entropy(state)
            x = psi.select_next_intensity(state)
            assert psi.expected_entropy(state, x) <= h_now + 1e-12
            state = psi.posterior_update(state, x, observer.respond_st(x))
            assert abs(state.posterior.sum() - 1.0) <= 1e-9
        shuffled = psi.new_state(cfg)
        for x, r in draw.permutation(state.history):
            shuffled = psi.posterior_update(shuffled, float(x), int(r))
        assert np.max(np.abs(shuffled.posterior - state.posterior)) <= 1e-9
    _under(t0, 60.0)


# 7. Convergence battery: 500 staircases per true threshold. The posterior-mean
#    estimate lands within 25% median relative error, and the last-correct rule
#    lands within a factor of two of truth in at least 80% of mid-range runs.
def test_threshold_convergence_battery():
    t0 = time.perf_counter()
    cfg = obs.reduced_psi_config()
    factor_two_rates = {}
    for idx, alpha_true in enumerate((0.5, 1.0, 2.0, 4.0, 8.0)):
        rel_errors = []
        within_factor_two = 0
        for i in range(500):
            model = obs.ObserverModel(
                true_alpha_px=alpha_true, true_beta=3.5, true_lambda=0.02,
                seed=idx * 10_000 + i,
            )
            state = obs.run_st_session(obs.Observer(model), cfg)
            result = psi.finalize_threshold(state, DEFAULT_PROFILE)
            rel_errors.append(abs(result.posterior_mean_alpha_px - alpha_true) / alpha_true)
            if alpha_true / 2.0 <= result.last_correct_o1_px <= 2.0 * alpha_true:
                within_factor_two += 1
        assert np.median(rel_errors) < 0.25, alpha_true
        factor_two_rates[alpha_true] = within_factor_two / 500.0
    for alpha_true in (1.0, 2.0, 4.0):
        assert factor_two_rates[alpha_true] >= 0.80, factor_two_rates
    _under(t0, 600.0)


# 8. Stimulus audits: the binocular offset is recoverable to 0.01 px, the
#    background carries none, dot densities stay uniform, and a deliberately
#    injected monocular cue is caught.
def test_stimulus_audit_battery():
    t0 = time.perf_counter()
    cfg = rds.RdsConfig()
    for k, o1 in enumerate((0.1, 0.5, 1.0, 2.0, 4.59, 7.0, 10.0)):
        stim = rds.generate_rds(cfg, o1, rds.SHAPES[k % 4], seed=1000 + k)
        assert rds.audit_disparity(stim) == pytest.approx(o1, abs=0.01)
    stim = rds.generate_rds(cfg, 4.59, "open_up", seed=1000)
    assert rds.audit_background_disparity(stim) == pytest.approx(0.0, abs=0.01)

    uniform = 0
    for seed in range(1000, 1100):
        stim = rds.generate_rds(cfg, 4.59, rds.SHAPES[seed % 4], seed=seed)
        if rds.monocular_cue_audit(stim).density_chi2_p > 0.01:
            uniform += 1
    assert uniform >= 95, f"only {uniform}/100 seeds pass the uniformity check"

    stim = rds.generate_rds(cfg, 2.0, "open_up", seed=1005)
    tampered = rds.RdsStimulus(
        config=stim.config, o1_px=stim.o1_px, o2_px=stim.o2_px, shape=stim.shape,
        seed=stim.seed, left_dots=stim.left_dots,
        right_dots=np.vstack([stim.right_dots, stim.left_dots[stim.left_hidden_idx]]),
        left_hidden_idx=stim.left_hidden_idx, right_hidden_idx=stim.right_hidden_idx,
    )
    assert rds.monocular_cue_audit(tampered).flagged
    _under(t0, 60.0)


# 9. Agreement statistics match naive transcriptions on 100 random instances
#    and reproduce the worked examples.
def test_agreement_stats_match_reference():
    t0 = time.perf_counter()
    assert spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) == pytest.approx(0.8, abs=1e-12)
    ba = bland_altman([10.0, 12.0, 14.0], [9.0, 13.0, 11.0])
    assert ba.bias == pytest.approx(1.0, abs=1e-12)
    assert ba.loa_low == pytest.approx(-2.92, abs=0.01)
    assert ba.loa_high == pytest.approx(4.92, abs=0.01)
    assert icc_2k(np.array([[3.0, 3.0], [5.0, 5.0], [7.0, 7.0]])) == pytest.approx(1.0, abs=1e-12)

    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(3, 40))
        a = rng.normal(size=n)
        b = 0.8 * a + rng.normal(scale=0.5, size=n)
        assert spearman(a, b) == pytest.approx(oracles.spearman(list(a), list(b)), abs=1e-9)
        bias, lo, hi = oracles.bland_altman(list(a), list(b))
        got = bland_altman(a, b)
        assert (got.bias, got.loa_low, got.loa_high) == pytest.approx((bias, lo, hi), abs=1e-9)
        ratings = rng.normal(size=(int(rng.integers(3, 15)), int(rng.integers(2, 5))))
        ratings += rng.normal(size=(len(ratings), 1))  # row effects keep variance non-degenerate
        assert icc_2k(ratings) == pytest.approx(oracles.icc_2k(ratings.tolist()), abs=1e-9)
    _under(t0, 5.0)


# 10. A persisted two-step session replays from its log to a bit-identical
#     result, and every per-trial engine call stays under 200 ms at the
#     production grid sizes.
def test_session_replay_bit_identical_and_trial_latency(tmp_path):
    t0 = time.perf_counter()
    manager = sessions.SessionManager(tmp_path)  # default full-resolution grids
    session = manager.create("two_step", seed=424242)
    observer = obs.Observer(obs.ObserverModel(seed=424242))
    durations = []

    for _ in range(15):
        view = session.agc_view()
        for key in observer.plan_agc_keys(view["i_high"], view["i_low"]):
            t = time.perf_counter()
            session.agc_key(key)
            durations.append(time.perf_counter() - t)
        t = time.perf_counter()
        session.agc_commit()
        durations.append(time.perf_counter() - t)

    while session.phase == sessions.PHASE_ST:
        t = time.perf_counter()
        payload = session.st_current()
        durations.append(time.perf_counter() - t)
        choice = observer.choose_shape(session.pending.shape_true, rds.SHAPES, session.pending.o1_px)
        t = time.perf_counter()
        session.st_respond(payload["trial_no"], choice)
        durations.append(time.perf_counter() - t)

    assert len(session.st_trials) == 30
    assert max(durations) < 0.200, f"slowest engine call took {max(durations)*1000:.0f} ms"

    replayed = sessions.replay_session_log(tmp_path / f"{session.session_id}.jsonl")
    assert replayed.result.to_json() == session.result.to_json()
    assert json.dumps(replayed.result.to_json()) == json.dumps(session.result.to_json())
    np.testing.assert_array_equal(replayed.psi_state.posterior, session.psi_state.posterior)
    _under(t0, 60.0)
