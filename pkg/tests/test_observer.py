import numpy as np
import pytest

from stereoacuity import gamma_cal as gc
from stereoacuity import observer as obs
from stereoacuity import psi, rds
from stereoacuity.geometry import DEFAULT_PROFILE

from . import oracles


def test_model_validation():
    with pytest.raises(obs.ObserverConfigError):
        obs.ObserverModel(true_alpha_px=0.05)
    with pytest.raises(obs.ObserverConfigError):
        obs.ObserverModel(true_beta=1.0)
    with pytest.raises(obs.ObserverConfigError):
        obs.ObserverModel(true_lambda=0.1)
    with pytest.raises(obs.ObserverConfigError):
        obs.ObserverModel(agc_gamma_true=0.2)
    with pytest.raises(obs.ObserverConfigError):
        obs.ObserverModel(agc_noise_amplitude=-0.1)


def test_probability_correct_matches_model():
    o = obs.Observer(obs.ObserverModel(true_alpha_px=2.0, true_beta=3.0, true_lambda=0.02))
    for x in (0.1, 1.0, 2.0, 5.0, 10.0):
        assert o.probability_correct(x) == pytest.approx(
            oracles.psychometric(x, 2.0, 3.0, 0.02), abs=1e-12
        )


def test_responses_seeded():
    a = obs.Observer(obs.ObserverModel(seed=4))
    b = obs.Observer(obs.ObserverModel(seed=4))
    xs = np.linspace(0.2, 8.0, 40)
    assert [a.respond_st(x) for x in xs] == [b.respond_st(x) for x in xs]
    c = obs.Observer(obs.ObserverModel(seed=5))
    assert [a.respond_st(x) for x in xs] != [c.respond_st(x) for x in xs]


def test_response_rate_tracks_probability():
    o = obs.Observer(obs.ObserverModel(true_alpha_px=2.0, true_beta=3.5, true_lambda=0.02, seed=8))
    n = 4000
    rate = np.mean([o.respond_st(2.0) for _ in range(n)])
    p = o.probability_correct(2.0)
    assert rate == pytest.approx(p, abs=4 * np.sqrt(p * (1 - p) / n))


def test_choose_shape_identity():
    # x = 10 px with alpha = 0.1 px sits at the saturated top of the curve
    sharp = obs.Observer(obs.ObserverModel(true_alpha_px=0.1, true_beta=14.0, true_lambda=0.0, seed=1))
    picks = [sharp.choose_shape("open_left", rds.SHAPES, 10.0) for _ in range(300)]
    assert picks.count("open_left") == 300
    # far below threshold the choice degenerates to uniform guessing
    blunt = obs.Observer(obs.ObserverModel(true_alpha_px=9.9, true_beta=14.0, true_lambda=0.0, seed=1))
    lows = [blunt.choose_shape("open_left", rds.SHAPES, 0.1) for _ in range(2000)]
    assert set(lows) == set(rds.SHAPES)
    freq = lows.count("open_left") / len(lows)
    assert freq == pytest.approx(0.25, abs=0.05)


def test_ideal_agc_match():
    o = obs.Observer(obs.ObserverModel(agc_gamma_true=2.2))
    # the published trial-2 pair: match lands at 0.8774
    assert o.ideal_agc_match(1.0, 0.729) == pytest.approx(0.8774, abs=1e-3)
    assert o.ideal_agc_match(1.0, 0.0) == pytest.approx(0.5 ** (1 / 2.2), abs=1e-12)
    # symmetric in the pair
    assert o.ideal_agc_match(0.3, 0.9) == o.ideal_agc_match(0.9, 0.3)


def test_respond_agc_on_key_lattice():
    o = obs.Observer(obs.ObserverModel(agc_gamma_true=1.9, seed=2))
    i_high, i_low = 1.0, 0.729
    i_init = (i_high + i_low) / 2
    got = o.respond_agc(i_high, i_low)
    k = (got - i_init) / gc.FINE_STEP
    assert k == pytest.approx(round(k), abs=1e-9)
    # within half a fine step of the ideal match
    assert abs(got - o.ideal_agc_match(i_high, i_low)) <= gc.FINE_STEP / 2 + 1e-12


def test_plan_agc_keys_reproduce_match():
    o = obs.Observer(obs.ObserverModel(agc_gamma_true=2.6, seed=6))
    session = gc.new_gamma_session()
    for trial in range(1, 16):
        i_high, i_low, _ = gc.trial_intensities(session, trial)
        target = obs.Observer(obs.ObserverModel(agc_gamma_true=2.6, seed=6)).respond_agc(i_high, i_low)
        for key in o.plan_agc_keys(i_high, i_low):
            session = gc.apply_adjustment(session, key)
        assert session.i_current == pytest.approx(target, abs=1e-9)
        session = gc.commit_trial(session)


def test_run_agc_session_replayable():
    o = obs.Observer(obs.ObserverModel(agc_gamma_true=2.0, seed=10))
    session, events = obs.run_agc_session(o)
    assert session.fit_ready
    assert sum(1 for e in events if e["event"] == "commit") == 15
    replayed = gc.replay_agc_events(events)
    assert replayed.i_new == session.i_new
    assert gc.fit_gamma(replayed) == gc.fit_gamma(session)


@pytest.mark.parametrize("gamma_true", [1.8, 2.2, 2.6])
def test_agc_recovery_via_full_key_path(gamma_true):
    o = obs.Observer(obs.ObserverModel(agc_gamma_true=gamma_true, seed=0))
    session, _ = obs.run_agc_session(o)
    assert gc.fit_gamma(session) == pytest.approx(gamma_true, abs=0.02)


def test_run_st_session_completes():
    cfg = obs.reduced_psi_config(n_trials=12)
    state = obs.run_st_session(obs.Observer(obs.ObserverModel(seed=3)), cfg)
    assert state.finished and state.trial_count == 12
    assert abs(state.posterior.sum() - 1.0) < 1e-9


def test_simulate_session_two_step_fields():
    row = obs.simulate_session(
        obs.ObserverModel(true_alpha_px=2.0, seed=1, agc_gamma_true=2.2),
        DEFAULT_PROFILE,
        psi_config=obs.reduced_psi_config(n_trials=10),
    )
    assert row.seed == 1
    assert row.alpha_true == 2.0
    assert row.gamma_fitted == pytest.approx(2.2, abs=0.02)
    assert row.threshold_arcsec > 0


def test_simulate_session_one_step_skips_agc():
    row = obs.simulate_session(
        obs.ObserverModel(seed=2),
        DEFAULT_PROFILE,
        psi_config=obs.reduced_psi_config(n_trials=10),
        two_step=False,
    )
    assert np.isnan(row.gamma_fitted)


def test_reduced_config_spans_same_ranges():
    cfg = obs.reduced_psi_config()
    assert cfg.alpha_grid[0] == pytest.approx(0.1) and cfg.alpha_grid[-1] == pytest.approx(10.0)
    assert cfg.beta_grid[0] == 2.0 and cfg.beta_grid[-1] == 14.0
    assert cfg.lambda_grid[0] == 0.0 and cfg.lambda_grid[-1] == 0.04
    assert cfg.n_cells < psi.PsiConfig().n_cells / 25
