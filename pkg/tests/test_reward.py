import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskshape.reward import (
    CONFIG_KEYS,
    PRESETS,
    EpisodeAccumulator,
    RewardConfig,
    StepEvents,
    TerminationCause,
    check_termination,
    compute_reward,
    preset,
)

DEFAULT, RESHAPED = preset("default"), preset("reshaped")


def test_default_preset_values():
    c = DEFAULT
    assert (c.r_exp, c.r_obs, c.r_out, c.r_alive, c.n_eps) == (1.0, -600.0, -1.0, -1.0, 700)


def test_reshaped_preset_values():
    c = RESHAPED
    assert (c.r_exp, c.r_obs, c.r_out, c.r_alive, c.n_eps) == (1.4, -600.0, -200.0, -1.0, 1200)


@pytest.mark.parametrize("name", ["default", "reshaped"])
def test_shared_limits(name):
    c = preset(name)
    assert (c.t_out, c.r_up, c.r_down) == (5.0, 3000.0, -400.0)
    assert c.risk_steps(0.02) == 250


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown reward preset"):
        preset("aggressive")


@pytest.mark.parametrize("field,value", [
    ("r_exp", 0.0), ("r_obs", 1.0), ("r_out", 0.0), ("r_alive", 0.5), ("n_eps", 0),
    ("t_out", -1.0), ("r_up", -5.0), ("r_down", 10.0),
])
def test_sign_constraints(field, value):
    kw = dict(r_exp=1.0, r_obs=-600.0, r_out=-1.0, r_alive=-1.0, n_eps=700)
    kw[field] = value
    with pytest.raises(ValueError):
        RewardConfig(**kw)


def test_config_round_trip():
    for c in PRESETS.values():
        d = c.to_config()
        assert tuple(d) == CONFIG_KEYS
        assert RewardConfig.from_config(d) == c


def test_config_rejects_unknown_and_missing_keys():
    d = DEFAULT.to_config()
    with pytest.raises(ValueError):
        RewardConfig.from_config({**d, "r_bonus": 1.0})
    d.pop("r_up")
    with pytest.raises(ValueError):
        RewardConfig.from_config(d)


# ---------------------------------------------------------------- compute_reward


def test_alive_only():
    assert compute_reward(StepEvents(), DEFAULT) == -1.0


def test_new_tile_reshaped():
    assert compute_reward(StepEvents(new_tile=True), RESHAPED) == pytest.approx(0.4, abs=1e-12)


def test_off_track_default():
    assert compute_reward(StepEvents(off_track=True), DEFAULT) == -2.0


@pytest.mark.parametrize("cfg", list(PRESETS.values()), ids=list(PRESETS))
def test_additivity_all_event_combinations(cfg):
    for new, hit, out in itertools.product([False, True], repeat=3):
        want = math.fsum([cfg.r_exp * new, cfg.r_obs * hit, cfg.r_out * out, cfg.r_alive])
        got = compute_reward(StepEvents(new_tile=new, collided=hit, off_track=out), cfg)
        assert got == pytest.approx(want, abs=1e-12)


_events = st.builds(StepEvents, st.booleans(), st.booleans(), st.booleans(), st.integers(0, 10**6), st.integers(0, 1000))


@given(_events, st.sampled_from(sorted(PRESETS)))
def test_off_track_never_pays_more(ev, name):
    cfg = preset(name)
    on = StepEvents(ev.new_tile, ev.collided, False)
    off = StepEvents(ev.new_tile, ev.collided, True)
    assert compute_reward(off, cfg) < compute_reward(on, cfg)


# ---------------------------------------------------------------- check_termination


def _acc(cum=0.0, steps=1, off=0):
    return EpisodeAccumulator(cum, steps, off)


def test_reward_upper():
    assert check_termination(_acc(3000.0), StepEvents(), DEFAULT) is TerminationCause.REWARD_UPPER
    assert check_termination(_acc(2999.9), StepEvents(), DEFAULT) is None


def test_reward_lower_inclusive():
    assert check_termination(_acc(-400.0), StepEvents(), DEFAULT) is TerminationCause.REWARD_LOWER
    assert check_termination(_acc(-399.0), StepEvents(), DEFAULT) is None


def test_risk_timeout_is_strict():
    ev = StepEvents(off_track=True, consecutive_off_track_steps=251)
    assert check_termination(_acc(off=251), ev, DEFAULT, dt=0.02) is TerminationCause.RISK_TIMEOUT
    ev = StepEvents(off_track=True, consecutive_off_track_steps=250)
    assert check_termination(_acc(off=250), ev, DEFAULT, dt=0.02) is None


def test_step_limit_only_in_train_mode():
    acc = _acc(-100.0, steps=700)
    assert check_termination(acc, StepEvents(), DEFAULT, test_mode=False) is TerminationCause.STEP_LIMIT
    assert check_termination(acc, StepEvents(), DEFAULT, test_mode=True) is None
    assert check_termination(_acc(-100.0, steps=699), StepEvents(), DEFAULT) is None


def test_collision_active_in_test_mode():
    ev = StepEvents(collided=True)
    assert check_termination(_acc(-601.0), ev, DEFAULT, test_mode=True) is TerminationCause.COLLISION


def _oracle_cause(acc, ev, cfg, test_mode):
    causes = []
    if ev.collided:
        causes.append(TerminationCause.COLLISION)
    if acc.cum_reward <= cfg.r_down:
        causes.append(TerminationCause.REWARD_LOWER)
    if acc.cum_reward >= cfg.r_up:
        causes.append(TerminationCause.REWARD_UPPER)
    if acc.consecutive_off_track_steps > 250:
        causes.append(TerminationCause.RISK_TIMEOUT)
    if not test_mode and acc.step_count >= cfg.n_eps:
        causes.append(TerminationCause.STEP_LIMIT)
    return causes[0] if causes else None


@given(
    cum=st.sampled_from([-500.0, -400.0, 0.0, 3000.0, 3500.0]),
    steps=st.sampled_from([1, 699, 700, 1200, 5000]),
    off=st.sampled_from([0, 250, 251, 400]),
    hit=st.booleans(),
    test_mode=st.booleans(),
    name=st.sampled_from(sorted(PRESETS)),
)
def test_priority_order(cum, steps, off, hit, test_mode, name):
    cfg = preset(name)
    acc, ev = _acc(cum, steps, off), StepEvents(collided=hit, consecutive_off_track_steps=off)
    got = check_termination(acc, ev, cfg, 0.02, test_mode)
    assert got == _oracle_cause(acc, ev, cfg, test_mode)
    assert got == check_termination(acc, ev, cfg, 0.02, test_mode)


@given(
    st.lists(st.tuples(st.booleans(), st.integers(0, 200), st.booleans()), min_size=1, max_size=3000),
    st.sampled_from(sorted(PRESETS)),
    st.booleans(),
)
def test_episode_reward_bound(seq, name, test_mode):
    """Whenever an episode ends, R_cum overshoots a limit by at most one step's reward."""
    cfg = preset(name)
    acc = EpisodeAccumulator()
    off_run = 0
    for new, hit_roll, out in seq:
        hit = hit_roll == 0
        off_run = off_run + 1 if out else 0
        ev = StepEvents(new and not out, hit, out, acc.step_count, off_run)
        r = compute_reward(ev, cfg)
        before = acc.cum_reward
        acc.update(r, ev)
        assert acc.cum_reward == before + r
        if check_termination(acc, ev, cfg, 0.02, test_mode) is not None:
            lo = cfg.r_down + (cfg.r_obs + cfg.r_out + cfg.r_alive)
            hi = cfg.r_up + (cfg.r_exp + cfg.r_alive)
            assert lo <= acc.cum_reward <= hi
            break


def test_accumulator_reset():
    acc = EpisodeAccumulator()
    acc.update(-3.0, StepEvents(off_track=True, consecutive_off_track_steps=1))
    assert (acc.cum_reward, acc.step_count, acc.consecutive_off_track_steps) == (-3.0, 1, 1)
    acc.reset()
    assert (acc.cum_reward, acc.step_count, acc.consecutive_off_track_steps) == (0.0, 0, 0)
