import numpy as np
import pytest
from scipy import stats

import oracles
from depulse.block import BlockModel
from depulse.errors import ConfigError, SamplerError
from depulse.pulses import TABLE_I_INITIAL, GpTail, ShapeTailParams
from depulse.sampler import (
    ChainState, Models, SamplerConfig, chain_estimate, initial_state, mh_location_step,
    read_chain_csv, regrid_tail, retained_indices, rng_for, run_gibbs, scalar_traces,
    sigma_d2_step, summarize, write_chain_csv,
)


def _models(N=300, kind="shape", log_target=None, **cfg):
    rng = np.random.default_rng(0)
    ar = oracles.random_ar(rng, 3)
    y = 0.1 * rng.standard_normal(N)
    y[100:110] += rng.standard_normal(10)
    config = SamplerConfig(ar_fit_len=50, **cfg)
    return Models(BlockModel(y, ar), kind, 44100.0, config, log_target=log_target)


def test_location_step_stationary_distribution():
    # the target is cut by the bounds n0 >= 50 and M >= 1, which the chain must respect
    def log_target(n0, M):
        return -0.5 * ((n0 - 54) ** 2 / 16.0 + (M - 5) ** 2 / 9.0)

    models = _models(log_target=log_target)
    rng = np.random.default_rng(1)
    state = ChainState(54, 5, 1.0, TABLE_I_INITIAL, np.zeros(5))
    counts = {}
    T = 200_000
    for _ in range(T):
        n0, M, _, _ = mh_location_step(state, models, rng)
        state = ChainState(n0, M, 1.0, TABLE_I_INITIAL, np.zeros(M))
        counts[(n0, M)] = counts.get((n0, M), 0) + 1
    support = [(a, b) for a in range(50, 90) for b in range(1, 30)]
    w = np.array([np.exp(log_target(a, b)) for a, b in support])
    w /= w.sum()
    emp = np.array([counts.get(k, 0) / T for k in support])
    # Monte Carlo error over ~1000 cells: the joint distance is looser than the marginals
    assert 0.5 * np.abs(emp - w).sum() < 0.04
    grid_emp, grid_w = emp.reshape(40, 29), w.reshape(40, 29)
    for axis in (0, 1):
        assert 0.5 * np.abs(grid_emp.sum(axis) - grid_w.sum(axis)).sum() < 0.02
    assert sum(counts.values()) == T


def test_location_step_rejects_out_of_bounds():
    models = _models(log_target=lambda a, b: 0.0)
    rng = np.random.default_rng(2)
    state = ChainState(50, 1, 1.0, TABLE_I_INITIAL, np.zeros(1))
    seen_out = False
    for _ in range(200):
        n0, M, acc, inb = mh_location_step(state, models, rng)
        assert models.in_bounds(n0, M)
        if not inb:
            seen_out = True
            assert not acc and (n0, M) == (50, 1)
    assert seen_out


def test_sigma_d2_draws_are_inverse_gamma():
    rng = np.random.default_rng(3)
    y1, x1 = np.array([1.0, -0.5, 2.0, 0.3]), np.array([0.1, 0.0, -0.2, 0.3])
    draws = np.array([sigma_d2_step(y1, x1, rng) for _ in range(20000)])
    a = 1e-4 + 2.0
    b = 1e-4 + 0.5 * np.sum((y1 - x1) ** 2)
    assert stats.kstest(draws, stats.invgamma(a, scale=b).cdf).statistic < 0.02


def test_regrid_tail_keeps_positions():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    assert regrid_tail(v, 10, 2).tolist() == [3.0, 4.0]
    assert regrid_tail(v, 10, 6).tolist() == [1.0, 1.0, 1.0, 2.0, 3.0, 4.0]
    assert regrid_tail(v, 10, 4).tolist() == v.tolist()


def test_rng_streams_independent_and_reproducible():
    a = rng_for(7, 0).standard_normal(5)
    assert np.array_equal(a, rng_for(7, 0).standard_normal(5))
    assert not np.array_equal(a, rng_for(7, 1).standard_normal(5))


def test_summarize_matches_sort_oracle():
    x = np.random.default_rng(4).standard_normal(401)
    s = np.sort(x)
    iv = summarize(x)
    # linear interpolation at rank q (n - 1)
    for q, got in ((0.025, iv.lo), (0.975, iv.hi)):
        r = q * (x.size - 1)
        k = int(np.floor(r))
        assert got == pytest.approx(s[k] + (r - k) * (s[k + 1] - s[k]))
    assert str(summarize([2.0])) == "2 [2; 2]"


def test_retained_indices():
    assert retained_indices(10, 4, 2).tolist() == [4, 6, 8]
    with pytest.raises(ConfigError):
        retained_indices(5, 5, 1)


def test_config_validation():
    for bad in (dict(iterations=0), dict(burn_in=10, iterations=10), dict(thin=0),
                dict(shape_proposal_vars=(1.0,)), dict(loc_proposal_width=0)):
        with pytest.raises(ConfigError):
            SamplerConfig(**bad).validate()
    assert SamplerConfig.gp_protocol().iterations == 200
    assert SamplerConfig.gp_protocol().burn_in == 150
    assert SamplerConfig.shape_protocol().iterations == 1000
    assert SamplerConfig.shape_protocol().burn_in == 500


def test_shape_chain_runs_and_is_deterministic(tmp_path):
    models = _models(iterations=30, burn_in=10)
    init = initial_state(models, 100, 10)
    a = run_gibbs(models, init, rng_for(0))
    b = run_gibbs(models, init, rng_for(0))
    assert [s.n0 for s in a.states] == [s.n0 for s in b.states]
    assert [s.tail for s in a.states] == [s.tail for s in b.states]
    assert set(a.acceptance()) == {"location", "shape"}
    est = chain_estimate(a, models.y, 44100.0)
    assert est.n_samples == 20 and est.x1.size == est.M
    assert set(est.params) >= {"n0", "M", "sigma_d2", "V_t", "tau_m"}
    write_chain_csv(tmp_path / "c.csv", a, comment="depulse test seed=0")
    comments, cols = read_chain_csv(tmp_path / "c.csv")
    assert comments == ["depulse test seed=0"]
    np.testing.assert_array_equal(cols["n0"], scalar_traces(a)["n0"])
    np.testing.assert_array_equal(cols["tau_f"], scalar_traces(a)["tau_f"])


def test_constant_chain_intervals_collapse():
    models = _models(iterations=3, burn_in=0, loc_proposal_width=1, shape_proposal_vars=(0.0,) * 5)
    chain = run_gibbs(models, initial_state(models, 100, 10), rng_for(0))
    est = chain_estimate(chain, models.y, 44100.0)
    assert est.params["n0"].lo == est.params["n0"].hi == 100
    assert est.params["tau_f"].lo == est.params["tau_f"].hi == TABLE_I_INITIAL.tau_f


def test_numeric_failure_reports_iteration():
    calls = {"n": 0}

    def target(n0, M):
        calls["n"] += 1
        if calls["n"] > 6:
            raise np.linalg.LinAlgError("boom")
        return 0.0

    models = _models(iterations=50, burn_in=0, log_target=target)
    with pytest.raises(SamplerError) as info:
        run_gibbs(models, initial_state(models, 100, 10), np.random.default_rng(0))
    assert info.value.iteration > 0


def test_initial_state_checks():
    models = _models()
    with pytest.raises(ConfigError):
        initial_state(models, 10, 5)
    st = initial_state(models, 100, 10)
    assert st.sigma_d2 == pytest.approx(np.var(models.y[100:110]))
    gp = Models(models.block, "shape", 44100.0, models.config)
    with pytest.raises(ConfigError):
        Models(models.block, "gp", 44100.0, models.config)
    assert isinstance(gp, Models)
