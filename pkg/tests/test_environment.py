"""Edge-rate environment tests: purity, laws, persistence, effective rates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cpsim.environment import (NO_EDGE, DistributionSpec, Environment,
                               ModelParams, load_env, load_rate_table_csv,
                               rates_table, save_env, save_rate_table_csv)
from cpsim.lattice import Box, Region, canonical_edge, edges_in, site_index

GOF_ALPHA = 1e-3


def line_edges(n):
    """n distinct horizontal edges along the wall of Z x Z+."""
    return [canonical_edge((i, 0), (i + 1, 0)) for i in range(n)]


# --- rate(e) ------------------------------------------------------------------

def test_point_mass_rate_everywhere():
    env = Environment(spec=DistributionSpec(kind="point-mass", c=1.0), env_seed=3)
    for e in line_edges(64):
        assert env.rate(e) == 1.0


def test_bernoulli_support():
    env = Environment(spec=DistributionSpec(kind="bernoulli", p=0.5, scale=1.0), env_seed=9)
    vals = {env.rate(e) for e in line_edges(256)}
    assert vals <= {0.0, 1.0}
    assert len(vals) == 2  # both atoms show up in 256 draws w.p. 1 - 2^-255


def test_uniform_mean_within_3se():
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=17)
    n = 10**5
    vals = np.array([env.rate(e) for e in line_edges(n)])
    se = math.sqrt((2.0 - 0.0) ** 2 / 12 / n)
    assert abs(vals.mean() - 1.0) <= 3 * se


def test_rate_orderless_in_endpoints():
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=1)
    assert env.rate(((3, 0), (3, 1))) == env.rate(((3, 1), (3, 0)))


def test_purity_repeated_queries():
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=23)
    rng = np.random.default_rng(0)
    pts = rng.integers(-500, 500, size=(10**4, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    first = {}
    for x, y in pts:
        e = canonical_edge((int(x), int(y)), (int(x) + 1, int(y)))
        first[e] = env.rate(e)
    for e, v in first.items():
        assert env.rate(e) == v


# --- distributional correctness -------------------------------------------------

def _draws(spec, n=10**4, env_seed=5):
    env = Environment(spec=spec, env_seed=env_seed)
    return np.array([env.rate(e) for e in line_edges(n)])


def test_gof_bernoulli_chisquare():
    p = 0.3
    vals = _draws(DistributionSpec(kind="bernoulli", p=p, scale=2.0))
    n = len(vals)
    obs = [np.sum(vals == 0.0), np.sum(vals == 2.0)]
    res = stats.chisquare(obs, [n * (1 - p), n * p])
    assert res.pvalue > GOF_ALPHA


def test_gof_discrete_table_chisquare():
    table = {0.5: 0.2, 1.0: 0.5, 3.0: 0.3}
    vals = _draws(DistributionSpec(kind="discrete-table", table=table))
    n = len(vals)
    obs = [np.sum(vals == v) for v in table]
    res = stats.chisquare(obs, [n * w for w in table.values()])
    assert res.pvalue > GOF_ALPHA


def test_gof_uniform_ks():
    vals = _draws(DistributionSpec(kind="uniform", a=0.5, b=1.5))
    res = stats.kstest(vals, stats.uniform(loc=0.5, scale=1.0).cdf)
    assert res.pvalue > GOF_ALPHA


def test_gof_exponential_ks():
    vals = _draws(DistributionSpec(kind="exponential", mean=2.0))
    res = stats.kstest(vals, stats.expon(scale=2.0).cdf)
    assert res.pvalue > GOF_ALPHA


def test_gof_point_mass_exact():
    vals = _draws(DistributionSpec(kind="point-mass", c=0.7), n=1000)
    assert np.all(vals == 0.7)


def test_annealed_redraws_follow_mu():
    # one fixed edge, fresh env_seed per draw: still KS-consistent with mu
    spec = DistributionSpec(kind="uniform", a=0.0, b=2.0)
    e = canonical_edge((0, 0), (1, 0))
    vals = np.array([Environment(spec=spec, env_seed=s).rate(e) for s in range(10**4)])
    res = stats.kstest(vals, stats.uniform(loc=0.0, scale=2.0).cdf)
    assert res.pvalue > GOF_ALPHA


def test_quenched_same_seed_same_rates():
    spec = DistributionSpec(kind="uniform", a=0.0, b=2.0)
    a = Environment(spec=spec, env_seed=42)
    b = Environment(spec=spec, env_seed=42)
    c = Environment(spec=spec, env_seed=43)
    es = line_edges(100)
    assert [a.rate(e) for e in es] == [b.rate(e) for e in es]
    assert any(a.rate(e) != c.rate(e) for e in es)


# --- effective rate --------------------------------------------------------------

def test_effective_rate_scales_table():
    e = canonical_edge((0, 0), (1, 0))
    env = Environment(spec=None, table={e: 0.5})
    assert env.effective_rate(ModelParams(lam=2.0, horizon=1.0), e) == 1.0


def test_effective_rate_lambda_one_identity():
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=7)
    params = ModelParams(lam=1.0, horizon=1.0)
    for e in line_edges(32):
        assert env.effective_rate(params, e) == env.rate(e)


def test_effective_rate_mean_bernoulli():
    env = Environment(spec=DistributionSpec(kind="bernoulli", p=0.5, scale=1.0), env_seed=29)
    params = ModelParams(lam=3.0, horizon=1.0)
    n = 10**5
    vals = np.array([env.effective_rate(params, e) for e in line_edges(n)])
    se = math.sqrt(9 * 0.25 / n)  # Var(3 Bern(1/2)) = 9/4
    assert abs(vals.mean() - 1.5) <= 3 * se


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(lam=-0.1, horizon=1.0)
    with pytest.raises(ValueError):
        ModelParams(lam=1.0, horizon=0.0)
    ModelParams(lam=0.0, horizon=1.0)  # pure-death calibration case


# --- persistence -----------------------------------------------------------------

def test_save_load_roundtrip_bit_exact(tmp_path):
    region = Region(mode="finite-box", d=1, box=Box((0, 0), (9, 9)))
    es = edges_in(region)
    assert len(es) == 180
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=11)
    table = {e: env.rate(e) for e in es}
    path = tmp_path / "env.json"
    save_env(Environment(spec=None, table=table), str(path))
    loaded = load_env(str(path))
    for e in es:
        assert loaded.rate(e) == table[e]


def test_spec_only_save_regenerates(tmp_path):
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=11)
    path = tmp_path / "env.json"
    save_env(env, str(path))
    assert "table" not in path.read_text()
    loaded = load_env(str(path))
    for e in line_edges(50):
        assert loaded.rate(e) == env.rate(e)


def test_csv_roundtrip(tmp_path):
    region = Region(mode="finite-box", d=1, box=Box((0, 0), (4, 4)))
    env = Environment(spec=DistributionSpec(kind="exponential", mean=1.0), env_seed=2)
    table = {e: env.rate(e) for e in edges_in(region)}
    path = tmp_path / "table.csv"
    save_rate_table_csv(table, str(path))
    assert load_rate_table_csv(str(path)) == table


def test_negative_rate_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("p_coords,q_coords,rate\n0;0,1;0,-0.25\n")
    with pytest.raises(ValueError, match="line 2"):
        load_rate_table_csv(str(path))
    with pytest.raises(ValueError, match="negative"):
        Environment(spec=None, table={canonical_edge((0, 0), (1, 0)): -1.0})


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "env.json"
    path.write_text('{\n "mu": {"kind": "uniform",\n}\n')
    with pytest.raises(ValueError, match="line 3"):
        load_env(str(path))


def test_malformed_csv_reports_line(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("p_coords,q_coords,rate\n0;0,1;0,1.0\n0;1,nope,1.0\n")
    with pytest.raises(ValueError, match="line 3"):
        load_rate_table_csv(str(path))


def test_table_missing_edge_raises():
    e = canonical_edge((0, 0), (1, 0))
    env = Environment(spec=None, table={e: 1.0})
    with pytest.raises(KeyError):
        env.rate(canonical_edge((5, 5), (5, 6)))


# --- spec validation + properties ------------------------------------------------

def test_spec_rejects_bad_parameters():
    with pytest.raises(ValueError):
        DistributionSpec(kind="bernoulli", p=1.5)
    with pytest.raises(ValueError):
        DistributionSpec(kind="uniform", a=2.0, b=1.0)
    with pytest.raises(ValueError):
        DistributionSpec(kind="discrete-table", table={1.0: 0.7})
    with pytest.raises(ValueError):
        DistributionSpec(kind="discrete-table", table={-1.0: 1.0})
    with pytest.raises(ValueError):
        DistributionSpec(kind="point-mass", c=-2.0)
    with pytest.raises(ValueError):
        DistributionSpec(kind="gaussian")


SPECS = [
    DistributionSpec(kind="point-mass", c=0.3),
    DistributionSpec(kind="bernoulli", p=0.25, scale=1.0),
    DistributionSpec(kind="uniform", a=0.5, b=1.5),
    DistributionSpec(kind="discrete-table", table={0.0: 0.5, 2.0: 0.5}),
    DistributionSpec(kind="exponential", mean=1.0),
]


@settings(max_examples=60)
@given(st.sampled_from(SPECS), st.integers(min_value=0, max_value=2**63 - 1),
       st.integers(min_value=-1000, max_value=1000),
       st.integers(min_value=0, max_value=1000))
def test_rates_nonnegative_and_pure(spec, seed, x, y):
    env = Environment(spec=spec, env_seed=seed)
    e = canonical_edge((x, y), (x, y + 1))
    r = env.rate(e)
    assert r >= 0
    assert env.rate(e) == r


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_spec_dict_roundtrip(spec):
    assert DistributionSpec.from_dict(spec.to_dict()) == spec


# --- vectorized window tables ----------------------------------------------------

@pytest.mark.parametrize("mode", ["half-space", "finite-box"])
@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_rates_table_matches_scalar_path(mode, spec):
    region = Region(mode=mode, d=1, box=Box((-3, 0), (3, 4)))
    sites = site_index(region)
    env = Environment(spec=spec, env_seed=31)
    params = ModelParams(lam=2.0, horizon=1.0)
    tab = rates_table(env, params, sites)
    for i in range(sites.n_sites):
        p = sites.point(i)
        for k, off in enumerate([(-1, 0), (1, 0), (0, -1), (0, 1)]):
            q = (p[0] + off[0], p[1] + off[1])
            if not region.contains(q):
                assert tab.neigh[i, k] == NO_EDGE
                assert tab.rate[i, k] == 0.0
                continue
            assert tab.rate[i, k] == params.lam * env.rate(canonical_edge(p, q))
            if region.window().contains(q):
                assert sites.point(int(tab.neigh[i, k])) == q


def test_rates_table_symmetric_multiplier():
    # both directed channels of one edge carry the same lambda_e
    region = Region(mode="half-space", d=1, box=Box((-5, 0), (5, 5)))
    sites = site_index(region)
    env = Environment(spec=DistributionSpec(kind="uniform", a=0.0, b=2.0), env_seed=8)
    tab = rates_table(env, ModelParams(lam=1.0, horizon=1.0), sites)
    for i in range(sites.n_sites):
        for k in range(4):
            j = int(tab.neigh[i, k])
            if j < 0:
                continue
            back = k + 1 if k % 2 == 0 else k - 1
            assert tab.rate[j, back] == tab.rate[i, k]
