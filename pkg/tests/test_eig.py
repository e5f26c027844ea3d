"""Nested Monte Carlo EIG: collapse identities, toy oracle, convergence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsdesign.distributions import Rng
from gibbsdesign.eig import (
    DiscreteToy,
    EIGConfig,
    beig_nmc,
    eig_quadrature_oracle,
    eig_surface,
    gibbs_eig_nmc,
    gibbs_eig_noweight,
    toy_pseudo_mass,
)
from gibbsdesign.losses import NegLogLik, WeightedSM, Laplante, LossContext
from gibbsdesign.models import (
    LinearRegression,
    LocationFinding,
    Pharmacokinetic,
    default_prior,
)

TOY_PRIOR = [0.5, 0.3, 0.2]
TOY_PMF = [
    [0.10, 0.20, 0.40, 0.20, 0.10],
    [0.30, 0.30, 0.20, 0.10, 0.10],
    [0.05, 0.10, 0.15, 0.30, 0.40],
]
TOY_MI = 0.11473457738787614956  # 40-digit quadrature of the table above


def _nll_toy():
    return DiscreteToy(TOY_PRIOR, np.log(TOY_PMF))


def _unit_mass_toy(base_loss, omega):
    """Shift a loss table so the total pseudo-mass is exactly one.

    The self-normalised estimator is invariant to the shift, and at unit
    mass its limit coincides with the quadrature value.
    """
    toy = DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), np.asarray(base_loss, dtype=float))
    shift = np.log(toy_pseudo_mass(toy, omega)) / omega
    return DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), np.asarray(base_loss) + shift)


def test_quadrature_three_forms_agree_bayes_case():
    a, b, c = eig_quadrature_oracle(_nll_toy(), 1.0)
    assert a == pytest.approx(TOY_MI, abs=1e-13)
    assert abs(a - b) < 1e-10 and abs(a - c) < 1e-10


def test_quadrature_three_forms_agree_generalised_case():
    base = np.array(
        [
            [0.1, 1.3, 0.4, 2.0, 0.7],
            [1.1, 0.2, 0.9, 0.3, 1.6],
            [0.5, 0.8, 1.2, 0.6, 0.2],
        ]
    )
    for omega in (0.25, 1.0, 3.0):
        toy = DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), base)
        a, b, c = eig_quadrature_oracle(toy, omega)
        assert abs(a - b) < 1e-10 and abs(a - c) < 1e-10
        assert b >= -1e-12


@given(
    st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
    st.lists(st.floats(0.05, 1.0), min_size=12, max_size=12),
    st.lists(st.floats(-2.0, 2.0), min_size=12, max_size=12),
    st.floats(0.1, 4.0),
)
@settings(max_examples=60, deadline=None)
def test_quadrature_forms_property(prior_raw, pmf_raw, loss_raw, omega):
    prior = np.array(prior_raw) / np.sum(prior_raw)
    pmf = np.array(pmf_raw).reshape(3, 4)
    pmf = pmf / pmf.sum(axis=1, keepdims=True)
    toy = DiscreteToy(prior, np.log(pmf), np.array(loss_raw).reshape(3, 4))
    a, b, c = eig_quadrature_oracle(toy, omega)
    scale = max(1.0, abs(a))
    assert abs(a - b) < 1e-10 * scale
    assert abs(a - c) < 1e-10 * scale
    assert b >= -1e-12


def test_nmc_converges_to_quadrature_bayes_toy():
    cfg = EIGConfig(omega=1.0, n_outer=100000, n_inner=1000)
    est = gibbs_eig_nmc(_nll_toy(), None, None, None, cfg, Rng(100))
    assert abs(est.value - TOY_MI) < 3 * est.se
    assert est.se < 0.01


def test_nmc_converges_on_unit_mass_generalised_toy():
    base = np.array(
        [
            [0.1, 1.3, 0.4, 2.0, 0.7],
            [1.1, 0.2, 0.9, 0.3, 1.6],
            [0.5, 0.8, 1.2, 0.6, 0.2],
        ]
    )
    omega = 0.7
    toy = _unit_mass_toy(base, omega)
    assert toy_pseudo_mass(toy, omega) == pytest.approx(1.0, abs=1e-12)
    _, _, target = eig_quadrature_oracle(toy, omega)
    cfg = EIGConfig(omega=omega, n_outer=100000, n_inner=1000)
    est = gibbs_eig_nmc(toy, None, None, None, cfg, Rng(101))
    assert abs(est.value - target) < 3 * est.se


def test_nmc_estimate_invariant_to_loss_shift():
    base = np.array(
        [
            [0.1, 1.3, 0.4, 2.0, 0.7],
            [1.1, 0.2, 0.9, 0.3, 1.6],
            [0.5, 0.8, 1.2, 0.6, 0.2],
        ]
    )
    omega = 0.7
    cfg = EIGConfig(omega=omega, n_outer=5000, n_inner=200)
    t1 = DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), base)
    t2 = DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), base + 4.2)
    e1 = gibbs_eig_nmc(t1, None, None, None, cfg, Rng(55))
    e2 = gibbs_eig_nmc(t2, None, None, None, cfg, Rng(55))
    assert e1.value == pytest.approx(e2.value, abs=1e-10)


LR_CASES = [
    (LinearRegression(sigma=1.0), [0.0]),
    (LinearRegression(sigma=1.0), [4.0]),
    (LinearRegression(sigma=0.5), [-2.0]),
    (LinearRegression(sigma=2.0), [1.3]),
    (Pharmacokinetic(), [1.0]),
    (Pharmacokinetic(), [8.0]),
    (Pharmacokinetic(), [23.0]),
    (LocationFinding(d=1), [2.0]),
    (LocationFinding(d=2), [1.0, -2.0]),
    (LocationFinding(d=2), [-3.5, 3.5]),
]


@pytest.mark.parametrize("model,xi", LR_CASES)
def test_three_estimators_collapse_bitwise_at_nll_omega_one(model, xi):
    # with the negative log likelihood at omega 1 the importance weights are
    # exactly uniform, so all three estimators share every float
    prior = default_prior(model)
    cfg = EIGConfig(omega=1.0, n_outer=400, n_inner=30)
    g = gibbs_eig_nmc(model, prior, NegLogLik(), np.asarray(xi), cfg, Rng(77))
    b = beig_nmc(model, prior, np.asarray(xi), cfg, Rng(77))
    u = gibbs_eig_noweight(model, prior, NegLogLik(), np.asarray(xi), cfg, Rng(77))
    assert g.value == b.value == u.value
    assert g.max_log_weight_spread == 0.0
    assert g.ess == pytest.approx(400, rel=1e-12)


def test_uniform_weight_se_is_std_over_sqrt_n():
    cfg = EIGConfig(omega=1.0, n_outer=2000, n_inner=50)
    model = LinearRegression(sigma=1.0)
    est = beig_nmc(model, default_prior(model), np.array([2.0]), cfg, Rng(31))
    assert est.se > 0
    # ess equals n for uniform weights, so se should scale like 1/sqrt(n)
    big = EIGConfig(omega=1.0, n_outer=8000, n_inner=50)
    est2 = beig_nmc(model, default_prior(model), np.array([2.0]), big, Rng(31))
    assert est2.se < est.se


def test_se_calibrated_against_replications():
    cfg = EIGConfig(omega=1.0, n_outer=1500, n_inner=300)
    vals, ses = [], []
    for s in range(40):
        est = gibbs_eig_nmc(_nll_toy(), None, None, None, cfg, Rng(1000 + s))
        vals.append(est.value)
        ses.append(est.se)
    emp = np.std(vals, ddof=1)
    rep = np.mean(ses)
    assert 0.5 < rep / emp < 2.0


def test_beig_analytic_linear_regression():
    # known closed form: 0.5*log(1 + (1 + xi^2)/sigma^2)
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    cfg = EIGConfig(omega=1.0, n_outer=60000, n_inner=2000)
    est = beig_nmc(model, prior, np.array([0.0]), cfg, Rng(21))
    assert est.value == pytest.approx(0.34657359027997265471, abs=0.01)


def test_tiny_omega_kills_information():
    cfg = EIGConfig(omega=1e-8, n_outer=3000, n_inner=100)
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    est = gibbs_eig_nmc(model, prior, NegLogLik(), np.array([3.0]), cfg, Rng(41))
    assert abs(est.value) < 1e-5


def test_wsm_eig_uses_context():
    model = LocationFinding(d=2)
    prior = default_prior(model)
    ctx = LossContext(1, lambda xi: 5.0, lambda xi: 3.0)
    cfg = EIGConfig(omega=0.2, n_outer=800, n_inner=40)
    est = gibbs_eig_nmc(model, prior, WeightedSM(Laplante()), np.array([1.0, 1.0]), cfg, Rng(51), ctx)
    assert np.isfinite(est.value)
    assert est.ess > 1.0


def test_reuse_inner_is_deterministic_and_distinct():
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    fresh = EIGConfig(omega=1.0, n_outer=500, n_inner=40, reuse_inner=False)
    shared = EIGConfig(omega=1.0, n_outer=500, n_inner=40, reuse_inner=True)
    a = gibbs_eig_nmc(model, prior, NegLogLik(), np.array([1.0]), shared, Rng(61))
    b = gibbs_eig_nmc(model, prior, NegLogLik(), np.array([1.0]), shared, Rng(61))
    c = gibbs_eig_nmc(model, prior, NegLogLik(), np.array([1.0]), fresh, Rng(61))
    assert a.value == b.value
    assert a.value != c.value
    assert abs(a.value - c.value) < 0.5


def test_surface_results_track_designs_not_call_order():
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    cfg = EIGConfig(omega=1.0, n_outer=300, n_inner=20)
    designs = np.array([[-2.0], [0.5], [3.0]])
    out1 = eig_surface(model, prior, NegLogLik(), designs, cfg, Rng(71))
    out2 = eig_surface(model, prior, NegLogLik(), designs[::-1], cfg, Rng(71))
    assert [e.value for e in out1] == [e.value for e in out2][::-1]


def test_surface_supports_all_estimators():
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    cfg = EIGConfig(omega=1.0, n_outer=200, n_inner=20)
    designs = np.array([[0.0], [2.0]])
    for kind in ("gibbs", "beig", "noweight"):
        out = eig_surface(model, prior, NegLogLik(), designs, cfg, Rng(81), estimator=kind)
        assert len(out) == 2
    with pytest.raises(ValueError):
        eig_surface(model, prior, NegLogLik(), designs, cfg, Rng(81), estimator="exact")


def test_eig_grows_with_leverage():
    # regression information increases with |xi| (slope variance leverage)
    model = LinearRegression(sigma=1.0)
    prior = default_prior(model)
    cfg = EIGConfig(omega=1.0, n_outer=20000, n_inner=500)
    lo = beig_nmc(model, prior, np.array([0.0]), cfg, Rng(91))
    hi = beig_nmc(model, prior, np.array([4.0]), cfg, Rng(92))
    assert hi.value > lo.value + 0.5


def test_config_and_toy_validation():
    with pytest.raises(ValueError):
        EIGConfig(omega=0.0)
    with pytest.raises(ValueError):
        EIGConfig(omega=1.0, n_outer=1)
    with pytest.raises(ValueError):
        DiscreteToy([0.5, 0.6], np.log(TOY_PMF)[:2])
    with pytest.raises(ValueError):
        DiscreteToy(TOY_PRIOR, np.log([[0.5, 0.2], [0.5, 0.5], [0.1, 0.9]]))
    with pytest.raises(ValueError):
        DiscreteToy(TOY_PRIOR, np.log(TOY_PMF), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        eig_quadrature_oracle(_nll_toy(), 0.0)
