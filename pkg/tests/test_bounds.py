"""Exponent algebra, recursion envelopes, and the trajectory growth audit."""

import csv
import json
import math
import types
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sspde import bounds
from sspde.grid import GridField, TorusLattice
from sspde.model import Model
from sspde.noise import RegularizationSpec, sample_gpam_noise, sample_sg_noise
from sspde.solver import BoundedNonlinearity, PdeProblem, SolverConfig, \
    solve_renormalized
from sspde.calculus import order_constants


def _fake_traj(intervals, mass=0.0):
    return types.SimpleNamespace(intervals=list(intervals),
                                 manifest={"mass": mass})


class TestThresholdRoot:
    def test_root_bracket(self):
        kb = bounds.kappa_bar()
        assert 0.132 < kb < 1.0 / 3.0

    def test_unexpanded_residual(self):
        # the two-sided product form is the independent oracle for the
        # expanded cubic used by the bisection
        kb = bounds.kappa_bar()
        assert abs(bounds.threshold_identity_residual(kb)) <= 1e-10

    def test_simple_root(self):
        kb = bounds.kappa_bar()
        assert bounds.threshold_cubic(kb - 1e-6) > 0 > bounds.threshold_cubic(kb + 1e-6)
        deriv = 6.0 * kb * kb + 6.0 * kb - 8.0
        assert abs(deriv) > 1.0

    def test_cached_value_stable(self):
        assert bounds.kappa_bar() == bounds.kappa_bar()
        assert bounds.kappa_bar() == pytest.approx(0.13212275618298008,
                                                   abs=1e-11)

    @given(st.floats(min_value=0.0, max_value=1.0 / 3.0))
    @settings(max_examples=80, deadline=None)
    def test_expanded_matches_product_form(self, k):
        # same polynomial written two ways; roundoff only
        assert bounds.threshold_cubic(k) == pytest.approx(
            bounds.threshold_identity_residual(k), abs=1e-12)


class TestExponents:
    def test_reference_point(self):
        # rational-arithmetic oracle: beta2 = 11/14 and the delta correction
        # is 121/900 at kappa = 1/10, delta = 1/100
        ex = bounds.exponents(0.1, 0.01)
        beta2 = Fraction(2) * Fraction(11, 10) / Fraction(28, 10)
        beta1 = beta2 + Fraction(11, 10) * Fraction(11, 100) / Fraction(9, 10)
        assert beta2 == Fraction(11, 14)
        assert beta1 == Fraction(5797, 6300)
        assert ex.beta2 == pytest.approx(float(beta2), rel=1e-14)
        assert ex.beta1 == pytest.approx(float(beta1), rel=1e-14)
        assert ex.valid

    def test_small_kappa_limit(self):
        ex = bounds.exponents(1e-8, 1e-12)
        assert ex.beta2 == pytest.approx(2.0 / 3.0, abs=1e-7)
        assert ex.beta1 == pytest.approx(2.0 / 3.0, abs=1e-7)

    def test_above_threshold_invalid_for_every_delta(self):
        # at kappa = 0.2 even the delta -> 0 limit of beta1 sits above 1
        for delta in (1e-300, 1e-12, 1e-6, 0.01, 0.1):
            assert not bounds.exponents(0.2, delta).valid
        assert bounds.exponents(0.2, 1e-300).beta1 > 1.2

    def test_validity_flag_not_exception(self):
        ex = bounds.exponents(0.3, 0.2)
        assert not ex.valid
        assert ex.nu == math.inf or ex.nu > 0

    def test_nu(self):
        ex = bounds.exponents(0.1, 0.01)
        assert ex.nu == pytest.approx(
            1.0 / (0.9 * (1.0 - ex.beta1) ** 2), rel=1e-13)

    def test_e_gamma(self):
        ex = bounds.exponents(0.1, 0.01)
        assert ex.e_gamma(1.0) == 0.0
        assert ex.e_gamma(1.8) == pytest.approx(2.0 * 0.8 / 0.9, rel=1e-14)

    def test_domain(self):
        with pytest.raises(ValueError, match="kappa"):
            bounds.exponents(0.0, 0.01)
        with pytest.raises(ValueError, match="kappa"):
            bounds.exponents(0.4, 0.01)
        with pytest.raises(ValueError, match="delta"):
            bounds.exponents(0.1, 0.0)

    def test_as_dict_round_trips(self):
        d = json.loads(json.dumps(bounds.exponents(0.1, 0.01).as_dict()))
        assert d["valid"] is True
        assert d["kappa_bar"] == bounds.kappa_bar()


class TestWindowAndScale:
    def test_second_constant_dominates(self):
        got = bounds.t_window(1.5, 0.1, 1.0, 1e8, 1.0)
        assert got == (1e8) ** (-1.0 / 0.9)

    def test_mass_zero_reduction(self):
        a = bounds.t_window(1.5, 0.1, 2.0, 3.0, 4.0)
        b = bounds.t_window(1.5, 0.1, 2.0, 3.0, 4.0, m=0.0)
        assert a == b

    def test_doubling_working_norm(self):
        # pick constants so the C_star-bearing term is the minimum
        lo = bounds.t_window(1.8, 0.1, 5.0, 1e-3, 1.0)
        hi = bounds.t_window(1.8, 0.1, 5.0, 1e-3, 2.0)
        e = 2.0 * 0.8 / 0.9
        assert hi / lo == pytest.approx(2.0 ** (-e), rel=1e-12)

    def test_mass_term_can_win(self):
        assert bounds.t_window(1.5, 0.1, 1.0, 1.0, 1.0, m=100.0) == \
            pytest.approx(100.0 ** (-1.0 / 0.9), rel=1e-13)

    def test_l_tilde_all_ones(self):
        assert bounds.l_tilde(1.0, 1.0, 1.0, 0.1, 0.01) == 1.0

    def test_l_tilde_working_norm_scaling(self):
        got = bounds.l_tilde(2.0, 1.0, 1.0, 0.1, 0.01)
        expect = 2.0 ** (-2.0 / 2.8) * \
            (2.0 ** (2 * 0.1 + 2 * 0.01)) ** (-1.0 / 1.8)
        assert got == pytest.approx(expect, rel=1e-13)

    def test_l_tilde_large_mass_vanishes(self):
        assert bounds.l_tilde(1.0, 1.0, 1.0, 0.1, 0.01, m=1e8) < 1e-8

    def test_positivity_checks(self):
        with pytest.raises(ValueError, match="positive"):
            bounds.t_window(1.5, 0.1, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="positive"):
            bounds.l_tilde(1.0, 1.0, -1.0, 0.1, 0.01)

    def test_compatibility_is_plain_bool(self):
        res = bounds.scale_window_compatible(5.0, 0.1, 0.1, 0.1, 0.01, 1.5)
        assert isinstance(res, bool)

    def test_compatibility_flips_with_constants(self):
        # weak noise and a large working norm leave room in the window;
        # order-one constants do not
        assert bounds.scale_window_compatible(5.0, 0.1, 0.1, 0.1, 0.01, 1.5)
        assert not bounds.scale_window_compatible(1.0, 1.0, 1.0, 0.1, 0.01,
                                                  1.5)


class TestAprioriBound:
    def test_zero_noise_returns_data_norm(self):
        assert bounds.apriori_bound(3.7, 0.0, 0.0, 0.1, 0.01) == 3.7

    def test_monotone_in_every_argument(self):
        base = bounds.apriori_bound(1.0, 1.1, 1.2, 0.1, 0.01)
        assert bounds.apriori_bound(2.0, 1.1, 1.2, 0.1, 0.01) >= base
        assert bounds.apriori_bound(1.0, 1.5, 1.2, 0.1, 0.01) >= base
        assert bounds.apriori_bound(1.0, 1.1, 1.7, 0.1, 0.01) >= base

    def test_homogeneity_in_linear_constant(self):
        ex = bounds.exponents(0.1, 0.01)
        p = 2.0 / (0.9 * (1.0 - ex.beta1))
        b1 = bounds.apriori_bound(0.0, 1.0, 0.0, 0.1, 0.01)
        b3 = bounds.apriori_bound(0.0, 3.0, 0.0, 0.1, 0.01)
        assert b3 / b1 == pytest.approx(3.0 ** p, rel=1e-12)

    def test_invalid_regime_raises(self):
        with pytest.raises(ValueError, match="regime"):
            bounds.apriori_bound(1.0, 1.0, 1.0, 0.2, 0.01)

    def test_negative_inputs_raise(self):
        with pytest.raises(ValueError, match=">= 0"):
            bounds.apriori_bound(-1.0, 1.0, 1.0, 0.1, 0.01)


class TestGrowthEnvelope:
    def test_frozen_reference_instance(self):
        # ten steps of unit increments at square-root growth; the closed
        # form lands exactly on (1 + 9/2)^2
        g = bounds.growth_envelope(1.0, [1.0] * 9, 0.5)
        assert g.envelope[9] == 30.25
        assert g.ys[9] == pytest.approx(25.956419514587218, rel=1e-13)
        assert g.dominated

    def test_zero_increments(self):
        g = bounds.growth_envelope(2.0, [0.0] * 5, 0.5)
        assert g.ys == (2.0,) * 6
        assert g.dominated
        for env in g.envelope:
            assert env == pytest.approx(2.0, rel=1e-15)

    def test_flat_exponent_is_linear(self):
        g = bounds.growth_envelope(1.0, [0.5, 0.25, 0.75], 0.0)
        assert g.ys == (1.0, 1.5, 1.75, 2.5)
        # running max of increments: 0.5, 0.5, 0.75
        assert g.envelope == (1.0, 1.5, 2.0, 3.25)
        assert g.dominated

    def test_envelope_is_running_max_based(self):
        # a late large increment must not retroactively lift early envelope
        # entries
        g = bounds.growth_envelope(1.0, [0.1, 5.0], 0.5)
        assert g.envelope[1] == pytest.approx((1.0 + 0.5 * 0.1) ** 2)
        assert g.envelope[2] == pytest.approx((1.0 + 0.5 * 5.0 * 2) ** 2)

    @given(st.floats(min_value=0.1, max_value=10.0),
           st.floats(min_value=0.0, max_value=0.999),
           st.lists(st.floats(min_value=0.0, max_value=5.0),
                    min_size=1, max_size=40))
    @settings(max_examples=80, deadline=None)
    def test_domination_property(self, Y1, beta, q):
        g = bounds.growth_envelope(Y1, q, beta)
        assert g.dominated
        assert g.max_violation <= 1e-12

    def test_validation(self):
        with pytest.raises(ValueError, match="Y1"):
            bounds.growth_envelope(0.0, [1.0], 0.5)
        with pytest.raises(ValueError, match="beta"):
            bounds.growth_envelope(1.0, [1.0], 1.0)
        with pytest.raises(ValueError, match=">= 0"):
            bounds.growth_envelope(1.0, [-0.1], 0.5)


class TestMassiveRecursion:
    def test_pure_decay(self):
        g = bounds.massive_recursion(1.0, 0.5, [0.0] * 6, 0.5)
        for n, y in enumerate(g.ys):
            assert y == pytest.approx(0.5 ** n, rel=1e-14)
        assert all(env == 1.0 for env in g.envelope)
        assert g.dominated

    def test_fixed_point_from_both_sides(self):
        a = math.exp(-1.0)
        fp = (1.0 / (1.0 - a)) ** 2
        hi = bounds.massive_recursion(5.0, a, [1.0] * 200, 0.5)
        lo = bounds.massive_recursion(0.5, a, [1.0] * 200, 0.5)
        assert abs(hi.ys[-1] - fp) <= 1e-6
        assert abs(lo.ys[-1] - fp) <= 1e-6
        diffs_hi = np.diff(hi.ys)
        diffs_lo = np.diff(lo.ys)
        assert np.all(diffs_hi <= 1e-15)
        assert np.all(diffs_lo >= -1e-15)

    def test_reference_fixed_point_value(self):
        a = math.exp(-1.0)
        g = bounds.massive_recursion(5.0, a, [1.0] * 200, 0.5)
        assert g.ys[-1] == pytest.approx(2.502650301077119, abs=1e-9)

    def test_envelope_uses_consumed_increments_only(self):
        # bound at step n+1 may not peek at increments beyond r_n
        g = bounds.massive_recursion(1.0, 0.5, [0.1, 0.1, 9.0], 0.5)
        small = max(1.0, (0.1 / 0.5) ** 2)
        assert g.envelope[1] == pytest.approx(small)
        assert g.envelope[2] == pytest.approx(small)
        assert g.envelope[3] == pytest.approx((9.0 / 0.5) ** 2)

    @given(st.floats(min_value=0.1, max_value=10.0),
           st.floats(min_value=0.05, max_value=0.95),
           st.floats(min_value=0.0, max_value=0.999),
           st.lists(st.floats(min_value=0.0, max_value=5.0),
                    min_size=1, max_size=40))
    @settings(max_examples=80, deadline=None)
    def test_domination_property(self, Y1, a, beta, r):
        g = bounds.massive_recursion(Y1, a, r, beta)
        assert g.dominated
        assert g.max_violation <= 1e-12

    def test_validation(self):
        with pytest.raises(ValueError, match="damping"):
            bounds.massive_recursion(1.0, 1.0, [0.1], 0.5)
        with pytest.raises(ValueError, match="damping"):
            bounds.massive_recursion(1.0, 0.0, [0.1], 0.5)


class TestMomentRecursion:
    def test_zero_forcing(self):
        mf = bounds.moment_recursion(3.0, 0.5, 0.0, 0.5)
        assert mf.z_bar == 0.0
        assert mf.monotone and mf.direction == "down"
        assert mf.iterates[-1] < 1e-50

    def test_reference_fixed_point(self):
        a = math.exp(-1.0)
        mf = bounds.moment_recursion(1.0, a, 1.0, 0.5)
        assert mf.z_bar == pytest.approx(2.502650301077119, rel=1e-13)
        assert mf.gap <= 1e-6

    def test_certificate_from_below(self):
        a = math.exp(-1.0)
        zbar = bounds.moment_recursion(1.0, a, 1.0, 0.5).z_bar
        mf = bounds.moment_recursion(zbar / 2.0, a, 1.0, 0.5)
        assert mf.direction == "up" and mf.monotone
        assert mf.gap <= 1e-6

    def test_certificate_from_above(self):
        a = math.exp(-1.0)
        zbar = bounds.moment_recursion(1.0, a, 1.0, 0.5).z_bar
        mf = bounds.moment_recursion(2.0 * zbar, a, 1.0, 0.5)
        assert mf.direction == "down" and mf.monotone
        assert mf.gap <= 1e-6

    def test_started_at_fixed_point(self):
        mf = bounds.moment_recursion(4.0, 0.5, 1.0, 0.5)
        assert mf.z_bar == 4.0
        assert mf.direction == "at" and mf.monotone


class TestIntervalConstants:
    def test_tilde_is_max_of_consecutive(self):
        ic = bounds.IntervalConstants([1.0, 3.0, 2.0], [0.5, 0.1, 4.0])
        assert ic.tilde1(1) == 3.0
        assert ic.tilde1(2) == 3.0
        assert ic.tilde1(3) == 2.0      # final interval pairs with itself
        assert ic.tilde2(2) == 4.0

    def test_validation(self):
        with pytest.raises(ValueError, match="matching"):
            bounds.IntervalConstants([1.0], [1.0, 2.0])
        with pytest.raises(ValueError, match=">= 0"):
            bounds.IntervalConstants([-1.0], [1.0])
        with pytest.raises(ValueError, match="at least one"):
            bounds.IntervalConstants([], [])

    def test_constant_builder(self):
        ic = bounds.IntervalConstants.constant(0.3, 0.2, 4)
        assert ic.c1 == (0.3,) * 4 and ic.c2 == (0.2,) * 4


class TestGrowthAudit:
    EX = bounds.exponents(0.1, 0.01)

    def test_zero_constants_flat_envelope(self):
        traj = _fake_traj([(1, 1.0), (2, 1.0), (3, 1.0)])
        ic = bounds.IntervalConstants.constant(0.0, 0.0, 3)
        rep = bounds.growth_audit(traj, ic, self.EX)
        assert rep.passed
        assert all(env == 1.0 for _, _, env, _ in rep.rows)

    def test_growth_with_zero_constants_fails(self):
        traj = _fake_traj([(1, 1.0), (2, 1.5), (3, 2.0)])
        ic = bounds.IntervalConstants.constant(0.0, 0.0, 3)
        rep = bounds.growth_audit(traj, ic, self.EX)
        assert not rep.passed
        assert rep.rows[0][3] and not rep.rows[1][3]

    def test_prefactor_fitted_at_first_interval(self):
        traj = _fake_traj([(1, 0.5), (2, 0.7), (3, 0.85)])
        ic = bounds.IntervalConstants.constant(0.3, 0.2, 3)
        rep = bounds.growth_audit(traj, ic, self.EX)
        assert rep.rows[0][2] == pytest.approx(0.5, rel=1e-12)
        assert rep.passed

    def test_massless_run_reports_no_stabilization(self):
        traj = _fake_traj([(1, 0.5), (2, 0.6)])
        ic = bounds.IntervalConstants.constant(0.1, 0.1, 2)
        rep = bounds.growth_audit(traj, ic, self.EX)
        assert rep.stabilization_ratio is None and rep.stable is None

    def test_requires_two_intervals(self):
        with pytest.raises(ValueError, match="two unit intervals"):
            bounds.growth_audit(_fake_traj([(1, 1.0)]),
                                bounds.IntervalConstants.constant(1, 1, 1),
                                self.EX)

    def test_requires_valid_regime(self):
        bad = bounds.exponents(0.2, 0.01)
        with pytest.raises(ValueError, match="invalid"):
            bounds.growth_audit(_fake_traj([(1, 1.0), (2, 1.0)]),
                                bounds.IntervalConstants.constant(1, 1, 2),
                                bad)

    def test_csv_and_dict(self, tmp_path):
        traj = _fake_traj([(1, 0.5), (2, 0.7)], mass=0.0)
        ic = bounds.IntervalConstants.constant(0.3, 0.2, 2)
        rep = bounds.growth_audit(traj, ic, self.EX)
        out = tmp_path / "audit.csv"
        rep.write_csv(str(out))
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["n", "Y_n", "envelope_n", "pass"]
        assert len(rows) == 3
        json.dumps(rep.as_dict())

    def test_stabilization_check_windows(self):
        vals = {n: 1.0 for n in range(1, 11)}
        chk = bounds.stabilization_check(vals)
        assert chk["stable"] is True and chk["ratio"] == 1.0
        chk2 = bounds.stabilization_check({n: 1.0 for n in range(1, 9)})
        assert chk2["ratio"] is None      # late window incomplete
        drift = {n: float(n) for n in range(1, 11)}
        assert bounds.stabilization_check(drift)["stable"] is False


class TestAuditOnSolverRuns:
    def test_static_noise_run_stays_under_envelope(self):
        lat = TorusLattice(32)
        xi = sample_gpam_noise(lat, RegularizationSpec(0.25), seed=3)
        mdl = Model.from_gpam(xi)
        x1, _ = np.meshgrid(lat.coords, lat.coords, indexing="ij")
        prob = PdeProblem(mdl, BoundedNonlinearity.sine(),
                          GridField(lat, 0.3 * np.cos(x1)))
        cfg = SolverConfig(n_spatial=32, dt=1e-3, t_end=4.0, seed=3,
                           store_every=50)
        traj = solve_renormalized(prob, cfg)
        c1s, c2s = [], []
        for k in range(1, 5):
            oc = order_constants(mdl, (k - 1.0, float(k)), [1.0, 0.5],
                                 n_basepoints=12, plan_seed=7, pair_cap=400)
            c1s.append(oc.c1)
            c2s.append(oc.c2)
        rep = bounds.growth_audit(traj, bounds.IntervalConstants(c1s, c2s),
                                  bounds.exponents(0.1, 0.01))
        assert rep.passed
        assert [r[0] for r in rep.rows] == [1, 2, 3, 4]

    def test_massive_two_channel_run_stabilizes(self):
        lat = TorusLattice(32)
        dt = 4e-3
        sg = sample_sg_noise(lat, 0.5, RegularizationSpec(0.25), dt, 10.0,
                             seed=4)
        mdl = Model.from_sine_gordon(sg, renorm=0.05 * np.eye(2))
        sig = [BoundedNonlinearity.sine(freq=0.5),
               BoundedNonlinearity.cosine(freq=0.5)]
        prob = PdeProblem(mdl, sig, GridField(lat, np.zeros((32, 32))),
                          mass=1.0)
        cfg = SolverConfig(n_spatial=32, dt=dt, t_end=10.0, seed=4,
                           store_every=250)
        traj = solve_renormalized(prob, cfg)
        rep = bounds.growth_audit(traj,
                                  bounds.IntervalConstants.constant(1, 1, 10),
                                  bounds.exponents(0.1, 0.01))
        assert rep.mass == 1.0
        assert rep.stable is True
        assert abs(rep.stabilization_ratio - 1.0) <= 0.2


class TestSummary:
    def test_json_round_trip(self):
        s = bounds.summary(0.1, 0.01, 0.8, 0.6, 1.2)
        d = json.loads(json.dumps(s))
        assert d["exponents"]["valid"] is True
        assert d["apriori_bound"] >= 1.2
        assert d["t_window"] > 0 and d["l_tilde"] > 0
        assert isinstance(d["scale_window_compatible"], bool)

    def test_invalid_regime_reports_no_bound(self):
        s = bounds.summary(0.2, 0.01, 0.8, 0.6, 1.2)
        assert s["apriori_bound"] is None
        assert s["exponents"]["valid"] is False

    def test_mass_shrinks_window(self):
        free = bounds.summary(0.1, 0.01, 0.8, 0.6, 1.2)
        damped = bounds.summary(0.1, 0.01, 0.8, 0.6, 1.2, mass=2.0)
        assert damped["t_window"] <= free["t_window"]
        assert damped["l_tilde"] <= free["l_tilde"]
