import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sspde.grid import ParabolicPoint, SpaceTimeField, TorusLattice, wrap_angle
from sspde.kernels import AffineField, CoarseGridError, kernel_family, scale_kernel
from sspde.model import Model, Symbol, TimePolyField
from sspde.noise import RegularizationSpec, sample_gpam_noise
from sspde.calculus import (
    Region,
    build_ufield,
    gamma_seminorm_U,
    generalized_gradient,
    gradient_bounds_check,
    gradient_relation_check,
    holder_seminorm,
    order_bound,
    order_constants,
    regularize,
    weighted_seminorm_U,
)


def _sigma_zero(v):
    return np.zeros_like(v)


def _sigma_one(v):
    return np.ones_like(v)


@pytest.fixture(scope="module")
def gpam32():
    lat = TorusLattice(32)
    noise = sample_gpam_noise(lat, RegularizationSpec(0.5), seed=11)
    return Model.from_gpam(noise)


@pytest.fixture(scope="module")
def cos32():
    """Static cos(x1) on a short comb (five slices)."""
    lat = TorusLattice(32)
    x = lat.coords
    base = np.cos(x)[:, None] + 0.0 * x[None, :]
    return SpaceTimeField(lat, 0.1, 0.05, np.tile(base, (5, 1, 1)))


def _kernel_by_label(label):
    fam = {f"at={k.at:g},a=({k.a1:g},{k.a2:g})": k for k in kernel_family()}
    return fam[label]


# ---------------------------------------------------------------- regularize


class TestRegularize:
    def test_constant_fixed_point(self):
        lat = TorusLattice(64)
        u = SpaceTimeField(lat, 0.0, 2e-3, np.full((140, 64, 64), 3.25))
        ul = regularize(u, 0.25)
        assert np.max(np.abs(ul.data - 3.25)) < 1e-12
        # output honors the initial-layer restriction t >= 4 L^2
        assert ul.t0 >= 4 * 0.25**2 - 1e-12

    def test_mode_damping_in_unit_interval(self):
        lat = TorusLattice(128)
        x = lat.coords
        base = np.cos(x)[:, None] + 0.0 * x[None, :]
        u = SpaceTimeField(lat, 0.0, 5e-3, np.tile(base, (150, 1, 1)))
        cs = []
        for L in (0.4, 0.25, 0.12):
            ul = regularize(u, L)
            c = np.fft.fft2(ul.data[-1])[1, 0].real / np.fft.fft2(base)[1, 0].real
            cs.append(c)
        assert all(0.0 < c < 1.0 for c in cs)
        assert cs[0] < cs[1] < cs[2]  # -> 1 as L -> 0
        assert cs[2] > 0.99

    def test_holder_contraction(self):
        # ||u_L - u|| <= L^alpha [u]_alpha with the seminorm evaluated by
        # dense pairs (the profile depends on x1 only, so pairs are 1-d)
        lat = TorusLattice(128)
        x = lat.coords
        alpha = 0.9
        prof = sum(2.0 ** (-alpha * j) * np.cos(2**j * x + 0.3 * j)
                   for j in range(6))
        dd = wrap_angle(x[:, None] - x[None, :])
        m = np.abs(dd) > 0
        sem = np.max(np.abs(prof[:, None] - prof[None, :])[m]
                     / np.abs(dd[m]) ** alpha)
        base = prof[:, None] + 0.0 * x[None, :]
        u = SpaceTimeField(lat, 0.0, 2e-3, np.tile(base, (600, 1, 1)))
        for L in (0.5, 0.3):
            ul = regularize(u, L)
            assert np.max(np.abs(ul.data - base[None])) <= L**alpha * sem

    def test_time_range_violation(self):
        lat = TorusLattice(64)
        u = SpaceTimeField(lat, 0.0, 0.01, np.zeros((6, 64, 64)))
        with pytest.raises(ValueError, match="time range violation"):
            regularize(u, 0.25)  # needs t >= 0.25 but comb ends at 0.05

    def test_dt_too_coarse(self):
        lat = TorusLattice(64)
        u = SpaceTimeField(lat, 0.0, 0.08, np.zeros((40, 64, 64)))
        with pytest.raises(ValueError, match="too coarse"):
            regularize(u, 0.25)  # time support 0.0625 < dt

    def test_sub_resolution_scale(self):
        lat = TorusLattice(32)
        u = SpaceTimeField(lat, 0.0, 1e-4, np.zeros((40, 32, 32)))
        with pytest.raises(CoarseGridError):
            regularize(u, 0.05)


# ---------------------------------------------------------- holder seminorm


class TestHolderSeminorm:
    def test_constant_zero(self):
        lat = TorusLattice(32)
        u = SpaceTimeField(lat, 0.0, 0.1, np.full((4, 32, 32), 2.0))
        assert holder_seminorm(u, 0.5).value == 0.0

    def test_cos_lipschitz_matches_dense(self):
        lat = TorusLattice(32)
        x = lat.coords
        base = np.cos(x)[:, None] + 0.0 * x[None, :]
        u = SpaceTimeField(lat, 0.0, 1.0, base[None])
        rep = holder_seminorm(u, 1.0, pair_cap=8192)
        vals = np.cos(x)
        dd = wrap_angle(x[:, None] - x[None, :])
        m = np.abs(dd) > 0
        brute = np.max(np.abs(vals[:, None] - vals[None, :])[m] / np.abs(dd[m]))
        assert abs(rep.value - 1.0) <= 0.1
        assert rep.value <= brute + 1e-12
        assert rep.value >= 0.9 * brute

    def test_witness_reproduces_value(self, cos32):
        rep = holder_seminorm(cos32, 0.7, pair_cap=2048)
        lat = cos32.lattice
        zi = lat.index_of(rep.witness_z[1], rep.witness_z[2])
        wi = lat.index_of(rep.witness_w[1], rep.witness_w[2])
        kz = int(round((rep.witness_z[0] - cos32.t0) / cos32.dt))
        kw = int(round((rep.witness_w[0] - cos32.t0) / cos32.dt))
        num = abs(cos32.data[(kw, *wi)] - cos32.data[(kz, *zi)])
        assert num / rep.witness_L**0.7 == pytest.approx(rep.value, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-8.0, 8.0).filter(lambda c: abs(c) > 1e-3))
    def test_absolute_homogeneity(self, c):
        lat = TorusLattice(16)
        rng = np.random.default_rng(4)
        data = rng.standard_normal((3, 16, 16))
        u = SpaceTimeField(lat, 0.0, 0.1, data)
        uc = SpaceTimeField(lat, 0.0, 0.1, c * data)
        a, b = holder_seminorm(u, 0.8).value, holder_seminorm(uc, 0.8).value
        assert b == pytest.approx(abs(c) * a, rel=1e-12)

    def test_monotone_under_slab_shrink(self):
        lat = TorusLattice(32)
        x = lat.coords
        rng = np.random.default_rng(2)
        data = rng.standard_normal((26, 32, 32))
        u = SpaceTimeField(lat, 0.0, 0.04, data)
        v_big = holder_seminorm(u, 0.6, Region(0.1, 0.9)).value
        v_mid = holder_seminorm(u, 0.6, Region(0.2, 0.7)).value
        v_small = holder_seminorm(u, 0.6, Region(0.3, 0.5)).value
        assert v_big >= v_mid >= v_small > 0.0

    def test_determinism(self, cos32):
        a = holder_seminorm(cos32, 0.7, pair_cap=512)
        b = holder_seminorm(cos32, 0.7, pair_cap=512)
        assert a == b

    def test_alpha_validated(self, cos32):
        for bad in (0.0, 2.0, -1.0):
            with pytest.raises(ValueError):
                holder_seminorm(cos32, bad)

    def test_empty_region(self, cos32):
        with pytest.raises(ValueError, match="empty region"):
            holder_seminorm(cos32, 0.5, Region(5.0, 6.0))


# ----------------------------------------------------------- order bounds


class TestOrderBound:
    def test_constant_noise_exact(self, gpam32):
        lat = gpam32.lattice
        const = TimePolyField(AffineField(lat, 0.0, np.full((32, 32), -2.5)))
        m = Model(lat, [const], [gpam32.lollis[0]], np.zeros((1, 1)))
        rep = order_bound(m, Symbol.NOISE, (0.5, 1.0), scales=(0.5, 0.4))
        assert rep.value == pytest.approx(2.5 * 0.5 ** (1 + m.kappa), rel=1e-12)
        assert rep.witness_L == 0.5

    def test_zero_model_vanishes(self):
        lat = TorusLattice(32)
        zero = TimePolyField(AffineField(lat, 0.0, np.zeros((32, 32))))
        m = Model(lat, [zero], [zero], np.zeros((1, 1)))
        for sym in (Symbol.NOISE, Symbol.LOLLI, Symbol.XNOISE, Symbol.DUMBBELL):
            assert order_bound(m, sym, (0.5, 1.0), scales=(0.5, 0.4)).value == 0.0

    @pytest.mark.parametrize("symbol,weight", [
        (Symbol.NOISE, 1.1),
        (Symbol.XNOISE, 0.1),
        (Symbol.DUMBBELL, 0.2),
    ])
    def test_pairing_witness_reproduces(self, gpam32, symbol, weight):
        # the scan pairs all centers at once through FFT tables; the witness
        # is re-evaluated here through the literal single-center pairing
        rep = order_bound(gpam32, symbol, (0.5, 1.0), scales=(0.5, 0.4),
                          n_basepoints=32)
        z = ParabolicPoint(*rep.witness_z)
        ker = _kernel_by_label(rep.witness_kernel)
        got = gpam32.pair(z, symbol, scale_kernel(ker, z, rep.witness_L))
        best = np.max(np.abs(np.atleast_1d(got)))
        assert best * rep.witness_L ** weight == pytest.approx(rep.value,
                                                               rel=1e-10)

    def test_lolli_witness_reproduces(self, gpam32):
        rep = order_bound(gpam32, Symbol.LOLLI, (0.5, 1.0), scales=(0.5,))
        lat = gpam32.lattice
        z = ParabolicPoint(*rep.witness_z)
        handle = gpam32.realize(z, Symbol.LOLLI).components[0]
        wi = lat.index_of(rep.witness_w[1], rep.witness_w[2])
        inc = abs(float(handle.eval(rep.witness_w[0])[wi]))
        expo = 1.0 - gpam32.kappa
        assert inc / rep.witness_L**expo == pytest.approx(rep.value, rel=1e-12)

    def test_x_ratio_at_most_one(self, gpam32):
        rep = order_bound(gpam32, Symbol.X, (0.5, 1.0), scales=(0.5,))
        assert 0.5 < rep.value <= 1.0 + 1e-12

    def test_aggregation(self, gpam32):
        oc = order_constants(gpam32, (0.5, 1.0), scales=(0.5, 0.4),
                             n_basepoints=32)
        linear = (Symbol.NOISE, Symbol.LOLLI, Symbol.XNOISE)
        assert oc.c1 == max(oc.reports[s].value for s in linear)
        assert oc.c2 == oc.reports[Symbol.DUMBBELL].value
        assert oc.c1 > 0 and oc.c2 > 0

    def test_stable_under_basepoint_doubling(self):
        lat = TorusLattice(48)
        noise = sample_gpam_noise(lat, RegularizationSpec(0.25), seed=21)
        m = Model.from_gpam(noise)
        a = order_constants(m, (0.5, 1.0), scales=(0.5, 0.35), n_basepoints=64)
        b = order_constants(m, (0.5, 1.0), scales=(0.5, 0.35), n_basepoints=128)
        assert abs(b.c1 - a.c1) / a.c1 <= 0.15
        assert abs(b.c2 - a.c2) / a.c2 <= 0.15

    def test_sub_resolution_scales_skipped(self, gpam32):
        rep = order_bound(gpam32, Symbol.NOISE, (0.5, 1.0),
                          scales=(0.5, 0.1), n_basepoints=8)
        assert rep.n_skipped == 4  # 0.1 < 2h for every kernel in the family
        assert rep.value > 0.0

    def test_bad_window(self, gpam32):
        with pytest.raises(ValueError):
            order_bound(gpam32, Symbol.NOISE, (1.0, 0.5), scales=(0.5,))


# ------------------------------------------------------------------ UField


class TestUField:
    def test_sigma_zero_reduces_to_increments(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        zi = (2, 5, 9)
        inc = uf.increment_stack(zi)
        assert np.array_equal(inc, cos32.data - cos32.data[zi])
        from sspde.grid import GridField, spectral_gradient
        g1, g2 = spectral_gradient(GridField(cos32.lattice, cos32.data[2]))
        assert np.array_equal(uf.u_x[0, 2], g1.values)
        assert np.array_equal(uf.u_x[1, 2], g2.values)

    def test_lolli_sigma_one_vanishes(self, gpam32):
        lat = gpam32.lattice
        tt = 0.2 + 0.02 * np.arange(26)
        data = np.stack([gpam32.lollis[0].eval(float(t)) for t in tt])
        u = SpaceTimeField(lat, 0.2, 0.02, data)
        uf = build_ufield(u, gpam32, _sigma_one)
        assert np.max(np.abs(uf.u_x)) < 1e-12
        assert np.max(np.abs(uf.increment_stack((5, 3, 7)))) < 1e-12
        z = ParabolicPoint(float(tt[4]), lat.coords[8], lat.coords[1])
        assert np.max(np.abs(generalized_gradient(uf, z))) < 1e-12

    def test_fd_cross_check_second_order(self):
        # centered differences of w -> U_z(w) at w = z converge to u_X at
        # O(h^2); the noise coupling keeps the continuum field fixed across n
        errs = {}
        for n in (32, 64):
            lat = TorusLattice(n)
            noise = sample_gpam_noise(lat, RegularizationSpec(1.0), seed=9)
            m = Model.from_gpam(noise)
            x = lat.coords
            base = np.cos(x)[:, None] * np.cos(x)[None, :]
            u = SpaceTimeField(lat, 0.4, 0.05, np.tile(base, (3, 1, 1)))
            uf = build_ufield(u, m, lambda v: v)
            h = lat.spacing
            worst = 0.0
            for (i, j) in ((3, 7), (n // 2, n // 3), (5, n - 2)):
                zi = (1, i, j)
                stack = uf.increment_stack(zi)
                fd1 = (stack[1, (i + 1) % n, j] - stack[1, (i - 1) % n, j]) / (2 * h)
                fd2 = (stack[1, i, (j + 1) % n] - stack[1, i, (j - 1) % n]) / (2 * h)
                ux = uf.u_x[:, 1, i, j]
                worst = max(worst, abs(fd1 - ux[0]), abs(fd2 - ux[1]))
            errs[n] = worst
        assert errs[32] / errs[64] > 3.0

    def test_guards(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        with pytest.raises(ValueError, match="not on the stored comb"):
            uf.index_of(ParabolicPoint(0.123, 0.0, 0.0))
        with pytest.raises(ValueError, match="diffusion coefficients"):
            build_ufield(cos32, gpam32, [_sigma_zero, _sigma_zero])


# -------------------------------------------------------- gamma seminorm U


class TestGammaSeminorm:
    def test_dense_brute_agreement(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        gamma = 1.8
        brute = 0.0
        for k in range(cos32.n_slices):
            for i in range(32):
                for j in range(32):
                    zi = (k, i, j)
                    d = uf.distance_stack(zi)
                    res = np.abs(uf.residual_stack(zi))
                    m = d > 0
                    brute = max(brute, float(np.max(res[m] / d[m] ** gamma)))
        rep = gamma_seminorm_U(uf, gamma, pair_cap=4096)
        assert rep.value <= brute + 1e-12
        assert rep.value >= 0.75 * brute

    def test_lolli_sigma_one_zero(self, gpam32):
        lat = gpam32.lattice
        tt = 0.2 + 0.02 * np.arange(26)
        data = np.stack([gpam32.lollis[0].eval(float(t)) for t in tt])
        u = SpaceTimeField(lat, 0.2, 0.02, data)
        uf = build_ufield(u, gpam32, _sigma_one)
        assert gamma_seminorm_U(uf, 1.8).value < 1e-12

    def test_monotone_under_slab_shrink(self, gpam32):
        lat = gpam32.lattice
        rng = np.random.default_rng(5)
        u = SpaceTimeField(lat, 0.0, 0.04, rng.standard_normal((26, 32, 32)))
        uf = build_ufield(u, gpam32, _sigma_zero)
        v1 = gamma_seminorm_U(uf, 1.7, Region(0.1, 0.9)).value
        v2 = gamma_seminorm_U(uf, 1.7, Region(0.2, 0.7)).value
        v3 = gamma_seminorm_U(uf, 1.7, Region(0.3, 0.5)).value
        assert v1 >= v2 >= v3 > 0.0

    def test_absolute_homogeneity(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        scaled = SpaceTimeField(cos32.lattice, cos32.t0, cos32.dt,
                                -3.0 * cos32.data)
        ufs = build_ufield(scaled, gpam32, _sigma_zero)
        a = gamma_seminorm_U(uf, 1.8).value
        b = gamma_seminorm_U(ufs, 1.8).value
        assert b == pytest.approx(3.0 * a, rel=1e-12)

    def test_gamma_validated(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        for bad in (1.0, 2.0, 0.5):
            with pytest.raises(ValueError):
                gamma_seminorm_U(uf, bad)


# ----------------------------------------------------- weighted seminorm U


class TestWeightedSeminorm:
    def test_zero_field(self, gpam32):
        lat = gpam32.lattice
        tt = 0.2 + 0.02 * np.arange(26)
        data = np.stack([gpam32.lollis[0].eval(float(t)) for t in tt])
        u = SpaceTimeField(lat, 0.2, 0.02, data)
        uf = build_ufield(u, gpam32, _sigma_one)
        assert weighted_seminorm_U(uf, 1.8, 0.2, 0.7) <= 1e-12

    def test_heat_flow_contrast(self):
        # rough lacunary data smoothed by the heat flow: the unweighted
        # seminorm blows up as the slab onset approaches the initial time,
        # the weighted one stays put
        lat = TorusLattice(64)
        noise = sample_gpam_noise(lat, RegularizationSpec(0.5), seed=3)
        m = Model.from_gpam(noise)
        rng = np.random.default_rng(7)
        u0hat = np.zeros((64, 64), complex)
        for kk in (1, 2, 4, 8, 16):
            ph = rng.random() * 2 * np.pi
            u0hat[kk % 64, 0] = 64**2 * 0.5 * kk ** (-0.3) * np.exp(1j * ph)
            u0hat[(-kk) % 64, 0] = np.conj(u0hat[kk % 64, 0])
        u0 = np.fft.ifft2(u0hat).real
        ksq = lat.k_squared()
        a, b, dt = 0.0, 0.5, 1.0 / 512
        tt = np.arange(a, b + dt / 2, dt)
        data = np.stack([np.fft.ifft2(np.fft.fft2(u0) * np.exp(-ksq * t)).real
                         for t in tt])
        uf = build_ufield(SpaceTimeField(lat, a, dt, data), m, _sigma_zero)
        gamma = 1.8
        coarse = gamma_seminorm_U(uf, gamma, Region(a + (b - a) / 4, b),
                                  pair_cap=6000).value
        fine = gamma_seminorm_U(uf, gamma, Region(a + (b - a) / 64, b),
                                pair_cap=6000).value
        assert fine >= 4.0 * coarse
        wv = weighted_seminorm_U(uf, gamma, a, b, pair_cap=6000)
        assert np.isfinite(wv)
        full = gamma_seminorm_U(uf, gamma, pair_cap=6000).value
        assert wv <= (b - a) ** (gamma / 2) * full

    def test_dominated_by_unweighted(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        a, b = cos32.t0, cos32.t_end
        wv = weighted_seminorm_U(uf, 1.8, a, b)
        full = gamma_seminorm_U(uf, 1.8).value
        assert wv <= (b - a) ** 0.9 * full + 1e-15

    def test_bad_slab(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        with pytest.raises(ValueError):
            weighted_seminorm_U(uf, 1.8, 0.5, 0.1)


# -------------------------------------------------- gradient relation check


class TestGradientRelation:
    def test_lolli_sigma_one_residual_floor(self):
        # the relation is exact for u = lollipop, sigma = 1; what remains is
        # the spatial discretization floor of the two independent routes
        lat = TorusLattice(64)
        noise = sample_gpam_noise(lat, RegularizationSpec(1.0), seed=5)
        m = Model.from_gpam(noise)
        L, zt = 0.35, 0.6
        dt = L**2 / 24
        t0 = zt - 28 * dt
        tt = t0 + dt * np.arange(31)
        u = SpaceTimeField(lat, t0, dt,
                           np.stack([m.lollis[0].eval(t) for t in tt]))
        z = ParabolicPoint(zt, lat.coords[10], lat.coords[20])
        rep = gradient_relation_check(u, m, _sigma_one, z, L, 1.8)
        assert rep.residual_norm < 1e-3
        assert rep.seminorm < 1e-12
        assert rep.ibp_first_moment == pytest.approx((1.0, 1.0), rel=1e-12)
        assert rep.ibp_zero_sum < 1e-12

    def test_single_mode_decay_orders(self):
        # sigma = 0: E = grad(u_L) - grad(u); both the residual and its bound
        # must vanish as L -> 0, the bound at order >= gamma - 1
        lat = TorusLattice(512)
        noise = sample_gpam_noise(lat, RegularizationSpec(1.0), seed=5)
        m = Model.from_gpam(noise)
        x = lat.coords
        base = np.cos(x)[:, None] + 0.0 * x[None, :]
        gamma = 1.8
        zt = 0.3
        z = ParabolicPoint(zt, lat.coords[100], lat.coords[311])
        Ls = (0.25, 0.125, 0.0625, 0.03125)
        Es, Bs = [], []
        for L in Ls:
            dt = L**2 / 24
            t0 = zt - 26 * dt
            u = SpaceTimeField(lat, t0, dt, np.tile(base, (28, 1, 1)))
            rep = gradient_relation_check(u, m, _sigma_zero, z, L, gamma,
                                          pair_cap=3000)
            assert rep.residual_norm <= rep.bound
            Es.append(rep.residual_norm)
            Bs.append(rep.bound)
        fit_e = np.polyfit(np.log(Ls), np.log(Es), 1)[0]
        fit_b = np.polyfit(np.log(Ls), np.log(Bs), 1)[0]
        assert fit_e >= gamma - 1.0 - 0.15
        assert fit_b >= gamma - 1.0 - 0.15

    def test_initial_layer_precondition(self, gpam32, cos32):
        z = ParabolicPoint(0.1, 0.0, 0.0)
        with pytest.raises(ValueError, match="time range violation"):
            gradient_relation_check(cos32, gpam32, _sigma_zero, z, 0.5, 1.8)


# --------------------------------------------------- gradient bounds check


class TestGradientBounds:
    def test_margins_nonnegative_rough_field(self, gpam32):
        lat = gpam32.lattice
        tt = 0.2 + 0.05 * np.arange(7)
        data = np.stack([gpam32.lollis[0].eval(float(t)) for t in tt])
        uf = build_ufield(SpaceTimeField(lat, 0.2, 0.05, data),
                          gpam32, _sigma_zero)
        for r in (0.8, 1.2):
            rep = gradient_bounds_check(uf, Region(0.2, 0.5), r=r, gamma=1.8)
            assert rep.worst_margin >= 0.0
            assert rep.sup_u_x <= 2.0 * rep.bound_at_r_star

    def test_margins_nonnegative_sharp_field(self, gpam32, cos32):
        # cos(x1) nearly saturates the interpolation inequality at moderate
        # radii; at r = 2 the continuum slack dominates the grid error
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        rep = gradient_bounds_check(uf, Region(0.1, 0.3), r=2.0, gamma=1.8)
        assert rep.worst_margin >= 0.0
        # sharpness: the optimized bound lands within a factor two
        assert rep.sup_u_x <= 2.0 * rep.bound_at_r_star
        assert rep.bound_at_r_star <= 2.0 * rep.sup_u_x

    def test_validation(self, gpam32, cos32):
        uf = build_ufield(cos32, gpam32, _sigma_zero)
        with pytest.raises(ValueError):
            gradient_bounds_check(uf, Region(0.1, 0.3), r=-1.0, gamma=1.8)
        with pytest.raises(ValueError):
            gradient_bounds_check(uf, Region(0.1, 0.3), r=0.5, gamma=2.5)


# ------------------------------------------------------------------- report


class TestReports:
    def test_json_fields(self, gpam32):
        rep = order_bound(gpam32, Symbol.NOISE, (0.5, 1.0), scales=(0.5,))
        import json
        blob = json.loads(rep.to_json())
        assert set(blob) == {"value", "witness_z", "witness_L", "n_samples"}
        assert blob["value"] == rep.value
        assert blob["witness_L"] == 0.5
