import numpy as np
import pytest

from sspde.grid import ParabolicPoint, TorusLattice
from sspde.kernels import AffineField, MollifierKernel, scale_kernel
from sspde.model import (
    Model,
    SampledField,
    Symbol,
    TimePolyField,
    homogeneity,
)
from sspde.noise import (
    RegularizationSpec,
    sample_gpam_noise,
    sample_sg_noise,
    sample_wiener_noise,
)


@pytest.fixture(scope="module")
def gpam32():
    lat = TorusLattice(32)
    noise = sample_gpam_noise(lat, RegularizationSpec(0.5), seed=11)
    return Model.from_gpam(noise)


def _grid_point(lat, t, i, j):
    return ParabolicPoint(t, lat.coords[i], lat.coords[j])


def _const_model(lat, noise_c=2.0, lolli_c=5.0, C=0.7, kappa=0.1):
    ones = np.ones((lat.n, lat.n))
    return Model(lat,
                 [TimePolyField(AffineField(lat, 0.0, noise_c * ones))],
                 [TimePolyField(AffineField(lat, 0.0, lolli_c * ones))],
                 [[C]], kappa)


class TestSymbolTable:
    def test_homogeneities_exact(self):
        k = 0.1
        assert homogeneity(Symbol.NOISE, k) == -1.1
        assert homogeneity(Symbol.LOLLI, k) == 1 - k
        assert homogeneity(Symbol.X, k) == 1.0
        assert homogeneity(Symbol.XNOISE, k) == -k
        assert homogeneity(Symbol.DUMBBELL, k) == -2 * k

    def test_kappa_range(self):
        for bad in (0.0, 1.0 / 3.0, 0.5, -0.1):
            with pytest.raises(ValueError):
                homogeneity(Symbol.NOISE, bad)


class TestModelConstruction:
    def test_renorm_shape_enforced(self):
        lat = TorusLattice(8)
        ones = np.ones((8, 8))
        h = TimePolyField(AffineField(lat, 0.0, ones))
        with pytest.raises(ValueError):
            Model(lat, [h], [h], [[1.0, 0.0]], 0.1)

    def test_kappa_validated(self):
        lat = TorusLattice(8)
        h = TimePolyField(AffineField(lat, 0.0, np.ones((8, 8))))
        with pytest.raises(ValueError):
            Model(lat, [h], [h], [[0.0]], kappa=0.4)

    def test_gpam_heat_residual(self, gpam32):
        assert gpam32.heat_residual() <= 1e-8

    def test_wiener_heat_residual(self):
        lat = TorusLattice(16)
        wn = sample_wiener_noise(lat, delta=0.5, dt=0.01, n_steps=20,
                                 reg=RegularizationSpec(0.25), seed=3)
        m = Model.from_wiener(wn)
        assert m.heat_residual() <= 1e-12

    def test_sine_gordon_heat_residual(self):
        lat = TorusLattice(16)
        sg = sample_sg_noise(lat, beta=1.0, reg=RegularizationSpec(0.5),
                             dt=0.01, T=0.2, seed=4)
        m = Model.from_sine_gordon(sg, renorm=np.zeros((2, 2)))
        assert m.heat_residual(0) <= 1e-10
        assert m.heat_residual(1) <= 1e-10


class TestRealize:
    def test_lolli_vanishes_at_base_point(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 0.8, 7, 12)
        real = gpam32.realize(z, Symbol.LOLLI)
        assert real.components[0].value_at(z) == pytest.approx(0.0, abs=1e-14)

    def test_x_vanishes_at_matching_coordinates(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 0.8, 7, 12)
        real = gpam32.realize(z, Symbol.X)
        v = real.eval(0.8)
        assert v[0, 7, 12] == 0.0
        assert v[1, 7, 12] == 0.0

    def test_dumbbell_with_constant_potential(self):
        lat = TorusLattice(16)
        m = _const_model(lat, C=0.7)
        z = _grid_point(lat, 1.0, 3, 5)
        real = m.realize(z, Symbol.DUMBBELL)
        assert np.allclose(real.eval(2.0), -0.7, atol=1e-14)

    def test_off_grid_base_point_rejected(self, gpam32):
        with pytest.raises(ValueError):
            gpam32.realize(ParabolicPoint(1.0, 0.1234, 0.0), Symbol.NOISE)


class TestChangeOfBasePoint:
    SYMBOLS = list(Symbol)

    @pytest.mark.parametrize("symbol", SYMBOLS, ids=lambda s: s.name)
    def test_identity_residual_tiny(self, gpam32, symbol):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 3, 17)
        w = _grid_point(lat, 0.7, 5, 20)
        assert gpam32.cbp_residual(z, w, symbol) <= 1e-10

    def test_same_point_residual_exactly_zero(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 9, 9)
        for symbol in Symbol:
            assert gpam32.cbp_residual(z, z, symbol) == 0.0

    def test_dumbbell_residual_independent_of_renorm(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 3, 17)
        w = _grid_point(lat, 0.7, 5, 20)
        r1 = gpam32.cbp_residual(z, w, Symbol.DUMBBELL)
        shifted = gpam32.with_renorm([[gpam32.renorm[0, 0] + 3.5]])
        r2 = shifted.cbp_residual(z, w, Symbol.DUMBBELL)
        assert r1 <= 1e-10 and r2 <= 1e-10

    def test_x_identity_needs_nearby_points(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 0, 0)
        w = _grid_point(lat, 1.0, lat.n // 2, lat.n // 2)
        with pytest.raises(ValueError):
            gpam32.cbp_residual(z, w, Symbol.XNOISE)


class TestPairing:
    def test_constant_noise_pairs_to_itself(self):
        lat = TorusLattice(32)
        m = _const_model(lat, noise_c=2.5)
        z = _grid_point(lat, 1.0, 4, 4)
        phi = scale_kernel(MollifierKernel(), z, 0.5)
        assert m.pair(z, Symbol.NOISE, phi) == pytest.approx(2.5, rel=1e-12)

    def test_x_pairs_to_zero(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 11, 23)
        for ker in (MollifierKernel(), MollifierKernel(space_stretch=(0.9, 0.6))):
            phi = scale_kernel(ker, z, 0.5)
            v = gpam32.pair(z, Symbol.X, phi)
            assert abs(v[0]) <= 1e-8 and abs(v[1]) <= 1e-8

    def test_dumbbell_constant_potential_pairs_to_minus_C(self):
        lat = TorusLattice(32)
        m = _const_model(lat, C=0.7)
        z = _grid_point(lat, 1.0, 4, 4)
        phi = scale_kernel(MollifierKernel(), z, 0.5)
        assert m.pair(z, Symbol.DUMBBELL, phi) == pytest.approx(-0.7, rel=1e-12)

    def test_kernel_center_must_match(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 1.0, 3, 3)
        w = _grid_point(lat, 1.0, 4, 3)
        phi = scale_kernel(MollifierKernel(), w, 0.5)
        with pytest.raises(ValueError):
            gpam32.pair(z, Symbol.NOISE, phi)

    def test_support_must_fit_time_range(self, gpam32):
        lat = gpam32.lattice
        z = _grid_point(lat, 0.01, 3, 3)
        phi = scale_kernel(MollifierKernel(), z, 0.5)
        with pytest.raises(ValueError):
            gpam32.pair(z, Symbol.LOLLI, phi)

    def test_pair_linear_in_noise(self):
        lat = TorusLattice(32)
        rng = np.random.default_rng(7)
        f = rng.normal(size=(32, 32))
        zeros = np.zeros((32, 32))
        m1 = Model(lat, [TimePolyField(AffineField(lat, 0.0, f))],
                   [TimePolyField(AffineField(lat, 0.0, zeros))], [[0.0]], 0.1)
        m2 = Model(lat, [TimePolyField(AffineField(lat, 0.0, 3.0 * f))],
                   [TimePolyField(AffineField(lat, 0.0, zeros))], [[0.0]], 0.1)
        z = _grid_point(lat, 1.0, 9, 2)
        phi = scale_kernel(MollifierKernel(), z, 0.4)
        a = m1.pair(z, Symbol.NOISE, phi)
        b = m2.pair(z, Symbol.NOISE, phi)
        assert b == pytest.approx(3.0 * a, rel=1e-12)

    def test_sine_gordon_beta_zero_cos_noise_pairs_to_one(self):
        # at beta = 0 the cosine component is identically 1, so the sampled
        # pairing path must return exactly the calibrated mass
        lat = TorusLattice(32)
        sg = sample_sg_noise(lat, beta=0.0, reg=RegularizationSpec(0.5),
                             dt=0.01, T=0.6, seed=9)
        m = Model.from_sine_gordon(sg, renorm=np.zeros((2, 2)))
        z = _grid_point(lat, 0.55, 8, 8)
        phi = scale_kernel(MollifierKernel(), z, 0.5)
        assert m.pair(z, Symbol.NOISE, phi, i=0) == pytest.approx(1.0, rel=1e-12)
        assert m.pair(z, Symbol.NOISE, phi, i=1) == pytest.approx(0.0, abs=1e-12)


class TestStochasticOrders:
    def test_noise_pairing_sd_slope(self):
        # pooled across-seed standard deviation of <noise, phi^L_z>, fitted
        # log-log over dyadic L; spatial white noise targets slope -1
        n = 512
        lat = TorusLattice(n)
        reg = RegularizationSpec(1.0 / 128)
        from sspde.kernels import KernelTableFactory
        fac = KernelTableFactory(MollifierKernel(), lat)
        Ls = [2**-2, 2**-3, 2**-4]
        tabs = {L: fac.scaled(L) for L in Ls}
        rng = np.random.default_rng(0)
        bp = [(int(a), int(b)) for a, b in rng.integers(0, n, size=(16, 2))]
        vals = {L: [] for L in Ls}
        for r in range(24):
            noise = sample_gpam_noise(lat, reg, seed=777, realization=r)
            f = noise.field.values
            for L in Ls:
                c = tabs[L].correlate(f)
                vals[L].append([c[i, j] for i, j in bp])
        sds = [float(np.sqrt(np.mean(np.var(np.array(vals[L]), axis=0, ddof=1))))
               for L in Ls]
        slope = float(np.polyfit(np.log(Ls), np.log(sds), 1)[0])
        assert -1.3 <= slope <= -0.9

    def test_lolli_increment_exponent(self):
        n = 256
        lat = TorusLattice(n)
        h = lat.spacing
        reg = RegularizationSpec(1.0 / 64)
        lollis = [sample_gpam_noise(lat, reg, seed=777, realization=r)
                  .lolli_static.values for r in range(8)]
        rng = np.random.default_rng(1)
        dyads = (2**-1, 2**-2, 2**-3, 2**-4)
        rms, actual = [], []
        for d in dyads:
            cells = max(1, round(d / h))
            diffs = []
            for l in lollis:
                for _ in range(64):
                    i, j = rng.integers(0, n, 2)
                    if rng.integers(0, 2) == 0:
                        diffs.append(l[(i + cells) % n, j] - l[i, j])
                    else:
                        diffs.append(l[i, (j + cells) % n] - l[i, j])
            rms.append(float(np.sqrt(np.mean(np.square(diffs)))))
            actual.append(cells * h)
        expo = float(np.polyfit(np.log(actual), np.log(rms), 1)[0])
        assert 0.7 <= expo <= 1.05
