"""Base-point-indexed lift of a regularized noise over the five-symbol set,
with renormalization constants, exact change-of-base-point identities, and
kernel pairings.

Symbols: NOISE (the driving field itself), LOLLI (its heat potential,
recentred), X (torus-minimal polynomial increment), XNOISE (the product of
the two), DUMBBELL (recentred potential times noise, minus the
renormalization constant). Multi-noise families carry an index pair (i, j)
on the decorated symbols; the renormalization matrix rows follow the noise
factor and columns the potential factor.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .grid import (
    ParabolicPoint,
    SpaceTimeField,
    TorusLattice,
    heat_coefficients,
    spatial_distance,
    wrap_angle,
)
from .kernels import (
    AffineField,
    KernelTable,
    KernelTableFactory,
    ScaledKernel,
    pair_field_all,
)
from .noise import (
    GpamNoise,
    SineGordonNoise,
    WienerNoise,
    build_wiener_lolli,
    gpam_renorm_constant,
    wiener_renorm_constant,
)


class Symbol(Enum):
    NOISE = "noise"
    LOLLI = "lolli"
    X = "x"
    XNOISE = "xnoise"
    DUMBBELL = "dumbbell"


def homogeneity(symbol: Symbol, kappa: float) -> float:
    """Order assignment of each symbol for regularity-exponent kappa."""
    if not (0.0 < kappa < 1.0 / 3.0):
        raise ValueError(f"kappa must lie in (0, 1/3), got {kappa}")
    return {
        Symbol.NOISE: -1.0 - kappa,
        Symbol.LOLLI: 1.0 - kappa,
        Symbol.X: 1.0,
        Symbol.XNOISE: -kappa,
        Symbol.DUMBBELL: -2.0 * kappa,
    }[symbol]


# ---------------------------------------------------------------------------
# time-evaluable field handles


class TimePolyField:
    """Exact-in-time field handle backed by an affine-in-time expansion."""

    is_affine = True

    def __init__(self, affine: AffineField, t_min: float = 0.0,
                 t_max: float = np.inf):
        self.affine = affine
        self.t_min = float(t_min)
        self.t_max = float(t_max)

    @property
    def lattice(self):
        return self.affine.lattice

    def eval(self, t: float):
        return self.affine.eval(t)

    def value_at(self, z: ParabolicPoint) -> float:
        i, j = self.lattice.index_of(z.x1, z.x2)
        return float(self.eval(z.t)[i, j])

    def shift(self, c: float) -> "TimePolyField":
        a = self.affine
        return TimePolyField(AffineField(a.lattice, a.t_ref, a.F0 + c, a.F1),
                             self.t_min, self.t_max)

    def mul_static(self, arr) -> "TimePolyField":
        return TimePolyField(self.affine.mul_static(arr), self.t_min, self.t_max)

    def is_static(self) -> bool:
        return float(np.max(np.abs(self.affine.F1))) == 0.0


class SampledField:
    """Field handle backed by stored time slices (linear interpolation)."""

    is_affine = False

    def __init__(self, st: SpaceTimeField):
        self.st = st
        self.t_min = st.t0
        self.t_max = st.t_end

    @property
    def lattice(self):
        return self.st.lattice

    def eval(self, t: float):
        return self.st.at_time(t)

    def value_at(self, z: ParabolicPoint) -> float:
        i, j = self.lattice.index_of(z.x1, z.x2)
        return float(self.eval(z.t)[i, j])

    def shift(self, c: float) -> "SampledField":
        return SampledField(SpaceTimeField(self.st.lattice, self.st.t0,
                                           self.st.dt, self.st.data + c))

    def mul_static(self, arr) -> "SampledField":
        arr = np.asarray(arr, float)
        return SampledField(SpaceTimeField(self.st.lattice, self.st.t0,
                                           self.st.dt,
                                           self.st.data * arr[None, :, :]))

    def mul_sampled(self, other: "SampledField") -> "SampledField":
        a, b = self.st, other.st
        if a.data.shape != b.data.shape or a.t0 != b.t0 or a.dt != b.dt:
            raise ValueError("sampled fields must share their time comb")
        return SampledField(SpaceTimeField(a.lattice, a.t0, a.dt,
                                           a.data * b.data))


def _mul_handles(noise_h, pot_h):
    """Pointwise product of a noise handle and a potential handle."""
    if noise_h.is_affine and pot_h.is_affine:
        if not noise_h.is_static():
            raise ValueError("affine-times-affine product needs a static noise")
        prod = pot_h.affine.mul_static(noise_h.affine.F0)
        return TimePolyField(prod, pot_h.t_min, pot_h.t_max)
    if (not noise_h.is_affine) and (not pot_h.is_affine):
        return noise_h.mul_sampled(pot_h)
    # mixed: sample the affine one on the other's comb
    sampled, affine = (noise_h, pot_h) if not noise_h.is_affine else (pot_h, noise_h)
    st = sampled.st
    data = np.empty_like(st.data)
    for k in range(st.n_slices):
        data[k] = st.data[k] * affine.eval(st.times[k])
    return SampledField(SpaceTimeField(st.lattice, st.t0, st.dt, data))


def _heat_flow_from_zero(st: SpaceTimeField) -> SpaceTimeField:
    """Exponential-Euler heat flow driven by the stored slices, from zero
    initial data, on the same time comb."""
    lat = st.lattice
    E, W = heat_coefficients(lat, st.dt)
    data = np.zeros_like(st.data)
    lh = np.zeros((lat.n, lat.n), dtype=np.complex128)
    for j in range(st.n_slices - 1):
        lh = E * lh + W * np.fft.fft2(st.data[j])
        data[j + 1] = np.fft.ifft2(lh).real
    return SpaceTimeField(lat, st.t0, st.dt, data)


class Realization:
    """Realized symbol at a base point: one or two component field handles."""

    def __init__(self, components, symbol: Symbol):
        self.components = tuple(components)
        self.symbol = symbol

    @property
    def vector(self) -> bool:
        return len(self.components) == 2

    def eval(self, t: float):
        if self.vector:
            return np.stack([c.eval(t) for c in self.components])
        return self.components[0].eval(t)


# ---------------------------------------------------------------------------


class Model:
    """Immutable family of noises, potentials, and renormalization constants.

    renorm[i, j] pairs noise i with potential j (the expectation of their
    product, mollification held fixed).
    """

    def __init__(self, lattice: TorusLattice, noises, lollis, renorm,
                 kappa: float = 0.1, label: str = "custom"):
        if not (0.0 < kappa < 1.0 / 3.0):
            raise ValueError(f"kappa must lie in (0, 1/3), got {kappa}")
        if len(noises) != len(lollis) or not noises:
            raise ValueError("need equally many noises and potentials")
        renorm = np.atleast_2d(np.asarray(renorm, dtype=float))
        m = len(noises)
        if renorm.shape != (m, m):
            raise ValueError(f"renorm matrix must be {m}x{m}, got {renorm.shape}")
        self.lattice = lattice
        self.noises = list(noises)
        self.lollis = list(lollis)
        self.renorm = renorm
        self.kappa = float(kappa)
        self.label = label
        self._factories = {}

    @property
    def n_noises(self) -> int:
        return len(self.noises)

    def with_renorm(self, renorm) -> "Model":
        """Same fields, different constants (shares the field handles)."""
        return Model(self.lattice, self.noises, self.lollis, renorm,
                     self.kappa, self.label)

    # -- constructors per noise family --------------------------------------

    @classmethod
    def from_gpam(cls, noise: GpamNoise, kappa: float = 0.1,
                  renorm=None) -> "Model":
        lat = noise.lattice
        if renorm is None:
            renorm = [[gpam_renorm_constant(noise.reg)]]
        ones = np.ones((lat.n, lat.n))
        noise_h = TimePolyField(AffineField(lat, 0.0, noise.field.values))
        lolli_h = TimePolyField(
            AffineField(lat, 0.0, noise.lolli_static.values, noise.xi0 * ones))
        m = cls(lat, [noise_h], [lolli_h], renorm, kappa, label="gpam")
        m._gpam = noise
        return m

    @classmethod
    def from_sine_gordon(cls, noise: SineGordonNoise, renorm,
                         kappa: float = 0.1) -> "Model":
        lat = noise.lattice
        noises = [SampledField(noise.cos_noise), SampledField(noise.sin_noise)]
        lollis = [SampledField(_heat_flow_from_zero(f.st)) for f in noises]
        return cls(lat, noises, lollis, renorm, kappa, label="sine_gordon")

    @classmethod
    def from_wiener(cls, noise: WienerNoise, kappa: float = 0.1,
                    renorm=None) -> "Model":
        lat = noise.lattice
        if renorm is None:
            renorm = [[wiener_renorm_constant(noise.delta, noise.reg)]]
        data = np.empty((noise.n_steps + 1, lat.n, lat.n))
        for j in range(noise.n_steps):
            data[j] = noise.increment_field(j).values / noise.dt
        data[-1] = data[-2]  # step forcing held at its left endpoint
        noise_h = SampledField(SpaceTimeField(lat, 0.0, noise.dt, data))
        lolli_h = SampledField(build_wiener_lolli(noise))
        m = cls(lat, [noise_h], [lolli_h], renorm, kappa, label="wiener")
        m._wiener = noise
        return m

    # -- invariants ----------------------------------------------------------

    def heat_residual(self, i: int = 0) -> float:
        """Sup-norm residual of the potential's discrete heat relation."""
        noise_h, lolli_h = self.noises[i], self.lollis[i]
        if lolli_h.is_affine and noise_h.is_affine:
            # (d_t - Lap) lolli = noise, checked spectrally and exactly
            lat = self.lattice
            ksq = lat.k_squared()
            l0 = np.fft.fft2(lolli_h.affine.F0)
            slope = np.fft.fft2(lolli_h.affine.F1)
            xi = np.fft.fft2(noise_h.affine.F0)
            res = slope + ksq * l0 - xi
            return float(np.max(np.abs(np.fft.ifft2(res).real)))
        if hasattr(self, "_wiener"):
            return self._wiener.lolli_transition_defect()
        # sampled potential: one exponential-Euler step per stored slice
        st, ns = lolli_h.st, noise_h.st
        E, W = heat_coefficients(self.lattice, st.dt)
        worst = 0.0
        for j in range(st.n_slices - 1):
            pred = np.fft.ifft2(E * np.fft.fft2(st.data[j])
                                + W * np.fft.fft2(ns.data[j])).real
            worst = max(worst, float(np.max(np.abs(st.data[j + 1] - pred))))
        return worst

    # -- realization ---------------------------------------------------------

    def _x_increment(self, z: ParabolicPoint):
        self.lattice.index_of(z.x1, z.x2)  # raises off-grid
        c = self.lattice.coords
        dx1 = wrap_angle(c - z.x1)[:, None] + np.zeros((1, self.lattice.n))
        dx2 = wrap_angle(c - z.x2)[None, :] + np.zeros((self.lattice.n, 1))
        return dx1, dx2

    def realize(self, z: ParabolicPoint, symbol: Symbol, i: int = 0,
                j: int = 0) -> Realization:
        """The literal lifted field recentred at z (grid-aligned)."""
        self.lattice.index_of(z.x1, z.x2)
        if symbol is Symbol.NOISE:
            return Realization([self.noises[i]], symbol)
        if symbol is Symbol.LOLLI:
            li = self.lollis[i]
            return Realization([li.shift(-li.value_at(z))], symbol)
        if symbol is Symbol.X:
            dx1, dx2 = self._x_increment(z)
            lat = self.lattice
            return Realization(
                [TimePolyField(AffineField(lat, 0.0, dx1)),
                 TimePolyField(AffineField(lat, 0.0, dx2))], symbol)
        if symbol is Symbol.XNOISE:
            dx1, dx2 = self._x_increment(z)
            ni = self.noises[i]
            return Realization([ni.mul_static(dx1), ni.mul_static(dx2)], symbol)
        if symbol is Symbol.DUMBBELL:
            lj = self.lollis[j]
            centred = lj.shift(-lj.value_at(z))
            prod = _mul_handles(self.noises[i], centred)
            return Realization([prod.shift(-self.renorm[i, j])], symbol)
        raise ValueError(f"unknown symbol {symbol!r}")

    # -- change of base point -------------------------------------------------

    def _cbp_sample_times(self, handles):
        lo = max(h.t_min for h in handles)
        hi = min(h.t_max for h in handles)
        if not np.isfinite(hi):
            hi = lo + 2.0
        if hi < lo:
            raise ValueError("field handles have no common time range")
        return [lo + f * (hi - lo) for f in (0.0, 0.37, 1.0)]

    def cbp_residual(self, z: ParabolicPoint, w: ParabolicPoint,
                     symbol: Symbol, i: int = 0, j: int = 0) -> float:
        """Sup-norm residual of the change-of-base-point identity z <- w.

        Identities for X and XNOISE hold modulo full torus turns, so those
        residuals are evaluated on the window of points within max-norm
        spatial distance 1.5 of z, and z, w must sit within spatial
        distance 1 of each other.
        """
        at_z = self.realize(z, symbol, i, j)
        at_w = self.realize(w, symbol, i, j)
        local = symbol in (Symbol.X, Symbol.XNOISE)
        if local:
            if spatial_distance(z.x1, z.x2, w.x1, w.x2) > 1.0:
                raise ValueError(
                    "X-type identities need base points within distance 1")
            c = self.lattice.coords
            m1 = np.abs(wrap_angle(c - z.x1))[:, None]
            m2 = np.abs(wrap_angle(c - z.x2))[None, :]
            mask = np.maximum(m1, m2) <= 1.5
        else:
            mask = np.ones((self.lattice.n, self.lattice.n), dtype=bool)

        # correction term: (Pi_w tau')(z) times the lower-order realization
        def corrections():
            if symbol is Symbol.NOISE:
                return [None]
            if symbol is Symbol.LOLLI:
                lw = self.realize(w, Symbol.LOLLI, i, j)
                return [("const", lw.components[0].value_at(z))]
            if symbol is Symbol.X:
                xw = self.realize(w, Symbol.X, i, j)
                return [("const", xw.components[0].value_at(z)),
                        ("const", xw.components[1].value_at(z))]
            if symbol is Symbol.XNOISE:
                xw = self.realize(w, Symbol.X, i, j)
                return [("noise", xw.components[0].value_at(z)),
                        ("noise", xw.components[1].value_at(z))]
            if symbol is Symbol.DUMBBELL:
                lw = self.realize(w, Symbol.LOLLI, i=j, j=j)
                return [("noise", lw.components[0].value_at(z))]
            raise ValueError(f"unknown symbol {symbol!r}")

        handles = list(at_z.components) + list(at_w.components) + [self.noises[i]]
        worst = 0.0
        for comp_z, comp_w, corr in zip(at_z.components, at_w.components,
                                        corrections()):
            for t in self._cbp_sample_times(handles):
                diff = comp_z.eval(t) - comp_w.eval(t)
                if corr is not None:
                    kind, coeff = corr
                    if kind == "const":
                        diff = diff + coeff
                    else:
                        diff = diff + coeff * self.noises[i].eval(t)
                worst = max(worst, float(np.max(np.abs(diff[mask]))))
        return worst

    # -- pairing ---------------------------------------------------------------

    def _factory(self, kernel) -> KernelTableFactory:
        key = (kernel.at, kernel.a1, kernel.a2)
        if key not in self._factories:
            self._factories[key] = KernelTableFactory(kernel, self.lattice)
        return self._factories[key]

    def _table(self, scaled: ScaledKernel) -> KernelTable:
        return self._factory(scaled.kernel).scaled(scaled.L)

    def pair(self, z: ParabolicPoint, symbol: Symbol, kernel: ScaledKernel,
             i: int = 0, j: int = 0):
        """<realized symbol, kernel>; scalar, or a pair for vector symbols."""
        if (abs(kernel.z.t - z.t) > 1e-12
                or spatial_distance(kernel.z.x1, kernel.z.x2, z.x1, z.x2) > 1e-12):
            raise ValueError("kernel center must coincide with the base point")
        iz, jz = self.lattice.index_of(z.x1, z.x2)
        real = self.realize(z, symbol, i, j)
        vals = []
        for c in real.components:
            if c.is_affine:
                table = self._table(kernel)
                if z.t - table.time_radius < c.t_min - 1e-12:
                    raise ValueError(
                        f"kernel support [t-{table.time_radius:.4g}, t] exits "
                        f"the field's time range starting at {c.t_min:.4g}")
                res = pair_field_all(c.affine, table)
                vals.append(float(res.eval(z.t)[iz, jz]))
            else:
                vals.append(_pair_sampled(c.st, kernel, z))
        return tuple(vals) if real.vector else vals[0]


def _pair_sampled(st: SpaceTimeField, scaled: ScaledKernel,
                  z: ParabolicPoint) -> float:
    """Direct space-time quadrature of stored slices against the scaled bump:
    left-Riemann in time over the strictly-past slices inside the kernel's
    support, exact spatial sums per slice, then calibrated to unit discrete
    mass so constants pair to themselves exactly."""
    ker, L = scaled.kernel, scaled.L
    time_radius = (L * ker.at) ** 2
    if z.t - time_radius < st.t0 - 1e-12:
        raise ValueError(
            f"kernel support [t-{time_radius:.4g}, t] exits the stored time "
            f"range starting at {st.t0:.4g}")
    taus = st.times - z.t
    live = np.where((taus < 0.0) & (taus > -time_radius))[0]
    if len(live) == 0:
        raise ValueError("no stored slices inside the kernel's time support")
    lat = st.lattice
    h2 = lat.spacing ** 2
    dd1 = wrap_angle(lat.coords - z.x1)
    dd2 = wrap_angle(lat.coords - z.x2)
    stack = ker.value(taus[live, None, None] / L**2,
                      dd1[None, :, None] / L,
                      dd2[None, None, :] / L) / L**4
    mass = float(np.sum(stack)) * h2 * st.dt
    if mass <= 0.0:
        raise ValueError("kernel support resolves to zero discrete mass")
    return float(np.sum(stack * st.data[live])) * h2 * st.dt / mass
