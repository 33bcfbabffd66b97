"""Past-supported mollifier kernels, their parabolic rescalings, and the
semigroup family built by repeated self-convolution at halved scales.

The base profile is the parabolic bump

    K(tau, x) = c * exp(-1/(1 - s^2)),  s = max(sqrt(-tau), |x|),  tau < 0,

normalized to unit space-time mass, together with coordinate stretches of it
(time and space shrunk by factors <= 1) used to enrich sup-norm searches.

Pairings against lattice fields are represented by *time-moment tables*:
spatial arrays M0(dx) = int K dtau, M1(dx) = int tau K dtau, M2(dx) =
int tau^2 K dtau. Fields in the exact-identity paths are constant, affine, or
quadratic in time, so table pairings are exact in the time direction; the
moment tables of a convolution follow the Leibniz rule
M1(A*B) = M1A * M0B + M0A * M1B (etc.), which keeps every composed identity
an algebraic identity of the discrete objects.

Tables are calibrated so their discrete lattice mass is exactly 1 (a
1 + O(h^2) rescale); honest continuum mass checks use the reduced 1-d
quadratures below, which never see that calibration.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .grid import TorusLattice, wrap_angle


class CoarseGridError(ValueError):
    """Kernel scale too small for the evaluation lattice."""


MIN_CELLS = 2.0  # smallest admissible kernel radius, in lattice cells


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    flat = np.atleast_1d(s).astype(float)
    out = np.zeros_like(flat)
    inside = flat < 1.0
    si = flat[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out.reshape(s.shape)


def _bump_raw_deriv(s):
    s = np.asarray(s, dtype=float)
    flat = np.atleast_1d(s).astype(float)
    out = np.zeros_like(flat)
    inside = flat < 1.0
    si = flat[inside]
    om = 1.0 - si * si
    out[inside] = np.exp(-1.0 / om) * (-2.0 * si / (om * om))
    return out.reshape(s.shape)


@lru_cache(maxsize=1)
def _canonical_mass_levelset() -> float:
    # level-set reduction: vol{max(sqrt(-t),|x|) <= s} = pi s^4
    val, err = quad(lambda s: 4.0 * np.pi * s**3 * np.exp(-1.0 / (1.0 - s * s)),
                    0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    assert err < 1e-10
    return val


NORM_C0 = 1.0 / _canonical_mass_levelset()


@lru_cache(maxsize=1)
def _bump_cumulatives():
    """Dense cumulatives of v^p * bump(v) for p = 1, 3, 5 (table pairings)."""
    v = np.linspace(0.0, 1.0, 40001)
    g = _bump_raw(v)
    dv = v[1] - v[0]

    def cum(f):
        inc = 0.5 * (f[1:] + f[:-1]) * dv
        return np.concatenate([[0.0], np.cumsum(inc)])

    return v, cum(v * g), cum(v**3 * g), cum(v**5 * g)


def _cumulative(p: int, r):
    v, c1, c3, c5 = _bump_cumulatives()
    table = {1: c1, 3: c3, 5: c5}[p]
    return np.interp(np.clip(r, 0.0, 1.0), v, table)


class MollifierKernel:
    """Unit-mass past-supported bump, optionally stretched per coordinate.

    time_stretch at and space_stretch (a1, a2) shrink the support to
    sqrt(-tau) <= at, |x_j| <= a_j while keeping unit mass (the stretch
    Jacobian is absorbed into the normalization).
    """

    def __init__(self, time_stretch: float = 1.0, space_stretch=(1.0, 1.0)):
        at = float(time_stretch)
        a1, a2 = (float(a) for a in space_stretch)
        for a in (at, a1, a2):
            if not (0.0 < a <= 1.0):
                raise ValueError("stretch factors must lie in (0, 1]")
        self.at = at
        self.a1 = a1
        self.a2 = a2
        self.norm = NORM_C0 / (at * at * a1 * a2)

    def _s(self, tau, dx1, dx2):
        tau = np.asarray(tau, dtype=float)
        rho = np.hypot(np.asarray(dx1, float) / self.a1,
                       np.asarray(dx2, float) / self.a2)
        s_time = np.where(tau < 0.0, np.sqrt(np.maximum(-tau, 0.0)) / self.at,
                          np.inf)
        return np.maximum(s_time, rho)

    def value(self, tau, dx1, dx2):
        """Kernel value at displacement (tau, dx); zero unless tau < 0."""
        return self.norm * _bump_raw(self._s(tau, dx1, dx2))

    def gradient(self, tau, dx1, dx2):
        """Spatial gradient (d/d dx1, d/d dx2); nonzero only where the
        spatial radius exceeds the time radius (the s = rho branch)."""
        tau = np.asarray(tau, dtype=float)
        x1 = np.asarray(dx1, float) / self.a1
        x2 = np.asarray(dx2, float) / self.a2
        rho = np.hypot(x1, x2)
        tpart = np.where(tau < 0.0, np.sqrt(np.maximum(-tau, 0.0)) / self.at,
                         np.inf)
        active = (rho > tpart) & (rho > 0) & (rho < 1.0)
        gp = np.where(active, _bump_raw_deriv(np.where(active, rho, 0.5)), 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit1 = np.where(active, x1 / np.where(rho > 0, rho, 1.0), 0.0)
            unit2 = np.where(active, x2 / np.where(rho > 0, rho, 1.0), 0.0)
        g1 = self.norm * gp * unit1 / self.a1
        g2 = self.norm * gp * unit2 / self.a2
        return g1, g2

    def sup_value(self) -> float:
        return self.norm * np.exp(-1.0)

    def mass_quadrature(self) -> float:
        """Unit-mass check via the time-slice reduction (independent of the
        level-set integral used to fix the normalization constant)."""

        def slice_area(q):  # spatial integral of the slice sqrt(-tau) = q*at
            inner = 0.5 * q * q * _bump_raw(np.array([q]))[0]
            tail, _ = quad(lambda r: r * _bump_raw(np.array([r]))[0], q, 1.0,
                           epsabs=1e-13, epsrel=1e-12)
            return 2.0 * np.pi * (inner + tail)

        val, _ = quad(lambda q: 2.0 * q * slice_area(q), 0.0, 1.0,
                      epsabs=1e-12, epsrel=1e-11)
        # the stretch Jacobian at^2 * a1 * a2 multiplies the canonical value
        return self.norm * self.at**2 * self.a1 * self.a2 * val


def ibp_spatial_moment(kernel: MollifierKernel, j: int = 0) -> float:
    """int (d/dx_j K)(tau, x) * x_j dtau dx, by direct reduced quadrature.

    Integration by parts predicts exactly -1 (minus the kernel mass); the
    reduced integrand here evaluates the derivative formula directly, so the
    comparison is a genuine two-route identity check.
    """
    at = kernel.at

    def integrand(r):
        # time extent of the s = rho branch is (at r)^2; the angular average
        # of x_j^2 over the circle of radius r contributes pi r^3
        return np.pi * r**4 * _bump_raw_deriv(np.array([r]))[0]

    val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    # stretch factors in x_j and d/dx_j cancel; the time extent carries at^2
    return kernel.norm * kernel.a1 * kernel.a2 * at**2 * val


def kernel_family():
    """Canonical bump plus three anisotropic stretches.

    Semi-norm suprema over test functions are approximated from below by
    maximizing over this fixed family; estimates quoted from it are lower
    bounds of the true sup.
    """
    return [
        MollifierKernel(),
        MollifierKernel(time_stretch=0.6),
        MollifierKernel(space_stretch=(0.7, 0.7)),
        MollifierKernel(space_stretch=(0.9, 0.6)),
    ]


class ScaledKernel:
    """phi_z^L: the mollifier recentered at z and parabolically rescaled,
    phi_z^L(w) = L^{-4} K((t_w - t_z)/L^2, (x_w - x_z)/L)."""

    def __init__(self, kernel: MollifierKernel, z, L: float):
        if not (L > 0):
            raise ValueError(f"scale L must be positive, got {L}")
        self.kernel = kernel
        self.z = z
        self.L = float(L)

    def value(self, t, x1, x2):
        zz = self.z
        tau = (np.asarray(t, float) - zz.t) / self.L**2
        d1 = wrap_angle(np.asarray(x1, float) - zz.x1) / self.L
        d2 = wrap_angle(np.asarray(x2, float) - zz.x2) / self.L
        return self.kernel.value(tau, d1, d2) / self.L**4

    def mass_quadrature(self) -> float:
        # the parabolic rescaling has unit Jacobian against L^{-4}
        return self.kernel.mass_quadrature()

    def sup_value(self) -> float:
        return self.kernel.sup_value() / self.L**4


def scale_kernel(kernel: MollifierKernel, z, L: float) -> ScaledKernel:
    """Recenter and parabolically rescale a mollifier (mass preserved)."""
    return ScaledKernel(kernel, z, L)


# ---------------------------------------------------------------------------
# time-moment tables on an evaluation lattice


def _rfft2(a):
    return np.fft.rfft2(a)


def _corr(field, table_rfft, n, h):
    F = np.fft.rfft2(field)
    return np.fft.irfft2(F * np.conj(table_rfft), s=(n, n)) * h * h


def _conv(a_rfft, b_rfft, n, h):
    return np.fft.irfft2(a_rfft * b_rfft, s=(n, n)) * h * h


class KernelTable:
    """Discrete pairing representation of a past-supported kernel.

    Arrays are indexed by lattice displacement (row 0 = zero offset); the
    kernel must fit strictly inside the torus (supports here are < 1 << pi).
    """

    def __init__(self, lattice: TorusLattice, M0, M1, M2, *, raw_mass,
                 space_radius, time_radius, label=""):
        self.lattice = lattice
        self.M0 = M0
        self.M1 = M1
        self.M2 = M2
        self.raw_mass = raw_mass
        self.space_radius = space_radius
        self.time_radius = time_radius
        self.label = label
        self._rf = {}

    @property
    def h(self) -> float:
        return self.lattice.spacing

    def moment_rfft(self, p: int, weight_axis=None):
        """Cached rfft2 of M_p, optionally weighted by the displacement
        coordinate along weight_axis (for pairings against fields that carry
        an explicit factor of the recentred polynomial)."""
        key = (p, weight_axis)
        if key not in self._rf:
            arr = [self.M0, self.M1, self.M2][p]
            if weight_axis is not None:
                d = wrap_angle(self.lattice.coords)
                w = d[:, None] if weight_axis == 0 else d[None, :]
                arr = arr * w
            self._rf[key] = _rfft2(arr)
        return self._rf[key]

    def discrete_mass(self) -> float:
        return float(np.sum(self.M0)) * self.h**2

    # -- constructors -------------------------------------------------------

    @classmethod
    def delta(cls, lattice: TorusLattice) -> "KernelTable":
        n = lattice.n
        M0 = np.zeros((n, n))
        M0[0, 0] = 1.0 / lattice.spacing**2
        Z = np.zeros((n, n))
        return cls(lattice, M0, Z.copy(), Z.copy(), raw_mass=1.0,
                   space_radius=0.0, time_radius=0.0, label="delta")

    @classmethod
    def from_scaled(cls, kernel: MollifierKernel, L: float,
                    lattice: TorusLattice, normalize: bool = True):
        n, h = lattice.n, lattice.spacing
        if L < MIN_CELLS * h:
            raise CoarseGridError(
                f"kernel scale L={L:.5g} under {MIN_CELLS} cells on lattice "
                f"n={n} (h={h:.5g})"
            )
        if L * max(kernel.a1, kernel.a2) >= np.pi:
            raise ValueError("kernel support does not fit inside the torus")
        d = wrap_angle(lattice.coords)
        dx1 = d[:, None] / (L * kernel.a1)
        dx2 = d[None, :] / (L * kernel.a2)
        rho = np.hypot(dx1, dx2)
        at = kernel.at
        g = _bump_raw(rho)
        # closed-form time moments on the s = rho branch plus cumulative
        # lookups on the time-dominated branch (see module docstring)
        c1 = _cumulative(1, np.ones_like(rho)) - _cumulative(1, rho)
        c3 = _cumulative(3, np.ones_like(rho)) - _cumulative(3, rho)
        c5 = _cumulative(5, np.ones_like(rho)) - _cumulative(5, rho)
        norm = kernel.norm
        m0 = norm * (at**2 * rho**2 * g + 2.0 * at**2 * c1)
        m1 = norm * (-(at**4) * rho**4 / 2.0 * g - 2.0 * at**4 * c3)
        m2 = norm * (at**6 * rho**6 / 3.0 * g + 2.0 * at**6 * c5)
        live = rho < 1.0
        M0 = np.where(live, m0, 0.0) / L**2
        M1 = np.where(live, m1, 0.0)
        M2 = np.where(live, m2, 0.0) * L**2
        raw = float(np.sum(M0)) * h**2
        if normalize:
            M0, M1, M2 = M0 / raw, M1 / raw, M2 / raw
        return cls(lattice, M0, M1, M2, raw_mass=raw,
                   space_radius=L * max(kernel.a1, kernel.a2),
                   time_radius=(L * at) ** 2,
                   label=f"bump(L={L:.4g})")

    def compose(self, other: "KernelTable") -> "KernelTable":
        """Moment tables of the space-time convolution self * other."""
        if self.lattice != other.lattice:
            raise ValueError("lattice mismatch in kernel composition")
        n, h = self.lattice.n, self.h
        a0, a1, a2 = (self.moment_rfft(p) for p in range(3))
        b0, b1, b2 = (other.moment_rfft(p) for p in range(3))
        M0 = _conv(a0, b0, n, h)
        M1 = _conv(a1, b0, n, h) + _conv(a0, b1, n, h)
        M2 = _conv(a2, b0, n, h) + 2.0 * _conv(a1, b1, n, h) + _conv(a0, b2, n, h)
        return KernelTable(
            self.lattice, M0, M1, M2,
            raw_mass=self.raw_mass * other.raw_mass,
            space_radius=self.space_radius + other.space_radius,
            time_radius=self.time_radius + other.time_radius,
            label=f"({self.label}*{other.label})",
        )

    # -- pairings -----------------------------------------------------------

    def correlate(self, field, p: int = 0, weight_axis=None):
        """sum_x field(x) M_p(x - z) h^2 for every center z (an array).

        With weight_axis=j the kernel table is premultiplied by the wrapped
        displacement component (x - z)_j, which turns the correlation into
        the pairing of `field * (recentred coordinate)_j` with the kernel.
        """
        return _corr(np.asarray(field, float),
                     self.moment_rfft(p, weight_axis),
                     self.lattice.n, self.h)


class GradientKernelTable:
    """Time moments of the spatial kernel gradient (closed form).

    With normalize=True (default) each axis is calibrated so the discrete
    first moment equals its continuum value -1 exactly -- the gradient-table
    analogue of unit-mass calibration for value tables: affine functions then
    pair to their exact derivatives.  The raw (uncalibrated) moment is kept
    in raw_first_moment for convergence checks.
    """

    def __init__(self, kernel: MollifierKernel, L: float,
                 lattice: TorusLattice, normalize: bool = True):
        n, h = lattice.n, lattice.spacing
        if L < MIN_CELLS * h:
            raise CoarseGridError(
                f"kernel scale L={L:.5g} under {MIN_CELLS} cells (h={h:.5g})"
            )
        d = wrap_angle(lattice.coords)
        x1, x2 = np.meshgrid(d / (L * kernel.a1), d / (L * kernel.a2),
                             indexing="ij")
        rho = np.hypot(x1, x2)
        at = kernel.at
        gp = _bump_raw_deriv(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            u1 = np.where(rho > 0, x1 / np.where(rho > 0, rho, 1.0), 0.0)
            u2 = np.where(rho > 0, x2 / np.where(rho > 0, rho, 1.0), 0.0)
        # the gradient lives on the s = rho branch, whose time extent is
        # (at rho)^2; time moments there are closed-form
        base = kernel.norm * gp
        ext = at**2 * rho**2
        m0_1 = base * u1 / kernel.a1 * ext
        m0_2 = base * u2 / kernel.a2 * ext
        m1_1 = base * u1 / kernel.a1 * (-(at**4) * rho**4 / 2.0)
        m1_2 = base * u2 / kernel.a2 * (-(at**4) * rho**4 / 2.0)
        live = rho < 1.0
        self.lattice = lattice
        # scaling: gradient of phi^L carries L^{-5}, times dtau ~ L^2, dx ~ L
        self.G0 = [np.where(live, m0_1, 0.0) / L**3,
                   np.where(live, m0_2, 0.0) / L**3]
        self.G1 = [np.where(live, m1_1, 0.0) / L,
                   np.where(live, m1_2, 0.0) / L]
        self.space_radius = L * max(kernel.a1, kernel.a2)
        self.time_radius = (L * at) ** 2
        self._rf = {}
        self.raw_first_moment = tuple(self.ibp_discrete_moment(j)
                                      for j in (0, 1))
        if normalize:
            for j in (0, 1):
                if self.raw_first_moment[j] >= 0.0:
                    raise CoarseGridError(
                        f"gradient table degenerate at L={L:.5g} "
                        f"(first moment {self.raw_first_moment[j]:.3g})")
                c = -1.0 / self.raw_first_moment[j]
                self.G0[j] = self.G0[j] * c
                self.G1[j] = self.G1[j] * c

    @property
    def h(self) -> float:
        return self.lattice.spacing

    def moment_rfft(self, j: int, p: int):
        if (j, p) not in self._rf:
            self._rf[(j, p)] = _rfft2([self.G0, self.G1][p][j])
        return self._rf[(j, p)]

    def correlate(self, field, j: int, p: int = 0):
        return _corr(np.asarray(field, float), self.moment_rfft(j, p),
                     self.lattice.n, self.h)

    def zero_sum_defect(self) -> float:
        h2 = self.h**2
        return max(abs(float(np.sum(self.G0[0]))) * h2,
                   abs(float(np.sum(self.G0[1]))) * h2)

    def ibp_discrete_moment(self, j: int) -> float:
        """sum_dx G0_j(dx) * dx_j * h^2 (discrete partner of -1)."""
        d = wrap_angle(self.lattice.coords)
        dxj = d[:, None] + 0.0 * d[None, :] if j == 0 else d[None, :] + 0.0 * d[:, None]
        return float(np.sum(self.G0[j] * dxj)) * self.h**2


# ---------------------------------------------------------------------------
# semigroup kernels: phi^{L,n} = psi^{L/2} * phi^{L/2, n-1}, phi^{L,0} = delta


class SemigroupKernel:
    def __init__(self, table: KernelTable, L: float, depth: int):
        self.table = table
        self.L = float(L)
        self.depth = int(depth)

    @property
    def lattice(self):
        return self.table.lattice


class KernelTableFactory:
    """Caches scaled-bump tables and semigroup compositions per lattice."""

    def __init__(self, kernel: MollifierKernel, lattice: TorusLattice):
        self.kernel = kernel
        self.lattice = lattice
        self._scaled = {}
        self._semi = {}

    def _key(self, L):
        return round(float(L), 12)

    def scaled(self, L: float) -> KernelTable:
        k = self._key(L)
        if k not in self._scaled:
            self._scaled[k] = KernelTable.from_scaled(self.kernel, L, self.lattice)
        return self._scaled[k]

    def semigroup(self, L: float, depth: int) -> KernelTable:
        if depth < 0:
            raise ValueError("depth must be >= 0")
        key = (self._key(L), depth)
        if key not in self._semi:
            if depth == 0:
                self._semi[key] = KernelTable.delta(self.lattice)
            else:
                piece = self.scaled(L / 2.0)
                rest = self.semigroup(L / 2.0, depth - 1)
                self._semi[key] = piece.compose(rest)
        return self._semi[key]

    def max_resolvable_depth(self, L: float, cap: int) -> int:
        """Largest depth whose finest piece stays >= MIN_CELLS lattice cells."""
        h = self.lattice.spacing
        d = 0
        while d < cap and L / 2.0 ** (d + 1) >= MIN_CELLS * h:
            d += 1
        return d


def semigroup_kernel(kernel: MollifierKernel, L: float, n: int,
                     lattice: TorusLattice) -> SemigroupKernel:
    """Depth-n semigroup kernel at scale L on the given lattice.

    Raises CoarseGridError when the finest constituent bump (scale L/2^n)
    falls below the lattice resolution floor.
    """
    if n < 1:
        raise ValueError("semigroup depth must be >= 1")
    factory = KernelTableFactory(kernel, lattice)
    if L / 2.0**n < MIN_CELLS * lattice.spacing:
        raise CoarseGridError(
            f"depth-{n} piece at scale {L / 2.0**n:.5g} under "
            f"{MIN_CELLS} cells (h={lattice.spacing:.5g})"
        )
    return SemigroupKernel(factory.semigroup(L, n), L, n)


# ---------------------------------------------------------------------------
# time-polynomial fields (exact companions of the moment tables)


class AffineField:
    """Field affine in time: value(t) = F0 + F1 * (t - t_ref)."""

    def __init__(self, lattice: TorusLattice, t_ref: float, F0, F1=None):
        self.lattice = lattice
        self.t_ref = float(t_ref)
        self.F0 = np.asarray(F0, dtype=float)
        self.F1 = (np.zeros_like(self.F0) if F1 is None
                   else np.asarray(F1, dtype=float))
        if self.F0.shape != (lattice.n, lattice.n) or self.F1.shape != self.F0.shape:
            raise ValueError("field arrays must be (n, n)")

    @classmethod
    def constant(cls, lattice, values):
        return cls(lattice, 0.0, values)

    def eval(self, t: float):
        return self.F0 + self.F1 * (t - self.t_ref)

    def shift_ref(self, t_new: float) -> "AffineField":
        return AffineField(self.lattice, t_new, self.eval(t_new), self.F1)

    def scale(self, c: float) -> "AffineField":
        return AffineField(self.lattice, self.t_ref, self.F0 * c, self.F1 * c)

    def mul_static(self, values) -> "AffineField":
        v = np.asarray(values, float)
        return AffineField(self.lattice, self.t_ref, self.F0 * v, self.F1 * v)

    def add(self, other: "AffineField") -> "AffineField":
        o = other.shift_ref(self.t_ref)
        return AffineField(self.lattice, self.t_ref, self.F0 + o.F0, self.F1 + o.F1)

    def mul_affine(self, other: "AffineField") -> "QuadraticField":
        o = other.shift_ref(self.t_ref)
        return QuadraticField(
            self.lattice, self.t_ref,
            self.F0 * o.F0,
            self.F0 * o.F1 + self.F1 * o.F0,
            self.F1 * o.F1,
        )


class QuadraticField:
    """Field quadratic in time: F0 + F1*(t-t_ref) + F2*(t-t_ref)^2."""

    def __init__(self, lattice, t_ref, F0, F1, F2):
        self.lattice = lattice
        self.t_ref = float(t_ref)
        self.F0 = np.asarray(F0, float)
        self.F1 = np.asarray(F1, float)
        self.F2 = np.asarray(F2, float)

    def eval(self, t: float):
        dt = t - self.t_ref
        return self.F0 + self.F1 * dt + self.F2 * dt * dt

    def add(self, other) -> "QuadraticField":
        o = other if isinstance(other, QuadraticField) else QuadraticField(
            other.lattice, other.t_ref, other.F0, other.F1, 0.0 * other.F0)
        dt = o.t_ref - self.t_ref
        # re-expand other around self.t_ref
        F0 = o.F0 - o.F1 * dt + o.F2 * dt * dt
        F1 = o.F1 - 2.0 * o.F2 * dt
        F2 = o.F2
        return QuadraticField(self.lattice, self.t_ref,
                              self.F0 + F0, self.F1 + F1, self.F2 + F2)

    def scale(self, c: float) -> "QuadraticField":
        return QuadraticField(self.lattice, self.t_ref, self.F0 * c,
                              self.F1 * c, self.F2 * c)


def pair_field_all(field, table: KernelTable):
    """Pair a time-polynomial field against the kernel recentered at every
    lattice point, as a function of the center's time: returns a field of the
    same polynomial degree whose arrays are the pairing coefficients.

    <field, K_w> with w = (s, y): substituting t = s + tau and expanding in
    powers of (s - t_ref) routes each power of tau into the matching moment
    table; the result is exact for polynomial-in-time fields.
    """
    if isinstance(field, AffineField):
        G0 = table.correlate(field.F0, 0) + table.correlate(field.F1, 1)
        G1 = table.correlate(field.F1, 0)
        return AffineField(field.lattice, field.t_ref, G0, G1)
    if isinstance(field, QuadraticField):
        G0 = (table.correlate(field.F0, 0) + table.correlate(field.F1, 1)
              + table.correlate(field.F2, 2))
        G1 = (table.correlate(field.F1, 0)
              + 2.0 * table.correlate(field.F2, 1))
        G2 = table.correlate(field.F2, 0)
        return QuadraticField(field.lattice, field.t_ref, G0, G1, G2)
    raise TypeError(f"cannot pair field of type {type(field)!r}")


def pair_field_all_weighted(field, table: KernelTable, axis: int):
    """Like pair_field_all, but the integrand carries an extra factor of the
    recentred spatial coordinate (x - z)_axis: pairs `field * (x-z)_axis`
    against the kernel at every center."""
    if not isinstance(field, AffineField):
        raise TypeError("weighted pairing implemented for affine fields")
    G0 = (table.correlate(field.F0, 0, weight_axis=axis)
          + table.correlate(field.F1, 1, weight_axis=axis))
    G1 = table.correlate(field.F1, 0, weight_axis=axis)
    return AffineField(field.lattice, field.t_ref, G0, G1)


def pair_gradient_all(field, gtab: GradientKernelTable, j: int):
    """Pair a time-polynomial field against the base-point gradient of the
    recentered kernel, for every center.

    The kernel enters pairings as K(w - z); its derivative in the center
    coordinate z_j is minus the derivative in the displacement, so the
    correlation against the displacement-gradient tables picks up a sign.
    """
    if not isinstance(field, AffineField):
        raise TypeError("gradient pairing implemented for affine fields")
    G0 = gtab.correlate(field.F0, j, 0) + gtab.correlate(field.F1, j, 1)
    G1 = gtab.correlate(field.F1, j, 0)
    return AffineField(field.lattice, field.t_ref, -G0, -G1)


def pair_field_at(field, table: KernelTable, z) -> float:
    """<field, K_z> for a single space-time center z (grid-aligned)."""
    res = pair_field_all(field, table)
    i, j = field.lattice.index_of(z.x1, z.x2)
    return float(res.eval(z.t)[i, j])
