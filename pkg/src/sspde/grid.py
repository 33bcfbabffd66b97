"""Torus lattices, parabolic space-time points, and spectral transforms.

Geometry conventions used across the package:

* space is the flat 2-torus [-pi, pi)^2 sampled on an n x n lattice with
  nodes x_j = j * (2*pi/n), coordinates wrapped to (-pi, pi];
* Fourier coefficients follow u_hat(k) = (2*pi)^{-2} * <u, exp(-i k.x)>,
  which on the lattice is exactly numpy's fft2 divided by n^2;
* space-time points carry a time t >= 0 and the parabolic distance
  d(z, w) = max(sqrt(|t_z - t_w|), |x_z - x_w|_torus).
"""

from __future__ import annotations

import dataclasses
import io
import os
import tempfile

import numpy as np

SPATIAL_DIM = 2

TWO_PI = 2.0 * np.pi


def wrap_angle(x):
    """Map coordinates/displacements to the fundamental domain (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi
    # mod gives [-pi, pi); fold the left endpoint onto +pi
    y = np.where(y == -np.pi, np.pi, y)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(y)
    return y


class TorusLattice:
    """Uniform n x n sampling of the 2-torus (n even, n >= 8)."""

    def __init__(self, n_spatial: int):
        n = int(n_spatial)
        if n < 8 or n % 2 != 0:
            raise ValueError(f"n_spatial must be even and >= 8, got {n_spatial}")
        self.n = n
        self.spacing = TWO_PI / n
        self.coords = wrap_angle(np.arange(n) * self.spacing)
        self.wavenumbers = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
        k1, k2 = np.meshgrid(self.wavenumbers, self.wavenumbers, indexing="ij")
        self._k1 = k1
        self._k2 = k2
        self._ksq = (k1 * k1 + k2 * k2).astype(np.float64)

    def k_meshes(self):
        return self._k1, self._k2

    def k_squared(self):
        return self._ksq

    def index_of(self, x1: float, x2: float, tol: float = 1e-9):
        """Indices of the lattice node at (x1, x2); error if off-grid."""
        out = []
        for x in (x1, x2):
            j = np.mod(np.round(wrap_angle(x) / self.spacing), self.n)
            if abs(wrap_angle(x) - wrap_angle(j * self.spacing)) > tol:
                raise ValueError(f"coordinate {x} is not a lattice node (n={self.n})")
            out.append(int(j))
        return tuple(out)

    def __eq__(self, other):
        return isinstance(other, TorusLattice) and other.n == self.n

    def __hash__(self):
        return hash(("TorusLattice", self.n))

    def __repr__(self):
        return f"TorusLattice(n={self.n})"


@dataclasses.dataclass(frozen=True)
class ParabolicPoint:
    """A space-time point (t, x) with t >= 0 and x on the torus."""

    t: float
    x1: float
    x2: float

    def __post_init__(self):
        if not (self.t >= 0.0):
            raise ValueError(f"time must be >= 0, got {self.t}")
        object.__setattr__(self, "x1", wrap_angle(self.x1))
        object.__setattr__(self, "x2", wrap_angle(self.x2))

    @property
    def x(self):
        return np.array([self.x1, self.x2])


def torus_displacement(x1a, x2a, x1b, x2b):
    """Wrapped displacement (a - b) componentwise, each in (-pi, pi]."""
    return wrap_angle(x1a - x1b), wrap_angle(x2a - x2b)


def spatial_distance(x1a, x2a, x1b, x2b):
    d1, d2 = torus_displacement(x1a, x2a, x1b, x2b)
    return float(np.hypot(d1, d2))


def parabolic_distance(p: ParabolicPoint, q: ParabolicPoint) -> float:
    """max(sqrt(|dt|), torus |dx|): the anisotropic space-time metric."""
    return max(
        float(np.sqrt(abs(p.t - q.t))),
        spatial_distance(p.x1, p.x2, q.x1, q.x2),
    )


def in_past_ball(center: ParabolicPoint, radius: float, query: ParabolicPoint) -> bool:
    """Whether `query` lies strictly in the past part of the parabolic ball.

    Requires parabolic distance < radius AND query.t strictly below center.t;
    a point at the center's own time is never in its past ball.
    """
    if not (query.t < center.t):
        return False
    return parabolic_distance(center, query) < radius


class GridField:
    """Real scalar field sampled on a torus lattice."""

    def __init__(self, lattice: TorusLattice, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (lattice.n, lattice.n):
            raise ValueError(
                f"values shape {values.shape} does not match lattice n={lattice.n}"
            )
        self.lattice = lattice
        self.values = values

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __add__(self, other):
        _require_same_lattice(self, other)
        return GridField(self.lattice, self.values + other.values)

    def __sub__(self, other):
        _require_same_lattice(self, other)
        return GridField(self.lattice, self.values - other.values)

    def __mul__(self, scalar):
        return GridField(self.lattice, self.values * float(scalar))

    __rmul__ = __mul__


class SpectralField:
    """Complex Fourier coefficients of a real field (Hermitian symmetric)."""

    def __init__(self, lattice: TorusLattice, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (lattice.n, lattice.n):
            raise ValueError(
                f"coeffs shape {coeffs.shape} does not match lattice n={lattice.n}"
            )
        self.lattice = lattice
        self.coeffs = coeffs

    def hermitian_defect(self) -> float:
        """sup |c(-k) - conj(c(k))|; zero for coefficients of a real field."""
        n = self.lattice.n
        idx = (-np.arange(n)) % n
        flipped = self.coeffs[np.ix_(idx, idx)]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))


def _require_same_lattice(a, b):
    if a.lattice != b.lattice:
        raise ValueError(f"lattice mismatch: {a.lattice} vs {b.lattice}")


def fft_forward(field: GridField) -> SpectralField:
    """Forward transform under the (2*pi)^{-2} inner-product convention."""
    n = field.lattice.n
    return SpectralField(field.lattice, np.fft.fft2(field.values) / (n * n))


def fft_inverse(spec: SpectralField, imag_tol: float = 1e-9) -> GridField:
    n = spec.lattice.n
    w = np.fft.ifft2(spec.coeffs) * (n * n)
    scale = 1.0 + np.max(np.abs(w.real))
    if np.max(np.abs(w.imag)) > imag_tol * scale:
        raise ValueError(
            "coefficients are not Hermitian symmetric: inverse transform is not real"
        )
    return GridField(spec.lattice, w.real)


def field_from_modes(lattice: TorusLattice, modes: dict) -> GridField:
    """Real field sum_k c_k e^{i k.x} from {(k1, k2): c_k}; conjugates filled in."""
    n = lattice.n
    coeffs = np.zeros((n, n), dtype=np.complex128)
    for (k1, k2), c in modes.items():
        if not (abs(k1) <= n // 2 and abs(k2) <= n // 2):
            raise ValueError(f"mode {(k1, k2)} out of range for n={n}")
        coeffs[k1 % n, k2 % n] += c
        coeffs[(-k1) % n, (-k2) % n] += np.conj(c)
    # each mode was planted together with its conjugate; self-conjugate slots
    # (the zero and Nyquist modes) got both halves, so take the half-sum back out
    self_conj = _self_conjugate_mask(n)
    coeffs[self_conj] /= 2.0
    return fft_inverse(SpectralField(lattice, coeffs))


def _self_conjugate_mask(n):
    idx = np.arange(n)
    own = (idx == (-idx) % n)
    return np.logical_and.outer(own, own)


def spectral_gradient(field: GridField):
    """(d/dx1 u, d/dx2 u) by spectral differentiation (Nyquist row dropped)."""
    lat = field.lattice
    n = lat.n
    c = np.fft.fft2(field.values)
    k1, k2 = lat.k_meshes()
    # the Nyquist mode has no well-defined odd derivative on the real grid
    live1 = np.where(np.abs(k1) == n // 2, 0, k1)
    live2 = np.where(np.abs(k2) == n // 2, 0, k2)
    g1 = np.fft.ifft2(1j * live1 * c).real
    g2 = np.fft.ifft2(1j * live2 * c).real
    return GridField(lat, g1), GridField(lat, g2)


def upsample(field: GridField, n_fine: int) -> GridField:
    """Evaluate a band-limited field exactly on a finer lattice.

    Zero-pads the spectrum (trigonometric interpolation is exact for
    band-limited data, i.e. this is evaluation, not approximation).
    """
    n = field.lattice.n
    if n_fine == n:
        return GridField(field.lattice, field.values.copy())
    if n_fine < n or n_fine % 2 != 0:
        raise ValueError(f"n_fine must be an even integer >= {n}, got {n_fine}")
    c = np.fft.fft2(field.values) / (n * n)
    fine = np.zeros((n_fine, n_fine), dtype=np.complex128)
    half = n // 2
    k_src = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    # Nyquist weight is split between +n/2 and -n/2 on the fine lattice
    src_rows = []
    for i, k1 in enumerate(k_src):
        for k1t, w1 in _nyquist_targets(k1, half, 1.0):
            src_rows.append((i, k1t % n_fine, w1))
    src_cols = []
    for j, k2 in enumerate(k_src):
        for k2t, w2 in _nyquist_targets(k2, half, 1.0):
            src_cols.append((j, k2t % n_fine, w2))
    for i, it, w1 in src_rows:
        for j, jt, w2 in src_cols:
            fine[it, jt] += c[i, j] * w1 * w2
    vals = np.fft.ifft2(fine) * (n_fine * n_fine)
    return GridField(TorusLattice(n_fine), vals.real)


def _nyquist_targets(k, half, w):
    if abs(k) == half:
        return [(half, 0.5 * w), (-half, 0.5 * w)]
    return [(k, w)]


class SpaceTimeField:
    """Uniformly time-sliced real field on [t0, t0 + (n_slices-1)*dt]."""

    def __init__(self, lattice: TorusLattice, t0: float, dt: float, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3 or data.shape[1:] != (lattice.n, lattice.n):
            raise ValueError(f"data shape {data.shape} invalid for n={lattice.n}")
        if data.shape[0] < 1:
            raise ValueError("need at least one time slice")
        if not (dt > 0):
            raise ValueError(f"dt must be positive, got {dt}")
        self.lattice = lattice
        self.t0 = float(t0)
        self.dt = float(dt)
        self.data = data

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n_slices - 1) * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_slices)

    def slice(self, i: int) -> GridField:
        return GridField(self.lattice, self.data[i])

    def at_time(self, t: float) -> np.ndarray:
        """Values at time t, linear interpolation between stored slices."""
        s = (t - self.t0) / self.dt
        tol = 1e-9
        if s < -tol or s > self.n_slices - 1 + tol:
            raise ValueError(f"time {t} outside stored range [{self.t0}, {self.t_end}]")
        s = min(max(s, 0.0), float(self.n_slices - 1))
        i0 = int(np.floor(s))
        i1 = min(i0 + 1, self.n_slices - 1)
        lam = s - i0
        return (1.0 - lam) * self.data[i0] + lam * self.data[i1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.data)))


# ---------------------------------------------------------------------------
# binary dump format: one ASCII header line, then row-major float64 LE slices

_MAGIC = "SSPDE1"


def dump_spacetime(field: SpaceTimeField, path: str):
    header = f"{_MAGIC} {field.lattice.n} {field.t0:.17g} {field.dt:.17g} {field.n_slices}\n"
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes()
    _atomic_write_bytes(path, header.encode("ascii") + payload)


def load_spacetime(path: str) -> SpaceTimeField:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 5 or header[0] != _MAGIC:
            raise ValueError(f"not a {_MAGIC} dump: {path}")
        n, t0, dt, n_slices = int(header[1]), float(header[2]), float(header[3]), int(header[4])
        raw = fh.read()
    expect = n_slices * n * n * 8
    if len(raw) != expect:
        raise ValueError(f"truncated dump {path}: {len(raw)} bytes, expected {expect}")
    data = np.frombuffer(raw, dtype="<f8").reshape(n_slices, n, n).astype(np.float64)
    return SpaceTimeField(TorusLattice(n), t0, dt, data)


def _atomic_write_bytes(path: str, blob: bytes):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# spectral heat-flow primitives shared by the lollipop builders and the solver

def phi1(z):
    """(e^z - 1)/z, stable near 0 (series for |z| < 1e-8)."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    out = np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)
    return out


def heat_coefficients(lattice: TorusLattice, dt: float, mass: float = 0.0):
    """Per-mode decay factor and forcing weight for one exponential step.

    One step of (d/dt + |k|^2 + m^2) u = N with N frozen over the step:
    u_hat <- E * u_hat + W * N_hat,  E = exp(-(|k|^2+m^2) dt),
    W = dt * phi1(-(|k|^2+m^2) dt).
    """
    lam = lattice.k_squared() + mass * mass
    E = np.exp(-lam * dt)
    W = dt * phi1(-lam * dt)
    return E, W
