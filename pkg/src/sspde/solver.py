"""Time integration of the renormalized equations and their verification pair.

One exponential-integrator step advances the Fourier modes by the exact
linear factor and weights the frozen nonlinear term with the phi1 function,
so the stiff linear part and the (possibly large) renormalization drift put
no stability constraint on dt through the linear part.  The nonlinear term
is always dealiased by the 2/3 rule before it re-enters the spectrum.

Three front ends share the stepper: the renormalized product equations
(single- or multi-noise, optional mass, Ito increments for the Wiener
family), the plain linear heat solve, and a transport equation with a
spectral gradient drift.  The transport solve is paired with a Feynman-Kac
Monte Carlo evaluator so the two can be checked against each other at probe
points.  A trajectory either completes or raises a blow-up witness with the
offending time; nothing is clipped.
"""

import csv
import hashlib
import json

import numpy as np

from .grid import (
    GridField,
    SpaceTimeField,
    TorusLattice,
    heat_coefficients,
)
from .model import Model

__all__ = [
    "BlowupError",
    "BoundedNonlinearity",
    "PdeProblem",
    "SolverConfig",
    "Trajectory",
    "FlowReport",
    "solve_renormalized",
    "solve_linear_heat",
    "linear_heat_defect",
    "solve_transport_grid",
    "solve_transport_mc",
    "flow_composition_check",
]

#: number of sample points used to audit a nonlinearity against its bound
SIGMA_AUDIT_POINTS = 10_000

#: half-width of the default audit window in u
SIGMA_AUDIT_RANGE = 10.0

#: explicit-part diffusion guard: dt <= this multiple of h^2
DT_GUARD = 0.25


class BlowupError(RuntimeError):
    """A trajectory left the finite range; carries the witness time."""

    def __init__(self, time: float, sup: float):
        self.time = float(time)
        self.sup = float(sup)
        super().__init__(
            f"solution blew up at t={time:.6g} (last finite sup {sup:.6g})")


# ---------------------------------------------------------------------------
# nonlinearity contract


class BoundedNonlinearity:
    """Diffusion coefficient with two derivatives and an audited sup bound.

    The value, first and second derivative are sampled on a uniform audit
    grid; their common sup must not exceed `bound`.  When no bound is given
    the audited sup itself is recorded.  Instances plug directly into the
    germ-family machinery (value/derivative attributes).
    """

    def __init__(self, value, derivative, second, bound=None,
                 label: str = "custom", audit_range: float = SIGMA_AUDIT_RANGE):
        if not (callable(value) and callable(derivative) and callable(second)):
            raise TypeError("value, derivative and second must be callable")
        self.value = value
        self.derivative = derivative
        self.second = second
        self.label = str(label)
        self.audit_range = float(audit_range)
        grid = np.linspace(-self.audit_range, self.audit_range,
                           SIGMA_AUDIT_POINTS)
        worst = max(float(np.max(np.abs(np.asarray(f(grid), dtype=float))))
                    for f in (value, derivative, second))
        if not np.isfinite(worst):
            raise ValueError(f"nonlinearity {label!r} is not finite on the "
                             f"audit window [-{self.audit_range}, "
                             f"{self.audit_range}]")
        if bound is None:
            self.bound = worst
        else:
            self.bound = float(bound)
            if worst > self.bound * (1.0 + 1e-12):
                raise ValueError(
                    f"nonlinearity {label!r} exceeds its declared bound: "
                    f"audited sup {worst:.6g} > {self.bound:.6g}")

    # -- presets -------------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "BoundedNonlinearity":
        c = float(c)
        return cls(lambda u: np.full_like(np.asarray(u, float), c),
                   lambda u: np.zeros_like(np.asarray(u, float)),
                   lambda u: np.zeros_like(np.asarray(u, float)),
                   bound=max(abs(c), 1e-300), label=f"const({c:g})")

    @classmethod
    def linear(cls, slope: float = 1.0) -> "BoundedNonlinearity":
        slope = float(slope)
        return cls(lambda u: slope * np.asarray(u, float),
                   lambda u: np.full_like(np.asarray(u, float), slope),
                   lambda u: np.zeros_like(np.asarray(u, float)),
                   label=f"linear({slope:g})")

    @classmethod
    def sine(cls, freq: float = 1.0, amplitude: float = 1.0
             ) -> "BoundedNonlinearity":
        a, b = float(amplitude), float(freq)
        return cls(lambda u: a * np.sin(b * np.asarray(u, float)),
                   lambda u: a * b * np.cos(b * np.asarray(u, float)),
                   lambda u: -a * b * b * np.sin(b * np.asarray(u, float)),
                   bound=max(abs(a), abs(a * b), abs(a * b * b)),
                   label=f"sine({b:g},{a:g})")

    @classmethod
    def cosine(cls, freq: float = 1.0, amplitude: float = 1.0
               ) -> "BoundedNonlinearity":
        a, b = float(amplitude), float(freq)
        return cls(lambda u: a * np.cos(b * np.asarray(u, float)),
                   lambda u: -a * b * np.sin(b * np.asarray(u, float)),
                   lambda u: -a * b * b * np.cos(b * np.asarray(u, float)),
                   bound=max(abs(a), abs(a * b), abs(a * b * b)),
                   label=f"cosine({b:g},{a:g})")


# ---------------------------------------------------------------------------
# problem and configuration


class PdeProblem:
    """Renormalized equation instance: model fields, coefficients, data.

    The renormalization matrix and kappa live on the model (one source of
    truth); `sigmas` holds one nonlinearity contract per noise component.
    """

    def __init__(self, model: Model, sigmas, u0: GridField, mass: float = 0.0):
        if isinstance(sigmas, BoundedNonlinearity):
            sigmas = [sigmas]
        sigmas = list(sigmas)
        if len(sigmas) != model.n_noises:
            raise ValueError(f"need {model.n_noises} nonlinearities, "
                             f"got {len(sigmas)}")
        for s in sigmas:
            if not isinstance(s, BoundedNonlinearity):
                raise TypeError("each sigma must be a BoundedNonlinearity")
        if u0.lattice.n != model.lattice.n:
            raise ValueError("initial data lives on a different lattice")
        self.model = model
        self.sigmas = sigmas
        self.u0 = u0
        self.mass = float(mass)
        if self.mass < 0:
            raise ValueError(f"mass must be >= 0, got {mass}")

    @property
    def lattice(self) -> TorusLattice:
        return self.model.lattice

    @property
    def renorm(self):
        return self.model.renorm

    @property
    def kappa(self) -> float:
        return self.model.kappa

    def problem_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"n={self.lattice.n};mass={self.mass!r};"
                 f"kappa={self.kappa!r};model={self.model.label};"
                 f"sigmas={[s.label for s in self.sigmas]!r};".encode())
        h.update(np.ascontiguousarray(self.renorm, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.u0.values, dtype="<f8").tobytes())
        return h.hexdigest()


SCHEMES = ("exponential-integrator", "semi-implicit")


class SolverConfig:
    """Run parameters for one trajectory.

    dt is guarded by the explicit-part diffusion bound dt <= 0.25 h^2 even
    though the linear factor is exact: the frozen nonlinear term still
    mixes neighbouring modes at that scale.
    """

    def __init__(self, n_spatial: int, dt: float, t_end: float,
                 scheme: str = "exponential-integrator", seed: int = 0,
                 t_start: float = 0.0, store_every: int = 1):
        self.n_spatial = int(n_spatial)
        self.dt = float(dt)
        self.t_end = float(t_end)
        self.t_start = float(t_start)
        self.scheme = str(scheme)
        self.seed = int(seed)
        self.store_every = int(store_every)
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; pick one of "
                             f"{SCHEMES}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {dt}")
        span = self.t_end - self.t_start
        if span < self.dt * (1.0 - 1e-9):
            raise ValueError(
                f"need t_end - t_start >= dt, got span {span:.6g} "
                f"under dt {self.dt:.6g}")
        h = 2.0 * np.pi / self.n_spatial
        if self.dt > DT_GUARD * h * h * (1.0 + 1e-12):
            raise ValueError(
                f"dt={self.dt:.6g} above the diffusion guard "
                f"{DT_GUARD} h^2 = {DT_GUARD * h * h:.6g} at "
                f"n_spatial={self.n_spatial}")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        steps = span / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError(
                f"t_end - t_start = {span:.9g} is not a multiple of "
                f"dt = {self.dt:.9g}")
        self.n_steps = int(round(steps))

    def with_window(self, t_start: float, t_end: float) -> "SolverConfig":
        return SolverConfig(self.n_spatial, self.dt, t_end,
                            scheme=self.scheme, seed=self.seed,
                            t_start=t_start, store_every=self.store_every)

    def as_dict(self):
        return {
            "n_spatial": self.n_spatial, "dt": self.dt,
            "t_start": self.t_start, "t_end": self.t_end,
            "scheme": self.scheme, "seed": self.seed,
            "store_every": self.store_every, "n_steps": self.n_steps,
        }


# ---------------------------------------------------------------------------
# trajectory record


class Trajectory:
    """Stored slices, per-step sup norms, unit-interval maxima, manifest."""

    def __init__(self, solution: SpaceTimeField, final: GridField,
                 sup_times, sup_series, intervals, manifest: dict):
        self.solution = solution
        self.final = final
        self.sup_times = np.asarray(sup_times, dtype=float)
        self.sup_series = np.asarray(sup_series, dtype=float)
        self.intervals = tuple(intervals)
        self.manifest = manifest

    @property
    def t_end(self) -> float:
        return float(self.sup_times[-1])

    def sup_over(self, t_lo: float, t_hi: float) -> float:
        """Max recorded sup norm over comb times in [t_lo, t_hi]."""
        pick = (self.sup_times >= t_lo - 1e-12) & (self.sup_times <= t_hi + 1e-12)
        if not np.any(pick):
            raise ValueError(f"no recorded times in [{t_lo}, {t_hi}]")
        return float(np.max(self.sup_series[pick]))

    def write_supnorm_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup"])
            for t, s in zip(self.sup_times, self.sup_series):
                w.writerow([f"{t:.12g}", f"{s:.12g}"])

    def write_intervals_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "Y_n"])
            for n, y in self.intervals:
                w.writerow([n, f"{y:.12g}"])


def _interval_maxima(t_start, sup_times, sup_series):
    """Y_n = max sup over comb times in [t_start + n - 1, t_start + n]."""
    out = []
    n = 1
    t_last = sup_times[-1]
    while t_start + (n - 1) < t_last - 1e-12:
        lo, hi = t_start + (n - 1), t_start + n
        pick = (sup_times >= lo - 1e-12) & (sup_times <= hi + 1e-12)
        if np.any(pick):
            out.append((n, float(np.max(sup_series[pick]))))
        n += 1
    return out


# ---------------------------------------------------------------------------
# spectral step machinery


def _dealias_mask(lattice: TorusLattice):
    """2/3-rule mask: keep modes with |k_i| <= n/3 in both directions."""
    n = lattice.n
    k1, k2 = lattice.k_meshes()
    cut = n // 3
    return (np.abs(k1) <= cut) & (np.abs(k2) <= cut)


def _step_factors(lattice, dt, mass, scheme):
    lam = lattice.k_squared() + mass * mass
    if scheme == "exponential-integrator":
        return heat_coefficients(lattice, dt, mass)
    # semi-implicit: (1 + lam dt) u_next = u + dt N
    den = 1.0 + lam * dt
    return 1.0 / den, dt / den


def _noise_evaluator(handle):
    """Per-step field lookup; static handles collapse to one array."""
    if getattr(handle, "is_affine", False) and handle.is_static():
        frozen = handle.affine.F0
        return lambda t: frozen
    return handle.eval


def _wiener_slice_lookup(handle):
    """Exact one-increment-per-step consumption on the stored comb."""
    st = handle.st

    def look(t):
        j = (t - st.t0) / st.dt
        jr = int(round(j))
        if abs(j - jr) > 1e-6:
            raise ValueError(
                f"time {t:.9g} is not aligned with the Wiener increment comb")
        if not (0 <= jr < st.n_slices):
            raise ValueError(f"Wiener increments do not cover t={t:.9g}")
        return st.data[jr]

    return look


def _check_noise_coverage(model, t_start, t_end):
    for a, handle in enumerate(model.noises):
        t_min = getattr(handle, "t_min", 0.0)
        t_max = getattr(handle, "t_max", np.inf)
        if t_start < t_min - 1e-9 or t_end > t_max + 1e-9:
            raise ValueError(
                f"noise component {a} covers [{t_min:.6g}, {t_max:.6g}] "
                f"but the run needs [{t_start:.6g}, {t_end:.6g}]")


def _run_stepper(lattice, u0_values, config, mass, nonlinear,
                 manifest_extra):
    """Shared time loop: exact linear factor, frozen dealiased forcing.

    `nonlinear(t, u) -> real array or None` is evaluated at the left
    endpoint of each step; None means pure linear flow.
    """
    dt = config.dt
    E, W = _step_factors(lattice, dt, mass, config.scheme)
    mask = _dealias_mask(lattice)
    u = np.array(u0_values, dtype=float)

    stride = config.store_every
    stored = [u.copy()]
    sups = [float(np.max(np.abs(u)))]
    times = [config.t_start]
    # overflow inside a step is a handled event (blow-up witness), not a
    # warning condition
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(config.n_steps):
            t = config.t_start + j * dt
            N = nonlinear(t, u)
            # re-transform from the stored real slice every step so a
            # restart from any slice replays the remaining steps bit for bit
            uh = np.fft.fft2(u)
            if N is None:
                uh = E * uh
            else:
                uh = E * uh + W * (mask * np.fft.fft2(N))
            u = np.fft.ifft2(uh).real
            t_next = config.t_start + (j + 1) * dt
            if not np.all(np.isfinite(u)):
                raise BlowupError(t_next, sups[-1])
            sups.append(float(np.max(np.abs(u))))
            times.append(t_next)
            if (j + 1) % stride == 0:
                stored.append(u.copy())

    final = GridField(lattice, u.copy())
    solution = SpaceTimeField(lattice, config.t_start, dt * stride,
                              np.stack(stored))
    intervals = _interval_maxima(config.t_start, np.asarray(times),
                                 np.asarray(sups))
    manifest = dict(manifest_extra)
    manifest["config"] = config.as_dict()
    manifest["mass"] = mass
    return Trajectory(solution, final, times, sups, intervals, manifest)


# ---------------------------------------------------------------------------
# the renormalized equations


def solve_renormalized(problem: PdeProblem, config: SolverConfig
                       ) -> Trajectory:
    """Advance sum_i sigma_i(u) xi_i - sum_ij sigma_j' sigma_i(u) C_ij.

    Noise handles are evaluated at the left endpoint of each step; the
    Wiener family instead consumes exactly one stored increment per step
    (Ito), which pins config.dt to the sampled increment step.
    """
    model = problem.model
    lat = model.lattice
    if config.n_spatial != lat.n:
        raise ValueError(f"config n_spatial={config.n_spatial} does not "
                         f"match the problem lattice n={lat.n}")
    wiener = getattr(model, "_wiener", None)
    if wiener is not None and abs(config.dt - wiener.dt) > 1e-12 * wiener.dt:
        raise ValueError(
            f"Ito increments are consumed one per step: config dt="
            f"{config.dt:.9g} must equal the sampled step {wiener.dt:.9g}")
    _check_noise_coverage(model, config.t_start,
                          config.t_end - config.dt)

    if wiener is not None:
        lookups = [_wiener_slice_lookup(model.noises[0])]
    else:
        lookups = [_noise_evaluator(h) for h in model.noises]
    sig = [s.value for s in problem.sigmas]
    sigd = [s.derivative for s in problem.sigmas]
    C = problem.renorm
    m_comp = model.n_noises

    def nonlinear(t, u):
        vals = [np.asarray(s(u), dtype=float) for s in sig]
        dervs = [np.asarray(d(u), dtype=float) for d in sigd]
        N = np.zeros_like(u)
        for i in range(m_comp):
            N += vals[i] * lookups[i](t)
            for j in range(m_comp):
                if C[i, j] != 0.0:
                    N -= dervs[j] * vals[i] * C[i, j]
        return N

    extra = {
        "kind": "renormalized",
        "problem": problem.problem_hash(),
        "model": model.label,
        "kappa": problem.kappa,
        "renorm": np.asarray(C, dtype=float).tolist(),
        "sigmas": [s.label for s in problem.sigmas],
        "sigma_bounds": [s.bound for s in problem.sigmas],
    }
    return _run_stepper(lat, problem.u0.values, config, problem.mass,
                        nonlinear, extra)


# ---------------------------------------------------------------------------
# linear heat companion


def solve_linear_heat(forcing: SpaceTimeField, u0: GridField,
                      mass: float = 0.0) -> SpaceTimeField:
    """March (d/dt + |k|^2 + m^2) u = f on the forcing's own comb.

    Per-mode exact exponential update with the forcing frozen at the left
    endpoint of each step; no dealiasing (the equation is linear).
    """
    lat = forcing.lattice
    if u0.lattice.n != lat.n:
        raise ValueError("initial data lives on a different lattice")
    E, W = heat_coefficients(lat, forcing.dt, mass)
    data = np.empty_like(forcing.data)
    data[0] = u0.values
    for j in range(forcing.n_slices - 1):
        uh = E * np.fft.fft2(data[j]) + W * np.fft.fft2(forcing.data[j])
        data[j + 1] = np.fft.ifft2(uh).real
    return SpaceTimeField(lat, forcing.t0, forcing.dt, data)


def linear_heat_defect(solution: SpaceTimeField, forcing: SpaceTimeField,
                       mass: float = 0.0) -> float:
    """Sup residual of the discrete update relation over all stored steps."""
    if solution.data.shape != forcing.data.shape:
        raise ValueError("solution and forcing combs differ")
    E, W = heat_coefficients(solution.lattice, solution.dt, mass)
    worst = 0.0
    for j in range(solution.n_slices - 1):
        pred = np.fft.ifft2(E * np.fft.fft2(solution.data[j])
                            + W * np.fft.fft2(forcing.data[j])).real
        worst = max(worst, float(np.max(np.abs(solution.data[j + 1] - pred))))
    return worst


# ---------------------------------------------------------------------------
# transport pair: spectral grid solve and Feynman-Kac Monte Carlo


def _gradient_multipliers(lattice: TorusLattice):
    n = lattice.n
    k1, k2 = lattice.k_meshes()
    live1 = np.where(np.abs(k1) == n // 2, 0, k1)
    live2 = np.where(np.abs(k2) == n // 2, 0, k2)
    return 1j * live1, 1j * live2


def solve_transport_grid(b, f, v0: GridField, mass: float,
                         config: SolverConfig) -> Trajectory:
    """March (d/dt - Lap + m^2) v = b . grad v + f with spectral gradients.

    `b` is None or a pair of slice stacks for the two drift components; `f`
    is None or a slice stack; both are read at the left endpoint of each
    step (linear interpolation between stored slices).
    """
    lat = v0.lattice
    if config.n_spatial != lat.n:
        raise ValueError(f"config n_spatial={config.n_spatial} does not "
                         f"match the lattice n={lat.n}")
    if b is not None:
        b1, b2 = b
        if b1.lattice.n != lat.n or b2.lattice.n != lat.n:
            raise ValueError("drift components live on a different lattice")
    if f is not None and f.lattice.n != lat.n:
        raise ValueError("forcing lives on a different lattice")
    g1m, g2m = _gradient_multipliers(lat)

    def nonlinear(t, v):
        if b is None and f is None:
            return None
        N = np.zeros_like(v)
        if b is not None:
            vh = np.fft.fft2(v)
            N += b1.at_time(t) * np.fft.ifft2(g1m * vh).real
            N += b2.at_time(t) * np.fft.ifft2(g2m * vh).real
        if f is not None:
            N += f.at_time(t)
        return N

    extra = {"kind": "transport", "has_drift": b is not None,
             "has_forcing": f is not None}
    return _run_stepper(lat, v0.values, config, mass, nonlinear, extra)


def _bilinear(values, x1, x2, lattice: TorusLattice):
    """Periodic bilinear interpolation of one slice at arbitrary points."""
    n, h = lattice.n, lattice.spacing
    s1, s2 = np.asarray(x1) / h, np.asarray(x2) / h
    i0 = np.floor(s1).astype(int)
    j0 = np.floor(s2).astype(int)
    a, bfrac = s1 - i0, s2 - j0
    i0 %= n
    j0 %= n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    return ((1 - a) * (1 - bfrac) * values[i0, j0]
            + a * (1 - bfrac) * values[i1, j0]
            + (1 - a) * bfrac * values[i0, j1]
            + a * bfrac * values[i1, j1])


def solve_transport_mc(b, f, v0: GridField, mass: float, t: float, x,
                       n_paths: int, seed: int,
                       n_time_steps: int = None):
    """Feynman-Kac estimate of the transport solution at one point.

    Runs Euler-Maruyama paths dX = b(t - s, X) ds + sqrt(2) dB backward
    through the coefficient history, with bilinear spatial interpolation
    and linear time interpolation of b and f.  Returns (estimate,
    standard_error); deterministic for fixed seed.  The massive variant
    damps the terminal payoff by exp(-m^2 (t - T1)) and the running
    forcing by exp(-m^2 s).
    """
    if n_paths < 100:
        raise ValueError(f"need n_paths >= 100, got {n_paths}")
    lat = v0.lattice
    if b is not None:
        b1, b2 = b
        t1 = b1.t0
    elif f is not None:
        t1 = f.t0
    else:
        t1 = 0.0
    tau = t - t1
    if tau < -1e-12:
        raise ValueError(f"probe time {t:.6g} precedes the data start "
                         f"{t1:.6g}")
    tau = max(tau, 0.0)
    x1, x2 = float(x[0]), float(x[1])

    if n_time_steps is None:
        n_time_steps = max(40, int(np.ceil(tau / 2e-3))) if tau > 0 else 0
    rng = np.random.default_rng(seed)
    X1 = np.full(n_paths, x1)
    X2 = np.full(n_paths, x2)
    payoff = np.zeros(n_paths)
    if tau > 0:
        ds = tau / n_time_steps
        for jstep in range(n_time_steps):
            s = jstep * ds
            t_pde = t - s
            if f is not None:
                payoff += (np.exp(-mass * mass * s) * ds
                           * _bilinear(f.at_time(t_pde), X1, X2, lat))
            if b is not None:
                d1 = _bilinear(b1.at_time(t_pde), X1, X2, lat)
                d2 = _bilinear(b2.at_time(t_pde), X1, X2, lat)
            else:
                d1 = d2 = 0.0
            dB = rng.standard_normal((2, n_paths)) * np.sqrt(2.0 * ds)
            X1 = X1 + d1 * ds + dB[0]
            X2 = X2 + d2 * ds + dB[1]
    payoff += (np.exp(-mass * mass * tau)
               * _bilinear(v0.values, X1, X2, lat))
    est = float(np.mean(payoff))
    se = float(np.std(payoff, ddof=1) / np.sqrt(n_paths))
    return est, se


# ---------------------------------------------------------------------------
# flow property of the Ito solutions


class FlowReport:
    """Restart-composition differences for a batch of Wiener realizations."""

    def __init__(self, seeds, differences, control_difference, mass,
                 times):
        self.seeds = tuple(seeds)
        self.differences = tuple(differences)
        self.max_difference = max(differences)
        self.control_difference = float(control_difference)
        self.mass = float(mass)
        self.times = tuple(times)

    def as_dict(self):
        return {
            "seeds": list(self.seeds),
            "differences": list(self.differences),
            "max_difference": self.max_difference,
            "control_difference": self.control_difference,
            "mass": self.mass,
            "times": list(self.times),
        }


def flow_composition_check(problem: PdeProblem, config: SolverConfig,
                           s: float, r: float, t: float, seeds) -> FlowReport:
    """Solve [s, t] directly and via a restart at r on the same increments.

    For each seed a fresh Wiener path is sampled (same spectral decay,
    regularization and step as the problem's noise); the direct solve and
    the two-leg solve consume identical increments, so their final slices
    agree to roundoff.  A control run restarts on a different realization
    to show the comparison has teeth.
    """
    wiener = getattr(problem.model, "_wiener", None)
    if wiener is None:
        raise ValueError("flow composition needs the Ito/Wiener family")
    if not (0.0 <= s < r < t):
        raise ValueError(f"need 0 <= s < r < t, got {s}, {r}, {t}")
    dt = config.dt
    for name, val in (("s", s), ("r", r), ("t", t)):
        k = val / dt
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"{name}={val:.9g} is not on the increment comb")

    from .noise import sample_wiener_noise

    n_steps = int(round(t / dt))

    def run(seed_path, t_a, t_b, u_init):
        noise = sample_wiener_noise(problem.lattice, wiener.delta, dt,
                                    n_steps, wiener.reg, seed_path,
                                    realization=wiener.realization)
        model = Model.from_wiener(noise, kappa=problem.kappa,
                                  renorm=problem.renorm)
        prob = PdeProblem(model, problem.sigmas, u_init, mass=problem.mass)
        return solve_renormalized(prob, config.with_window(t_a, t_b))

    diffs = []
    for seed_path in seeds:
        full = run(seed_path, s, t, problem.u0)
        leg1 = run(seed_path, s, r, problem.u0)
        leg2 = run(seed_path, r, t, leg1.final)
        diffs.append(float(np.max(np.abs(full.final.values
                                         - leg2.final.values))))

    control_full = run(seeds[0], s, t, problem.u0)
    control_leg1 = run(seeds[0], s, r, problem.u0)
    control_leg2 = run(seeds[0] + 7919, r, t, control_leg1.final)
    control = float(np.max(np.abs(control_full.final.values
                                  - control_leg2.final.values)))
    return FlowReport(seeds, diffs, control, problem.mass, (s, r, t))
