"""Exponent algebra and recursive growth envelopes for the a priori bounds.

Below a regularity threshold (the root of a cubic) two sub-linear exponents
beta2 < beta1 < 1 exist, and every closed-form bound in this module is a
max of power laws in the measured pairing constants.  The multiplicative
constants of those bounds are not knowable, so every formula here is a
*shape*: prefactors are set to 1, and the trajectory audit fits the
prefactor on the first unit interval before comparing growth shapes.

The two difference recursions (additive and damped) are provided together
with their closed-form envelopes; the envelope dominating the exact
iteration is a theorem, and the comparison is exposed as a machine check.
"""

import csv
import dataclasses

import numpy as np

__all__ = [
    "kappa_bar",
    "threshold_cubic",
    "threshold_identity_residual",
    "ExponentSet",
    "exponents",
    "t_window",
    "l_tilde",
    "scale_window_compatible",
    "apriori_bound",
    "GrowthSeries",
    "growth_envelope",
    "massive_recursion",
    "MomentFixedPoint",
    "moment_recursion",
    "IntervalConstants",
    "GrowthAuditReport",
    "growth_audit",
    "stabilization_check",
    "summary",
]


# ---------------------------------------------------------------------------
# regularity threshold


def threshold_cubic(k: float) -> float:
    """Expanded form 2 k^3 + 3 k^2 - 8 k + 1 of the threshold identity."""
    return ((2.0 * k + 3.0) * k - 8.0) * k + 1.0


def threshold_identity_residual(k: float) -> float:
    """Unexpanded two-sided form; identical to the cubic term by term."""
    return (3.0 - 2.0 * k) * (1.0 - k) - (1.0 + k) * (2.0 + k - 2.0 * k * k)


_KAPPA_BAR_CACHE = None


def kappa_bar() -> float:
    """Root of the threshold cubic in (0, 1/3), by bisection to 1e-12.

    Below this value of kappa the exponent pair beta2 < beta1 < 1 can be
    realized for small enough delta; above it no delta works.
    """
    global _KAPPA_BAR_CACHE
    if _KAPPA_BAR_CACHE is not None:
        return _KAPPA_BAR_CACHE
    lo, hi = 0.0, 1.0 / 3.0
    assert threshold_cubic(lo) > 0.0 > threshold_cubic(hi)
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if threshold_cubic(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    _KAPPA_BAR_CACHE = 0.5 * (lo + hi)
    return _KAPPA_BAR_CACHE


# ---------------------------------------------------------------------------
# exponent bundle


@dataclasses.dataclass(frozen=True)
class ExponentSet:
    """All exponents entering the bounds, plus the regime-validity flag.

    `valid` records whether beta2 < beta1 < 1 actually holds at this
    (kappa, delta); outside the regime the power laws are still evaluable
    but carry no content, so the flag is reported rather than raised.
    """

    kappa: float
    delta: float
    kappa_bar: float
    beta1: float
    beta2: float
    nu: float
    valid: bool

    def e_gamma(self, gamma: float) -> float:
        """Window-shrinking exponent 2 (gamma - 1) / (1 - kappa)."""
        return 2.0 * (gamma - 1.0) / (1.0 - self.kappa)

    def as_dict(self):
        return {
            "kappa": self.kappa, "delta": self.delta,
            "kappa_bar": self.kappa_bar,
            "beta1": self.beta1, "beta2": self.beta2,
            "nu": self.nu, "valid": self.valid,
        }


def exponents(kappa: float, delta: float) -> ExponentSet:
    """Evaluate beta2, beta1(delta), nu at the given regularity loss.

    beta2 = 2(1+kappa)/(3-2kappa); beta1 adds (1+kappa)(kappa+delta)/(1-kappa).
    nu = 1 / ((1-kappa)(1-beta1)^2) blows up as beta1 -> 1 and is reported
    as inf beyond it.
    """
    if not (0.0 < kappa < 1.0 / 3.0):
        raise ValueError(f"kappa must lie in (0, 1/3), got {kappa}")
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    beta2 = 2.0 * (1.0 + kappa) / (3.0 - 2.0 * kappa)
    beta1 = beta2 + (1.0 + kappa) * (kappa + delta) / (1.0 - kappa)
    valid = beta2 < beta1 < 1.0
    if beta1 < 1.0:
        nu = 1.0 / ((1.0 - kappa) * (1.0 - beta1) ** 2)
    else:
        nu = float("inf")
    return ExponentSet(kappa=float(kappa), delta=float(delta),
                       kappa_bar=kappa_bar(), beta1=beta1, beta2=beta2,
                       nu=nu, valid=valid)


# ---------------------------------------------------------------------------
# window and scale selection (shape-only: prefactor 1)


def _check_positive(**kwargs):
    for name, val in kwargs.items():
        if not (val > 0):
            raise ValueError(f"{name} must be positive, got {val}")


def t_window(gamma: float, kappa: float, C1: float, C2: float,
             C_star: float, m: float = 0.0) -> float:
    """Admissible expansion-window length: min of the competing powers.

    Massless: min(C2^{-1/(1-k)}, C1^{-2/(1-k)} C_star^{-e(gamma)}); a
    positive mass contributes the extra term m^{-1/(1-k)}.  Prefactor 1
    (shape-only).
    """
    _check_positive(C1=C1, C2=C2, C_star=C_star)
    if not (0.0 < kappa < 1.0 / 3.0):
        raise ValueError(f"kappa must lie in (0, 1/3), got {kappa}")
    p = 1.0 / (1.0 - kappa)
    e = 2.0 * (gamma - 1.0) / (1.0 - kappa)
    terms = [C2 ** (-p), C1 ** (-2.0 * p) * C_star ** (-e)]
    if m > 0.0:
        terms.append(m ** (-p))
    return min(terms)


def l_tilde(C_star: float, C1: float, C2: float, kappa: float,
            delta: float, m: float = 0.0) -> float:
    """Balancing scale for the drift decomposition (shape-only).

    C_star^{-2/(3-2k)} (C2 v C1^2 C_star^{2k+2d})^{-1/(2(1-k))}; a positive
    mass joins the inner max as m^2.
    """
    _check_positive(C_star=C_star, C1=C1, C2=C2)
    inner = max(C2, C1 * C1 * C_star ** (2.0 * kappa + 2.0 * delta))
    if m > 0.0:
        inner = max(m * m, inner)
    return (C_star ** (-2.0 / (3.0 - 2.0 * kappa))
            * inner ** (-1.0 / (2.0 * (1.0 - kappa))))


def scale_window_compatible(C_star: float, C1: float, C2: float,
                            kappa: float, delta: float, gamma: float,
                            m: float = 0.0) -> bool:
    """Whether the balancing scale fits the window: l_tilde <= sqrt(T)/2."""
    T = t_window(gamma, kappa, C1, C2, C_star, m)
    return bool(l_tilde(C_star, C1, C2, kappa, delta, m) <= 0.5 * T ** 0.5)


def apriori_bound(u0_norm: float, C1: float, C2: float, kappa: float,
                  delta: float) -> float:
    """Unit-interval sup bound shape: max of data norm and constant powers.

    max(|u0|, C1^{2/((1-k)(1-beta1))}, C2^{1/((1-k)(1-beta2))}) with
    prefactor 1; independent of the renormalization constant by
    construction.  Requires the valid exponent regime.
    """
    if u0_norm < 0 or C1 < 0 or C2 < 0:
        raise ValueError("norms and constants must be >= 0")
    ex = exponents(kappa, delta)
    if not ex.valid:
        raise ValueError(
            f"exponent regime invalid at kappa={kappa}, delta={delta} "
            f"(beta1={ex.beta1:.6g} must lie in (beta2, 1))")
    k = 1.0 - kappa
    return max(u0_norm,
               C1 ** (2.0 / (k * (1.0 - ex.beta1))),
               C2 ** (1.0 / (k * (1.0 - ex.beta2))))


# ---------------------------------------------------------------------------
# difference recursions and their envelopes


def _kahan_add(y: float, c: float, inc: float):
    """One compensated addition; keeps the 1e-12 envelope margins honest."""
    t = inc - c
    s = y + t
    c = (s - y) - t
    return s, c


def _pow(x: float, p: float) -> float:
    """Float power that saturates at inf instead of raising near beta -> 1."""
    try:
        return x ** p
    except OverflowError:
        return float("inf")


@dataclasses.dataclass(frozen=True)
class GrowthSeries:
    """Exact iteration, its closed-form envelope, and the domination check."""

    ys: tuple
    envelope: tuple
    dominated: bool
    max_violation: float

    def __len__(self):
        return len(self.ys)


def _dominates(ys, envelope, rtol=1e-12):
    worst = 0.0
    for y, env in zip(ys, envelope):
        if env == float("inf"):
            continue                  # an infinite bound holds trivially
        scale = max(abs(env), abs(y), 1e-300)
        worst = max(worst, (y - env) / scale)
    return worst <= rtol, worst


def growth_envelope(Y1: float, q, beta: float) -> GrowthSeries:
    """Iterate Y_{n+1} = Y_n + q_n Y_n^beta and its running-max envelope.

    The envelope (Y1^{1-b} + (1-b) Q_{n-1} (n-1))^{1/(1-b)} with
    Q_n = max_{i<=n} q_i dominates the iteration at every index - that is
    an induction, and the returned flag is its machine check.
    """
    if not (Y1 > 0):
        raise ValueError(f"Y1 must be positive, got {Y1}")
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    q = [float(v) for v in q]
    if any(v < 0 for v in q):
        raise ValueError("growth increments q must be >= 0")

    ys = [float(Y1)]
    y, comp = float(Y1), 0.0
    for qn in q:
        y, comp = _kahan_add(y, comp, qn * y ** beta)
        ys.append(y)

    one_m = 1.0 - beta
    envelope = [float(Y1)]
    Q = 0.0
    for n in range(1, len(q) + 1):      # envelope index n+1 uses Q_n
        Q = max(Q, q[n - 1])
        envelope.append(_pow(Y1 ** one_m + one_m * Q * n, 1.0 / one_m))
    dominated, worst = _dominates(ys, envelope)
    return GrowthSeries(tuple(ys), tuple(envelope), dominated, worst)


def massive_recursion(Y1: float, a: float, r, beta: float) -> GrowthSeries:
    """Iterate Y_{n+1} = a Y_n + r_n Y_n^beta under damping a < 1.

    The envelope is max(Y1, (R_n / (1-a))^{1/(1-b)}) with the running max
    R_n of the increments actually consumed; with bounded r the iteration
    is trapped near the fixed point (R/(1-a))^{1/(1-b)}.
    """
    if not (Y1 > 0):
        raise ValueError(f"Y1 must be positive, got {Y1}")
    if not (0.0 < a < 1.0):
        raise ValueError(f"damping factor must lie in (0, 1), got {a}")
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    r = [float(v) for v in r]
    if any(v < 0 for v in r):
        raise ValueError("increments r must be >= 0")

    ys = [float(Y1)]
    y = float(Y1)
    for rn in r:
        y = a * y + rn * y ** beta
        ys.append(y)

    one_m = 1.0 - beta
    envelope = [float(Y1)]
    R = 0.0
    for n in range(1, len(r) + 1):
        R = max(R, r[n - 1])
        envelope.append(max(Y1, _pow(R / (1.0 - a), 1.0 / one_m)))
    dominated, worst = _dominates(ys, envelope)
    return GrowthSeries(tuple(ys), tuple(envelope), dominated, worst)


@dataclasses.dataclass(frozen=True)
class MomentFixedPoint:
    """Damped-recursion fixed point and its monotone-approach certificate."""

    z_bar: float
    iterates: tuple
    monotone: bool
    direction: str           # "up", "down", or "at"
    gap: float               # |Z_last - z_bar|


def moment_recursion(Z1: float, a: float, M_p: float, beta: float,
                     n_steps: int = 200) -> MomentFixedPoint:
    """Fixed point (M_p/(1-a))^{1/(1-b)} of Z <- a Z + M_p Z^beta.

    Iterates n_steps from Z1 and certifies the monotone approach:
    non-decreasing when started below the fixed point, non-increasing
    when started above.
    """
    if not (0.0 < a < 1.0):
        raise ValueError(f"damping factor must lie in (0, 1), got {a}")
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if M_p < 0 or Z1 < 0:
        raise ValueError("Z1 and M_p must be >= 0")
    z_bar = _pow(M_p / (1.0 - a), 1.0 / (1.0 - beta)) if M_p > 0 else 0.0
    zs = [float(Z1)]
    z = float(Z1)
    for _ in range(n_steps):
        z = a * z + M_p * z ** beta
        zs.append(z)
    diffs = np.diff(zs)
    if Z1 < z_bar:
        monotone = bool(np.all(diffs >= -1e-15))
        direction = "up"
    elif Z1 > z_bar:
        monotone = bool(np.all(diffs <= 1e-15))
        direction = "down"
    else:
        monotone = bool(np.max(np.abs(diffs)) <= 1e-12)
        direction = "at"
    return MomentFixedPoint(z_bar, tuple(zs), monotone, direction,
                            abs(zs[-1] - z_bar))


# ---------------------------------------------------------------------------
# trajectory audit


@dataclasses.dataclass(frozen=True)
class IntervalConstants:
    """Measured per-unit-interval pairing maxima (linear, quadratic)."""

    c1: tuple
    c2: tuple

    def __post_init__(self):
        object.__setattr__(self, "c1", tuple(float(v) for v in self.c1))
        object.__setattr__(self, "c2", tuple(float(v) for v in self.c2))
        if len(self.c1) != len(self.c2):
            raise ValueError(f"need matching lists, got {len(self.c1)} "
                             f"and {len(self.c2)}")
        if not self.c1:
            raise ValueError("need at least one interval")
        if any(v < 0 for v in self.c1 + self.c2):
            raise ValueError("pairing constants must be >= 0")

    def tilde1(self, n: int) -> float:
        """max of the constants on intervals n and n+1 (1-based)."""
        return max(self.c1[n - 1], self.c1[min(n, len(self.c1) - 1)])

    def tilde2(self, n: int) -> float:
        return max(self.c2[n - 1], self.c2[min(n, len(self.c2) - 1)])

    @classmethod
    def constant(cls, c1: float, c2: float, n: int) -> "IntervalConstants":
        return cls((c1,) * n, (c2,) * n)


class GrowthAuditReport:
    """Measured interval maxima against the fitted power-law envelope."""

    def __init__(self, rows, exponent_set, passed, mass,
                 window_early, window_late, stabilization_ratio, stable):
        self.rows = tuple(rows)           # (n, Y_n, envelope_n, pass)
        self.exponent_set = exponent_set
        self.passed = bool(passed)
        self.mass = float(mass)
        self.window_early = window_early
        self.window_late = window_late
        self.stabilization_ratio = stabilization_ratio
        self.stable = stable

    def write_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "Y_n", "envelope_n", "pass"])
            for n, y, env, ok in self.rows:
                w.writerow([n, f"{y:.12g}", f"{env:.12g}", int(ok)])

    def as_dict(self):
        return {
            "rows": [list(r) for r in self.rows],
            "exponents": self.exponent_set.as_dict(),
            "passed": self.passed,
            "mass": self.mass,
            "window_early": self.window_early,
            "window_late": self.window_late,
            "stabilization_ratio": self.stabilization_ratio,
            "stable": self.stable,
        }


#: unit-interval windows compared by the stabilization proxy
STABILIZATION_EARLY = (5, 7)
STABILIZATION_LATE = (8, 10)

#: relative drift allowed between the two windowed means
STABILIZATION_TOL = 0.2


def _windowed_mean(values_by_n, lo, hi):
    vals = [values_by_n[n] for n in range(lo, hi + 1) if n in values_by_n]
    if len(vals) < hi - lo + 1:
        return None
    return float(np.mean(vals))


def stabilization_check(values_by_n) -> dict:
    """Windowed-mean stationarity proxy on a sequence of interval maxima.

    Compares the mean of Y_n over the late window against the earlier one;
    `stable` means the ratio sits within STABILIZATION_TOL of 1.  Works on
    a single run's intervals or on an ensemble mean, given as {n: Y_n}.
    Entries are None when either window is incomplete.
    """
    early = _windowed_mean(values_by_n, *STABILIZATION_EARLY)
    late = _windowed_mean(values_by_n, *STABILIZATION_LATE)
    ratio = stable = None
    if early is not None and late is not None and early > 0:
        ratio = late / early
        stable = abs(ratio - 1.0) <= STABILIZATION_TOL
    return {"window_early": early, "window_late": late,
            "ratio": ratio, "stable": stable}


def growth_audit(trajectory, interval_constants: IntervalConstants,
                 exponent_set: ExponentSet) -> GrowthAuditReport:
    """Compare measured unit-interval maxima with the growth-shape envelope.

    The envelope is (running max of the constant powers)^{1/(1-beta1)^2}
    times n^{1/(1-beta1)}, with the prefactor fitted so the envelope meets
    the measured value at n = 1 - only the shape is being tested.  For a
    massive run the report adds the windowed-mean stabilization proxy
    (late-window mean within 20% of the earlier window).
    """
    if len(trajectory.intervals) < 2:
        raise ValueError("trajectory must span at least two unit intervals")
    beta1 = exponent_set.beta1
    if not exponent_set.valid:
        raise ValueError("exponent regime invalid; audit shape undefined")
    k = 1.0 - exponent_set.kappa
    ic = interval_constants

    ns = [n for n, _ in trajectory.intervals]
    ys = {n: y for n, y in trajectory.intervals}
    shape = {}
    running = 0.0
    for n in ns:
        i = min(n, len(ic.c1))           # hold the last interval's constants
        running = max(running, ic.c1[i - 1] ** (2.0 / k),
                      ic.c2[i - 1] ** (1.0 / k))
        shape[n] = (running ** (1.0 / (1.0 - beta1) ** 2)
                    * n ** (1.0 / (1.0 - beta1)))
    n0 = ns[0]
    if shape[n0] > 0:
        prefactor = ys[n0] / shape[n0]
        envelope = {n: prefactor * shape[n] for n in ns}
    else:
        envelope = {n: ys[n0] for n in ns}   # zero constants: flat envelope

    rows = []
    passed = True
    for n in ns:
        ok = ys[n] <= envelope[n] * (1.0 + 1e-12) + 1e-300
        passed = passed and ok
        rows.append((n, ys[n], envelope[n], ok))

    mass = float(trajectory.manifest.get("mass", 0.0))
    window_early = window_late = ratio = stable = None
    if mass > 0.0:
        chk = stabilization_check(ys)
        window_early = chk["window_early"]
        window_late = chk["window_late"]
        ratio = chk["ratio"]
        stable = chk["stable"]
    return GrowthAuditReport(rows, exponent_set, passed, mass,
                             window_early, window_late, ratio, stable)


# ---------------------------------------------------------------------------
# one-call summary (CLI backend)


def summary(kappa: float, delta: float, C1: float, C2: float,
            u0_norm: float, mass: float = 0.0) -> dict:
    """JSON-ready bundle of exponents and bound values at one parameter set.

    The window and scale need a working-norm level and an expansion order;
    we evaluate them at C_star = the a priori bound itself and the largest
    admissible order gamma = 2 - 2 kappa.
    """
    ex = exponents(kappa, delta)
    out = {"exponents": ex.as_dict()}
    if ex.valid and C1 >= 0 and C2 >= 0:
        bound = apriori_bound(u0_norm, C1, C2, kappa, delta)
        gamma = 2.0 - 2.0 * kappa
        c_star = max(bound, 1e-300)
        c1p = max(C1, 1e-300)
        c2p = max(C2, 1e-300)
        out["apriori_bound"] = bound
        out["gamma"] = gamma
        out["C_star"] = c_star
        out["t_window"] = t_window(gamma, kappa, c1p, c2p, c_star, mass)
        out["l_tilde"] = l_tilde(c_star, c1p, c2p, kappa, delta, mass)
        out["scale_window_compatible"] = scale_window_compatible(
            c_star, c1p, c2p, kappa, delta, gamma, mass)
    else:
        out["apriori_bound"] = None
    out["mass"] = mass
    return out
