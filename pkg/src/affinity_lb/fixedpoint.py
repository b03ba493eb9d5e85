"""Fixed points of the fluid limit, their stability, and derived performance metrics.

Notation: ``rho = (λ - μ₂) / (μ₁ - μ₂)`` and ``a = λ (1/μ₂ - 1/μ₁)``.
With ``x = 1 - q00`` the busy fraction, a fixed point with idle servers
solves ``f(x) = a x^d - x + λ/μ₁ = 0`` on (0, 1).
"""

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, InvariantError

BISECT_TOL = 1e-12
SERIES_TOL = 1e-16
_MAX_EXPONENT = 10**6

TABLE2_LAMBDAS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
TABLE2_MU2S = (0.5, 1 / 3)


def _check_rates(mu1, mu2):
    if not (mu1 > mu2 > 0):
        raise DomainError(f"need mu1 > mu2 > 0, got mu1={mu1}, mu2={mu2}")


def _queueing_regime(lam, mu1, mu2):
    _check_rates(mu1, mu2)
    if lam <= mu2:
        raise DomainError(f"the queueing fixed point needs lambda > mu2 (got {lam} <= {mu2})")
    if lam >= mu1:
        raise DomainError(f"need lambda < mu1 (got {lam} >= {mu1})")


def _exponent(d, i):
    """(d^i - 1) / (d - 1), or i when d = 1."""
    return i if d == 1 else (d**i - 1) // (d - 1)


def _power(base, e):
    if e > _MAX_EXPONENT:
        return 0.0
    return base**e


def _series(base, d, shift):
    """Σ_{i≥1} base^{(d^{i+shift} - 1)/(d - 1)}, stopped once terms drop below SERIES_TOL."""
    total, i = 0.0, 1
    while True:
        term = _power(base, _exponent(d, i + shift))
        total += term
        if term < SERIES_TOL:
            return total
        i += 1


def _second_moment(tail):
    """E[Q²] from P(Q >= i) for i = 1, 2, ...  (tail given as a callable)."""
    total, i = 0.0, 1
    while True:
        p = tail(i)
        total += (2 * i - 1) * p
        if p < SERIES_TOL:
            return total
        i += 1


# -- queueing fixed point ------------------------------------------------------


def queueing_fixed_point(d1, lam, mu1=1.0, mu2=0.5, imax=12):
    """Cumulative q̄*_{i1}, i = 0..imax, of the fixed point where every server holds a type-II job."""
    _queueing_regime(lam, mu1, mu2)
    if d1 < 1:
        raise DomainError("d1 must be at least 1")
    rho = (lam - mu2) / (mu1 - mu2)
    return np.array([_power(rho, _exponent(d1, i)) for i in range(imax + 1)])


def queueing_fixed_point_qbar(d1, lam, mu1=1.0, mu2=0.5, imax=12):
    """The same fixed point as a full (imax + 1, 2) cumulative array (q̄*_{i0} = 0)."""
    out = np.zeros((imax + 1, 2))
    out[:, 1] = queueing_fixed_point(d1, lam, mu1, mu2, imax)
    return out


# -- d1 threshold --------------------------------------------------------------


def _conditions(d, lam, mu1, mu2):
    a = lam * (1 / mu2 - 1 / mu1)
    first = d * a > 1
    second = first and (1 - 1 / d) * (mu1 / lam) > (d * a) ** (1 / (d - 1))
    return first and second


def d1_star(lam, mu1=1.0, mu2=0.5, d_max=100_000):
    """Smallest selection size d >= 2 at which the two idle-server fixed points appear."""
    _queueing_regime(lam, mu1, mu2)
    for d in range(2, d_max + 1):
        if _conditions(d, lam, mu1, mu2):
            return d
    raise DomainError(f"no threshold found below d = {d_max}")  # pragma: no cover


def d1_star_table(mu2s=TABLE2_MU2S, lambdas=TABLE2_LAMBDAS, mu1=1.0):
    """Rows ``(mu2, [d1* or None per lambda])``; None where lambda <= mu2."""
    rows = []
    for mu2 in mu2s:
        rows.append((mu2, [d1_star(lam, mu1, mu2) if mu2 < lam < mu1 else None
                           for lam in lambdas]))
    return rows


def write_d1_star_csv(fname, mu2s=TABLE2_MU2S, lambdas=TABLE2_LAMBDAS, mu1=1.0):
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["mu2"] + [f"{lam:g}" for lam in lambdas])
        for mu2, vals in d1_star_table(mu2s, lambdas, mu1):
            w.writerow([f"{mu2:.7g}"] + ["/" if v is None else v for v in vals])


# -- fixed points with idle servers ------------------------------------------------


@dataclass
class NoQueueingFixedPoint:
    q00: float
    q01: float
    q10: float
    x: float
    alpha_minus: float
    alpha_plus: float
    stability: str  # "stable", "unstable" or "inconclusive"

    @property
    def triple(self):
        return (self.q00, self.q01, self.q10)

    @property
    def stable(self):
        return self.stability == "stable"

    def qbar(self, imax=12):
        """Embedding as a cumulative (imax + 1, 2) fluid state."""
        out = np.zeros((imax + 1, 2))
        out[0, 0] = self.q00 + self.q10
        out[0, 1] = self.q01
        out[1, 0] = self.q10
        return out


def _f(x, d, a, c):
    return a * x**d - x + c


def _bisect(lo, hi, d, a, c):
    flo = _f(lo, d, a, c)
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        fm = _f(mid, d, a, c)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def x_tilde(d1, lam, mu1=1.0, mu2=0.5):
    """Minimiser of f on (0, inf) for d1 >= 2."""
    a = lam * (1 / mu2 - 1 / mu1)
    return (1 / (d1 * a)) ** (1 / (d1 - 1))


def _triple(x, d1, lam, mu1, mu2):
    xd = x**d1
    return 1 - x, lam / mu2 * xd, lam / mu1 * (1 - xd)


def no_queueing_fixed_points(d1, lam, mu1=1.0, mu2=0.5):
    """Fixed points with a positive idle fraction, sorted by decreasing q00."""
    _check_rates(mu1, mu2)
    if d1 < 1:
        raise DomainError("d1 must be at least 1")
    if lam <= 0:
        return []
    if d1 == 1:
        if lam >= mu2:
            return []
        q00 = (mu2 - lam) * mu1 / ((mu2 - lam) * mu1 + lam * mu2)
        roots = [1 - q00]
    else:
        a = lam * (1 / mu2 - 1 / mu1)
        c = lam / mu1
        if lam > mu2:
            # both ends positive; any roots straddle the minimiser
            if not (_f(0.0, d1, a, c) > 0 and _f(1.0, d1, a, c) > 0):
                raise InvariantError("f must be positive at both ends when lambda > mu2")
        xt = x_tilde(d1, lam, mu1, mu2)
        roots = []
        if xt >= 1:
            if _f(1.0, d1, a, c) < 0:
                roots.append(_bisect(0.0, 1.0, d1, a, c))
        else:
            fmin = _f(xt, d1, a, c)
            if fmin == 0:
                warnings.warn("f touches zero at x~: single degenerate fixed point", RuntimeWarning)
                roots.append(xt)
            elif fmin < 0:
                roots.append(_bisect(0.0, xt, d1, a, c))
                if _f(1.0, d1, a, c) > 0:
                    roots.append(_bisect(xt, 1.0, d1, a, c))
    out = []
    for x in roots:
        q00, q01, q10 = _triple(x, d1, lam, mu1, mu2)
        am, ap, verdict = local_stability((q00, q01, q10), d1, lam, mu1, mu2)
        out.append(NoQueueingFixedPoint(q00, q01, q10, x, am, ap, verdict))
    return sorted(out, key=lambda p: -p.q00)


def local_stability(triple, d1, lam, mu1=1.0, mu2=0.5, tol=1e-12):
    """Eigenvalues (α₋, α₊) of the linearisation at an idle-server fixed point, and the verdict."""
    q00 = triple[0]
    disc = (mu1 - mu2) ** 2 + 4 * lam * d1 * (mu1 - mu2) * (1 - q00) ** (d1 - 1)
    root = math.sqrt(disc)
    am = 0.5 * (-(mu1 + mu2) - root)
    ap = 0.5 * (-(mu1 + mu2) + root)
    if abs(ap) <= tol * (mu1 + mu2):
        verdict = "inconclusive"
    else:
        verdict = "stable" if ap < 0 else "unstable"
    return am, ap, verdict


# -- metrics -------------------------------------------------------------------------


def switch_fraction(lam, mu1=1.0, mu2=0.5):
    """Share of arrivals placed as type II on a server that just emptied, at the queueing fixed point.

    Evaluated in exact rational arithmetic on the decimal inputs.
    """
    lam_f, mu1_f, mu2_f = (Fraction(str(v)) for v in (lam, mu1, mu2))
    return float(mu2_f / lam_f * (mu1_f - lam_f) / (mu1_f - mu2_f))


@dataclass
class Metrics:
    d1: int
    lam: float
    mu1: float
    mu2: float
    rho: float
    tilde_lambda: float
    switch_fraction: float
    EQ_cm: float
    EQ_jsq: float
    EQ_ra: float
    EQ_I: float
    EQ_II: float
    EW: float
    EW_I: float
    EW_II: float
    EW_ra: float
    EW_jsq: float
    var_cm: float
    var_jsq: float
    var_ra: float


def metrics(d1, lam, mu1=1.0, mu2=0.5):
    """Queue-length and waiting-time figures implied by the queueing fixed point."""
    _queueing_regime(lam, mu1, mu2)
    rho = (lam - mu2) / (mu1 - mu2)
    r = lam / mu1
    lt = lam - mu2 * (1 - rho)
    eq_cm = _series(rho, d1, 0)
    eq_i = _series(rho, d1, 1)
    eq_jsq = _series(r, d1, 1)
    eq_ra = r * r / (1 - r)
    eq_ii = rho
    var = {}
    for name, tail, mean in (
        ("cm", lambda i: _power(rho, _exponent(d1, i)), eq_cm),
        ("jsq", lambda i: _power(r, _exponent(d1, i + 1)), eq_jsq),
        ("ra", lambda i: r ** (i + 1), eq_ra),
    ):
        var[name] = _second_moment(tail) - mean * mean
    return Metrics(
        d1=d1, lam=lam, mu1=mu1, mu2=mu2, rho=rho, tilde_lambda=lt,
        switch_fraction=switch_fraction(lam, mu1, mu2),
        EQ_cm=eq_cm, EQ_jsq=eq_jsq, EQ_ra=eq_ra, EQ_I=eq_i, EQ_II=eq_ii,
        EW=eq_cm / lam, EW_I=eq_i / lt, EW_II=eq_ii / (lam - lt),
        EW_ra=eq_ra / lam, EW_jsq=eq_jsq / lam,
        var_cm=var["cm"], var_jsq=var["jsq"], var_ra=var["ra"],
    )


# -- reports ---------------------------------------------------------------------------


@dataclass
class FixedPointReport:
    d1: int
    lam: float
    mu1: float
    mu2: float
    queueing: list = field(default_factory=list)
    no_queueing: list = field(default_factory=list)
    d1_star: int = None
    x_tilde: float = None
    metrics: Metrics = None

    def to_json(self):
        return {
            "params": {"d1": self.d1, "lambda": self.lam, "mu1": self.mu1, "mu2": self.mu2},
            "queueing_fp": self.queueing,
            "no_queueing_fps": [
                {"q00": p.q00, "q01": p.q01, "q10": p.q10, "x": p.x,
                 "alpha_minus": p.alpha_minus, "alpha_plus": p.alpha_plus,
                 "stability": p.stability}
                for p in self.no_queueing
            ],
            "d1_star": self.d1_star,
            "x_tilde": self.x_tilde,
            "metrics": asdict(self.metrics) if self.metrics else None,
        }

    def write(self, fname):
        with open(fname, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)


def report(d1, lam, mu1=1.0, mu2=0.5, imax=12):
    """Everything known about the fixed points at these parameters.

    Quantities that only exist in the λ > μ₂ regime are left as None outside it.
    """
    _check_rates(mu1, mu2)
    if not 0 < lam < mu1:
        raise DomainError(f"need 0 < lambda < mu1, got lambda={lam}")
    queueing_regime = mu2 < lam
    return FixedPointReport(
        d1=d1, lam=lam, mu1=mu1, mu2=mu2,
        queueing=[float(v) for v in queueing_fixed_point(d1, lam, mu1, mu2, imax)]
        if queueing_regime else [],
        no_queueing=no_queueing_fixed_points(d1, lam, mu1, mu2),
        d1_star=d1_star(lam, mu1, mu2) if queueing_regime else None,
        x_tilde=x_tilde(d1, lam, mu1, mu2) if d1 >= 2 and lam > 0 else None,
        metrics=metrics(d1, lam, mu1, mu2) if queueing_regime else None,
    )


SWEEP_HEADER = ["lambda", "EQ_cm", "EQ_jsq", "EQ_ra", "EW_I", "EW_II", "EW_ra", "EW_jsq"]


def lambda_sweep(d1, lambdas, mu1=1.0, mu2=0.5):
    return [metrics(d1, lam, mu1, mu2) for lam in lambdas]


def write_sweep_csv(fname, d1, lambdas, mu1=1.0, mu2=0.5):
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for m in lambda_sweep(d1, lambdas, mu1, mu2):
            w.writerow([repr(m.lam), repr(m.EQ_cm), repr(m.EQ_jsq), repr(m.EQ_ra),
                        repr(m.EW_I), repr(m.EW_II), repr(m.EW_ra), repr(m.EW_jsq)])
