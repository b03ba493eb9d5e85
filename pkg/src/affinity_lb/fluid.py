"""Fluid limit of the combinatorial model.

State: cumulative fractions ``qbar[i, j]`` = fraction of servers with at
least ``i`` type-I jobs and exactly ``j`` type-II jobs, ``0 <= i <= imax``,
``j in {0, 1}``; ``qbar[imax + 1, :]`` is taken as 0.  Non-cumulative
fractions are ``q[i, j] = qbar[i, j] - qbar[i + 1, j]``.

The drift switches regime on the idle fraction ``q00``: while idle
servers exist arrivals go to them (type II when the d₁-selection has
none), and once ``q00 = 0`` the freshly idled servers absorb a share of
the arrivals as type-II jobs and only the reduced rate λ̃ queues up.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._accel import jit
from .errors import ConfigError, IntegrationError
from .simulate import DEFAULT_IMAX, Trajectory

DEFAULT_EPS0 = 1e-15
DEFAULT_DT = 1e-3
MONOTONE_FIX_TOL = 1e-6
CHATTER_RATE = 1e3
_SUBSTEPS = 64
_CROSS_TOL = 1e-12


# -- kernels --------------------------------------------------------------


@jit
def _qb(q, i, j):
    if i < q.shape[0]:
        return q[i, j]
    return 0.0


@jit
def tilde_lambda_k(q, lam, mu1, mu2):
    q10 = q[1, 0] - _qb(q, 2, 0)
    q01 = q[0, 1] - q[1, 1]
    return max(lam - mu1 * q10 - mu2 * q01, 0.0)


@jit
def drift_k(q, d1, lam, mu1, mu2, eps0, out):
    imax = q.shape[0] - 1
    q00 = q[0, 0] - q[1, 0]
    lt = tilde_lambda_k(q, lam, mu1, mu2)
    empty = q00 < eps0
    p2 = (1.0 - q00) ** d1
    if empty:
        out[0, 0] = mu2 * (q[0, 1] - q[1, 1]) - lam * p2 + lt
        out[0, 1] = mu2 * (q[1, 1] - q[0, 1]) + (lam - lt)
        out[1, 0] = mu1 * (_qb(q, 2, 0) - q[1, 0])
        out[1, 1] = mu1 * (_qb(q, 2, 1) - q[1, 1]) + lt * (
            (q[1, 0] + q[0, 1]) ** d1 - (q[1, 0] + q[1, 1]) ** d1)
    else:
        out[0, 0] = mu2 * (q[0, 1] - q[1, 1]) - lam * p2
        out[0, 1] = mu2 * (q[1, 1] - q[0, 1]) + lam * p2
        out[1, 0] = mu1 * (_qb(q, 2, 0) - q[1, 0]) + lam * (1.0 - p2)
        out[1, 1] = mu1 * (_qb(q, 2, 1) - q[1, 1])
    for i in range(2, imax + 1):
        a0 = mu1 * (_qb(q, i + 1, 0) - q[i, 0])
        a1 = mu1 * (_qb(q, i + 1, 1) - q[i, 1])
        if empty:
            a0 += lt * ((q[i - 1, 0] + q[i - 1, 1]) ** d1 - (q[i, 0] + q[i - 1, 1]) ** d1)
            a1 += lt * ((q[i, 0] + q[i - 1, 1]) ** d1 - (q[i, 0] + q[i, 1]) ** d1)
        out[i, 0] = a0
        out[i, 1] = a1


@jit
def _rk4_step(q, h, d1, lam, mu1, mu2, eps0, k1, k2, k3, k4, tmp):
    drift_k(q, d1, lam, mu1, mu2, eps0, k1)
    tmp[:, :] = q + 0.5 * h * k1
    drift_k(tmp, d1, lam, mu1, mu2, eps0, k2)
    tmp[:, :] = q + 0.5 * h * k2
    drift_k(tmp, d1, lam, mu1, mu2, eps0, k3)
    tmp[:, :] = q + h * k3
    drift_k(tmp, d1, lam, mu1, mu2, eps0, k4)
    q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@jit
def _project(q):
    """Restore the state constraints; returns the largest monotonicity repair made.

    ``qbar00 >= qbar10`` (no negative idle mass) is the switching surface
    and is enforced by raising ``qbar00``; it does not count as a repair.
    """
    imax = q.shape[0] - 1
    for i in range(imax + 1):
        for j in range(2):
            if q[i, j] < 0.0:
                q[i, j] = 0.0
            elif q[i, j] > 1.0:
                q[i, j] = 1.0
    if q[0, 0] < q[1, 0]:
        q[0, 0] = q[1, 0]
    q[0, 1] = 1.0 - q[0, 0]
    worst = 0.0
    for j in range(2):
        for i in range(1, imax + 1):
            v = q[i, j] - q[i - 1, j]
            if v > 0.0:
                if not (i == 1 and j == 0) and v > worst:
                    worst = v
                q[i, j] = q[i - 1, j]
    return worst


@jit
def integrate_k(q, d1, lam, mu1, mu2, eps0, dt, n_steps, sample_every, out, fix_tol):
    """Fixed-step RK4 with projection; returns (status, indicator flips, worst repair)."""
    k1 = np.empty_like(q)
    k2 = np.empty_like(q)
    k3 = np.empty_like(q)
    k4 = np.empty_like(q)
    tmp = np.empty_like(q)
    trial = np.empty_like(q)
    out[0] = q
    k = 1
    flips = 0
    worst = 0.0
    was_empty = (q[0, 0] - q[1, 0]) < eps0
    for step in range(1, n_steps + 1):
        trial[:, :] = q
        _rk4_step(trial, dt, d1, lam, mu1, mu2, eps0, k1, k2, k3, k4, tmp)
        if not was_empty and trial[0, 0] - trial[1, 0] < -_CROSS_TOL:
            # the idle fraction hits zero inside this step: resolve it finely
            h = dt / _SUBSTEPS
            for _ in range(_SUBSTEPS):
                _rk4_step(q, h, d1, lam, mu1, mu2, eps0, k1, k2, k3, k4, tmp)
                rep = _project(q)
                if rep > worst:
                    worst = rep
        else:
            q[:, :] = trial
        rep = _project(q)
        if rep > worst:
            worst = rep
        if worst > fix_tol:
            return 1, flips, worst
        now_empty = (q[0, 0] - q[1, 0]) < eps0
        if now_empty != was_empty:
            flips += 1
        was_empty = now_empty
        if step % sample_every == 0 and k < out.shape[0]:
            out[k] = q
            k += 1
    return 0, flips, worst


# -- Python API -----------------------------------------------------------


@dataclass
class FluidState:
    """Cumulative fractions plus the model parameters they evolve under."""

    qbar: np.ndarray
    d1: int
    lam: float
    mu1: float = 1.0
    mu2: float = 0.5
    eps0: float = DEFAULT_EPS0

    def __post_init__(self):
        self.qbar = np.array(self.qbar, dtype=np.float64)
        if self.qbar.ndim != 2 or self.qbar.shape[1] != 2 or self.qbar.shape[0] < 3:
            raise ConfigError("qbar must have shape (imax + 1, 2) with imax >= 2")
        if int(self.d1) != self.d1 or self.d1 < 1:
            raise ConfigError("d1 must be a positive integer")
        self.d1 = int(self.d1)
        if not (self.mu1 > self.mu2 > 0):
            raise ConfigError("need mu1 > mu2 > 0")
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")

    @property
    def imax(self):
        return self.qbar.shape[0] - 1

    @property
    def q(self):
        """Non-cumulative fractions q_ij."""
        nxt = np.vstack([self.qbar[1:], np.zeros((1, 2))])
        return self.qbar - nxt

    def check(self, tol=1e-9):
        q = self.qbar
        if abs(q[0, 0] + q[0, 1] - 1.0) > tol:
            raise ConfigError("qbar00 + qbar01 must equal 1")
        if (q < -tol).any() or (q > 1 + tol).any():
            raise ConfigError("fractions must lie in [0, 1]")
        if (np.diff(q, axis=0) > tol).any():
            raise ConfigError("cumulative fractions must be nonincreasing in i")
        return self

    def with_qbar(self, qbar):
        return FluidState(qbar, self.d1, self.lam, self.mu1, self.mu2, self.eps0)

    @classmethod
    def empty(cls, d1, lam, mu1=1.0, mu2=0.5, imax=DEFAULT_IMAX, eps0=DEFAULT_EPS0):
        qbar = np.zeros((imax + 1, 2))
        qbar[0, 0] = 1.0
        return cls(qbar, d1, lam, mu1, mu2, eps0)

    @classmethod
    def from_fractions(cls, q, d1, lam, mu1=1.0, mu2=0.5, imax=DEFAULT_IMAX, eps0=DEFAULT_EPS0):
        """Build from non-cumulative fractions, an array ``q[i, j]`` or a dict ``{(i, j): q}``."""
        arr = np.zeros((imax + 1, 2))
        if isinstance(q, dict):
            for (i, j), v in q.items():
                if i > imax or j not in (0, 1):
                    raise ConfigError(f"configuration {(i, j)} outside the truncation")
                arr[i, j] = v
        else:
            q = np.asarray(q, dtype=np.float64)
            arr[: q.shape[0]] = q[: imax + 1]
        total = arr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1, got {total}")
        qbar = np.cumsum(arr[::-1], axis=0)[::-1]
        return cls(qbar, d1, lam, mu1, mu2, eps0)


def tilde_lambda(state):
    """Reduced arrival rate (λ − μ₁q₁₀ − μ₂q₀₁)⁺."""
    return float(tilde_lambda_k(state.qbar, state.lam, state.mu1, state.mu2))


def drift(state):
    out = np.empty_like(state.qbar)
    drift_k(state.qbar, state.d1, state.lam, state.mu1, state.mu2, state.eps0, out)
    return out


def integrate(initial, horizon, dt=DEFAULT_DT, sample_dt=None):
    """Integrate the fluid ODE from ``initial`` up to ``horizon``.

    Returns a :class:`~affinity_lb.simulate.Trajectory` sampled every
    ``sample_dt`` (defaults to ``dt``).  Raises :class:`IntegrationError`
    if a step breaks monotonicity by more than ``MONOTONE_FIX_TOL``.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    initial.check()
    sample_dt = dt if sample_dt is None else sample_dt
    n_steps = int(round(horizon / dt))
    sample_every = max(1, int(round(sample_dt / dt)))
    n_samples = n_steps // sample_every + 1
    out = np.zeros((n_samples, initial.imax + 1, 2))
    q = initial.qbar.copy()
    status, flips, worst = integrate_k(q, initial.d1, initial.lam, initial.mu1, initial.mu2,
                                       initial.eps0, dt, n_steps, sample_every, out,
                                       MONOTONE_FIX_TOL)
    if status:
        raise IntegrationError(f"monotonicity violated by {worst:.3g}; step dt={dt} too large")
    times = np.arange(n_samples) * sample_every * dt
    chatter = flips / horizon > CHATTER_RATE
    if chatter:
        warnings.warn(f"idle indicator flipped {flips} times over t={horizon}", RuntimeWarning)
    meta = {"flips": int(flips), "chattering": bool(chatter), "max_repair": float(worst),
            "final": initial.with_qbar(q)}
    return Trajectory(times, out, meta)


def transition_probs(q, d1):
    """Allocation probabilities for occupancy fractions ``q[i, j]`` (non-cumulative).

    Returns ``{(i, j, "I" | "II"): p}``, the chance that an arrival joins a
    server in configuration (i, j) as a job of the given type, with the
    d₁ primary servers sampled with replacement.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 2:
        raise ValueError("q must have shape (levels, 2)")
    if abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    q00 = q[0, 0]
    out = {}
    p_none = (1.0 - q00) ** d1
    out[(0, 0, "I")] = 1.0 - p_none
    out[(0, 0, "II")] = p_none if q00 > 0 else 0.0
    if q00 > 0:
        return {k: v for k, v in out.items() if v > 0}
    # tail[i] = fraction of servers with at least i type-I jobs (any type II)
    rowsum = q.sum(axis=1)
    tail = np.concatenate([np.cumsum(rowsum[::-1])[::-1], [0.0]])
    for i in range(q.shape[0]):
        if i >= 1:
            out[(i, 0, "I")] = tail[i] ** d1 - (q[i, 1] + tail[i + 1]) ** d1
        out[(i, 1, "I")] = (q[i, 1] + tail[i + 1]) ** d1 - tail[i + 1] ** d1
    return {k: v for k, v in out.items() if v > 0}


def random_initial_state(rng, d1, lam, mu1=1.0, mu2=0.5, configs=None, imax=DEFAULT_IMAX,
                         eps0=DEFAULT_EPS0):
    """Fluid state with uniformly (Dirichlet(1)) drawn mass over ``configs``.

    ``configs`` defaults to every (i, j) with i <= 3, j in {0, 1}.
    """
    if configs is None:
        configs = [(i, j) for i in range(4) for j in (0, 1)]
    w = rng.dirichlet(np.ones(len(configs)))
    return FluidState.from_fractions(dict(zip(configs, w)), d1, lam, mu1, mu2, imax, eps0)


def distance(a, b):
    """Sup-norm distance between two cumulative-fraction arrays."""
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))

