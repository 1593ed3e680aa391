"""Closed-loop step simulation of PID / PI^lambda D^mu loops and the ITAE+ISCO cost.

Fractional operators are realized with Oustaloup's recursive pole/zero
ladder.  Each ladder is kept in factored form and realized as a cascade of
first-order sections; the loop is discretized exactly (matrix exponential,
zero-order hold), and the plant dead time is a sample buffer.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from .lti import DelayTF, LtiError, residence_time, to_state_space

__all__ = [
    "ControllerParams", "FracApproxConfig", "CostWeights", "Trajectory",
    "SimConfig", "oustaloup", "oustaloup_zpk", "controller_tf", "simulate_step",
    "cost_j", "default_horizon", "PENALTY",
]

PENALTY = 1e9


@dataclass(frozen=True)
class ControllerParams:
    """Parallel ``Kp + Ki / s^lam + Kd s^mu``; ``lam = mu = 1`` is a classical PID."""

    Kp: float
    Ki: float = 0.0
    Kd: float = 0.0
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("Kp", "Ki", "Kd", "lam", "mu"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if min(self.Kp, self.Ki, self.Kd) < 0:
            raise ValueError(f"controller gains must be >= 0: {self}")
        if not (0 < self.lam <= 2 and 0 < self.mu <= 2):
            raise ValueError(f"fractional orders must lie in (0, 2]: {self}")

    @property
    def is_integer_order(self) -> bool:
        return self.lam == 1.0 and self.mu == 1.0

    def as_dict(self) -> dict:
        return {"Kp": self.Kp, "Ki": self.Ki, "Kd": self.Kd, "lambda": self.lam, "mu": self.mu}

    @classmethod
    def from_vector(cls, x) -> "ControllerParams":
        x = [float(v) for v in x]
        return cls(*x) if len(x) == 5 else cls(x[0], x[1], x[2])


@dataclass(frozen=True)
class FracApproxConfig:
    omega_low: float = 1e-2
    omega_high: float = 1e2
    order: int = 5

    def __post_init__(self):
        if not (0 < self.omega_low < self.omega_high):
            raise ValueError("need 0 < omega_low < omega_high")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("order must be a positive integer")

    @property
    def filter_pole(self) -> float:
        """Corner of the first-order filter that makes derivative terms proper."""
        return 100.0 * self.omega_high


@dataclass(frozen=True)
class CostWeights:
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or (self.w1 == 0 and self.w2 == 0):
            raise ValueError("weights must be >= 0 and not both zero")


@dataclass(frozen=True)
class SimConfig:
    """Horizon/step bundle; ``None`` horizon means :func:`default_horizon`."""

    horizon: float | None = None
    n_steps: int = 20000
    frac: FracApproxConfig = field(default_factory=FracApproxConfig)
    derivative_on: str = "measurement"

    def resolve(self, plant: DelayTF) -> tuple[float, float]:
        h = self.horizon if self.horizon is not None else default_horizon(plant)
        return h, h / self.n_steps


@dataclass
class Trajectory:
    dt: float
    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    stable: bool = True

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "y", "u", "e"])
        for row in zip(self.t, self.y, self.u, self.e):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def default_horizon(plant: DelayTF) -> float:
    """``max(50, 20 (L + tau))`` with the residence time standing in for ``L + tau``."""
    return max(50.0, 20.0 * residence_time(plant))


# --------------------------------------------------------------------------
# Oustaloup


def oustaloup_zpk(alpha: float, cfg: FracApproxConfig):
    """Zeros, poles (as positive corner frequencies) and gain for ``s^alpha``, ``|alpha| < 1``."""
    wb, wh, n = cfg.omega_low, cfg.omega_high, int(cfg.order)
    k = np.arange(-n, n + 1)
    ratio = wh / wb
    zeros = wb * ratio ** ((k + n + 0.5 * (1 - alpha)) / (2 * n + 1))
    poles = wb * ratio ** ((k + n + 0.5 * (1 + alpha)) / (2 * n + 1))
    return zeros, poles, wh**alpha


def _split_order(alpha: float) -> tuple[int, float]:
    """``alpha = n + f`` with ``|f| < 1`` and ``n`` the integer part toward zero."""
    n = int(math.trunc(alpha))
    return n, alpha - n


def _split_floor(alpha: float) -> tuple[int, float]:
    """``alpha = n + f`` with ``0 <= f < 1``; keeps a pure integrator for negative orders."""
    n = math.floor(alpha)
    return n, alpha - n


def oustaloup(alpha: float, cfg: FracApproxConfig | None = None) -> DelayTF:
    """Rational approximation of ``s^alpha`` over ``[omega_low, omega_high]``.

    Integer exponents are returned exactly.  For ``1 < |alpha| < 2`` the
    integer part is factored out exactly and only the remainder is
    approximated, so e.g. ``alpha = 1.5`` gives an improper ``s * O(s^0.5)``.
    """
    cfg = cfg or FracApproxConfig()
    if not abs(alpha) < 2:
        raise LtiError(f"fractional order must satisfy |alpha| < 2, got {alpha}")
    n, f = _split_order(alpha)
    num, den = np.array([1.0]), np.array([1.0])
    if f != 0:
        z, p, k = oustaloup_zpk(f, cfg)
        num, den = k * np.poly(-z), np.poly(-p)
    if n > 0:
        num = np.polymul(num, [1.0] + [0.0] * n)
    elif n < 0:
        den = np.polymul(den, [1.0] + [0.0] * (-n))
    return DelayTF(num, den)


# --------------------------------------------------------------------------
# small state-space algebra (SISO blocks as (A, B, C, D) arrays)


def _ss(A, B, C, D):
    A = np.atleast_2d(np.asarray(A, float))
    n = 0 if A.size == 0 else A.shape[0]
    return (A.reshape(n, n), np.asarray(B, float).reshape(n, 1),
            np.asarray(C, float).reshape(1, n), np.asarray(D, float).reshape(1, 1))


def _gain(k):
    return _ss(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[k]])


def _series(g1, g2):
    """Output of ``g1`` feeds ``g2``."""
    A1, B1, C1, D1 = g1
    A2, B2, C2, D2 = g2
    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.block([[A1, np.zeros((n1, n2))], [B2 @ C1, A2]])
    B = np.vstack([B1, B2 @ D1])
    C = np.hstack([D2 @ C1, C2])
    return _ss(A, B, C, D2 @ D1)


def _parallel(g1, g2):
    A1, B1, C1, D1 = g1
    A2, B2, C2, D2 = g2
    A = spla.block_diag(A1, A2)
    return _ss(A, np.vstack([B1, B2]), np.hstack([C1, C2]), D1 + D2)


def _scale(g, k):
    A, B, C, D = g
    return _ss(A, B, k * C, k * D)


def _first_order(zero, pole):
    """``(s + zero)/(s + pole)``; ``zero=None`` gives ``1/(s + pole)``."""
    if zero is None:
        return _ss([[-pole]], [[1.0]], [[1.0]], [[0.0]])
    return _ss([[-pole]], [[1.0]], [[zero - pole]], [[1.0]])


def _fractional_block(alpha: float, cfg: FracApproxConfig):
    """Proper realization of ``s^alpha`` for controller use.

    Split as ``s^n * s^f`` with ``0 <= f < 1`` so a fractional integral keeps
    an exact integrator; each exact differentiator gets a first-order filter.
    """
    n, f = _split_floor(alpha)
    g = _gain(1.0)
    if f != 0:
        z, p, k = oustaloup_zpk(f, cfg)
        g = _gain(k)
        for zi, pi in zip(z, p):
            g = _series(g, _first_order(zi, pi))
    wf = cfg.filter_pole
    for _ in range(abs(n)):
        if n > 0:
            # s * wf / (s + wf)
            g = _series(g, _scale(_first_order(0.0, wf), wf))
        else:
            g = _series(g, _first_order(None, 0.0))
    return g


def _controller_blocks(c: ControllerParams, cfg: FracApproxConfig):
    """``(P+I block, D block)`` as separate SISO realizations."""
    pi = _gain(c.Kp)
    if c.Ki:
        pi = _parallel(pi, _scale(_fractional_block(-c.lam, cfg), c.Ki))
    d = _scale(_fractional_block(c.mu, cfg), c.Kd) if c.Kd else _gain(0.0)
    return pi, d


def controller_tf(c: ControllerParams, cfg: FracApproxConfig | None = None) -> DelayTF:
    """Controller transfer function over a common denominator.

    Integer orders are exact.  A fractional integral ``s^-lam`` is realized
    as ``s^-ceil(lam) * O(s^(ceil(lam) - lam))`` so integral action is kept;
    each exact ``s`` factor of the derivative term gets a first-order filter
    at ``cfg.filter_pole``.
    """
    cfg = cfg or FracApproxConfig()
    out = DelayTF.gain(c.Kp)
    if c.Ki:
        out = out + c.Ki * _exact_or_approx(-c.lam, cfg, filtered=False)
    if c.Kd:
        out = out + c.Kd * _exact_or_approx(c.mu, cfg, filtered=True)
    return out


def _exact_or_approx(alpha, cfg, filtered):
    n, f = _split_floor(alpha)
    g = oustaloup(f, cfg) if f else DelayTF.gain(1.0)
    if n < 0:
        g = g * DelayTF((1.0,), [1.0] + [0.0] * (-n))
    elif n > 0:
        wf = cfg.filter_pole
        for _ in range(n):
            g = g * (DelayTF((wf, 0.0), (1.0, wf)) if filtered else DelayTF((1.0, 0.0), (1.0,)))
    return g


# --------------------------------------------------------------------------
# simulation


def _zoh(A, B, dt):
    n, m = A.shape[0], B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A * dt
    M[:n, n:] = B * dt
    E = spla.expm(M)
    return E[:n, :n], E[:n, n:]


def _propagate(Phi, gamma, z0, N):
    """States ``z_k`` for ``z_{k+1} = Phi z_k + gamma``, ``k < N``, by block doubling."""
    n = Phi.shape[0]
    Z = np.empty((n, N))
    if n == 0:
        return Z
    Z[:, 0] = z0
    filled = 1
    # affine recursion as a linear one on the augmented state [z; 1]
    Pa = np.zeros((n + 1, n + 1))
    Pa[:n, :n], Pa[:n, n], Pa[n, n] = Phi, gamma, 1.0
    Za = np.vstack([Z, np.zeros((1, N))])
    Za[n, 0] = 1.0
    P = Pa
    with np.errstate(over="ignore", invalid="ignore"):
        while filled < N:
            m = min(filled, N - filled)
            Za[:, filled:filled + m] = P @ Za[:, :m]
            filled += m
            if filled < N:
                P = P @ P
    return Za[:n]


def simulate_step(plant: DelayTF, c: ControllerParams, horizon: float | None = None,
                  dt: float | None = None, cfg: FracApproxConfig | None = None, *,
                  derivative_on: str = "measurement", step_time: float = 0.0) -> Trajectory:
    """Unity-feedback response to a unit set-point step.

    Parameters
    ----------
    plant
        Proper plant; its dead time is realized as ``round(L/dt)`` samples.
    c
        Controller parameters.
    horizon, dt
        Simulation length and step, seconds.  Defaults follow
        :func:`default_horizon` with 20000 steps.
    cfg
        Oustaloup band/order for the fractional terms.
    derivative_on
        ``"measurement"`` (default) drives the derivative term with ``-y``;
        ``"error"`` drives it with ``e = r - y`` as in the plain parallel form.
    step_time
        Time at which the reference steps from 0 to 1.

    Returns
    -------
    Trajectory
        ``stable`` is False when a sample is non-finite or, for delay-free
        loops, when a closed-loop pole is not in the open left half-plane.
    """
    cfg = cfg or FracApproxConfig()
    if horizon is None:
        horizon = default_horizon(plant)
    if dt is None:
        dt = horizon / 20000
    if not dt > 0 or horizon < 10 * dt:
        raise ValueError("need dt > 0 and horizon >= 10 dt")
    if not plant.is_proper:
        raise LtiError("plant must be proper")
    if derivative_on not in ("measurement", "error"):
        raise ValueError(f"derivative_on must be 'measurement' or 'error', got {derivative_on!r}")

    N = int(round(horizon / dt)) + 1
    t = np.arange(N) * dt
    r = (t >= step_time - 1e-12 * dt).astype(float)
    d = int(round(plant.delay_s / dt))

    Ap, Bp, Cp, Dp = to_state_space(plant)
    pi, dblk = _controller_blocks(c, cfg)
    # controller with inputs [e, y]
    if derivative_on == "error":
        ctl = _parallel(pi, dblk)
        Ac, Bc_e, Cc, Dc_e = ctl
        Bc_y, Dc_y = np.zeros_like(Bc_e), np.zeros_like(Dc_e)
    else:
        Ac = spla.block_diag(pi[0], dblk[0])
        Bc_e = np.vstack([pi[1], np.zeros_like(dblk[1])])
        Bc_y = np.vstack([np.zeros_like(pi[1]), -dblk[1]])
        Cc = np.hstack([pi[2], dblk[2]])
        Dc_e, Dc_y = pi[3], -dblk[3]
    npl, nc = Ap.shape[0], Ac.shape[0]
    dp = Dp.item()
    g = (Dc_y - Dc_e).item()   # u = Cc xc + Dc_e r + g y

    if d == 0:
        den = 1.0 - g * dp
        if abs(den) < 1e-14:
            raise LtiError("algebraic loop is ill-posed (1 + C(inf) P(inf) = 0)")
        # u = Ku z + ku r ; y = Ky z + ky r
        Ku = np.hstack([g * Cp, Cc]) / den
        ku = Dc_e.item() / den
        Ky = np.hstack([Cp, np.zeros((1, nc))]) + dp * Ku
        ky = dp * ku
        A = np.block([[Ap, np.zeros((npl, nc))],
                      [(Bc_y - Bc_e) @ Cp, Ac]])
        A = A + np.vstack([Bp, (Bc_y - Bc_e) * dp]) @ Ku
        b = np.vstack([Bp * ku, Bc_e + (Bc_y - Bc_e) * ky])
        Phi, Gam = _zoh(A, b, dt)
        k0 = int(np.argmax(r > 0)) if r.any() else N
        Z = np.zeros((A.shape[0], N))
        if k0 < N:
            Z[:, k0:] = _propagate(Phi, Gam[:, 0], np.zeros(A.shape[0]), N - k0)
        with np.errstate(over="ignore", invalid="ignore"):
            y = (Ky @ Z).ravel() + ky * r
            u = (Ku @ Z).ravel() + ku * r
        eig_ok = A.shape[0] == 0 or bool(np.all(np.linalg.eigvals(A).real < 0))
    else:
        A = np.block([[Ap, np.zeros((npl, nc))],
                      [(Bc_y - Bc_e) @ Cp, Ac]])
        Bv = np.vstack([Bp, (Bc_y - Bc_e) * dp])
        Br = np.vstack([np.zeros((npl, 1)), Bc_e])
        Phi, Gam = _zoh(A, np.hstack([Bv, Br]), dt)
        gv, gr = Gam[:, 0], Gam[:, 1]
        Cy = np.hstack([Cp, np.zeros((1, nc))]).ravel()
        Cu = np.hstack([g * Cp, Cc]).ravel()
        dce = Dc_e.item()
        y = np.empty(N)
        u = np.empty(N)
        z = np.zeros(A.shape[0])
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(N):
                v = u[k - d] if k >= d else 0.0
                yk = Cy @ z + dp * v
                uk = Cu @ z + dce * r[k] + g * dp * v
                y[k], u[k] = yk, uk
                z = Phi @ z + gv * v + gr * r[k]
        eig_ok = True
    e = r - y
    finite = bool(np.all(np.isfinite(y)) and np.all(np.isfinite(u)))
    return Trajectory(dt, t, y, u, e, stable=finite and eig_ok)


def cost_j(traj: Trajectory, w: CostWeights | None = None) -> float:
    """Trapezoidal ``int w1 t |e| + w2 u^2 dt`` over the trajectory."""
    w = w or CostWeights()
    integrand = w.w1 * traj.t * np.abs(traj.e) + w.w2 * traj.u**2
    return float(np.trapezoid(integrand, dx=traj.dt))
