"""Closed-form PID / PI^lambda D^mu tuning rules for SOPTD models with unit gain.

Every published formula has the shape ``offset + coefficient * {brace}``.
Each brace is one function below; :data:`PID_RULE` and :data:`FOPID_RULE`
pair them with their offsets.  Evaluation uses the protected operations of
:mod:`nyqtune.protected`, so every formula is total.

Two grouping questions in the typeset formulas are exposed as switches:

``sine_grouping``
    In the PID ``Kp``/``Kd`` braces, the sine term is either
    ``sin(a * b)`` with ``a = 1.6e-6 tau_max^2 (1250 L + 2117)`` and
    ``b = 500 sqrt(L/tau_max) + 1877 - 500 L/tau_min`` (``"argument"``,
    default) or ``sin(a) * b`` (``"printed"``).  The printed layout gives
    negative ``Kp`` on most of the test bench (``-1.6`` for ``P1 n=3``), the
    argument reading gives ``~0.95``; the scale factors ``1.6e-6 * 1250 *
    500 = 1`` also point to a single simplified sine argument.
``ki_reading``
    PID ``Ki``: ``"inside"`` (default) keeps ``3 tanh(L) + tanh(tau_max) -
    0.8913`` under the square root, ``"outside"`` adds those terms after it.
``kp_denominator``
    FOPID ``Kp``: ``"product"`` (default) divides by both bracketed factors,
    ``"first"`` divides by the first one and multiplies by the second.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fracsim import ControllerParams
from .protected import GuardCounter, pdiv, plog, psqrt, proot4

log = logging.getLogger(__name__)

__all__ = ["RuleInput", "RuleTerm", "PID_RULE", "FOPID_RULE", "rule_values",
           "rule_pid", "rule_fopid", "clamp_params", "ORDER_BOUNDS"]

ORDER_BOUNDS = (0.05, 2.0)


@dataclass(frozen=True)
class RuleInput:
    tau_max: float
    tau_min: float
    L: float
    K: float = 1.0

    def __post_init__(self):
        if self.tau_min > self.tau_max:
            hi, lo = self.tau_min, self.tau_max
            object.__setattr__(self, "tau_max", hi)
            object.__setattr__(self, "tau_min", lo)
        if not (self.tau_min > 0 and self.L >= 0):
            raise ValueError(f"need tau_min > 0 and L >= 0, got {self}")

    @classmethod
    def from_model(cls, model) -> "RuleInput":
        return cls(model.tau_max, model.tau_min, model.L, model.K)


@dataclass(frozen=True)
class RuleTerm:
    offset: float
    coeff: float
    brace: Callable[..., float]

    def __call__(self, x: RuleInput, g: GuardCounter, zero_brace=False, **opts) -> float:
        b = 0.0 if zero_brace else float(self.brace(x, g, **opts))
        return self.offset + self.coeff * b


# --------------------------------------------------------------------------
# PID braces


def _sine_term(x: RuleInput, g, sine_grouping: str) -> float:
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    a = 1.6e-6 * tmax**2 * (1250 * L + 2117)
    b = 500 * psqrt(pdiv(L, tmax, g), g) + 1877 - 500 * pdiv(L, tmin, g)
    if sine_grouping == "argument":
        return math.sin(a * b)
    if sine_grouping == "printed":
        return math.sin(a) * b
    raise ValueError(f"unknown sine_grouping {sine_grouping!r}")


def _pid_common(x, g):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    return (psqrt(pdiv(tmax, math.cos(tmin), g), g)
            + math.tanh(-tmax**2 + pdiv(tmin, tmax, g))
            - psqrt(L, g))


def _pid_kp(x, g, sine_grouping="argument", **_):
    return _pid_common(x, g) - math.sin(x.tau_min) - _sine_term(x, g, sine_grouping)


def _pid_kd(x, g, sine_grouping="argument", **_):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    ratio = pdiv(L * tmax, tmin, g)
    return (_pid_common(x, g) + proot4(tmax) - _sine_term(x, g, sine_grouping)
            - ratio - math.sin(tmax) + math.tanh(-L + tmin) + math.cos(ratio)
            - math.sin(tmin) - pdiv(6.457e-6, tmax, g))


def _pid_ki(x, g, ki_reading="inside", **_):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    head = 4 * plog(tmax + L, g) + 2 * math.tanh(tmin)
    tail = 3 * math.tanh(L) + math.tanh(tmax) - 0.8913
    if ki_reading == "inside":
        return psqrt(head + tail, g)
    if ki_reading == "outside":
        # brace coefficient is -0.2452, so fold the tail back in unscaled
        return psqrt(head, g) - tail / 0.2452
    raise ValueError(f"unknown ki_reading {ki_reading!r}")


PID_RULE = {
    "Kp": RuleTerm(1.033, 0.1687, _pid_kp),
    "Ki": RuleTerm(1.003, -0.2452, _pid_ki),
    "Kd": RuleTerm(1.399, 0.09693, _pid_kd),
}


# --------------------------------------------------------------------------
# FOPID braces


def _fopid_kp(x, g, kp_denominator="product", **_):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    l_tmin = pdiv(L, tmin, g)
    th = math.tanh(L**2 + pdiv(L, tmin * tmax, g) + pdiv(math.cos(pdiv(tmax, tmin, g)), math.exp(tmax), g))
    root = psqrt(math.tanh(l_tmin) - tmin, g)
    first = pdiv(plog(l_tmin, g), tmax, g) + 2 * tmax
    second = plog(tmax, g) ** 2 + pdiv(L, tmin * tmax**3, g) + l_tmin
    if kp_denominator == "product":
        frac = pdiv(root, first * second, g)
    elif kp_denominator == "first":
        frac = pdiv(root, first, g) * second
    else:
        raise ValueError(f"unknown kp_denominator {kp_denominator!r}")
    return -l_tmin - th * frac


def _fopid_ki(x, g, **_):
    tmax, tmin = x.tau_max, x.tau_min
    ratio4 = pdiv(tmax, tmin, g) ** 4
    inner = math.tanh(plog(tmax, g)) / 0.503953**2
    return pdiv(ratio4, tmax, g) * inner**2 + pdiv(plog(0.1851 * math.sin(tmin), g), tmax, g)


def _fopid_kd(x, g, **_):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    ratio = pdiv(tmax, tmin, g)
    return (1.6e-5 * ((250 * tmin - 493) * math.sin(math.sin(tmax))) ** 2
            + math.cos(ratio)
            + psqrt(math.sin(pdiv(0.4861289, L, g)), g)
            - math.sin(tmax)
            + psqrt(math.sin(ratio), g)
            + psqrt(2 * tmin, g))


def _fopid_lam(x, g, **_):
    return psqrt(x.tau_max * x.L, g) * (x.tau_max - math.tanh(x.tau_min))


def _fopid_mu(x, g, **_):
    tmax, tmin, L = x.tau_max, x.tau_min, x.L
    ratio = pdiv(tmax, tmin, g)
    t = math.tanh
    return (t(t(t(L)))
            - math.cos(t(ratio))
            - math.cos(math.cos(t(pdiv(L * tmax, tmin, g))))
            + math.cos(math.cos(pdiv(L * tmin, tmax**2 * math.exp(tmin), g)))
            - math.cos(t(L + pdiv(L, tmax, g) + ratio**2)))


FOPID_RULE = {
    "Kp": RuleTerm(1.1718, 0.2726, _fopid_kp),
    "Ki": RuleTerm(0.3548, 0.0783, _fopid_ki),
    "Kd": RuleTerm(0.1379, 0.1248, _fopid_kd),
    "lambda": RuleTerm(0.9974, -0.002605, _fopid_lam),
    "mu": RuleTerm(2.0205, 1.708, _fopid_mu),
}


# --------------------------------------------------------------------------


def _check_gain(x: RuleInput):
    if abs(x.K - 1.0) > 1e-12:
        raise ValueError("tuning rules are for unit process gain; normalize the plant (K = 1) first")


def rule_values(kind: str, x: RuleInput, *, zero_braces: bool = False, **opts) -> dict[str, float]:
    """Raw formula values (no clamping) for ``kind`` in ``{"pid", "fopid"}``."""
    _check_gain(x)
    table = {"pid": PID_RULE, "fopid": FOPID_RULE}[kind.lower()]
    g = GuardCounter()
    out = {name: term(x, g, zero_brace=zero_braces, **opts) for name, term in table.items()}
    if g.hits:
        log.info("%s rule at %s used %d protected operation(s)", kind, x, g.hits)
    bad = [k for k, v in out.items() if not math.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite rule output for {bad} at {x}")
    return out


def clamp_params(v: dict[str, float]) -> ControllerParams:
    """Controller from raw parameter values: gains floored at 0, orders clipped to ``ORDER_BOUNDS``."""
    lo, hi = ORDER_BOUNDS
    gains = {k: max(v[k], 0.0) for k in ("Kp", "Ki", "Kd")}
    lam = float(np.clip(v.get("lambda", 1.0), lo, hi))
    mu = float(np.clip(v.get("mu", 1.0), lo, hi))
    clamped = [k for k in gains if gains[k] != v[k]]
    clamped += [k for k, c in (("lambda", lam), ("mu", mu)) if k in v and c != v[k]]
    if clamped:
        log.warning("rule output clamped to the valid controller domain: %s", clamped)
    return ControllerParams(gains["Kp"], gains["Ki"], gains["Kd"], lam, mu)


def rule_pid(x: RuleInput, **opts) -> ControllerParams:
    """PID settings from the published GP rule (``lambda = mu = 1``).

    Negative gains, if a formula produces one, are clamped to zero.
    """
    return clamp_params(rule_values("pid", x, **opts))


def rule_fopid(x: RuleInput, **opts) -> ControllerParams:
    """PI^lambda D^mu settings from the published GP rule.

    Orders are clamped to ``ORDER_BOUNDS`` and gains to ``>= 0``; use
    :func:`rule_values` for the unclamped numbers.
    """
    return clamp_params(rule_values("fopid", x, **opts))
