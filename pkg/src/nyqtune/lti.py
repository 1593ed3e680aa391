"""Transfer functions with dead time, Padé rationalization and the test bench.

Coefficient lists are stored highest degree first everywhere, matching
``numpy.polyval``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as spla
import scipy.signal as spsig

__all__ = [
    "DelayTF", "ReducedModel", "TestbenchSpec", "LtiError",
    "trim", "pade3", "rationalize", "freq_response", "make_testbench",
    "is_stable", "catalog", "parse_bench", "to_state_space",
    "residence_time",
]

STABILITY_TOL = 1e-9


class LtiError(ValueError):
    """Invalid transfer-function data or an undefined evaluation."""


def trim(coeffs: Iterable[float]) -> tuple[float, ...]:
    """Drop leading zeros; the zero polynomial becomes ``(0.0,)``."""
    c = [float(v) for v in coeffs]
    i = 0
    while i < len(c) - 1 and c[i] == 0.0:
        i += 1
    c = c[i:]
    return tuple(c) if c else (0.0,)


def _is_zero(p: Sequence[float]) -> bool:
    return all(v == 0.0 for v in p)


@dataclass(frozen=True)
class DelayTF:
    """SISO rational transfer function ``num(s)/den(s) * exp(-delay_s * s)``."""

    num: tuple[float, ...]
    den: tuple[float, ...]
    delay_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "num", trim(self.num))
        object.__setattr__(self, "den", trim(self.den))
        object.__setattr__(self, "delay_s", float(self.delay_s))
        if _is_zero(self.den):
            raise LtiError("denominator is the zero polynomial")
        if not all(map(math.isfinite, self.num + self.den)):
            raise LtiError("non-finite coefficient")
        if not (self.delay_s >= 0.0 and math.isfinite(self.delay_s)):
            raise LtiError(f"delay must be finite and >= 0, got {self.delay_s}")

    @property
    def is_zero(self) -> bool:
        return _is_zero(self.num)

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def is_proper(self) -> bool:
        return self.is_zero or len(self.num) <= len(self.den)

    @property
    def is_strictly_proper(self) -> bool:
        return self.is_zero or len(self.num) < len(self.den)

    def dcgain(self) -> float:
        return self.num[-1] / self.den[-1]

    def __call__(self, s):
        """Evaluate at complex ``s`` (scalar or array), delay included."""
        s = np.asarray(s, dtype=complex)
        val = np.polyval(self.num, s) / np.polyval(self.den, s)
        if self.delay_s:
            val = val * np.exp(-self.delay_s * s)
        return val

    def __mul__(self, other: "DelayTF | float") -> "DelayTF":
        if not isinstance(other, DelayTF):
            return DelayTF(np.multiply(self.num, float(other)), self.den, self.delay_s)
        return DelayTF(np.polymul(self.num, other.num), np.polymul(self.den, other.den),
                       self.delay_s + other.delay_s)

    __rmul__ = __mul__

    def __add__(self, other: "DelayTF") -> "DelayTF":
        if self.delay_s != other.delay_s:
            raise LtiError("cannot add transfer functions with different delays")
        if self.den == other.den:
            return DelayTF(np.polyadd(self.num, other.num), self.den, self.delay_s)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return DelayTF(num, np.polymul(self.den, other.den), self.delay_s)

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den), "delay_s": self.delay_s}

    @classmethod
    def from_dict(cls, d: dict) -> "DelayTF":
        return cls(tuple(d["num"]), tuple(d["den"]), d.get("delay_s", 0.0))

    @classmethod
    def gain(cls, k: float) -> "DelayTF":
        return cls((float(k),), (1.0,))


@dataclass(frozen=True)
class ReducedModel:
    """FOPTD ``K e^{-Ls}/(tau s + 1)`` or SOPTD with two time constants.

    For FOPTD models ``tau_min`` is ignored and reported as ``0``.
    """

    kind: str
    K: float
    tau_max: float
    L: float
    tau_min: float = 0.0

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        for name in ("K", "tau_max", "L", "tau_min"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if kind not in ("FOPTD", "SOPTD"):
            raise LtiError(f"unknown template {self.kind!r}")
        if kind == "SOPTD" and self.tau_min > self.tau_max:
            lo, hi = self.tau_max, self.tau_min
            object.__setattr__(self, "tau_max", hi)
            object.__setattr__(self, "tau_min", lo)
        if kind == "FOPTD":
            object.__setattr__(self, "tau_min", 0.0)
        if not self.K > 0 or not self.tau_max > 0 or self.L < 0:
            raise LtiError(f"invalid reduced-model parameters {self}")
        if kind == "SOPTD" and not self.tau_min > 0:
            raise LtiError("SOPTD requires tau_min > 0")

    @classmethod
    def foptd(cls, K: float, tau: float, L: float) -> "ReducedModel":
        return cls("FOPTD", K, tau, L)

    @classmethod
    def soptd(cls, K: float, tau_max: float, tau_min: float, L: float) -> "ReducedModel":
        return cls("SOPTD", K, tau_max, L, tau_min)

    def to_tf(self) -> DelayTF:
        if self.kind == "FOPTD":
            den = (self.tau_max, 1.0)
        else:
            den = tuple(np.polymul((self.tau_max, 1.0), (self.tau_min, 1.0)))
        return DelayTF((self.K,), den, self.L)

    def params(self) -> dict:
        d = {"K": self.K, "tau_max": self.tau_max, "tau_min": self.tau_min, "L": self.L}
        if self.kind == "FOPTD":
            d = {"K": self.K, "tau": self.tau_max, "L": self.L}
        return d


def pade3(L: float) -> DelayTF:
    """Third-order (3/3) Padé approximant of ``exp(-L s)``.

    ``D(s) = L^3 s^3 + 12 L^2 s^2 + 60 L s + 120`` and ``N(s) = D(-s)``, so
    the result is all-pass. ``L = 0`` gives unity gain.
    """
    if not (L >= 0 and math.isfinite(L)):
        raise LtiError(f"Padé delay must be finite and >= 0, got {L}")
    if L == 0:
        return DelayTF((1.0,), (1.0,))
    den = (L**3, 12 * L**2, 60 * L, 120.0)
    num = (-L**3, 12 * L**2, -60 * L, 120.0)
    return DelayTF(num, den)


def rationalize(p: DelayTF) -> DelayTF:
    """Replace the dead time of ``p`` by :func:`pade3`."""
    if p.delay_s == 0:
        return p
    pd = pade3(p.delay_s)
    # scale to unit constant terms so the dc value is reproduced exactly
    num, den = np.divide(pd.num, 120.0), np.divide(pd.den, 120.0)
    return DelayTF(np.polymul(p.num, num), np.polymul(p.den, den))


def freq_response(p: DelayTF, omega):
    """Return ``p(j omega)`` for scalar or array ``omega`` in rad/s."""
    w = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(w)):
        raise LtiError("frequency must be finite")
    s = 1j * w
    den = np.polyval(p.den, s)
    bad = den == 0
    if np.any(bad):
        raise LtiError(f"pole on the imaginary axis at omega={float(w[bad].ravel()[0])!r}")
    val = np.polyval(p.num, s) / den
    if p.delay_s:
        val = val * np.exp(-1j * w * p.delay_s)
    return val[()] if val.ndim == 0 else val


def poles(p: DelayTF) -> np.ndarray:
    if len(p.den) < 2:
        return np.zeros(0, dtype=complex)
    return np.roots(p.den)


def is_stable(p: DelayTF) -> bool:
    """All denominator roots strictly in the open left half-plane."""
    if _is_zero(p.den):
        raise LtiError("zero denominator")
    return bool(np.all(poles(p).real < -STABILITY_TOL))


def residence_time(p: DelayTF) -> float:
    """Average residence time ``-d/ds ln P(s)`` at ``s = 0`` plus the dead time.

    For an SOPTD model this is ``L + tau_max + tau_min``; it serves as the
    apparent ``L + tau`` of a plant when sizing simulation horizons.
    """
    num, den = np.asarray(p.num), np.asarray(p.den)
    dden = np.polyval(np.polyder(den), 0.0) / den[-1] if len(den) > 1 else 0.0
    dnum = np.polyval(np.polyder(num), 0.0) / num[-1] if len(num) > 1 and num[-1] else 0.0
    return float(dden - dnum + p.delay_s)


# --------------------------------------------------------------------------
# test bench

PUBLISHED = {
    "P1": (3, 4, 5, 6, 7, 8, 10, 20),
    "P2": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "P3": (0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 2, 5, 10),
    "P4": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1),
}

_PARAM_NAME = {"P1": "n", "P2": "alpha", "P3": "T", "P4": "alpha"}


@dataclass(frozen=True)
class TestbenchSpec:
    """One higher-order benchmark process: class id plus its varying parameter."""

    class_id: str
    parameter: float
    in_catalog: bool = field(init=False, compare=False)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        cid = self.class_id.upper()
        if cid not in PUBLISHED:
            raise LtiError(f"unknown test-bench class {self.class_id!r}")
        object.__setattr__(self, "class_id", cid)
        object.__setattr__(self, "parameter", float(self.parameter))
        listed = any(abs(self.parameter - v) < 1e-12 for v in PUBLISHED[cid])
        object.__setattr__(self, "in_catalog", listed)

    @property
    def param_name(self) -> str:
        return _PARAM_NAME[self.class_id]

    @property
    def label(self) -> str:
        return f"{self.class_id}:{self.param_text}"

    @property
    def param_text(self) -> str:
        v = self.parameter
        return str(int(v)) if v == int(v) and self.class_id == "P1" else f"{v:g}"


def catalog() -> list[TestbenchSpec]:
    """All 38 published test-bench processes, in Table order."""
    return [TestbenchSpec(c, v) for c, vals in PUBLISHED.items() for v in vals]


def parse_bench(text: str) -> TestbenchSpec:
    """Parse ``"P1:3"`` / ``"P2:0.5"`` style identifiers."""
    try:
        cid, val = text.split(":")
        return TestbenchSpec(cid.strip(), float(val))
    except ValueError as exc:
        raise LtiError(f"bad bench identifier {text!r} (expected e.g. P1:3)") from exc


def _lag(tc: float) -> tuple[float, float]:
    return (tc, 1.0)


def make_testbench(spec: TestbenchSpec) -> DelayTF:
    """Expanded polynomial form of a test-bench process (no dead time)."""
    cid, v = spec.class_id, spec.parameter
    if cid == "P1":
        if v != int(v) or v < 1:
            raise LtiError(f"P1 order n must be a positive integer, got {v}")
        den = np.poly(-np.ones(int(v)))
        return DelayTF((1.0,), den)
    if cid == "P2":
        den = np.array([1.0])
        for tc in (1.0, v, v**2, v**3):
            den = np.polymul(den, _lag(tc))
        return DelayTF((1.0,), den)
    if cid == "P3":
        den = np.polymul(_lag(1.0), np.polymul(_lag(v), _lag(v)))
        return DelayTF((1.0,), den)
    den = np.poly(-np.ones(3))
    return DelayTF((-v, 1.0), den)


# --------------------------------------------------------------------------
# state space


def to_state_space(p: DelayTF):
    """Balanced controllable-canonical realization ``(A, B, C, D)`` of the rational part."""
    if not p.is_proper:
        raise LtiError("improper transfer function has no state-space realization")
    if p.order == 0 or p.is_zero:
        n = 0 if p.order == 0 else p.order
        d = p.num[-1] / p.den[-1] if p.order == 0 else 0.0
        return (np.zeros((n, n)), np.zeros((n, 1)), np.zeros((1, n)), np.array([[d]]))
    A, B, C, D = spsig.tf2ss(p.num, p.den)
    Ab, T = spla.matrix_balance(A, permute=False, separate=False)
    return Ab, np.linalg.solve(T, B), C @ T, D
