"""Total (protected) versions of partial arithmetic.

Shared by the GP evaluator and the published-rule evaluators so both obey
the same closure rules: ``x/0 -> 0``, ``sqrt(x) -> sqrt(|x|)``,
``ln(x) -> ln(|x|)`` with ``ln(0) -> 0``.  ``exp`` saturates instead of
overflowing.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import numpy as np

DIV_EPS = 1e-12
EXP_CAP = 50.0


class GuardCounter:
    """Counts how often a protected branch was taken (for logging)."""

    def __init__(self):
        self.hits = 0

    def note(self, mask) -> None:
        self.hits += int(np.count_nonzero(mask))


def pdiv(a, b, guard: GuardCounter | None = None):
    a, b = np.asarray(a, float), np.asarray(b, float)
    small = np.abs(b) < DIV_EPS
    if guard is not None:
        guard.note(small)
    with np.errstate(all="ignore"):
        out = np.where(small, 0.0, a / np.where(small, 1.0, b))
    return out[()] if out.ndim == 0 else out


def psqrt(x, guard: GuardCounter | None = None):
    x = np.asarray(x, float)
    if guard is not None:
        guard.note(x < 0)
    out = np.sqrt(np.abs(x))
    return out[()] if out.ndim == 0 else out


def plog(x, guard: GuardCounter | None = None):
    x = np.abs(np.asarray(x, float))
    zero = x == 0
    if guard is not None:
        guard.note(zero)
    with np.errstate(all="ignore"):
        out = np.where(zero, 0.0, np.log(np.where(zero, 1.0, x)))
    return out[()] if out.ndim == 0 else out


def pexp(x):
    x = np.asarray(x, float)
    out = np.exp(np.minimum(x, EXP_CAP))
    return out[()] if out.ndim == 0 else out


def proot4(x):
    """Fourth root of ``|x|``."""
    out = np.sqrt(np.sqrt(np.abs(np.asarray(x, float))))
    return out[()] if out.ndim == 0 else out
