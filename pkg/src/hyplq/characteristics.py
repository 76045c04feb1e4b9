"""Characteristic flows and path integrals for periodized velocity fields.

The velocity c lives on [0, L] and is extended periodically to the line.
Forward/backward characteristics are computed by travel-time inversion:
the time to move from a to b is the integral of 1/c along [a, b], which is
strictly increasing in b, so positions are recovered with a bracketed root
solve instead of ODE stepping.  One period always takes the same time, so
long flights reduce to a remainder search inside a single period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "VelocityField",
    "FlowResult",
    "NumericError",
    "flow_forward",
    "flow_backward",
    "path_integral",
]

_FLOW_TOL = 1e-10

# 16-point Gauss-Legendre rule, reused for all panel quadratures
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class NumericError(RuntimeError):
    """A quadrature or root solve failed to reach its tolerance."""


@dataclass(frozen=True)
class VelocityField:
    """Positive wave speed with certified bounds 0 < c_min <= c <= c_max.

    Use the ``constant`` / ``variable`` constructors.  ``evaluator`` takes a
    single position in [0, L); periodization is handled by the flow and
    integral routines.  ``derivative`` is optional and only needed by
    consumers that differentiate the speed (e.g. conservative transport).
    """

    evaluator: Callable[[float], float] = field(compare=False)
    c_min: float
    c_max: float
    derivative: Optional[Callable[[float], float]] = field(
        default=None, compare=False
    )
    breakpoints: tuple = ()
    is_constant: bool = False

    def __post_init__(self):
        if not (0.0 < self.c_min <= self.c_max):
            raise ValueError(
                f"need 0 < c_min <= c_max, got [{self.c_min}, {self.c_max}]"
            )

    @staticmethod
    def constant(c: float) -> "VelocityField":
        if not (np.isfinite(c) and c > 0):
            raise ValueError(f"constant speed must be positive, got {c}")
        c = float(c)
        return VelocityField(
            evaluator=lambda w, _c=c: _c,
            c_min=c,
            c_max=c,
            derivative=lambda w: 0.0,
            is_constant=True,
        )

    @staticmethod
    def variable(
        evaluator: Callable[[float], float],
        c_min: float,
        c_max: float,
        derivative: Optional[Callable[[float], float]] = None,
        breakpoints: tuple = (),
        check_span: Optional[float] = None,
    ) -> "VelocityField":
        """Wrap a speed profile, optionally spot-checking the stated bounds.

        When ``check_span`` is given, the evaluator is sampled on a fine grid
        over [0, check_span] and construction fails if any sample escapes
        [c_min, c_max] by more than a small slack.
        """
        vel = VelocityField(
            evaluator=evaluator,
            c_min=float(c_min),
            c_max=float(c_max),
            derivative=derivative,
            breakpoints=tuple(float(b) for b in breakpoints),
        )
        if check_span is not None:
            slack = 1e-9 * (1.0 + vel.c_max)
            for w in np.linspace(0.0, check_span, 2048):
                v = evaluator(float(w))
                if not (vel.c_min - slack <= v <= vel.c_max + slack):
                    raise ValueError(
                        f"speed {v} at w={w} escapes [{c_min}, {c_max}]"
                    )
        return vel

    def eval(self, w: float) -> float:
        return float(self.evaluator(w))

    def derivative_at(self, w: float) -> float:
        if self.derivative is None:
            raise ValueError("velocity field has no derivative evaluator")
        return float(self.derivative(w))


@dataclass(frozen=True)
class FlowResult:
    """Endpoint of a characteristic plus the 1/c integral along the path.

    ``travel_time_integral`` recomputes the elapsed time from the resolved
    path, which doubles as a consistency check on the inversion.
    ``exactness`` is "analytic" for closed-form (constant speed) results and
    "numeric" otherwise, with ``tol`` the root-solve tolerance used.
    """

    position: float
    travel_time_integral: float
    exactness: str
    tol: float = 0.0


# --------------------------------------------------------------------------
# cached one-period travel-time table


@lru_cache(maxsize=32)
def _period_table(vel: VelocityField, L: float):
    """Cumulative integral of 1/c over [0, L], panel by panel.

    Returns (edges, cumulative, tau_L) where cumulative[i] is the travel
    time from 0 to edges[i] and tau_L the full-period travel time.  Panels
    are split at the velocity's breakpoints so every panel is smooth.
    """
    cuts = {0.0, L}
    for b in vel.breakpoints:
        cuts.add(b % L)
    base = sorted(cuts)
    edges = [0.0]
    for lo, hi in zip(base[:-1], base[1:]):
        n = max(1, int(math.ceil((hi - lo) / (L / 256.0))))
        edges.extend(np.linspace(lo, hi, n + 1)[1:])
    edges = np.asarray(edges)
    cum = np.zeros(len(edges))
    for i in range(len(edges) - 1):
        cum[i + 1] = cum[i] + _gl_panel(
            lambda y: 1.0 / vel.eval(y), edges[i], edges[i + 1]
        )
    return edges, cum, float(cum[-1])


def _gl_panel(f, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    acc = 0.0
    for x, w in zip(_GL_NODES, _GL_WEIGHTS):
        acc += w * f(mid + half * x)
    return acc * half


def _travel_time(x: float, vel: VelocityField, L: float) -> float:
    """Integral of 1/c_periodized from 0 to x, for any real x."""
    edges, cum, tau_L = _period_table(vel, L)
    j = math.floor(x / L)
    r = x - j * L
    if r >= L:  # floating guard at the seam
        j, r = j + 1, 0.0
    idx = int(np.searchsorted(edges, r, side="right")) - 1
    idx = min(max(idx, 0), len(edges) - 2)
    part = cum[idx] + _gl_panel(lambda y: 1.0 / vel.eval(y), edges[idx], r)
    return j * tau_L + part


def _invert_travel_time(
    p0: float, t: float, vel: VelocityField, L: float, direction: int
) -> float:
    """Solve travel_time(x) - travel_time(p0) = direction * t for x."""
    target = _travel_time(p0, vel, L) + direction * t
    if direction > 0:
        lo = p0 + vel.c_min * t
        hi = p0 + vel.c_max * t
    else:
        lo = p0 - vel.c_max * t
        hi = p0 - vel.c_min * t
    # widen slightly so roundoff at the bracket ends cannot lose the root
    pad = 1e-9 * (1.0 + abs(lo) + abs(hi))
    g = lambda x: _travel_time(x, vel, L) - target
    try:
        return float(brentq(g, lo - pad, hi + pad, xtol=1e-13, rtol=8.9e-16))
    except ValueError as exc:
        raise NumericError(f"travel-time inversion failed: {exc}") from exc


def _check_flow_args(p0: float, t: float, L: float):
    if not (L > 0):
        raise ValueError(f"period must be positive, got {L}")
    if not (0.0 <= p0 <= L):
        raise ValueError(f"start position {p0} outside [0, {L}]")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")


def flow_forward(p0: float, t: float, vel: VelocityField, L: float) -> FlowResult:
    """Position reached at time t by the characteristic starting at p0."""
    _check_flow_args(p0, t, L)
    if vel.is_constant:
        return FlowResult(p0 + vel.c_min * t, t, "analytic")
    if t == 0.0:
        return FlowResult(p0, 0.0, "numeric", _FLOW_TOL)
    x = _invert_travel_time(p0, t, vel, L, +1)
    elapsed = _travel_time(x, vel, L) - _travel_time(p0, vel, L)
    return FlowResult(x, elapsed, "numeric", _FLOW_TOL)


def flow_backward(q0: float, t: float, vel: VelocityField, L: float) -> FlowResult:
    """Position at time 0 of the characteristic that reaches q0 at time t."""
    _check_flow_args(q0, t, L)
    if vel.is_constant:
        return FlowResult(q0 - vel.c_min * t, t, "analytic")
    if t == 0.0:
        return FlowResult(q0, 0.0, "numeric", _FLOW_TOL)
    x = _invert_travel_time(q0, t, vel, L, -1)
    elapsed = _travel_time(q0, vel, L) - _travel_time(x, vel, L)
    return FlowResult(x, elapsed, "numeric", _FLOW_TOL)


# --------------------------------------------------------------------------
# path integrals along characteristics


def path_integral(
    f: Callable[[float], float],
    frm: float,
    to: float,
    vel: VelocityField,
    L: float,
    f_breakpoints: tuple = (),
) -> float:
    """Integral of f_periodized / c_periodized over [frm, to].

    ``f`` is evaluated on [0, L) and extended periodically.  Pass the
    discontinuities of f (positions in [0, L)) via ``f_breakpoints`` so the
    quadrature panels are split there; piecewise-constant integrands are
    then integrated exactly.  Windows spanning many periods are reduced to
    one full-period integral plus end corrections.
    """
    if not (L > 0):
        raise ValueError(f"period must be positive, got {L}")
    if to < frm:
        raise ValueError(f"reversed window [{frm}, {to}]")
    if to == frm:
        return 0.0

    cuts = {0.0, L}
    for b in list(f_breakpoints) + list(vel.breakpoints):
        cuts.add(b % L)
    base = sorted(cuts)

    def integrand(r: float) -> float:
        return f(r) / vel.eval(r)

    def over_cell(lo: float, hi: float) -> float:
        """Integral over [lo, hi] contained in a single period copy."""
        j = math.floor(lo / L)
        if lo - j * L >= L:
            j += 1
        a, b = lo - j * L, hi - j * L
        acc = 0.0
        for p, q in zip(base[:-1], base[1:]):
            s, e = max(a, p), min(b, q)
            if e <= s:
                continue
            n = max(1, int(math.ceil((e - s) / (L / 64.0))))
            sub = np.linspace(s, e, n + 1)
            for u, v in zip(sub[:-1], sub[1:]):
                acc += _gl_panel(integrand, u, v)
        return acc

    j_lo = math.floor(frm / L)
    j_hi = math.floor(to / L)
    if to - j_hi * L == 0.0:
        j_hi -= 1
    if j_lo == j_hi:
        total = over_cell(frm, to)
    else:
        total = over_cell(frm, (j_lo + 1) * L)
        full = j_hi - j_lo - 1
        if full > 0:
            total += full * over_cell(0.0, L)
        total += over_cell(j_hi * L, to)
    if not np.isfinite(total):
        raise NumericError("path integral did not evaluate to a finite value")
    return float(total)
