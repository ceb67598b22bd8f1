"""Shooting for u'' + (d-1)/r u' + |u|^{p-1} u - 1 = 0, u(0) = a, u'(0) = 0, p = d/(d-2).

Solutions oscillate around the constant solution u = 1.  Depending on a
the oscillation may dip below zero, and the positivity set of u splits into
several humps.  The threshold a_c is located by bisection on the sign
of the first local minimum.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp


@dataclass
class ShootTrajectory:
    a: float
    d: int
    p: float
    r: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    up: np.ndarray = field(repr=False)
    zeros: np.ndarray = field(default_factory=lambda: np.array([]))
    zero_slopes: np.ndarray = field(default_factory=lambda: np.array([]), repr=False)
    minima: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))   # rows (r, u)
    maxima: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    r_max: float = 0.0
    failed: bool = False
    message: str = ""
    rtol: float = 1e-10
    events: list = field(default_factory=list, repr=False)   # (r, kind) in order

    def summary(self) -> dict:
        return {"a": self.a, "d": self.d, "p": self.p, "r_max": self.r_max, "failed": self.failed,
                "zeros": self.zeros.tolist(), "components": positivity_components(self) if not self.failed else None,
                "first_minimum": first_minimum(self), "support": profile_support(self)}


def _rhs(d: int, p: float):
    def f(r, y):
        u, v = y
        return [v, -(d - 1) / r * v - np.abs(u) ** (p - 1) * u + 1.0]
    return f


def series_start(a: float, d: int, p: float, r0: float):
    """Two-term expansion u = a + (1 - a^p) r^2 / (2d) and its derivative."""
    c2 = (1.0 - np.abs(a) ** (p - 1) * a) / (2 * d)
    return a + c2 * r0**2, 2 * c2 * r0


def _start_radius(a: float, p: float, rtol: float) -> float:
    # the next series term is O(a^{2p-1} r^4); keep it below rtol * a
    scale = max(abs(a), 1.0) ** (p - 1)
    return min(1e-3, (rtol / scale**2) ** 0.25 * 0.1, 0.1 / np.sqrt(scale))


def shoot(a: float, d: int = 3, r_max: float = 50.0, rtol: float = 1e-10, extend_to: float = 400.0,
          settle: float = 1e-3, stop_at_first_min: bool = False, n_samples: int = 4000) -> ShootTrajectory:
    """Integrate from the series start with DOP853, recording zeros and extrema.

    The run is extended beyond ``r_max`` (up to ``extend_to``) while |u - 1|
    on the last stretch has not settled below ``settle``.
    """
    if not a > 0:
        raise ValueError("shooting parameter must be positive")
    if d < 3:
        raise ValueError("d must be >= 3")
    p = d / (d - 2.0)
    f = _rhs(d, p)
    r0 = _start_radius(a, p, rtol)
    y0 = list(series_start(a, d, p, r0))

    def zero(r, y):
        return y[0]

    def extremum(r, y):
        return y[1]

    events = [zero, extremum]
    if stop_at_first_min:
        def first_min(r, y):
            return y[1]
        first_min.terminal = True
        first_min.direction = 1          # u' crosses from negative to positive
        events.append(first_min)

    r_end = r_max
    pieces, t0, y = [], r0, y0
    failed, msg = False, ""
    sol_events = [[], []]
    extra = []
    while True:
        sol = solve_ivp(f, (t0, r_end), y, method="DOP853", rtol=rtol, atol=rtol * 1e-2,
                        events=events, dense_output=True)
        pieces.append(sol)
        for k in range(2):
            sol_events[k].extend(zip(sol.t_events[k], sol.y_events[k]))
        if stop_at_first_min and sol.t_events[2].size:
            extra.extend(zip(sol.t_events[2], sol.y_events[2]))
            break
        if sol.status < 0:
            failed, msg = True, sol.message
            break
        if stop_at_first_min:
            if r_end >= extend_to:
                break
        else:
            tail = np.linspace(max(r0, r_end - 10.0), r_end, 200)
            if np.max(np.abs(sol.sol(tail)[0] - 1.0)) < settle or r_end >= extend_to:
                break
        t0, y = sol.t[-1], sol.y[:, -1]
        r_end = min(2 * r_end, extend_to)

    r_last = pieces[-1].t[-1]
    rs = np.linspace(r0, r_last, n_samples)
    U = np.empty((2, rs.size))
    for sol in pieces:
        sel = (rs >= sol.t[0]) & (rs <= sol.t[-1])
        if sel.any():
            U[:, sel] = sol.sol(rs[sel])
    rs = np.concatenate([[0.0], rs])
    U = np.concatenate([[[a], [0.0]], U], axis=1)

    zev = sorted(sol_events[0], key=lambda e: e[0])
    zeros = np.array([t for t, _ in zev])
    zslopes = np.array([yy[1] for _, yy in zev])
    ext = sorted(sol_events[1], key=lambda e: e[0])
    mins = [(t, yy[0]) for t, yy in ext if f(t, yy)[1] > 0]
    maxs = [(t, yy[0]) for t, yy in ext if f(t, yy)[1] < 0]
    if extra and not any(abs(t - extra[0][0]) < 1e-12 for t, _ in mins):
        mins.append((extra[0][0], extra[0][1][0]))
        mins.sort()
    log = sorted([(t, "zero") for t in zeros] + [(t, "min") for t, _ in mins] + [(t, "max") for t, _ in maxs])
    return ShootTrajectory(a, d, p, rs, U[0], U[1], zeros, zslopes,
                           np.array(mins).reshape(-1, 2), np.array(maxs).reshape(-1, 2),
                           float(r_last), failed, msg, rtol, log)


def positivity_components(traj: ShootTrajectory, closed_only: bool = True) -> int:
    """Number of positivity intervals of u on [0, r_max].

    By default only humps are counted: intervals closed by a zero of u, each a
    candidate compactly supported profile.  A u that never vanishes counts as
    one component.  ``closed_only=False`` also counts the last interval when
    it runs out to r_max.
    """
    if traj.failed:
        raise ValueError("trajectory did not reach r_max")
    down = int(np.sum(traj.zero_slopes < 0))
    up = int(np.sum(traj.zero_slopes > 0))
    if closed_only:
        return max(down, 1)
    # u(0) = a > 0; each upward crossing opens a new interval
    return 1 + up


def profile_support(traj: ShootTrajectory) -> Optional[float]:
    """First zero of u, the support radius of the candidate profile; None if u stays positive."""
    return float(traj.zeros[0]) if traj.zeros.size else None


def first_minimum(traj: ShootTrajectory) -> Optional[float]:
    """Value of u at its first local minimum after r = 0 (None if none was reached)."""
    if traj.a == 1.0:
        return None
    return float(traj.minima[0, 1]) if traj.minima.size else None


def first_dip(a: float, d: int = 3, rtol: float = 1e-11) -> float:
    """u at the first local minimum, integrating only that far."""
    tr = shoot(a, d, r_max=50.0, rtol=rtol, stop_at_first_min=True, n_samples=10)
    v = first_minimum(tr)
    if v is None:
        raise RuntimeError(f"no local minimum found for a = {a}")
    return v


@dataclass
class CriticalShoot:
    a_c: float
    bracket: tuple
    orientation: str            # which side of a_c dips below zero, "above" or "below"
    tolerance: float
    dips: tuple                 # first-minimum values at the bracket endpoints
    d: int = 3

    def to_dict(self) -> dict:
        return asdict(self)


def find_ac(d: int = 3, tol: float = 1e-6, bracket: tuple = (1.5, 50.0), rtol: float = 1e-11) -> CriticalShoot:
    """Bisection on the sign of the first local minimum of u."""
    lo, hi = bracket
    flo, fhi = first_dip(lo, d, rtol), first_dip(hi, d, rtol)
    if (flo < 0) == (fhi < 0):
        raise ValueError(f"first-dip sign does not change on [{lo}, {hi}]")
    orientation = "above" if fhi < 0 else "below"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = first_dip(mid, d, rtol)
        if (fm < 0) == (fhi < 0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return CriticalShoot(0.5 * (lo + hi), (lo, hi), orientation, tol, (flo, fhi), d)
