"""Single-PA placement and orientation.

For one user served by one PA on a waveguide at ``x = wg_x``, the gain is
maximized by pointing the beam at the user and sliding the PA to a fixed
offset ``gamma`` behind the user along the waveguide. The offset solves

    f(gamma) = -aW - 2 ln(aL) gamma / sqrt(A + gamma^2) + 2 gamma / (A + gamma^2) = 0

where ``f`` is d ln|H|^2 / d y_pa at boresight and ``A`` is the squared
lateral distance between user and waveguide. :func:`oracle_max_gain` is an
independent brute-force check that never looks at ``f``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .channel import composite_log_gain
from .core import Orientation, SystemConfig, Vec3

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NoInteriorOptimum(ValueError):
    """No stationary PA position exists; the optimum sits on the boundary."""


@dataclass(frozen=True)
class PlacementSolution:
    y_star: float
    gamma_star: float
    A: float
    orientation: Orientation
    gain_sq: float
    boundary_hit: bool
    user: Vec3
    pa: Vec3
    log_gain: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def distance(self) -> float:
        return math.sqrt(self.A + self.gamma_star**2)


def optimal_orientation(user: Sequence[float], pa: Sequence[float]) -> Orientation:
    """Orientation whose boresight passes through ``user``.

    A user straight below the PA gets the canonical azimuth pi/2.
    """
    dx, dy, dz = (float(u) - float(p) for u, p in zip(user, pa))
    if not dz < 0:
        raise ValueError("user must be strictly below the PA")
    rho = math.hypot(dx, dy)
    theta = math.atan2(rho, dz)
    phi = math.atan2(dy, dx) if rho > 1e-15 else math.pi / 2
    return Orientation(theta, phi)


def interior_optimum_exists(alpha_w: float, alpha_l: float) -> bool:
    """Existence condition for a non-origin optimal PA position."""
    if alpha_w < 0 or not (0 < alpha_l <= 1):
        raise ValueError("need alpha_w >= 0 and alpha_l in (0, 1]")
    return alpha_l < math.exp(-alpha_w / 2.0)


def stationarity(gamma, A: float, alpha_w: float, alpha_l: float):
    """d ln|H|^2 / d y_pa at boresight, as a function of the offset ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    s = A + g * g
    out = -alpha_w - 2.0 * math.log(alpha_l) * g / np.sqrt(s) + 2.0 * g / s
    return out[()] if out.ndim == 0 else out


def _stationarity_slope(gamma: float, A: float, alpha_l: float) -> float:
    s = A + gamma * gamma
    return (-2.0 * math.log(alpha_l) * A * math.sqrt(s) + 2.0 * (A - gamma * gamma)) / (s * s)


def peak_offset(A: float, alpha_l: float) -> float:
    """Offset at which ``stationarity`` is largest (it is unimodal in gamma)."""
    c = -math.log(alpha_l)
    r = 0.5 * (c * A + math.sqrt(c * c * A * A + 8.0 * A))
    return math.sqrt(max(r * r - A, 0.0))


def offset_closed_form(A: float, alpha_w: float, alpha_l: float) -> float:
    """Closed-form offset from the second-order expansion of ``stationarity``.

    The expansion is around small angles, so the value can be poor or even
    negative; it serves only as a starting point. Returns ``nan`` when the
    square root is undefined.
    """
    c = math.log(alpha_l)
    if c == 0.0:
        return math.nan
    disc = A + c * A * A * (alpha_w + 2.0 * c)
    if disc < 0:
        return math.nan
    angle = (-1.0 - math.sqrt(disc)) / (c * A)
    t = math.tan(angle)
    return math.sqrt(A) / t if t != 0 else math.nan


def optimal_offset_approx(A: float, alpha_w: float, alpha_l: float) -> float:
    """Simplified optimal offset, sqrt(A aW^2 / ((2 ln aL)^2 - aW^2))."""
    denom = (2.0 * math.log(alpha_l)) ** 2 - alpha_w**2
    if not denom > 0:
        raise NoInteriorOptimum("(2 ln aL)^2 <= aW^2: no interior optimum")
    return math.sqrt(A * alpha_w**2 / denom)


def stationary_offset(A: float, alpha_w: float, alpha_l: float, newton_steps: int = 5) -> float | None:
    """Offset of the local gain maximum closest to the user, or ``None``.

    The root is the upward zero crossing of ``stationarity`` on
    ``[0, peak_offset]``. It is seeded from :func:`offset_closed_form`
    (falling back to :func:`optimal_offset_approx`), refined by at most
    ``newton_steps`` safeguarded Newton steps and, if still not converged,
    finished with Brent's method on the maintained bracket.
    """
    if not A > 0:
        raise ValueError("lateral distance must be positive")
    if alpha_w == 0:
        return 0.0
    hi = peak_offset(A, alpha_l)
    if stationarity(hi, A, alpha_w, alpha_l) <= 0:
        return None
    lo = 0.0
    guess = offset_closed_form(A, alpha_w, alpha_l)
    if not (lo < guess < hi):
        try:
            guess = optimal_offset_approx(A, alpha_w, alpha_l)
        except NoInteriorOptimum:
            guess = math.nan
        if not (lo < guess < hi):
            guess = 0.5 * hi
    scale = alpha_w + 1e-300
    g = guess
    for _ in range(newton_steps):
        fg = stationarity(g, A, alpha_w, alpha_l)
        if abs(fg) <= 1e-13 * scale:
            return g
        if fg < 0:
            lo = g
        else:
            hi = g
        slope = _stationarity_slope(g, A, alpha_l)
        step = g - fg / slope if slope > 0 else math.nan
        g = step if lo < step < hi else 0.5 * (lo + hi)
    if abs(stationarity(g, A, alpha_w, alpha_l)) <= 1e-13 * scale:
        return g
    return brentq(stationarity, lo, hi, args=(A, alpha_w, alpha_l), xtol=1e-14, rtol=1e-14, maxiter=200)


def optimal_offset_exact(A: float, alpha_w: float, alpha_l: float) -> float:
    """Optimal horizontal offset gamma* of the PA behind the user.

    Raises :class:`NoInteriorOptimum` when the existence condition fails.
    """
    if not interior_optimum_exists(alpha_w, alpha_l):
        raise NoInteriorOptimum(f"alpha_l={alpha_l} >= exp(-alpha_w/2)={math.exp(-alpha_w / 2):.6g}")
    gamma = stationary_offset(A, alpha_w, alpha_l)
    if gamma is None:  # pragma: no cover - excluded by the existence condition
        raise NoInteriorOptimum("stationarity never becomes positive")
    return gamma


def _boresight_log_gain(y: float, y_user: float, A: float, cfg: SystemConfig) -> float:
    d = math.sqrt(A + (y_user - y) ** 2)
    n, v = cfg.refractive_index, cfg.beam_correction
    a, b = cfg.cross_section
    return (
        -math.log(cfg.num_pas_per_wg)
        - cfg.wg_atten_nat * y
        + 2.0 * d * math.log(cfg.los_coeff)
        + math.log(n * n * v * v * a * b * cfg.wavelength**2 / 2.0)
        - 2.0 * math.log(d)
    )


def solve_placement(user: Sequence[float], wg_x: float, cfg: SystemConfig) -> PlacementSolution:
    """Best position and orientation of one PA on the waveguide at ``wg_x``.

    Candidates are the stationary maximum and the two ends of
    ``[0, min(y_user, Dy)]``; the best one wins, ties going to the
    stationary point.
    """
    user = Vec3(*(float(c) for c in user))
    _, dy, dz = cfg.region
    alpha_w, alpha_l = cfg.wg_atten_nat, cfg.los_coeff
    A = (user.x - wg_x) ** 2 + (user.z - dz) ** 2
    y_hi = min(max(user.y, 0.0), dy)
    gamma_loc = stationary_offset(A, alpha_w, alpha_l)

    candidates: list[tuple[float, bool]] = []
    if gamma_loc is not None and 0.0 <= user.y - gamma_loc <= y_hi:
        candidates.append((user.y - gamma_loc, False))
    candidates.append((y_hi, True))
    candidates.append((0.0, True))
    best_y, best_boundary = candidates[0]
    best_val = _boresight_log_gain(best_y, user.y, A, cfg)
    for y, boundary in candidates[1:]:
        val = _boresight_log_gain(y, user.y, A, cfg)
        if val > best_val:
            best_y, best_boundary, best_val = y, boundary, val

    pa = Vec3(float(wg_x), best_y, dz)
    orient = optimal_orientation(user, pa)
    log_gain = composite_log_gain(user, pa, orient, cfg)
    diagnostics = {
        "condition": interior_optimum_exists(alpha_w, alpha_l),
        "stationary_offset": gamma_loc,
        "intermediate_bound": alpha_l < math.exp(-7.0 / (2.0 * math.sqrt(A))),
    }
    return PlacementSolution(
        y_star=best_y,
        gamma_star=user.y - best_y,
        A=A,
        orientation=orient,
        gain_sq=math.exp(log_gain),
        boundary_hit=best_boundary,
        user=user,
        pa=pa,
        log_gain=log_gain,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def _oracle_objective(user: Vec3, wg_x: float, cfg: SystemConfig):
    dz = cfg.region[2]

    def objective(y: float) -> float:
        pa = (wg_x, y, dz)
        return composite_log_gain(user, pa, optimal_orientation(user, pa), cfg)

    return objective


def golden_section_max(fun, lo: float, hi: float, tol: float = 1e-6) -> tuple[float, float]:
    """Maximize a unimodal ``fun`` on ``[lo, hi]``; returns (x, fun(x))."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def oracle_max_log_gain(
    user: Sequence[float], wg_x: float, cfg: SystemConfig, tol: float = 1e-6, grid: int = 2001
) -> tuple[float, float]:
    """Grid scan plus golden-section refinement of ln|H|^2 over the PA position.

    The orientation is re-optimized at every trial position and the gain is
    computed through the full rotation and beam-pattern path.
    """
    user = Vec3(*(float(c) for c in user))
    y_hi = min(max(user.y, 0.0), cfg.region[1])
    objective = _oracle_objective(user, wg_x, cfg)
    if y_hi == 0.0:
        return 0.0, objective(0.0)
    ys = np.linspace(0.0, y_hi, grid)
    vals = np.array([objective(y) for y in ys])
    i = int(np.argmax(vals))
    lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, grid - 1)]
    best = [(ys[i], vals[i]), golden_section_max(objective, lo, hi, tol)]
    best += [(0.0, vals[0]), (y_hi, vals[-1])]
    return max(best, key=lambda t: t[1])


def oracle_max_gain(user: Sequence[float], wg_x: float, cfg: SystemConfig, tol: float = 1e-6) -> tuple[float, float]:
    """Brute-force (argmax y, max |H|^2) for one PA serving one user."""
    y, log_gain = oracle_max_log_gain(user, wg_x, cfg, tol)
    return y, math.exp(log_gain)


def placement_trace(user: Sequence[float], wg_x: float, cfg: SystemConfig, ys: Sequence[float]) -> list[tuple[float, float]]:
    """(y, ln|H|^2) samples with the beam re-pointed at every position."""
    objective = _oracle_objective(Vec3(*(float(c) for c in user)), wg_x, cfg)
    return [(float(y), objective(float(y))) for y in ys]


def write_trace_csv(path, samples: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y_pa", "ln_gain_sq"])
        for y, v in samples:
            writer.writerow([f"{y:.9g}", f"{v:.9g}"])


__all__ = [
    "NoInteriorOptimum",
    "PlacementSolution",
    "golden_section_max",
    "interior_optimum_exists",
    "offset_closed_form",
    "optimal_offset_approx",
    "optimal_offset_exact",
    "optimal_orientation",
    "oracle_max_gain",
    "oracle_max_log_gain",
    "peak_offset",
    "placement_trace",
    "solve_placement",
    "stationarity",
    "stationary_offset",
    "write_trace_csv",
]
