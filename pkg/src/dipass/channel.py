"""Directional pinching-antenna channel.

The end-to-end gain from a waveguide input to a user is the product of an
in-waveguide term (equal-quota coupling, exponential attenuation, guided
phase) and a free-space term (effective aperture, per-meter LoS survival and
a Gaussian pencil beam evaluated in the PA's own frame).

Everything here is a pure function of its inputs. Log-domain variants exist
because long waveguides and small LoS coefficients underflow ``float64``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    DegenerateGeometryError,
    LocalCoords,
    Orientation,
    PAState,
    SystemConfig,
    _wrap_angle,
    to_local,
)


# ---------------------------------------------------------------------------
# waveguide -> PA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingPlan:
    """Coupling lengths of the L PAs on one waveguide, in order."""

    lengths: tuple[float, ...]
    kappa: float

    def __len__(self):
        return len(self.lengths)

    def efficiencies(self) -> np.ndarray:
        """Amplitude share reaching each PA, ignoring attenuation.

        Entry l is prod_{i<l} sqrt(1 - sin^2(k t_i)) * sin(k t_l); equal-quota
        division makes every entry sqrt(1/L).
        """
        s = np.sin(self.kappa * np.asarray(self.lengths))
        passed = np.concatenate(([1.0], np.cumprod(np.sqrt(1.0 - s[:-1] ** 2))))
        return passed * s


def coupling_lengths(num_pas: int, kappa: float) -> CouplingPlan:
    """Equal-quota coupling lengths; they depend only on the PA order."""
    if num_pas < 1:
        raise ValueError("need at least one PA")
    if not kappa > 0:
        raise ValueError("coupling coefficient must be positive")
    order = np.arange(1, num_pas + 1)
    lengths = np.arcsin(np.sqrt(1.0 / (num_pas + 1 - order))) / kappa
    return CouplingPlan(tuple(float(t) for t in lengths), float(kappa))


def wg_to_pa(y_pa, num_pas: int, alpha_w: float, lambda_g: float):
    """Complex amplitude from the waveguide entrance to a PA at ``y_pa``.

    ``alpha_w`` is the power attenuation in 1/m. Accepts scalars or arrays.
    """
    y = np.asarray(y_pa, dtype=float)
    if np.any(y < 0):
        raise ValueError("PA position along the waveguide must be >= 0")
    out = math.sqrt(1.0 / num_pas) * np.exp(-0.5 * alpha_w * y - 2j * math.pi * y / lambda_g)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gaussian beam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BeamParams:
    """Gaussian-beam quantities at boresight range ``y`` (far field)."""

    w1: float
    w2: float
    W1: float
    W2: float
    R1: float
    R2: float
    gouy1: float
    gouy2: float
    B: float


def beam_params(y_range: float, cfg: SystemConfig) -> BeamParams:
    if not y_range > 0:
        raise ValueError("beam parameters need a positive range")
    w1, w2 = cfg.waist
    lam, n = cfg.wavelength, cfg.refractive_index
    W1 = lam * y_range / (math.pi * n * w1)
    W2 = lam * y_range / (math.pi * n * w2)
    return BeamParams(
        w1=w1,
        w2=w2,
        W1=W1,
        W2=W2,
        R1=y_range,
        R2=y_range,
        gouy1=math.atan(lam * y_range / (math.pi * n * w1)),
        gouy2=math.atan(lam * y_range / (math.pi * n * w2)),
        B=math.sqrt(2.0 / (math.pi * w1 * w2)),
    )


def _beam_terms(local, cfg: SystemConfig):
    """Return (log|U|^2, phase, in_beam) for local coordinates (vectorized)."""
    x, y, z = (np.asarray(c, dtype=float) for c in local)
    x, y, z = np.broadcast_arrays(x, y, z)
    w1, w2 = cfg.waist
    lam, n = cfg.wavelength, cfg.refractive_index
    k = 2.0 * math.pi / lam
    inside = y > 0
    ys = np.where(inside, y, 1.0)
    W1 = lam * ys / (math.pi * n * w1)
    W2 = lam * ys / (math.pi * n * w2)
    log_pow = np.log(w1 * w2 / (W1 * W2)) + math.log(2.0 / (math.pi * w1 * w2)) - 2.0 * (
        x**2 / W1**2 + z**2 / W2**2
    )
    gouy = 0.5 * (np.arctan(lam * ys / (math.pi * n * w1)) + np.arctan(lam * ys / (math.pi * n * w2)))
    phase = -k * n * ((x**2 + z**2) / (2.0 * ys) + ys) + gouy
    log_pow = np.where(inside, log_pow, -np.inf)
    phase = np.where(inside, phase, 0.0)
    return log_pow, phase, inside


def beam_log_power(local, cfg: SystemConfig):
    """ln |U|^2 of the beam pattern; ``-inf`` behind the antenna."""
    log_pow, _, _ = _beam_terms(local, cfg)
    return log_pow[()] if log_pow.ndim == 0 else log_pow


def beam_field(local, cfg: SystemConfig):
    """Complex Gaussian-beam pattern at local coordinates (x, y, z).

    Points with ``y <= 0`` are behind the antenna and get exactly zero.
    """
    log_pow, phase, inside = _beam_terms(local, cfg)
    amp = np.where(inside, np.exp(0.5 * np.where(inside, log_pow, 0.0)), 0.0)
    out = amp * np.exp(1j * phase)
    return out[()] if out.ndim == 0 else out


def divergence_angles(cfg: SystemConfig) -> tuple[float, float]:
    """Far-field half-angle divergence (x, z) in radians."""
    w1, w2 = cfg.waist
    lam, n = cfg.wavelength, cfg.refractive_index
    return (math.atan(lam / (math.pi * n * w1)), math.atan(lam / (math.pi * n * w2)))


class Footprint(NamedTuple):
    width_x: float
    width_z: float
    diameter: float


def half_power_footprint(y_range: float, cfg: SystemConfig) -> Footprint:
    """Half-power widths of the beam cross-section at ``y_range``.

    ``diameter`` is that of the circle with the same area as the half-power
    ellipse.
    """
    p = beam_params(y_range, cfg)
    half = math.sqrt(math.log(2.0) / 2.0)
    dx, dz = 2.0 * p.W1 * half, 2.0 * p.W2 * half
    return Footprint(dx, dz, math.sqrt(dx * dz))


# ---------------------------------------------------------------------------
# PA -> user and composite
# ---------------------------------------------------------------------------


def aperture(cfg: SystemConfig) -> float:
    """Effective isotropic receive aperture, lambda^2 / (4 pi)."""
    return cfg.wavelength**2 / (4.0 * math.pi)


def pa_to_user_log(user, pa, orient: Orientation, cfg: SystemConfig) -> tuple[float, float]:
    """(ln |h|^2, phase) of the PA-to-user coefficient."""
    local = to_local(user, pa, orient)
    dist = math.sqrt(local.x**2 + local.y**2 + local.z**2)
    log_u, phase, _ = _beam_terms(local, cfg)
    log_pow = math.log(aperture(cfg)) + 2.0 * dist * math.log(cfg.los_coeff) + float(log_u)
    return log_pow, float(phase)


def pa_to_user(user, pa, orient: Orientation, cfg: SystemConfig) -> complex:
    log_pow, phase = pa_to_user_log(user, pa, orient, cfg)
    if log_pow == -math.inf:
        return 0j
    return complex(math.exp(0.5 * log_pow) * np.exp(1j * phase))


def composite_log_gain(user, pa, orient: Orientation, cfg: SystemConfig, num_pas: int | None = None) -> float:
    """ln |h_wp * h_pu|^2 for a single link."""
    L = cfg.num_pas_per_wg if num_pas is None else num_pas
    y_pa = float(pa[1])
    if y_pa < 0:
        raise ValueError("PA position along the waveguide must be >= 0")
    log_pu, _ = pa_to_user_log(user, pa, orient, cfg)
    return -math.log(L) - cfg.wg_atten_nat * y_pa + log_pu


def composite_gain_sq(user, pa, orient: Orientation, cfg: SystemConfig, num_pas: int | None = None) -> float:
    """Power gain |H|^2 of one waveguide-PA-user link."""
    return math.exp(composite_log_gain(user, pa, orient, cfg, num_pas))


def link_coefficient(user, pa, orient: Orientation, cfg: SystemConfig, num_pas: int | None = None) -> complex:
    """Complex end-to-end coefficient h_wp * h_pu of one link."""
    L = cfg.num_pas_per_wg if num_pas is None else num_pas
    return complex(wg_to_pa(float(pa[1]), L, cfg.wg_atten_nat, cfg.lambda_g)) * pa_to_user(user, pa, orient, cfg)


# ---------------------------------------------------------------------------
# optimal-gain entries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GainEntry:
    """Best achievable coefficient of one PA slot towards one user."""

    magnitude: float
    phase: float
    user: int
    pa_index: int
    waveguide: int
    order: int
    optimal_y: float
    optimal_orientation: Orientation

    @property
    def value(self) -> complex:
        return self.magnitude * complex(math.cos(self.phase), math.sin(self.phase))


def boresight_phase(y_pa: float, distance: float, cfg: SystemConfig) -> float:
    """Unwrapped phase of a link whose beam points straight at the user."""
    lam, n = cfg.wavelength, cfg.refractive_index
    k = 2.0 * math.pi / lam
    w1, w2 = cfg.waist
    gouy = 0.5 * (math.atan(lam * distance / (math.pi * n * w1)) + math.atan(lam * distance / (math.pi * n * w2)))
    return -2.0 * math.pi / cfg.lambda_g * y_pa - k * n * distance + gouy


def boresight_magnitude(y_pa: float, distance: float, cfg: SystemConfig, num_pas: int | None = None) -> float:
    L = cfg.num_pas_per_wg if num_pas is None else num_pas
    if not distance > 0:
        raise DegenerateGeometryError("user coincides with the PA")
    n, v = cfg.refractive_index, cfg.beam_correction
    a, b = cfg.cross_section
    return (
        math.sqrt(1.0 / L)
        * math.exp(-0.5 * cfg.wg_atten_nat * y_pa)
        * cfg.los_coeff**distance
        * cfg.wavelength
        / 2.0
        * n
        * v
        * math.sqrt(2.0 * a * b)
        / distance
    )


def optimal_gain_entry(user_index: int, pa_index: int, cfg: SystemConfig, solution) -> GainEntry:
    """Entry of the optimal-gain matrix for a PA placed per ``solution``.

    ``solution`` is a :class:`~dipass.single_pa.PlacementSolution` for this
    user and this PA's waveguide.
    """
    distance = solution.distance
    if not distance > 0:
        raise DegenerateGeometryError("user is unreachable: zero PA-user distance")
    L = cfg.num_pas_per_wg
    return GainEntry(
        magnitude=boresight_magnitude(solution.y_star, distance, cfg, L),
        phase=_wrap_angle(boresight_phase(solution.y_star, distance, cfg)),
        user=user_index,
        pa_index=pa_index,
        waveguide=pa_index // L,
        order=pa_index % L,
        optimal_y=solution.y_star,
        optimal_orientation=solution.orientation,
    )


# ---------------------------------------------------------------------------
# full channel matrices
# ---------------------------------------------------------------------------


def _pairs(arr: np.ndarray) -> list:
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


@dataclass(frozen=True)
class ChannelSet:
    """The three channel factors and their product H = h_pu @ h_wp @ Lambda."""

    h_wp: np.ndarray
    h_pu: np.ndarray
    lambda_mask: np.ndarray
    H: np.ndarray

    def to_dict(self) -> dict:
        return {
            "h_wp": _pairs(np.diag(self.h_wp)),
            "h_pu": _pairs(self.h_pu),
            "lambda_mask": self.lambda_mask.astype(int).tolist(),
            "H": _pairs(self.H),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSet":
        def unpair(x):
            a = np.asarray(x, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        h_wp = np.diag(unpair(data["h_wp"]))
        return cls(h_wp, unpair(data["h_pu"]), np.asarray(data["lambda_mask"], dtype=float), unpair(data["H"]))


def waveguide_selector(num_waveguides: int, num_pas: int) -> np.ndarray:
    """Block-diagonal NL x N matrix of all-ones L-vectors."""
    return np.kron(np.eye(num_waveguides), np.ones((num_pas, 1)))


def assemble_channels(pa_states: Sequence[PAState], users: Sequence[Sequence[float]], cfg: SystemConfig) -> ChannelSet:
    """Build every channel factor for placed and oriented PAs.

    ``pa_states`` must hold one state per slot, indexed ``waveguide * L + order``.
    """
    N, L = cfg.num_waveguides, cfg.num_pas_per_wg
    if len(pa_states) != N * L:
        raise ValueError(f"expected {N * L} PA states, got {len(pa_states)}")
    states = sorted(pa_states, key=lambda s: (s.waveguide, s.order))
    ys = np.array([s.y for s in states])
    h_wp = np.diag(wg_to_pa(ys, L, cfg.wg_atten_nat, cfg.lambda_g))
    h_pu = np.zeros((len(users), N * L), dtype=complex)
    for k, st in enumerate(states):
        pos = st.position(cfg)
        for m, u in enumerate(users):
            h_pu[m, k] = pa_to_user(u, pos, st.orientation, cfg)
    lam = waveguide_selector(N, L)
    return ChannelSet(h_wp, h_pu, lam, h_pu @ h_wp @ lam)


__all__ = [
    "BeamParams",
    "ChannelSet",
    "CouplingPlan",
    "Footprint",
    "GainEntry",
    "LocalCoords",
    "aperture",
    "assemble_channels",
    "beam_field",
    "beam_log_power",
    "beam_params",
    "boresight_magnitude",
    "boresight_phase",
    "composite_gain_sq",
    "composite_log_gain",
    "coupling_lengths",
    "divergence_angles",
    "half_power_footprint",
    "link_coefficient",
    "optimal_gain_entry",
    "pa_to_user",
    "pa_to_user_log",
    "waveguide_selector",
    "wg_to_pa",
]
