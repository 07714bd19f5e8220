"""Configuration, units, 3-D geometry and the global-to-beam-frame transform."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class DegenerateGeometryError(ValueError):
    """Raised when two points that must differ coincide (or similar)."""


class Vec3(NamedTuple):
    """Point in the global frame, meters."""

    x: float
    y: float
    z: float


class LocalCoords(NamedTuple):
    """User position expressed in a PA's beam frame (boresight = +y)."""

    x: float
    y: float
    z: float


def _wrap_angle(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Orientation:
    """Beam direction: elevation from +z and azimuth from +x.

    ``theta`` must lie in [pi/2, pi] (pi points straight down, pi/2 is
    horizontal). ``phi`` is normalized into (-pi, pi] at construction.
    """

    theta: float
    phi: float

    def __post_init__(self):
        if not math.isfinite(self.theta) or not math.isfinite(self.phi):
            raise ValueError("orientation angles must be finite")
        if not (math.pi / 2 - 1e-12 <= self.theta <= math.pi + 1e-12):
            raise ValueError(f"theta={self.theta!r} outside [pi/2, pi]")
        object.__setattr__(self, "theta", min(max(self.theta, math.pi / 2), math.pi))
        object.__setattr__(self, "phi", _wrap_angle(self.phi))

    @property
    def direction(self) -> np.ndarray:
        """Unit boresight vector in the global frame."""
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


def atten_db_to_nat(alpha_db: float) -> float:
    """Convert a waveguide power attenuation from dB/m to 1/m (nepers on power).

    >>> round(atten_db_to_nat(1.3), 6)
    0.299336
    """
    if alpha_db < 0 or not math.isfinite(alpha_db):
        raise ValueError(f"attenuation must be finite and >= 0, got {alpha_db!r}")
    return alpha_db * math.log(10.0) / 10.0


@dataclass(frozen=True)
class SystemConfig:
    """All scalar deployment parameters.

    Lengths are meters, powers watts. ``cross_section`` is (a, b) in units of
    the free-space wavelength. ``guided_wavelength`` and ``min_spacing``
    default to ``wavelength / refractive_index`` and half the guided
    wavelength respectively when left as ``None``. ``noise_power`` may be a
    scalar (shared by all users) or one value per user.
    """

    num_waveguides: int = 1
    num_pas_per_wg: int = 1
    num_users: int = 1
    region: tuple[float, float, float] = (10.0, 10.0, 3.0)
    carrier_freq: float = 100e9
    guided_wavelength: float | None = None
    cross_section: tuple[float, float] = (10.0, 6.0)
    refractive_index: float = 1.5
    beam_correction: float = 1.1
    coupling_coeff: float = 100.0
    wg_atten_db: float = 1.3
    los_coeff: float = 0.5
    tx_power: float = 40.0
    noise_power: float | tuple[float, ...] = 1e-12
    min_spacing: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        object.__setattr__(self, "cross_section", tuple(float(v) for v in self.cross_section))
        if not isinstance(self.noise_power, (int, float)):
            object.__setattr__(self, "noise_power", tuple(float(v) for v in self.noise_power))
        self._validate()

    def _validate(self):
        for name in ("num_waveguides", "num_pas_per_wg", "num_users"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if len(self.region) != 3 or any(not (v > 0 and math.isfinite(v)) for v in self.region):
            raise ConfigError(f"region must be three positive lengths, got {self.region!r}")
        if len(self.cross_section) != 2 or any(not v > 0 for v in self.cross_section):
            raise ConfigError(f"cross_section must be two positive numbers, got {self.cross_section!r}")
        positive = ("carrier_freq", "refractive_index", "beam_correction", "coupling_coeff", "tx_power")
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.guided_wavelength is not None and not self.guided_wavelength > 0:
            raise ConfigError("guided_wavelength must be positive")
        if self.min_spacing is not None and not self.min_spacing > 0:
            raise ConfigError("min_spacing must be positive")
        if not (self.wg_atten_db >= 0 and math.isfinite(self.wg_atten_db)):
            raise ConfigError("wg_atten_db must be >= 0")
        if not (0 < self.los_coeff <= 1):
            raise ConfigError(f"los_coeff must lie in (0, 1], got {self.los_coeff!r}")
        noise = np.atleast_1d(np.asarray(self.noise_power, dtype=float))
        if noise.size not in (1, self.num_users) or np.any(~(noise > 0)):
            raise ConfigError("noise_power must be positive, scalar or one per user")
        if int(self.rng_seed) < 0:
            raise ConfigError("rng_seed must be unsigned")
        if self.num_pas_per_wg * self.spacing > self.region[1]:
            raise ConfigError(
                f"{self.num_pas_per_wg} PAs at spacing {self.spacing:.3g} m do not fit on a "
                f"{self.region[1]} m waveguide"
            )

    # derived quantities -------------------------------------------------

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def lambda_g(self) -> float:
        if self.guided_wavelength is not None:
            return self.guided_wavelength
        return self.wavelength / self.refractive_index

    @property
    def wg_atten_nat(self) -> float:
        return atten_db_to_nat(self.wg_atten_db)

    @property
    def spacing(self) -> float:
        if self.min_spacing is not None:
            return self.min_spacing
        return self.lambda_g / 2.0

    @property
    def waist(self) -> tuple[float, float]:
        """Initial Gaussian widths (w1, w2) in meters."""
        a, b = self.cross_section
        lam = self.wavelength
        return (self.beam_correction * a * lam, self.beam_correction * b * lam)

    @property
    def num_pas(self) -> int:
        return self.num_waveguides * self.num_pas_per_wg

    def noise_vector(self, num_users: int | None = None) -> np.ndarray:
        m = self.num_users if num_users is None else num_users
        noise = np.atleast_1d(np.asarray(self.noise_power, dtype=float))
        if noise.size == 1:
            return np.full(m, noise[0])
        if noise.size != m:
            raise ConfigError(f"noise_power has {noise.size} entries but {m} users")
        return noise.copy()

    # (de)serialization ---------------------------------------------------

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["region"] = list(self.region)
        out["cross_section"] = list(self.cross_section)
        if isinstance(self.noise_power, tuple):
            out["noise_power"] = list(self.noise_power)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = dict(data)
        for key in ("region", "cross_section"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
        return cls.from_dict(data)


def waveguide_entrances(cfg: SystemConfig) -> list[Vec3]:
    """Entrance points of the N waveguides, evenly spread along x at height Dz."""
    dx, _, dz = cfg.region
    n_wg = cfg.num_waveguides
    return [Vec3((2 * n - 1) / (2 * n_wg) * dx, 0.0, dz) for n in range(1, n_wg + 1)]


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def local_rotation(orient: Orientation) -> np.ndarray:
    """Matrix taking global offsets into the beam frame of ``orient``."""
    return rotation_x(orient.theta - math.pi / 2) @ rotation_z(math.pi / 2 - orient.phi)


def to_local(user: Sequence[float], pa: Sequence[float], orient: Orientation) -> LocalCoords:
    """Coordinates of ``user`` in the beam frame of a PA at ``pa``.

    The +y axis of the returned frame is the boresight, so ``y > 0`` means the
    user is in front of the antenna.
    """
    offset = np.asarray(user, dtype=float) - np.asarray(pa, dtype=float)
    if not np.any(offset):
        raise DegenerateGeometryError("user and PA positions coincide")
    x, y, z = local_rotation(orient) @ offset
    return LocalCoords(float(x), float(y), float(z))


def from_local(local: Sequence[float], pa: Sequence[float], orient: Orientation) -> Vec3:
    """Inverse of :func:`to_local`."""
    offset = local_rotation(orient).T @ np.asarray(local, dtype=float)
    x, y, z = offset + np.asarray(pa, dtype=float)
    return Vec3(float(x), float(y), float(z))


@dataclass(frozen=True)
class PAState:
    """One pinching antenna: its slot on a waveguide and its pose.

    ``order`` is the 0-based position along the waveguide (it fixes the
    coupling length); ``user`` is the index of the served user, if any.
    """

    waveguide: int
    order: int
    y: float
    orientation: Orientation
    coupling_length: float = float("nan")
    user: int | None = None

    def position(self, cfg: SystemConfig) -> Vec3:
        dx, _, dz = cfg.region
        x = (2 * self.waveguide + 1) / (2 * cfg.num_waveguides) * dx
        return Vec3(x, self.y, dz)

    def with_(self, **changes: Any) -> "PAState":
        return dataclasses.replace(self, **changes)
