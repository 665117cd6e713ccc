"""Domain types, units, and configuration shared by every other module.

All quantities are strict SI: concentrations in molecule*m^-n, rates in
molecule^-1*m^n*s^-1 (forward) and molecule*m^-n*s^-1 (backward), lengths in
meters, times in seconds. Molar conversions are explicit helpers, never
implicit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

AVOGADRO = 6.02e23


class ConfigValidationError(ValueError):
    """Raised by validate(); carries the complete list of violations."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass(frozen=True)
class ReactionDiffusionConfig:
    """Physical constants and numerical grid parameters of one system."""

    dim: int = 3
    diff_a: float = 1e-10
    diff_b: float = 1e-10
    kf: float = 1e-17
    kb: float = 1e25
    n_tx_a: float = 5e3
    n_tx_b: float = 5e3
    distance: float = 250e-9
    rx_radius: float = 50e-9
    t_symb: float = 200e-6
    t_samp: float = 100e-6
    dt: float = 1e-6
    t_max: float = 2e-3
    dr: float = 5e-9
    r_max: float = 5e-6
    integration_radius: Optional[float] = None
    init_conc_a: float = 0.0
    init_conc_b: float = 0.0

    def replace(self, **changes) -> "ReactionDiffusionConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def n_cells(self) -> int:
        return int(round(self.r_max / self.dr))

    @property
    def radii(self) -> np.ndarray:
        """Representative radii; cell j covers [j*dr, (j+1)*dr].

        Chosen so that the per-cell quadrature measure (2dr / 2*pi*r*dr /
        4*pi*r^2*dr) equals the exact interval/annulus/shell measure; in 3-D
        that is r_j = dr*sqrt(((j+1)^3 - j^3)/3) rather than the midpoint.
        """
        j = np.arange(self.n_cells)
        if self.dim == 3:
            return self.dr * np.sqrt(((j + 1.0) ** 3 - j**3) / 3.0)
        return (j + 0.5) * self.dr

    @property
    def rx_volume(self) -> float:
        """Receiver measure: interval length, disk area, or ball volume."""
        a = self.rx_radius
        if self.dim == 1:
            return 2.0 * a
        if self.dim == 2:
            return math.pi * a * a
        return 4.0 / 3.0 * math.pi * a**3


def validation_errors(config: ReactionDiffusionConfig) -> list[str]:
    """Complete list of invariant violations (empty when valid)."""
    errs: list[str] = []
    c = config
    if c.dim not in (1, 2, 3):
        errs.append(f"dim must be in {{1,2,3}}, got {c.dim}")
    for name in ("diff_a", "diff_b", "kf", "kb", "n_tx_a", "n_tx_b",
                 "distance", "rx_radius", "t_symb", "t_samp", "t_max",
                 "init_conc_a", "init_conc_b"):
        v = getattr(c, name)
        if not (v >= 0.0) or not math.isfinite(v):
            errs.append(f"{name} >= 0 violated (got {v})")
    if not c.dt > 0:
        errs.append(f"dt > 0 violated (got {c.dt})")
    if not c.dr > 0:
        errs.append(f"dr > 0 violated (got {c.dr})")
    if c.integration_radius is not None and not c.integration_radius > 0:
        errs.append("integration_radius must be positive when set")
    if not c.r_max > c.distance + c.rx_radius:
        errs.append(
            f"r_max > distance + rx_radius violated "
            f"({c.r_max} <= {c.distance + c.rx_radius})")
    if not c.t_samp < c.t_symb:
        errs.append(f"t_samp < t_symb violated ({c.t_samp} >= {c.t_symb})")
    if not c.rx_radius < c.distance:
        errs.append(
            f"receiver contains transmitter (rx_radius {c.rx_radius} >= "
            f"distance {c.distance})")
    step_len = math.sqrt(max(2.0 * min(c.diff_a, c.diff_b) * c.dt, 0.0))
    if step_len > 0 and c.dr > step_len * (1 + 1e-12):
        errs.append(
            f"dr <= sqrt(2*min(D)*dt) violated ({c.dr} > {step_len:.4g}); "
            f"grid must resolve one diffusion step length")
    return errs


def validate(config: ReactionDiffusionConfig) -> ReactionDiffusionConfig:
    """Return config unchanged iff every invariant holds.

    Raises ConfigValidationError listing all violations otherwise.
    """
    errs = validation_errors(config)
    if errs:
        raise ConfigValidationError(errs)
    return config


def equilibrium_concentration(config: ReactionDiffusionConfig) -> tuple[float, float]:
    """Symmetric steady-state concentrations (C_A^eq, C_B^eq) = sqrt(kb/kf).

    The symmetric root is the one consistent with equal initial
    concentrations; asymmetric equilibria are out of scope.
    """
    if config.kf == 0.0:
        raise ValueError("no finite equilibrium: kf = 0")
    c = math.sqrt(config.kb / config.kf)
    return c, c


def molar_to_per_m3(conc_molar: float) -> float:
    """mol/L -> molecule/m^3 (factor 10^3 * Avogadro)."""
    return 1e3 * AVOGADRO * conc_molar


def per_m3_to_molar(conc: float) -> float:
    """molecule/m^3 -> mol/L."""
    return conc / (1e3 * AVOGADRO)


@dataclass(frozen=True)
class RadialField:
    """Per-species radial concentration profile at one time instant."""

    grid: np.ndarray
    conc: np.ndarray
    time: float

    def __post_init__(self):
        if self.grid.shape != self.conc.shape:
            raise ValueError("grid and conc shapes differ")

    def with_conc(self, conc: np.ndarray, time: float) -> "RadialField":
        return RadialField(self.grid, conc, time)


@dataclass(frozen=True)
class ReleaseSchedule:
    """Release instants with molecule counts for each species.

    Times are snapped to the time grid when consumed by the solver;
    releases take effect at the start of a step, before the split
    updates.
    """

    releases_a: tuple[tuple[float, float], ...] = ()
    releases_b: tuple[tuple[float, float], ...] = ()

    @staticmethod
    def single(time_a: Optional[float], time_b: Optional[float],
               n_a: float, n_b: float) -> "ReleaseSchedule":
        ra = ((time_a, n_a),) if time_a is not None else ()
        rb = ((time_b, n_b),) if time_b is not None else ()
        return ReleaseSchedule(ra, rb)

    def snapped(self, dt: float) -> "ReleaseSchedule":
        snap = lambda rel: tuple((round(t / dt) * dt, n) for t, n in rel)
        return ReleaseSchedule(snap(self.releases_a), snap(self.releases_b))

    def max_time(self) -> float:
        times = [t for t, _ in self.releases_a] + [t for t, _ in self.releases_b]
        return max(times, default=0.0)


@dataclass(frozen=True)
class ChannelResponse:
    """Expected receiver counts ybar_A(t), ybar_B(t) over the time grid."""

    times: np.ndarray
    ybar_a: np.ndarray
    ybar_b: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.ybar_a) == len(self.ybar_b)):
            raise ValueError("times/ybar lengths differ")

    def at(self, t: float) -> tuple[float, float]:
        """Values at the grid instant nearest to t."""
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.ybar_a[i]), float(self.ybar_b[i])

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("t,ybar_a,ybar_b\n")
            for t, ya, yb in zip(self.times, self.ybar_a, self.ybar_b):
                f.write(f"{float(t)!r},{float(ya)!r},{float(yb)!r}\n")


@dataclass(frozen=True)
class CrTable:
    """Means ybar_i^(s)(s_vec) for symbol s and ISI sequence s_vec.

    Keys are (s, isi) with isi a 0/1 string of length memory_len-1, oldest
    bit first. Exactly 2 * 2^(L-1) entries.
    """

    memory_len: int
    scheme: str
    means: dict

    def __post_init__(self):
        expected = 2 * 2 ** (self.memory_len - 1)
        if len(self.means) != expected:
            raise ValueError(
                f"CrTable for L={self.memory_len} needs {expected} entries, "
                f"got {len(self.means)}")

    def mean(self, s: int, isi: str) -> tuple[float, float]:
        return self.means[(s, isi)]

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("s,isi_bits,ybar_a,ybar_b\n")
            for (s, isi) in sorted(self.means):
                ya, yb = self.means[(s, isi)]
                f.write(f"{s},{isi},{float(ya)!r},{float(yb)!r}\n")


_CONFIG_FIELDS = [f.name for f in dataclasses.fields(ReactionDiffusionConfig)]


def load_config(path) -> ReactionDiffusionConfig:
    """Read a config from JSON; keys must match field names exactly."""
    with open(path) as f:
        data = json.load(f)
    unknown = sorted(set(data) - set(_CONFIG_FIELDS))
    if unknown:
        raise ConfigValidationError([f"unknown config key: {k}" for k in unknown])
    return ReactionDiffusionConfig(**data)


def config_to_dict(config: ReactionDiffusionConfig) -> dict:
    return dataclasses.asdict(config)


def config_hash(config: ReactionDiffusionConfig, *extra) -> str:
    """Content hash of a config (plus optional extra keys) for caching."""
    payload = json.dumps([config_to_dict(config), *extra], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "table1_defaults.json"


def table1_defaults() -> ReactionDiffusionConfig:
    """System defaults matching the shipped table1_defaults.json."""
    return load_config(default_config_path())
