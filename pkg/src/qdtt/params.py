"""Source and detection parameters, with the JSON configuration schema.

Config keys (exact):
    rep_rate_ghz, t1_xx_ps, t1_x_ps, fss_ueV, dphi_deg, t2star_xx_ps,
    t2star_x_ps, eta_ex, beta, t_decay_ns,
    channels: [ {eta_det, jitter_fwhm_ps, dark_hz, basis, fidelity} ] x 4

Channels 0 and 1 are the XX detection arm, channels 2 and 3 the X arm; each
arm's two bases must be orthogonal (one polarizing splitter per arm).
A null / missing t2star means no pure dephasing (infinite coherence time).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .polarization import ORTHOGONAL, JONES, CascadeStateParams

# Planck constant in ueV * ps; T_p = PLANCK_UEV_PS / fss_ueV
PLANCK_UEV_PS = 4135.667696923859

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass
class ChannelConfig:
    eta_det: float
    jitter_fwhm_ps: float
    dark_hz: float
    basis: str
    fidelity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta_det <= 1.0:
            raise ConfigError("eta_det must be in [0, 1]")
        if self.jitter_fwhm_ps < 0:
            raise ConfigError("jitter_fwhm_ps must be >= 0")
        if self.dark_hz < 0:
            raise ConfigError("dark_hz must be >= 0")
        if self.basis not in JONES:
            raise ConfigError(f"unknown basis {self.basis!r}")
        if not 0.5 <= self.fidelity <= 1.0:
            raise ConfigError("fidelity must be in [0.5, 1]")

    @property
    def jitter_sigma_ps(self) -> float:
        return self.jitter_fwhm_ps * FWHM_TO_SIGMA


@dataclass
class CascadeParams:
    rep_rate_ghz: float
    t1_xx_ps: float
    t1_x_ps: float
    fss_ueV: float = 0.0
    dphi_deg: float = 0.0
    t2star_xx_ps: float = math.inf
    t2star_x_ps: float = math.inf
    eta_ex: float = 1.0
    beta: float = 1.0
    t_decay_ns: float = 10.0
    channels: tuple[ChannelConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.t2star_xx_ps is None:
            self.t2star_xx_ps = math.inf
        if self.t2star_x_ps is None:
            self.t2star_x_ps = math.inf
        for name in ("rep_rate_ghz", "t1_xx_ps", "t1_x_ps", "t2star_xx_ps",
                     "t2star_x_ps", "t_decay_ns"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.fss_ueV < 0:
            raise ConfigError("fss_ueV must be >= 0")
        if not 0.0 <= self.eta_ex <= 1.0:
            raise ConfigError("eta_ex must be in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must be in (0, 1]")
        self.channels = tuple(
            c if isinstance(c, ChannelConfig) else ChannelConfig(**c)
            for c in self.channels)
        if len(self.channels) != 4:
            raise ConfigError("exactly 4 channels are required")
        for lo in (0, 2):
            b0, b1 = self.channels[lo].basis, self.channels[lo + 1].basis
            if ORTHOGONAL[b0] != b1:
                raise ConfigError(
                    f"channels {lo} and {lo + 1} must use orthogonal bases "
                    f"(got {b0!r}, {b1!r})")

    @property
    def rep_period_ps(self) -> float:
        return 1000.0 / self.rep_rate_ghz

    @property
    def precession_period_ps(self) -> float:
        return math.inf if self.fss_ueV == 0 else PLANCK_UEV_PS / self.fss_ueV

    @property
    def dphi_rad(self) -> float:
        return math.radians(self.dphi_deg)

    def state_params(self) -> CascadeStateParams:
        return CascadeStateParams(
            precession_period_ps=self.precession_period_ps,
            phase_offset_rad=self.dphi_rad,
            coherence_time_ps=self.t2star_x_ps,
            lifetime_ps=self.t1_x_ps,
        )

    def with_channels(self, *, bases=None, eta_det=None, fidelity=None,
                      jitter_fwhm_ps=None, dark_hz=None) -> "CascadeParams":
        """Copy with per-channel overrides (scalar applies to all four)."""
        def spread(v, old):
            if v is None:
                return old
            return tuple(v) if isinstance(v, (list, tuple)) else (v,) * 4

        bases = spread(bases, tuple(c.basis for c in self.channels))
        eta = spread(eta_det, tuple(c.eta_det for c in self.channels))
        fid = spread(fidelity, tuple(c.fidelity for c in self.channels))
        jit = spread(jitter_fwhm_ps, tuple(c.jitter_fwhm_ps for c in self.channels))
        dark = spread(dark_hz, tuple(c.dark_hz for c in self.channels))
        chans = tuple(ChannelConfig(eta_det=eta[i], jitter_fwhm_ps=jit[i],
                                    dark_hz=dark[i], basis=bases[i],
                                    fidelity=fid[i]) for i in range(4))
        d = self.to_dict()
        d["channels"] = [vars(c).copy() for c in chans]
        return CascadeParams.from_dict(d)

    def to_dict(self) -> dict:
        def enc(v):
            return None if isinstance(v, float) and math.isinf(v) else v
        return {
            "rep_rate_ghz": self.rep_rate_ghz,
            "t1_xx_ps": self.t1_xx_ps,
            "t1_x_ps": self.t1_x_ps,
            "fss_ueV": self.fss_ueV,
            "dphi_deg": self.dphi_deg,
            "t2star_xx_ps": enc(self.t2star_xx_ps),
            "t2star_x_ps": enc(self.t2star_x_ps),
            "eta_ex": self.eta_ex,
            "beta": self.beta,
            "t_decay_ns": self.t_decay_ns,
            "channels": [
                {"eta_det": c.eta_det, "jitter_fwhm_ps": c.jitter_fwhm_ps,
                 "dark_hz": c.dark_hz, "basis": c.basis, "fidelity": c.fidelity}
                for c in self.channels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeParams":
        d = dict(d)
        chans = d.pop("channels", None)
        if chans is None:
            raise ConfigError("config is missing 'channels'")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            channels = tuple(ChannelConfig(**c) for c in chans)
        except TypeError as e:
            raise ConfigError(f"bad channel entry: {e}") from None
        return cls(channels=channels, **d)

    @classmethod
    def from_json_file(cls, path) -> "CascadeParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json_file(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def paper_defaults(**overrides) -> CascadeParams:
    """Measured parameter set of the GHz-clocked GaAs dot source."""
    d = {
        "rep_rate_ghz": 0.9925,
        "t1_xx_ps": 134.96,
        "t1_x_ps": 200.4,
        "fss_ueV": 3.9,
        "dphi_deg": 20.0,
        "t2star_xx_ps": 392.0,
        "t2star_x_ps": None,
        "eta_ex": 0.076,
        "beta": 1.0,
        "t_decay_ns": 12.7,
        "channels": [
            {"eta_det": 0.011, "jitter_fwhm_ps": 47.0, "dark_hz": 0.0,
             "basis": "H", "fidelity": 1.0},
            {"eta_det": 0.011, "jitter_fwhm_ps": 56.0, "dark_hz": 0.0,
             "basis": "V", "fidelity": 1.0},
            {"eta_det": 0.011, "jitter_fwhm_ps": 54.0, "dark_hz": 0.0,
             "basis": "H", "fidelity": 1.0},
            {"eta_det": 0.011, "jitter_fwhm_ps": 50.0, "dark_hz": 0.0,
             "basis": "V", "fidelity": 1.0},
        ],
    }
    d.update(overrides)
    return CascadeParams.from_dict(d)
