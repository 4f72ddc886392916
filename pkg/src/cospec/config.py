"""Pipeline configuration: one JSON file of documented keys.

Every knob has a deterministic default or "auto" rule so that a fixed
config plus a fixed rng_seed reproduces byte-identical outputs.

Keys (all optional):

    scaled_energy   negative float, default -0.7
    s_max           action cutoff, default 2*pi*100
    n_seeds         launch-angle seeds for the orbit scan, default 20000
    tau             sample step or "auto": min(0.05, pi/(1.2*w_top))
    sigma           smoothing width or "auto": 2*tau
    windows         list of [w_min, w_max] frequency windows
    channels        list of channel specs: "2p0_parallel", "swave",
                    {"type": "swave", "constant": c}, or
                    {"type": "legendre", "coeffs": [...], "label": ...}
    J               basis size per channel and window, or "auto"
    output_dir      artifact directory
    rng_seed        seed for synthetic-signal generation
    workers         worker processes for scan/signal (advisory)
    tolerances      overrides: rtol, atol, scan_rtol, min_width,
                    svd_cutoff, accept_im, accept_err, cross_tol_w,
                    cross_tol_b, merge_tol
"""

import json
import math
from dataclasses import dataclass, field

from . import angular
from .errors import ConfigError

_DEF_TOL = {
    "rtol": 1e-12,
    "atol": 1e-12,
    "scan_rtol": 1e-10,
    "min_width": 1e-5,
    "svd_cutoff": 1e-10,
    "accept_im": 1e-3,
    "accept_err": 1e-6,
    "cross_tol_w": 1e-6,
    "cross_tol_b": 1e-4,
    "merge_tol": 1e-6,
}


@dataclass
class PipelineConfig:
    scaled_energy: float = -0.7
    s_max: float = 2.0 * math.pi * 100.0
    n_seeds: int = 20000
    tau: float | str = "auto"
    sigma: float | str = "auto"
    windows: list = field(default_factory=lambda: [[16.0, 21.0],
                                                   [34.0, 40.0]])
    channels: list = field(default_factory=lambda: ["2p0_parallel",
                                                    "swave"])
    J: int | str = "auto"
    output_dir: str = "cospec_out"
    rng_seed: int = 1
    workers: int = 1
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.scaled_energy < 0.0:
            raise ConfigError("scaled_energy must be negative")
        if self.s_max <= 0.0:
            raise ConfigError("s_max must be positive")
        if self.n_seeds < 2:
            raise ConfigError("n_seeds must be at least 2")
        if not self.windows:
            raise ConfigError("need at least one frequency window")
        for win in self.windows:
            if len(win) != 2 or not 0.0 < win[0] < win[1]:
                raise ConfigError(f"bad window {win}")
        if not self.channels:
            raise ConfigError("need at least one channel")
        tol = dict(_DEF_TOL)
        unknown = set(self.tolerances) - set(tol)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        tol.update(self.tolerances)
        self.tolerances = tol

    # -- derived quantities ------------------------------------------

    @property
    def w_top(self) -> float:
        return max(wimax for _, wimax in self.windows)

    def resolve_tau(self) -> float:
        if self.tau == "auto":
            # 20% Nyquist margin above the highest window edge.
            return min(0.05, math.pi / (1.2 * self.w_top))
        return float(self.tau)

    def resolve_sigma(self) -> float:
        if self.sigma == "auto":
            return 2.0 * self.resolve_tau()
        return float(self.sigma)

    def resolve_J(self, window, n_channels: int) -> int:
        if self.J == "auto":
            # 1.5x the information capacity of the signal in the
            # window, shared across channels.
            width = window[1] - window[0]
            cap = self.s_max * width / (4.0 * math.pi)
            return int(min(600, max(8, math.ceil(1.5 * cap / n_channels)
                                    + 8)))
        return int(self.J)

    def build_channels(self):
        funcs = []
        for spec in self.channels:
            if isinstance(spec, str):
                if spec == "2p0_parallel":
                    funcs.append(angular.build_2p0_parallel())
                elif spec == "swave":
                    funcs.append(angular.build_swave())
                else:
                    raise ConfigError(f"unknown channel {spec!r}")
            elif isinstance(spec, dict):
                kind = spec.get("type")
                if kind == "swave":
                    funcs.append(angular.build_swave(
                        float(spec.get("constant",
                                       angular.SWAVE_DEFAULT))))
                elif kind == "2p0_parallel":
                    funcs.append(angular.build_2p0_parallel())
                elif kind == "legendre":
                    funcs.append(angular.from_coefficients(
                        spec["coeffs"], spec.get("label", "custom")))
                else:
                    raise ConfigError(f"unknown channel type {kind!r}")
            else:
                raise ConfigError(f"bad channel spec {spec!r}")
        return funcs

    # -- I/O -----------------------------------------------------------

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: "
                              f"{exc}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def save(self, path):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
