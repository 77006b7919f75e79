"""Scenario files: nested YAML sections mapped onto frozen dataclasses.

Every field has a default, so an empty file describes the reference setup
(M=256, 200 centered subcarriers, N=14, eta=4, V=6, gamma=0.1, PHYDYAS).
Unknown sections or keys are rejected rather than silently ignored.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .prototype import PrototypeFilter, load_filter_file, phydyas_filter, rectangular_filter
from .waveform import BurstConfig, centered_subcarriers


@dataclass(frozen=True)
class WaveformSection:
    M: int = 256
    active: int | list = 200  # count (centered) or explicit subcarrier list
    N: int = 14
    eta: int = 4
    V: int = 6
    gamma: float = 0.1
    K_b_burst: int | None = None
    K_e_burst: int | None = None


@dataclass(frozen=True)
class FilterSection:
    kind: str = "phydyas"  # phydyas | rectangular | file
    path: str | None = None


@dataclass(frozen=True)
class ExperimentSection:
    seed: int = 2016
    bursts: int = 200
    chunk: int = 100
    order: int = 64
    gammas: list = field(default_factory=lambda: [0.0, 1e-4, 1e-3, 5e-3, 1e-2, 1e-1, 1.0])
    evm_gammas: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0])
    edge_depth: int = 1
    L_ro: int | None = None  # defaults to M/4


@dataclass(frozen=True)
class BerSection:
    ebn0_db: list = field(default_factory=lambda: [6.0, 10.0, 14.0, 18.0])
    gammas: list = field(default_factory=lambda: [0.1])
    packets: int = 240
    chunk: int = 48


@dataclass(frozen=True)
class PaprSection:
    bursts: int = 10000
    gamma: float = 0.1
    probability: float = 1e-2
    threshold_min: float = 6.0
    threshold_max: float = 14.0
    threshold_step: float = 0.1


@dataclass(frozen=True)
class PsdSection:
    bursts: int = 200
    gamma: float = 0.1
    fft_size: int | None = None  # defaults to 4M
    segment: int | None = None  # defaults to fft_size
    overlap: float = 0.5
    gap: int = 0


@dataclass(frozen=True)
class OutputSection:
    dir: str = "results"
    cache_dir: str | None = None  # defaults to <dir>/cache


@dataclass(frozen=True)
class Scenario:
    waveform: WaveformSection = WaveformSection()
    filter: FilterSection = FilterSection()
    experiment: ExperimentSection = ExperimentSection()
    ber: BerSection = BerSection()
    papr: PaprSection = PaprSection()
    psd: PsdSection = PsdSection()
    output: OutputSection = OutputSection()

    def burst_config(self, gamma: float | None = None) -> BurstConfig:
        w = self.waveform
        if isinstance(w.active, int):
            active = centered_subcarriers(w.M, w.active)
        else:
            active = tuple(int(a) for a in w.active)
        return BurstConfig(
            M=w.M,
            active=active,
            N=w.N,
            eta=w.eta,
            V=w.V,
            gamma=w.gamma if gamma is None else float(gamma),
            K_b_burst=w.K_b_burst,
            K_e_burst=w.K_e_burst,
        )

    def prototype(self) -> PrototypeFilter:
        f, M = self.filter, self.waveform.M
        if f.kind == "phydyas":
            return phydyas_filter(M, self.waveform.eta)
        if f.kind == "rectangular":
            return rectangular_filter(M)
        if f.kind == "file":
            if not f.path:
                raise ConfigError("filter.kind=file needs filter.path")
            return load_filter_file(f.path, M)
        raise ConfigError(f"unknown filter kind {f.kind!r}")

    @property
    def L_ro(self) -> int:
        L = self.experiment.L_ro
        return self.waveform.M // 4 if L is None else int(L)

    @property
    def cache_dir(self) -> str:
        o = self.output
        return o.cache_dir if o.cache_dir else os.path.join(o.dir, "cache")

    def replace(self, section: str, **changes) -> "Scenario":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


def _coerce(name, value, default):
    # YAML reads "1e-3" as a string; accept it for float fields.
    if isinstance(default, float) and isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, list) and isinstance(value, (int, float, str)):
        value = [value]
    if isinstance(value, list) and isinstance(default, list) and name != "waveform.active":
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a list of numbers") from None
    if isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"{name}: expected an integer, got {value}")
        return int(value)
    return value


def _section(cls, name, raw):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {', '.join(sorted(unknown))}")
    defaults = cls()
    values = {k: _coerce(f"{name}.{k}", v, getattr(defaults, k)) for k, v in raw.items()}
    return cls(**values)


def scenario_from_dict(raw: dict | None) -> Scenario:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must contain a mapping of sections")
    classes = {
        "waveform": WaveformSection,
        "filter": FilterSection,
        "experiment": ExperimentSection,
        "ber": BerSection,
        "papr": PaprSection,
        "psd": PsdSection,
        "output": OutputSection,
    }
    unknown = set(raw) - set(classes)
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    sc = Scenario(**{k: _section(cls, k, raw.get(k)) for k, cls in classes.items()})
    validate(sc)
    return sc


def load_scenario(path: str | os.PathLike | None) -> Scenario:
    """Parse a YAML scenario file; ``None`` gives the defaults."""
    if path is None:
        return scenario_from_dict({})
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return scenario_from_dict(raw)


def validate(sc: Scenario) -> None:
    """Cross-field checks that the dataclasses alone cannot express."""
    sc.burst_config()  # waveform checks live in BurstConfig
    e = sc.experiment
    for name, n in (("experiment.bursts", e.bursts), ("experiment.chunk", e.chunk),
                    ("ber.chunk", sc.ber.chunk), ("papr.bursts", sc.papr.bursts),
                    ("psd.bursts", sc.psd.bursts)):
        if int(n) < 1:
            raise ConfigError(f"{name} must be positive")
    if sc.ber.packets < 0:
        raise ConfigError("ber.packets must be non-negative")
    for name, grid in (("experiment.gammas", e.gammas), ("experiment.evm_gammas", e.evm_gammas),
                       ("ber.gammas", sc.ber.gammas)):
        if any(not math.isfinite(g) or g < 0 for g in grid):
            raise ConfigError(f"{name}: gamma must be finite and non-negative")
    if not 0 < sc.papr.probability < 1:
        raise ConfigError("papr.probability must lie in (0, 1)")
    if sc.papr.threshold_step <= 0 or sc.papr.threshold_max < sc.papr.threshold_min:
        raise ConfigError("invalid PAPR threshold grid")
    if not 0 <= sc.psd.overlap < 1:
        raise ConfigError("psd.overlap must lie in [0, 1)")
    if sc.psd.gap < 0:
        raise ConfigError("psd.gap must be non-negative")
    if e.edge_depth < 1 or 2 * e.edge_depth > sc.waveform.N:
        raise ConfigError("experiment.edge_depth must lie in [1, N/2]")
