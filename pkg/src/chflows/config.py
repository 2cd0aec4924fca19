"""Experiment configuration: INI files, named presets and snapshot levels."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .discretization import BoundaryMap, identity_map, peakon_map, reflection_map

__all__ = ["ExperimentConfig", "load_config", "preset_config", "PRESETS", "default_snapshots"]

_MAPS = {"peakon": peakon_map, "reflection": reflection_map, "identity": identity_map}

# "reduced" keeps the radius range and alpha of "full" and shrinks the grid.
PRESETS = {
    ("peakon", "full"): dict(nx=40, nr=41, r_lo=0.55, r_hi=1.45, K=35, eps=5e-4),
    ("peakon", "reduced"): dict(nx=16, nr=17, r_lo=0.55, r_hi=1.45, K=9, eps=5e-3),
    ("reflection", "full"): dict(nx=40, nr=41, r_lo=0.6, r_hi=1.4, K=35, eps=5e-4),
    ("reflection", "reduced"): dict(nx=16, nr=17, r_lo=0.6, r_hi=1.4, K=9, eps=5e-3),
    ("identity", "full"): dict(nx=40, nr=41, r_lo=0.55, r_hi=1.45, K=35, eps=5e-4),
    ("identity", "reduced"): dict(nx=16, nr=17, r_lo=0.55, r_hi=1.45, K=9, eps=5e-3),
}


def default_snapshots(K: int) -> tuple[int, ...]:
    """Eight levels evenly spread over ``1..K`` (fewer if ``K < 8``).

    For ``K = 35`` this gives 1, 6, 11, 16, 20, 25, 30, 35.
    """
    return tuple(int(k) for k in dict.fromkeys(np.rint(np.linspace(1, K, 8)).astype(int)))


@dataclass(frozen=True)
class ExperimentConfig:
    nx: int = 16
    nr: int = 17
    r_lo: float = 0.55
    r_hi: float = 1.45
    K: int = 9
    T: float = 1.0
    eps: float = 5e-3
    alpha: float = 40.0
    map_name: str = "peakon"
    boundary: BoundaryMap = field(default_factory=peakon_map)
    tolerance: float = 1e-7
    max_sweeps: int = 5000
    log_domain: str = "auto"
    accelerate: str = "auto"
    snapshots: tuple = ()
    seed: int = 0

    def __post_init__(self):
        for name in ("nx", "nr", "K", "max_sweeps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("T", "eps", "alpha", "tolerance", "r_lo", "r_hi"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be positive")
        if self.log_domain not in ("auto", "on", "off"):
            raise ValueError("log_domain must be auto, on or off")
        if self.accelerate not in ("auto", "on", "off"):
            raise ValueError("accelerate must be auto, on or off")
        if not self.snapshots:
            object.__setattr__(self, "snapshots", default_snapshots(self.K))
        bad = [k for k in self.snapshots if not 1 <= k <= self.K]
        if bad:
            raise ValueError(f"snapshot levels {bad} outside [1, {self.K}]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        if "K" in kw and "snapshots" not in kw:
            kw["snapshots"] = ()
        return replace(self, **kw)

    def to_ini(self) -> str:
        """Round-trippable INI text for the manifest."""
        d = asdict(self)
        b = self.boundary
        lines = [
            "[grid]",
            *(f"{k} = {d[k]!r}" for k in ("nx", "nr", "r_lo", "r_hi", "K", "T")),
            "",
            "[model]",
            f"eps = {self.eps!r}",
            f"alpha = {self.alpha!r}",
            f"map = {self.map_name}",
        ]
        if b.kind == "piecewise-linear" and self.map_name not in _MAPS:
            lines += [
                f"breakpoints = {', '.join(map(repr, b.breakpoints))}",
                f"slopes = {', '.join(map(repr, b.slopes))}",
                f"h0 = {b.h0!r}",
            ]
        lines += [
            "",
            "[solver]",
            f"tolerance = {self.tolerance!r}",
            f"max_sweeps = {self.max_sweeps}",
            f"log_domain = {self.log_domain}",
            f"accelerate = {self.accelerate}",
            "",
            "[output]",
            f"snapshots = {', '.join(map(str, self.snapshots))}",
            "",
            "[run]",
            f"seed = {self.seed}",
            "",
        ]
        return "\n".join(lines)


def preset_config(name: str, scale: str = "reduced", **overrides) -> ExperimentConfig:
    if (name, scale) not in PRESETS:
        raise ValueError(f"unknown preset {name!r} at scale {scale!r}")
    cfg = ExperimentConfig(map_name=name, boundary=_MAPS[name](), **PRESETS[name, scale])
    return cfg.with_overrides(**overrides) if overrides else cfg


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def load_config(path) -> ExperimentConfig:
    """Read an INI file; missing keys fall back to the named preset, then to defaults.

    ``map`` names a preset (``peakon``, ``reflection``, ``identity``) or is
    ``piecewise-linear`` with ``breakpoints``, ``slopes`` and optional ``h0``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        cp.read_file(fh)
    model = cp["model"] if cp.has_section("model") else {}
    name = model.get("map", "peakon").strip()
    scale = cp.get("grid", "scale", fallback="reduced").strip()
    kw = {}
    if name in _MAPS:
        base = preset_config(name, scale)
    elif name == "piecewise-linear":
        bmap = BoundaryMap(
            "piecewise-linear",
            _floats(model["breakpoints"]),
            _floats(model["slopes"]),
            float(model.get("h0", "0")),
            name="custom",
        )
        base = ExperimentConfig(map_name=name, boundary=bmap)
    else:
        raise ValueError(f"unknown boundary map {name!r}")

    casts = {
        "grid": dict(nx=int, nr=int, r_lo=float, r_hi=float, K=int, T=float),
        "model": dict(eps=float, alpha=float),
        "solver": dict(tolerance=float, max_sweeps=int, log_domain=str, accelerate=str),
        "run": dict(seed=int),
    }
    for section, keys in casts.items():
        if not cp.has_section(section):
            continue
        for key, cast in keys.items():
            # configparser lower-cases option names
            if cp.has_option(section, key.lower()):
                kw[key] = cast(cp.get(section, key.lower()).strip())
    if cp.has_option("output", "snapshots"):
        text = cp.get("output", "snapshots").strip()
        kw["snapshots"] = () if text in ("", "auto") else tuple(int(v) for v in _floats(text))
    return base.with_overrides(**kw)
