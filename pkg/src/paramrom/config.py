"""Experiment configuration: dataclasses, the study registry and file loading.

A config file (YAML or JSON) names a ``kind`` and optionally a registered
``study`` to start from; any keys it sets are merged on top of the study
defaults. ``--set key.path=value`` overrides are applied last.
"""

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml

from .errors import ConfigurationError

KINDS = ("convergence-low", "convergence-high", "reconstruct")


@dataclass
class ConvergenceLowSettings:
    t_grids: list = field(default_factory=lambda: [5, 10, 20, 30, 100])
    x_grids: list = field(default_factory=lambda: [5, 10, 20, 30, 40, 50])
    t_samples: int = 101
    quad_order: int = 4
    diagonal: str = "anti"

    def validate(self):
        if len(self.t_grids) < 1 or len(self.x_grids) < 1:
            raise ConfigurationError("t_grids and x_grids must be non-empty")
        if min(self.t_grids) < 2 or min(self.x_grids) < 2:
            raise ConfigurationError("grids need at least 2 points per side")
        if self.t_samples < 2:
            raise ConfigurationError("t_samples must be >= 2")


@dataclass
class ConvergenceHighSettings:
    n_t: int = 10
    M_values: list = field(default_factory=lambda: [200, 400, 1000, 2000, 3000, 4000])
    x_grids: list = field(default_factory=lambda: [5, 10, 20, 30, 40])
    n_networks: int = 5
    mc_samples: int = 10000
    mc_repeats: int = 3
    mc_batch: int = 250
    quad_order: int = 4
    feature_offsets: str = "box"

    def validate(self):
        if any(m % 4 for m in self.M_values):
            raise ConfigurationError("every M must be divisible by 4 (J = M/4)")
        if self.n_networks < 1 or self.mc_repeats < 1 or self.mc_samples < 1:
            raise ConfigurationError("n_networks, mc_repeats and mc_samples must be >= 1")
        if min(self.x_grids) < 2:
            raise ConfigurationError("x grids need at least 2 points per side")


@dataclass
class ReconstructionSettings:
    n_t: int = 50
    mesh: int = 30
    reference_mesh: int = 40
    J: int = 10000
    M: int = 40000
    base_potential: float = 1.0
    amplitude_range: list = field(default_factory=lambda: [35.0, 55.0])
    width_range: list = field(default_factory=lambda: [0.05, 0.15])
    pixels: list = field(default_factory=lambda: [25])
    coverage: list = field(default_factory=lambda: [1.0])
    noise: list = field(default_factory=lambda: [0.0])
    weighted: list = field(default_factory=lambda: [False])
    trials: int = 1
    realizations: int = 1
    max_iter: int = 200
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    pixel_quadrature: str = "clip"
    subdivision: int = 4
    potential_grid: int = 200
    feature_offsets: str = "box"
    fit_attempts: int = 3

    def validate(self):
        if self.n_t < 1:
            raise ConfigurationError("n_t must be >= 1")
        if self.M < self.J:
            raise ConfigurationError(f"M={self.M} must be >= J={self.J} for interpolation")
        if self.reference_mesh < 2 or self.mesh < 2:
            raise ConfigurationError("meshes need at least 2 points per side")
        if any(not 0 < c <= 1 for c in self.coverage):
            raise ConfigurationError("coverage fractions must lie in (0, 1]")
        if any(not 0 <= r < 1 for r in self.noise):
            raise ConfigurationError("noise amplitudes must lie in [0, 1)")
        if any(self.weighted) and any(r == 0 for r in self.noise):
            raise ConfigurationError("weighted loss needs a positive noise level")
        if self.trials < 1 or self.realizations < 1:
            raise ConfigurationError("trials and realizations must be >= 1")
        if len(self.amplitude_range) != 2 or len(self.width_range) != 2:
            raise ConfigurationError("amplitude_range and width_range are [low, high] pairs")


SETTINGS = {
    "convergence-low": ConvergenceLowSettings,
    "convergence-high": ConvergenceHighSettings,
    "reconstruct": ReconstructionSettings,
}


@dataclass
class ExperimentConfig:
    kind: str
    name: str = "custom"
    seed: int = 0
    n_jobs: int = 1
    cache_dir: Optional[str] = None
    settings: object = None

    def to_dict(self):
        d = asdict(self)
        d["settings"] = asdict(self.settings)
        return d


def _exp(n_t, mesh, J, M, amp, width, **extra):
    s = {"n_t": n_t, "mesh": mesh, "J": J, "M": M, "amplitude_range": amp, "width_range": width}
    s.update(extra)
    return {"kind": "reconstruct", "settings": s}


STUDIES = {
    "table1": {"kind": "convergence-low", "settings": {}},
    "table1-reduced": {
        "kind": "convergence-low",
        "settings": {"t_grids": [5, 10, 20, 30], "x_grids": [5, 10, 20, 30]},
    },
    "table2": {"kind": "convergence-high", "settings": {}},
    "table2-desk": {
        "kind": "convergence-high",
        "settings": {"M_values": [200, 400, 1000, 2000], "x_grids": [5, 10, 20], "mc_samples": 2000},
    },
    "exp1": _exp(50, 30, 10000, 40000, [35.0, 55.0], [0.05, 0.15], pixels=[25]),
    "exp2": _exp(20, 30, 10000, 40000, [5.0, 10.0], [0.2, 0.3], pixels=[3, 7, 15, 25]),
    "exp3": _exp(20, 30, 10000, 40000, [5.0, 10.0], [0.2, 0.3], pixels=[25],
                 coverage=[1.0, 0.5776, 0.36, 0.1936]),
    "exp4": _exp(20, 20, 2000, 8000, [50.0, 50.0], [0.1, 0.1], pixels=[15],
                 noise=[0.02, 0.05, 0.1], weighted=[False, True], realizations=20),
    "exp1-desk": _exp(10, 20, 1000, 4000, [35.0, 55.0], [0.05, 0.15], pixels=[25]),
    "exp2-desk": _exp(10, 20, 1000, 4000, [5.0, 10.0], [0.2, 0.3], pixels=[3, 7, 15, 25], trials=3),
    "exp3-desk": _exp(10, 20, 1000, 4000, [5.0, 10.0], [0.2, 0.3], pixels=[25],
                      coverage=[1.0, 0.5776, 0.36, 0.1936], trials=3),
    "exp4-desk": _exp(20, 20, 2000, 8000, [50.0, 50.0], [0.1, 0.1], pixels=[15],
                      noise=[0.02, 0.05, 0.1], weighted=[False, True], realizations=10),
}


def _deep_update(base, extra):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = copy.deepcopy(v)
    return base


def parse_override(text):
    """``"settings.noise=[0.02, 0.05]"`` -> (["settings", "noise"], [0.02, 0.05])."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigurationError(f"override {text!r} has an empty key")
    return path, yaml.safe_load(raw)


def apply_overrides(d, overrides):
    for text in overrides or []:
        path, value = parse_override(text)
        node = d
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {text!r} descends into a non-mapping")
        node[path[-1]] = value
    return d


def resolve(d):
    """Merge a raw config mapping over its named study."""
    d = copy.deepcopy(d or {})
    study = d.pop("study", None)
    if study is not None:
        if study not in STUDIES:
            raise ConfigurationError(f"unknown study {study!r}; valid names: {', '.join(sorted(STUDIES))}")
        base = copy.deepcopy(STUDIES[study])
        base.setdefault("name", study)
        d = _deep_update(base, d)
    return d


def config_from_dict(d):
    d = resolve(d)
    kind = d.get("kind")
    if kind not in KINDS:
        raise ConfigurationError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
    cls = SETTINGS[kind]
    raw = d.get("settings") or {}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown {kind} settings: {', '.join(unknown)}")
    settings = cls(**raw)
    settings.validate()
    top = set(d) - {"kind", "name", "seed", "n_jobs", "cache_dir", "settings"}
    if top:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(top))}")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    return ExperimentConfig(
        kind=kind,
        name=str(d.get("name", "custom")),
        seed=seed,
        n_jobs=int(d.get("n_jobs", 1)),
        cache_dir=d.get("cache_dir"),
        settings=settings,
    )


def read_config_file(path):
    """Raw mapping from a YAML/JSON config or from a run manifest (its ``config`` entry)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    if "manifest_version" in data:
        data = data["config"]
    return data


def load_config(path=None, overrides=None, seed=None, kind=None, study=None):
    d = read_config_file(path) if path else {}
    if study is not None:
        d.setdefault("study", study)
    if kind is not None:
        if "kind" not in d and "study" not in d:
            d["kind"] = kind
    d = resolve(d)
    apply_overrides(d, overrides)
    if seed is not None:
        d["seed"] = int(seed)
    cfg = config_from_dict(d)
    if kind is not None and cfg.kind != kind:
        raise ConfigurationError(f"config describes a {cfg.kind} experiment, not {kind}")
    return cfg
