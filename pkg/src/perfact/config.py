"""Experiment configuration: sectioned ``key = value`` files.

Example::

    [experiment]
    name = source

    [geometry]
    L_list = 2, 4, 8
    n_per_unit = 30

    [potential]
    kind = separable_sinsq
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .decomposition import BOXES, DISTANCE, EQUAL, EXPLICIT, SLABS, UNIT_CELLS
from .grid_fem import PlaneGradient3D, PotentialSpec, SeparableSinSq, ZeroPotential

EXPERIMENTS = ("dilemma", "source", "parameter_study", "eig", "fused", "analysis")
INNER_SOLVERS = ("cg_as2", "gmres_ras2", "ras1", "ras2", "direct")
PRECOND_NAMES = ("as1", "as2", "ras1", "ras2")
STRATEGIES = ("fixed", "adaptive", "fused")
POTENTIALS = ("zero", "separable_sinsq", "plane_gradient_3d")


class ConfigError(ValueError):
    pass


def _int_list(s: str) -> List[int]:
    return [int(t) for t in s.replace(";", ",").split(",") if t.strip()]


def _float_list(s: str) -> List[float]:
    return [float(t) for t in s.replace(";", ",").split(",") if t.strip()]


def _str_list(s: str) -> List[str]:
    return [t.strip().lower() for t in s.replace(";", ",").split(",") if t.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s: str) -> float:
    """Float that also accepts ``e^k`` for exp(k)."""
    s = s.strip()
    if s.startswith("e^"):
        return math.exp(float(s[2:]))
    return float(s)


def _n_rule(s: str):
    s = s.strip().lower()
    return s if s == "l" else int(s)


# section -> key -> (attribute, parser)
SCHEMA: Dict[str, Dict[str, Tuple[str, Callable]]] = {
    "experiment": {"name": ("experiment", lambda s: s.strip().lower())},
    "geometry": {
        "p": ("p", int), "q": ("q", int), "l": ("L", int), "l_list": ("L_list", _int_list),
        "ell": ("ell", float), "n_per_unit": ("n_per_unit", int),
        "n_list": ("n_list", _int_list),
    },
    "potential": {"kind": ("potential", lambda s: s.strip().lower()),
                  "amplitude": ("amplitude", float)},
    "decomposition": {
        "mode": ("partition", lambda s: s.strip().lower()), "n": ("N_rule", _n_rule),
        "counts": ("counts", _int_list), "delta": ("delta", int),
        "delta_list": ("delta_list", _int_list), "pu": ("pu", lambda s: s.strip().lower()),
        "partition_file": ("partition_file", str.strip),
        "coarse_boundary": ("include_boundary", _bool),
    },
    "solver": {
        "preconditioners": ("preconditioners", _str_list), "inner": ("inner", _str_list),
        "rtol_i": ("rtol_i", float), "strategy": ("strategies", _str_list),
        "kmax": ("kmax_inner", int), "initial_guess": ("initial_guess", lambda s: s.strip().lower()),
    },
    "outer": {"tol_o": ("tol_o", float), "kmax": ("kmax_outer", int),
              "method": ("outer_method", lambda s: s.strip().lower())},
    "dilemma": {"h": ("dilemma_h", float), "r": ("R", _float), "q": ("Q", _float),
                "sigma_grid_size": ("sigma_grid_size", int)},
    "analysis": {"samples": ("samples", int), "split_samples": ("split_samples", int),
                 "dense_limit": ("dense_limit", int)},
    "random": {"seed": ("seed", int)},
}


@dataclass
class ExperimentConfig:
    experiment: str = "source"
    p: int = 1
    q: int = 1
    L: Optional[int] = None
    L_list: List[int] = field(default_factory=lambda: [2, 4, 8])
    ell: float = 1.0
    n_per_unit: int = 30
    n_list: List[int] = field(default_factory=lambda: [10, 20, 30])
    potential: str = "separable_sinsq"
    amplitude: float = 100.0
    partition: str = SLABS
    N_rule: object = "l"
    counts: Optional[List[int]] = None
    delta: int = 1
    delta_list: List[int] = field(default_factory=lambda: [1, 2, 3])
    pu: str = DISTANCE
    partition_file: Optional[str] = None
    include_boundary: bool = True
    preconditioners: List[str] = field(default_factory=lambda: ["as1", "as2"])
    inner: List[str] = field(default_factory=lambda: ["ras1", "ras2", "cg_as2", "gmres_ras2"])
    rtol_i: float = 1e-8
    strategies: List[str] = field(default_factory=lambda: list(STRATEGIES))
    kmax_inner: int = 10000
    initial_guess: str = "ones"
    tol_o: float = 1e-8
    kmax_outer: int = 1000
    outer_method: str = "lopcg"
    dilemma_h: float = 0.1
    R: float = math.exp(7)
    Q: float = math.exp(4)
    sigma_grid_size: int = 200
    samples: int = 100
    split_samples: int = 50
    dense_limit: int = 800
    seed: int = 42

    @property
    def lengths(self) -> List[int]:
        return [self.L] if self.L is not None else list(self.L_list)

    def subdomain_count(self, L: int) -> Optional[int]:
        if self.N_rule == "l":
            return L ** self.p if self.partition == UNIT_CELLS else L
        return int(self.N_rule)

    def make_potential(self) -> PotentialSpec:
        if self.potential == "zero":
            return ZeroPotential()
        if self.potential == "separable_sinsq":
            return SeparableSinSq(self.amplitude)
        return PlaneGradient3D()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(self.p >= 1 and self.q >= 0, "need p >= 1 and q >= 0")
        need(self.ell > 0, "ell must be positive")
        need(self.n_per_unit >= 1 and all(n >= 1 for n in self.n_list), "n_per_unit must be >= 1")
        need(all(L >= 1 for L in self.lengths) and self.lengths, "domain lengths must be >= 1")
        need(self.potential in POTENTIALS, f"unknown potential {self.potential!r}")
        need(self.potential != "plane_gradient_3d" or self.p + self.q == 3,
             "plane_gradient_3d needs a 3D domain")
        need(self.partition in (SLABS, UNIT_CELLS, BOXES, EXPLICIT),
             f"unknown decomposition mode {self.partition!r}")
        need(self.partition != EXPLICIT or self.partition_file, "explicit mode needs partition_file")
        need(self.N_rule == "l" or int(self.N_rule) >= 1, "N must be 'L' or a positive integer")
        need(self.delta >= 1 and all(d >= 1 for d in self.delta_list), "overlap must be >= 1")
        need(self.pu in (EQUAL, DISTANCE), f"unknown partition of unity {self.pu!r}")
        need(all(s in PRECOND_NAMES for s in self.preconditioners), "unknown preconditioner name")
        need(all(s in INNER_SOLVERS for s in self.inner), "unknown inner solver")
        need(all(s in STRATEGIES for s in self.strategies), "unknown inner strategy")
        need(self.outer_method in ("lopcg", "ipm"), "outer method must be lopcg or ipm")
        need(self.initial_guess in ("ones", "zero"), "initial guess must be ones or zero")
        need(self.rtol_i > 0 and self.tol_o > 0, "tolerances must be positive")
        need(self.kmax_inner >= 1 and self.kmax_outer >= 1, "iteration limits must be >= 1")
        need(0 < self.dilemma_h < 1 and self.R > 1 and self.Q > 0, "invalid dilemma parameters")
        need(self.sigma_grid_size >= 10, "sigma grid needs at least 10 points")
        need(self.samples >= 1 and self.split_samples >= 0, "sample counts must be positive")
        return self


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate a config file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_parser(parser, experiment)


def config_from_string(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_parser(parser, experiment)


def config_from_parser(parser: configparser.ConfigParser, experiment: Optional[str]) -> ExperimentConfig:
    values = {}
    for section in parser.sections():
        keys = SCHEMA.get(section.lower())
        if keys is None:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            attr, conv = keys[key]
            try:
                values[attr] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
    cfg = ExperimentConfig(**values)
    if experiment is not None:
        if "experiment" in values and values["experiment"] != experiment:
            raise ConfigError(f"config is for {values['experiment']!r}, not {experiment!r}")
        cfg.experiment = experiment
    return cfg.validate()
