"""YAML run configuration with line-numbered diagnostics.

Every section is optional and falls back to the defaults in ``SCHEMA``.
Unknown keys are rejected in strict mode and reported as warnings otherwise.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, InputError
from .population import QuadratureSpec
from .smoother import SmootherConfig
from .solver import INIT_STRATEGIES
from .synth import DEFAULT_TRACKS, MixtureModel, NoiseSpec, TimeSpec, make_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Leaf:
    kind: str          # int | float | str | bool | list | any
    default: Any = None
    nullable: bool = False


SCHEMA: dict = {
    "seed": Leaf("int", 0),
    "model": {
        "tracks": Leaf("list", None, nullable=True),
        "weights": Leaf("list", None, nullable=True),
        "noise": {
            "family": Leaf("str", "gaussian"),
            "sigma": Leaf("float", 0.25),
            "dof": Leaf("float", 0.0),
            "scale": Leaf("float", 1.0),
        },
        "time": {
            "family": Leaf("str", "uniform"),
            "a": Leaf("float", 1.0),
            "b": Leaf("float", 1.0),
        },
        "delta": Leaf("float", 1.0),
        "m": Leaf("int", 201),
        "s": Leaf("int", 2),
    },
    "data": {"n": Leaf("int", 1000)},
    "smoother": {
        "s": Leaf("int", 2),
        "lam": Leaf("float", 1e-3),
        "m": Leaf("int", 201),
        "ridge": Leaf("float", 1e-12),
    },
    "solver": {
        "k": Leaf("int", 2),
        "restarts": Leaf("int", 5),
        "init": Leaf("str", "perturbed-global"),
        "delta": Leaf("float", None, nullable=True),
    },
    "quadrature": {
        "t_nodes": Leaf("int", 8),
        "y_nodes": Leaf("int", 32),
        "y_radius": Leaf("float", None, nullable=True),
        "mc_samples": Leaf("int", 400_000),
        "mc_seed": Leaf("int", 0),
    },
    "rate_study": {
        "n_grid": Leaf("list", [2**e for e in range(7, 15)]),
        "replicates": Leaf("int", 20),
        "reference_n": Leaf("int", None, nullable=True),
        "reference_restarts": Leaf("int", 10),
    },
    "grad_check": {
        "directions": Leaf("int", 20),
        "step": Leaf("float", 1e-4),
        "lam": Leaf("float", 1e-3),
        "perturbation": Leaf("float", 0.1),
        "tolerance": Leaf("float", 1e-3),
    },
    "gamma_check": {
        "n_grid": Leaf("list", [100 * 2**e for e in range(11)]),
        "replicates": Leaf("int", 50),
        "perturbation": Leaf("float", 0.0),
    },
}


def _key_lines(node, prefix=(), out=None, dupes=None):
    """Map key paths to source lines; collect duplicated keys on the way."""
    out = {} if out is None else out
    dupes = [] if dupes is None else dupes
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for key_node, value_node in node.value:
            key = key_node.value
            path = prefix + (key,)
            if key in seen:
                dupes.append((path, key_node.start_mark.line + 1))
            seen.add(key)
            out[path] = key_node.start_mark.line + 1
            _key_lines(value_node, path, out, dupes)
    return out, dupes


def _coerce(leaf: Leaf, value, where: str):
    if value is None:
        if leaf.nullable:
            return None
        raise ConfigError(f"{where}: value required")
    kind = leaf.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            # YAML 1.1 reads 1e-3 (no dot) as a string
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    return value


class Config:
    """Validated configuration plus the source positions of its keys."""

    def __init__(self, data: dict, lines: dict, source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def where(self, *path: str) -> str:
        for cut in range(len(path), 0, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                return f"{self.source}:{line}: {'.'.join(path)}"
        return f"{self.source}: {'.'.join(path)}"

    def __getitem__(self, section: str):
        return self.data[section]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def with_seed(self, seed: int | None) -> "Config":
        if seed is None:
            return self
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return Config(data, self.lines, self.source)

    def as_dict(self) -> dict:
        return copy.deepcopy(self.data)

    # builders; library validation errors are re-raised with the key position

    def _build(self, section: str, fn):
        try:
            return fn()
        except InputError as exc:
            raise ConfigError(f"{self.where(section)}: {exc}") from exc
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"{self.where(section)}: {exc}") from exc

    def model(self) -> MixtureModel:
        sec = self.data["model"]

        def build():
            nz = sec["noise"]
            if nz["family"] == "gaussian":
                noise = NoiseSpec.gaussian(nz["sigma"])
            elif nz["family"] == "student_t":
                noise = NoiseSpec.student_t(nz["dof"], nz["scale"])
            else:
                raise ValueError(f"unknown noise family {nz['family']!r}")
            tm = sec["time"]
            time = TimeSpec(tm["family"], tm["a"], tm["b"])
            tracks = sec["tracks"] if sec["tracks"] is not None else list(DEFAULT_TRACKS)
            return make_model(tracks, sec["weights"], noise, time, delta=sec["delta"],
                              m=sec["m"], s=sec["s"])

        return self._build("model", build)

    def smoother(self) -> SmootherConfig:
        sec = self.data["smoother"]
        return self._build("smoother", lambda: SmootherConfig(sec["s"], sec["lam"], sec["m"], sec["ridge"]))

    def solver(self) -> dict:
        sec = dict(self.data["solver"])
        if sec["k"] < 1:
            raise ConfigError(f"{self.where('solver', 'k')}: k must be >= 1")
        if sec["restarts"] < 1:
            raise ConfigError(f"{self.where('solver', 'restarts')}: restarts must be >= 1")
        if sec["init"] not in INIT_STRATEGIES:
            raise ConfigError(f"{self.where('solver', 'init')}: expected one of {INIT_STRATEGIES}")
        if sec["delta"] is None:
            sec["delta"] = self.data["model"]["delta"]
        return sec

    def quadrature(self) -> QuadratureSpec:
        sec = self.data["quadrature"]
        return self._build("quadrature", lambda: QuadratureSpec(**sec))

    def sample_size(self) -> int:
        n = self.data["data"]["n"]
        if n < 1:
            raise ConfigError(f"{self.where('data', 'n')}: n must be >= 1")
        return n

    def rate_study(self) -> dict:
        sec = dict(self.data["rate_study"])
        grid = self._size_grid("rate_study", sec["n_grid"])
        if sec["replicates"] < 3:
            raise ConfigError(f"{self.where('rate_study', 'replicates')}: need at least 3 replicates")
        if sec["reference_n"] is None:
            sec["reference_n"] = 16 * grid[-1]
        if sec["reference_n"] <= grid[-1]:
            raise ConfigError(f"{self.where('rate_study', 'reference_n')}: must exceed max(n_grid) = {grid[-1]}")
        if sec["reference_restarts"] < 1:
            raise ConfigError(f"{self.where('rate_study', 'reference_restarts')}: must be >= 1")
        sec["n_grid"] = grid
        return sec

    def grad_check(self) -> dict:
        sec = dict(self.data["grad_check"])
        if sec["directions"] < 1:
            raise ConfigError(f"{self.where('grad_check', 'directions')}: must be >= 1")
        if not sec["step"] > 0:
            raise ConfigError(f"{self.where('grad_check', 'step')}: must be positive")
        if sec["lam"] < 0:
            raise ConfigError(f"{self.where('grad_check', 'lam')}: must be nonnegative")
        return sec

    def gamma_check(self) -> dict:
        sec = dict(self.data["gamma_check"])
        sec["n_grid"] = self._size_grid("gamma_check", sec["n_grid"])
        if sec["replicates"] < 2:
            raise ConfigError(f"{self.where('gamma_check', 'replicates')}: need at least 2 replicates")
        return sec

    def _size_grid(self, section: str, grid) -> list:
        where = self.where(section, "n_grid")
        if len(grid) < 2:
            raise ConfigError(f"{where}: need at least two sample sizes")
        if any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in grid):
            raise ConfigError(f"{where}: sample sizes must be positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"{where}: sample sizes must be strictly increasing")
        return list(grid)


def _merge(schema: dict, raw, path: tuple, lines: dict, source: str, strict: bool) -> dict:
    def where(p):
        line = lines.get(p)
        loc = f"{source}:{line}" if line else source
        return f"{loc}: {'.'.join(p) or '<top level>'}"

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where(path)}: expected a mapping, got {type(raw).__name__}")
    out = {}
    for key in raw:
        if key not in schema:
            msg = f"{where(path + (str(key),))}: unknown key (allowed: {', '.join(sorted(schema))})"
            if strict:
                raise ConfigError(msg)
            log.warning(msg)
    for key, spec in schema.items():
        p = path + (key,)
        if isinstance(spec, dict):
            out[key] = _merge(spec, raw.get(key), p, lines, source, strict)
        elif key in raw:
            out[key] = _coerce(spec, raw[key], where(p))
        else:
            out[key] = copy.deepcopy(spec.default)
    return out


def parse_config(text: str, source: str = "<config>", strict: bool = True) -> Config:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{loc}: YAML syntax error: {problem}") from exc
    lines, dupes = _key_lines(node) if node is not None else ({}, [])
    if dupes:
        path, line = dupes[0]
        msg = f"{source}:{line}: {'.'.join(path)}: duplicate key"
        if strict:
            raise ConfigError(msg)
        log.warning(msg)
    data = _merge(SCHEMA, raw, (), lines, source, strict)
    if data["seed"] < 0:
        line = lines.get(("seed",))
        raise ConfigError(f"{source}:{line}: seed: must be >= 0")
    return Config(data, lines, source)


def load_config(path, strict: bool = True) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    return parse_config(text, str(path), strict)
