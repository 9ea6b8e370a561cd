"""Run configuration: a flat TOML file validated against ``config_schema.toml``."""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .gas import GasLaw
from .stepper import SolverOptions


class ConfigError(ValueError):
    """Invalid configuration, with the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.key, self.line, self.source = key, line, source
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        prefix = f"{where}: " + (f"key '{key}': " if key else "")
        super().__init__(prefix + message)


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("minaccel").joinpath("config_schema.toml").read_text()
    return tomllib.loads(text)


@dataclass(frozen=True)
class RunConfig:
    kappa: float
    gamma: float
    ic_kind: str
    n_particles: int
    tau: float
    t_end: float
    ic_params: dict = field(default_factory=dict)
    samples_per_step: int = 8
    n_cells: int = 0
    el_tol: float = 1e-7
    max_iters: int = 200
    degeneracy_eps: float = 1e-12
    ghost_cells: bool = True
    seed: int = 0
    ensemble_strategy: str = "tau"
    ensemble_k: int = 4
    output_dir: str = "runs/default"
    bl_pairs: int = 40
    oracle_cells: int = 0
    oracle_cfl: float = 0.45
    oracle_pad: float = 0.5
    base_dir: str = "."

    @property
    def law(self) -> GasLaw:
        return GasLaw(self.kappa, self.gamma)

    @property
    def solver_options(self) -> SolverOptions:
        return SolverOptions(el_tol=self.el_tol, max_iters=self.max_iters,
                             degeneracy_eps=self.degeneracy_eps, ghost_cells=self.ghost_cells,
                             seed=self.seed)

    def as_dict(self) -> dict:
        """Flat key/value echo in schema key names."""
        out = {}
        for key in schema():
            if key.startswith("ic_") and key != "ic_kind":
                name = key[3:]
                if name in self.ic_params:
                    out[key] = self.ic_params[name]
            else:
                out[key] = getattr(self, key)
        return out


_TYPES = {"float": (int, float), "int": (int,), "bool": (bool,), "str": (str,)}


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, ln in enumerate(text.splitlines(), start=1):
        if pat.match(ln):
            return i
    return None


def _check_value(key, value, spec, fail):
    typ = spec["type"]
    ok = isinstance(value, _TYPES[typ]) and not (typ != "bool" and isinstance(value, bool))
    if not ok:
        fail(key, f"expected {typ}, got {type(value).__name__}")
    if typ == "float":
        value = float(value)
        if value != value or value in (float("inf"), float("-inf")):
            fail(key, "must be finite")
    if "min" in spec and value < spec["min"]:
        fail(key, f"must be >= {spec['min']} (got {value})")
    if "max" in spec and value > spec["max"]:
        fail(key, f"must be <= {spec['max']} (got {value})")
    if "exclusive_min" in spec and not value > spec["exclusive_min"]:
        if key == "gamma":
            fail(key, f"gamma must satisfy gamma > 1 (got {value})")
        fail(key, f"must be > {spec['exclusive_min']} (got {value})")
    if "choices" in spec and value not in spec["choices"]:
        fail(key, f"must be one of {spec['choices']} (got {value!r})")
    return value


def parse_config(text: str, source: str | None = None, base_dir: str | Path = ".") -> RunConfig:
    """Validate TOML text and build a ``RunConfig``.

    Raises
    ------
    ConfigError
        On syntax errors, unknown or missing keys, and out-of-range values.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise ConfigError(f"syntax error: {err}", line=int(m.group(1)) if m else None,
                          source=source) from None

    def fail(key, msg):
        raise ConfigError(msg, key=key, line=_line_of(text, key), source=source)

    sch = schema()
    for key, value in raw.items():
        if key not in sch:
            fail(key, "unknown key")
        if isinstance(value, dict):
            fail(key, "nested tables are not allowed; use flat key = value pairs")
    values = {}
    for key, spec in sch.items():
        if key in raw:
            values[key] = _check_value(key, raw[key], spec, fail)
        elif spec.get("required"):
            raise ConfigError("missing required key", key=key, source=source)
        elif "default" in spec:
            values[key] = spec["default"]
    kind = values["ic_kind"]
    ic_params = {}
    for key in raw:
        if key.startswith("ic_") and key != "ic_kind":
            if kind not in sch[key].get("kinds", []):
                fail(key, f"not a parameter of initial condition {kind!r}")
            ic_params[key[3:]] = values[key]
    for key, spec in sch.items():
        if kind in spec.get("required_for", []) and key not in raw:
            raise ConfigError(f"missing required key for ic_kind {kind!r}", key=key, source=source)
    if values["tau"] > values["t_end"]:
        fail("tau", f"tau = {values['tau']} exceeds t_end = {values['t_end']}")
    if kind == "two_blob" and not ic_params.get("weight", 0.5) < 1:
        fail("ic_weight", "must be < 1")
    fields_ = {k: v for k, v in values.items() if not k.startswith("ic_") or k == "ic_kind"}
    return RunConfig(ic_params=ic_params, base_dir=str(base_dir), **fields_)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", source=str(p)) from None
    return parse_config(text, source=str(p), base_dir=p.parent)


def dump_config(cfg: RunConfig) -> str:
    """Flat TOML text that parses back to ``cfg``."""
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        elif isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
