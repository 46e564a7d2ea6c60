"""Map catalog and experiment configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, orbits, sphere, thermo, tiles
from .potentials import Potential, iterate_potential, parse_potential
from .sphere import INF, RationalMap, chordal_dist

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def parse_number(s) -> complex:
    """Decimal string (``"1.5"``, ``"2-3i"``, ``"inf"``) to a complex number."""
    if isinstance(s, (int, float, complex)):
        return complex(s)
    t = str(s).strip().lower().replace(" ", "")
    if t in ("inf", "infinity", "oo"):
        return INF
    return complex(t.replace("i", "j"))


def load_catalog(path: str | Path | None = None) -> dict:
    """``{name: entry}`` from the map catalog JSON (the packaged one by default)."""
    if path is None:
        text = resources.files("primeorbit").joinpath("data/maps.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    return {e["name"]: e for e in data["maps"]}


def map_from_entry(entry: dict) -> RationalMap:
    f = RationalMap.from_coefficients(
        [parse_number(c) for c in entry["numerator"]],
        [parse_number(c) for c in entry["denominator"]],
        name=entry.get("name", ""),
        declared_postcritical=tuple(parse_number(p) for p in entry.get("postcritical", ())),
    )
    post = f.check_supported()
    declared = f.declared_postcritical
    if declared:
        ok = len(declared) == len(post) and all(min(chordal_dist(p, q) for q in post) < sphere.TAU_ORBIT for p in declared)
        if not ok:
            raise ConfigError(f"declared postcritical set of {f.name!r} does not match the computed one")
    return f


DEFAULT_TOLERANCES = {
    "tau_root": sphere.TAU_ROOT,
    "tau_cluster": sphere.TAU_CLUSTER,
    "tau_gcd": sphere.TAU_GCD,
    "tau_orbit": sphere.TAU_ORBIT,
    "tau_branch": tiles.TAU_BRANCH,
    "tau_curve": tiles.TAU_CURVE,
    "tau_dedupe": orbits.TAU_DEDUPE,
    "tau_pressure": thermo.TAU_PRESSURE,
}


@dataclass
class ExperimentConfig:
    map: str = "lattes4"
    numerator: list | None = None
    denominator: list | None = None
    curve: dict | None = None
    n_iterate: int = 1
    potential: str = "sample:0.2"
    m_pressure: int = 8
    m_grid: int = 6
    K_delta: int = 24
    N_max: int = 8
    N_sni: int = 8
    M_sni: int = 2
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    out: str = "out"
    verify: bool = False
    catalog_path: str | None = None

    def validate(self):
        for name in ("n_iterate", "m_pressure", "m_grid", "K_delta", "N_max", "N_sni", "M_sni"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerances {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if not float(v) > 0:
                raise ConfigError(f"tolerance {k} must be > 0")
        if (self.numerator is None) != (self.denominator is None):
            raise ConfigError("give both numerator and denominator coefficients")
        name, _, _ = self.potential.partition(":")
        if name not in ("constant", "sample", "coboundary"):
            raise ConfigError(f"unknown potential {self.potential!r}")
        return self

    def record(self) -> dict:
        """Fields that determine results (output location and mode excluded)."""
        d = dataclasses.asdict(self)
        for k in ("out", "verify", "catalog_path"):
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.record(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def header(self) -> str:
        return f"primeorbit {__version__} config {self.hash}"

    def apply_tolerances(self):
        """Install the runtime-read tolerances."""
        t = {**DEFAULT_TOLERANCES, **self.tolerances}
        orbits.TAU_DEDUPE = float(t["tau_dedupe"])
        thermo.TAU_PRESSURE = float(t["tau_pressure"])

    # -- builders -----------------------------------------------------------

    def rational_map(self) -> RationalMap:
        if self.numerator is not None:
            entry = {"name": "custom", "numerator": self.numerator, "denominator": self.denominator}
            return map_from_entry(entry)
        cat = load_catalog(self.catalog_path)
        if self.map not in cat:
            raise ConfigError(f"unknown map {self.map!r}; known: {sorted(cat)}")
        return map_from_entry(cat[self.map])

    def curve_spec(self):
        if self.curve is not None:
            return self.curve
        if self.numerator is None:
            return load_catalog(self.catalog_path)[self.map].get("curve")
        return None

    def base_potential(self, f: RationalMap) -> Potential:
        return parse_potential(self.potential, f)

    def catalog_potential(self, f: RationalMap) -> Potential:
        """``S_n phi`` for the iterate the catalog works with."""
        return iterate_potential(self.base_potential(f), f, self.n_iterate)


def from_dict(d: dict) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(d) - fields
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    d = dict(d)
    if "tolerances" in d:
        d["tolerances"] = {**DEFAULT_TOLERANCES, **d["tolerances"]}
    return ExperimentConfig(**d).validate()


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """TOML or JSON file plus overrides; overrides win."""
    data = {}
    if path is not None:
        p = Path(path)
        raw = p.read_bytes()
        if p.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_dict(data)


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        if sphere.is_inf(z):
            return "inf"
        return {"re": z.real, "im": z.imag}
    return x
