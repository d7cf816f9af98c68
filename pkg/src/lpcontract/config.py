"""Experiment configuration: one JSON document per run."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import InvalidInputError
from .forms import FAMILIES
from .semigroup import SCHEMES, TOL_REPORT, StepperConfig
from .spaces import Grid

AUTO_INTERVAL = "auto-interval"
OUTSIDE_STEP = 0.05  # relative offset of the two "just outside" exponents


@dataclass(frozen=True)
class GridSpec:
    d: int = 1
    n: int = 33
    lengths: tuple = ()

    def build(self) -> Grid:
        lengths = tuple(self.lengths) if self.lengths else (1.0,) * self.d
        if len(lengths) != self.d:
            raise InvalidInputError(f"grid has d={self.d} but {len(lengths)} lengths")
        return Grid((self.n,) * self.d, lengths)


@dataclass(frozen=True)
class CoefficientSpec:
    family: str = "laplacian"
    m: int = 1
    params: dict = field(default_factory=dict)
    path: str | None = None


@dataclass(frozen=True)
class SampleSpec:
    n_samples: int = 20           # band-limited probes per exponent in certify
    budget: int = 200             # objective evaluations per exponent in search
    projection_samples: int = 1000
    convexity_trials: int = 10000
    young_draws: int = 1000000


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = GridSpec()
    coefficients: CoefficientSpec = CoefficientSpec()
    p: object = AUTO_INTERVAL      # list of exponents or "auto-interval"
    stepper: StepperConfig = StepperConfig(dt=1e-3, horizon=0.05)
    samples: SampleSpec = SampleSpec()
    seed: int = 0
    output_dir: str = "runs"
    kappa: float = 50.0
    tol_report: float = TOL_REPORT
    field: str | None = None       # input field for project / evolve
    tol: float = 1e-12             # projection tolerance
    ratio: float | None = None     # interval subcommand without coefficients

    def snapshot(self) -> dict:
        doc = asdict(self)
        doc["stepper"] = {"scheme": self.stepper.scheme, "dt": self.stepper.dt,
                          "horizon": self.stepper.horizon}
        return doc

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def with_output(self, out: str) -> "ExperimentConfig":
        return replace(self, output_dir=str(out))


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON snapshot, output directory excluded."""
    doc = cfg.snapshot()
    doc.pop("output_dir")
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _section(cls, doc, name):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise InvalidInputError(f"config section {name!r} must be an object")
    known = set(cls.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise InvalidInputError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict, base: Path | None = None) -> ExperimentConfig:
    """Validate a config document; relative file paths resolve against ``base``."""
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    base = base or Path.cwd()

    def resolve(path):
        if path is None:
            return None
        full = (base / path) if not Path(path).is_absolute() else Path(path)
        if not full.exists():
            raise InvalidInputError(f"referenced file does not exist: {full}")
        return str(full)

    grid = _section(GridSpec, doc.get("grid"), "grid")
    grid = replace(grid, lengths=tuple(float(x) for x in grid.lengths))
    coeff = _section(CoefficientSpec, doc.get("coefficients"), "coefficients")
    if coeff.family not in FAMILIES:
        raise InvalidInputError(f"unknown coefficient family {coeff.family!r}")
    if coeff.family == "file":
        path = coeff.path or coeff.params.get("path")
        if path is None:
            raise InvalidInputError("family 'file' needs a path")
        coeff = replace(coeff, path=resolve(path), params={})
    stepper_doc = doc.get("stepper") or {}
    if stepper_doc.get("scheme", "implicit-euler") not in SCHEMES:
        raise InvalidInputError(f"unknown scheme {stepper_doc.get('scheme')!r}")
    stepper = _section(StepperConfig, {"dt": 1e-3, "horizon": 0.05, **stepper_doc}, "stepper")
    samples = _section(SampleSpec, doc.get("samples"), "samples")
    p = doc.get("p", AUTO_INTERVAL)
    if p != AUTO_INTERVAL:
        if isinstance(p, (int, float)):
            p = [p]
        p = tuple(float(x) for x in p)
        if any(not x > 1 for x in p):
            raise InvalidInputError(f"exponents must exceed 1, got {p}")
    rest = {k: doc[k] for k in ("seed", "output_dir", "kappa", "tol_report", "tol", "ratio") if k in doc}
    return ExperimentConfig(grid=grid, coefficients=coeff, p=p, stepper=stepper, samples=samples,
                            field=resolve(doc.get("field")), **rest)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc, path.parent)
