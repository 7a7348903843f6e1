"""Scenario configuration: a TOML file whose keys mirror :class:`ScenarioConfig`.

Example::

    scenario_id = "figure1"
    seed = 1001
    coef_seed = 101
    sine_interval = [0.8, 1.0]
    beta1 = 0.5
    outcome_kind = "Linear"
    caliper_multipliers = [20, 1, 0.2, 0.02, 0.002, 0.0002]
    model_specs = ["MA", "MAX45", "MFull"]

    [complex_terms]
    quadratic = [[1, 0.5], [2, 0.5]]
    interaction = [[1, 2, 0.7], [3, 4, 0.7]]

    [fixed_coefs]          # optional; bypasses coefficient selection
    alpha1 = [...]
    beta2 = [...]
"""
from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..datagen import DEFAULT_INTERACTIONS, DEFAULT_QUAD, OutcomeKind
from ..errors import ConfigInvalid
from ..estimation import ModelSpec, NAMED_SPECS

SEED_ENV = "PSMLAB_SEED"
DEFAULT_MULTIPLIERS = (20.0, 1.0, 0.2, 0.02, 0.002, 0.0002)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str = "scenario"
    seed: int = 20240101
    coef_seed: int | None = None
    replicates: int = 1000
    n: int = 1500
    p: int = 5
    alpha0: float = -0.9
    k_alpha: float = 1.0
    k_beta: float = 1.2
    sine_interval: tuple[float, float] = (0.8, 1.0)
    fixed_coefs: dict | None = None
    beta0: float = 0.0
    beta1: float = 0.5
    noise_sd: float = 1.0
    outcome_kind: str = "Linear"
    complex_terms: dict = field(
        default_factory=lambda: {
            "quadratic": [list(t) for t in DEFAULT_QUAD],
            "interaction": [[j, k, c] for (j, k), c in DEFAULT_INTERACTIONS],
        }
    )
    caliper_multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    model_specs: tuple = ("MA", "MAX45", "MFull")
    include_unmatched_arm: bool = False
    sandwich: str = "HC1"
    workers: int = 1
    max_treatment_retries: int = 20

    def __post_init__(self):
        validate(self)

    @property
    def specs(self) -> list[ModelSpec]:
        out = []
        for item in self.model_specs:
            if isinstance(item, str):
                out.append(ModelSpec.named(item))
            else:
                out.append(ModelSpec(item["label"], tuple(item.get("covariates", ()))))
        return out

    @property
    def effective_coef_seed(self) -> int:
        return self.seed if self.coef_seed is None else self.coef_seed

    @property
    def quad_coefs(self):
        if OutcomeKind(self.outcome_kind) is OutcomeKind.LINEAR:
            return ()
        return tuple((int(j), float(c)) for j, c in self.complex_terms.get("quadratic", ()))

    @property
    def interaction_coefs(self):
        if OutcomeKind(self.outcome_kind) is OutcomeKind.LINEAR:
            return ()
        return tuple(
            ((int(j), int(k)), float(c)) for j, k, c in self.complex_terms.get("interaction", ())
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _fail(msg):
    raise ConfigInvalid(msg)


def validate(cfg: ScenarioConfig):
    if not isinstance(cfg.scenario_id, str) or not cfg.scenario_id:
        _fail("scenario_id must be a nonempty string")
    for name in ("seed", "replicates", "n", "p", "workers", "max_treatment_retries"):
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(f"{name} must be an integer, got {value!r}")
    if cfg.coef_seed is not None and (isinstance(cfg.coef_seed, bool) or not isinstance(cfg.coef_seed, int)):
        _fail(f"coef_seed must be an integer, got {cfg.coef_seed!r}")
    for name in ("seed", "coef_seed"):
        value = getattr(cfg, name)
        if value is not None and not 0 <= value < 2**64:
            _fail(f"{name} must fit in 64 unsigned bits")
    if cfg.replicates < 1:
        _fail("replicates must be >= 1")
    if cfg.workers < 1:
        _fail("workers must be >= 1")
    if cfg.p < 3:
        _fail("p must be >= 3 (balance is reported for X3)")
    if cfg.n < 2 * (cfg.p + 2):
        _fail(f"n={cfg.n} is too small for p={cfg.p}")
    for name in ("alpha0", "k_alpha", "k_beta", "beta0", "beta1", "noise_sd"):
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(f"{name} must be a number, got {value!r}")
    if cfg.k_alpha <= 0 or cfg.k_beta <= 0 or cfg.noise_sd <= 0:
        _fail("k_alpha, k_beta and noise_sd must be positive")
    try:
        lo, hi = (float(v) for v in cfg.sine_interval)
    except (TypeError, ValueError):
        _fail(f"sine_interval must be a pair [lo, hi], got {cfg.sine_interval!r}")
    if not 0 <= lo < hi <= 1:
        _fail(f"sine_interval must satisfy 0 <= lo < hi <= 1, got {cfg.sine_interval!r}")
    if cfg.fixed_coefs is not None:
        if set(cfg.fixed_coefs) != {"alpha1", "beta2"}:
            _fail("fixed_coefs needs exactly the keys alpha1 and beta2")
        for key in ("alpha1", "beta2"):
            if len(cfg.fixed_coefs[key]) != cfg.p:
                _fail(f"fixed_coefs.{key} must have p={cfg.p} entries")
    try:
        kind = OutcomeKind(cfg.outcome_kind)
    except ValueError:
        _fail(f"outcome_kind must be 'Linear' or 'Complex', got {cfg.outcome_kind!r}")
    if kind is OutcomeKind.COMPLEX:
        unknown = set(cfg.complex_terms) - {"quadratic", "interaction"}
        if unknown:
            _fail(f"unknown complex_terms keys: {sorted(unknown)}")
        try:
            terms = [j for j, _ in cfg.complex_terms.get("quadratic", ())]
            terms += [i for j, k, _ in cfg.complex_terms.get("interaction", ()) for i in (j, k)]
        except (TypeError, ValueError):
            _fail("complex_terms entries must be [j, coef] or [j, k, coef]")
        if any(not 1 <= int(j) <= cfg.p for j in terms):
            _fail(f"complex_terms covariate numbers must lie in 1..{cfg.p}")
    cal = [float(c) for c in cfg.caliper_multipliers]
    if not cal:
        _fail("caliper_multipliers must not be empty")
    if any(c <= 0 for c in cal) or any(b >= a for a, b in zip(cal, cal[1:])):
        _fail("caliper_multipliers must be positive and strictly descending")
    if not cfg.model_specs:
        _fail("model_specs must not be empty")
    try:
        specs = cfg.specs
    except (ValueError, KeyError, TypeError) as exc:
        _fail(f"invalid model_specs: {exc}")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        _fail("model spec labels must be unique")
    for s in specs:
        if s.covariates and max(s.covariates) > cfg.p:
            _fail(f"model spec {s.label} refers to covariates beyond p={cfg.p}")
        if s.label not in NAMED_SPECS and s.label in ("", "unmatched"):
            _fail(f"reserved model spec label {s.label!r}")
    if cfg.sandwich not in ("HC0", "HC1"):
        _fail(f"sandwich must be HC0 or HC1, got {cfg.sandwich!r}")


_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def config_from_mapping(data: dict, default_id: str = "scenario") -> ScenarioConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        _fail(f"unknown config keys: {', '.join(sorted(unknown))}")
    data = dict(data)
    data.setdefault("scenario_id", default_id)
    for key in ("sine_interval", "caliper_multipliers", "model_specs"):
        if key in data:
            if not isinstance(data[key], list):
                _fail(f"{key} must be a list")
            data[key] = tuple(data[key])
    for key in ("caliper_multipliers", "sine_interval"):
        if key in data:
            try:
                data[key] = tuple(float(v) for v in data[key])
            except (TypeError, ValueError):
                _fail(f"{key} must contain numbers")
    for i, item in enumerate(data.get("model_specs", ())):
        if isinstance(item, dict):
            extra = set(item) - {"label", "covariates"}
            if extra or "label" not in item:
                _fail(f"model_specs[{i}] must have 'label' and optional 'covariates'")
        elif not isinstance(item, str):
            _fail(f"model_specs[{i}] must be a label or a table")
    for key in ("alpha0", "k_alpha", "k_beta", "beta0", "beta1", "noise_sd"):
        if isinstance(data.get(key), int) and not isinstance(data.get(key), bool):
            data[key] = float(data[key])
    return ScenarioConfig(**data)


def load_config(path, seed_override: int | None = None) -> ScenarioConfig:
    """Read a scenario file; ``PSMLAB_SEED`` then ``seed_override`` replace the seed."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    cfg = config_from_mapping(data, default_id=path.stem)
    return apply_seed_overrides(cfg, seed_override)


def apply_seed_overrides(cfg: ScenarioConfig, seed_override: int | None = None) -> ScenarioConfig:
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            cfg = cfg.replace(seed=int(env))
        except ValueError:
            _fail(f"{SEED_ENV} must be an integer, got {env!r}")
    if seed_override is not None:
        cfg = cfg.replace(seed=int(seed_override))
    return cfg


SHIPPED = {
    "figure1": "figure1_sine_gt_0.8.toml",
    "figure2": "figure2_sine_le_0.2.toml",
    "figure3": "figure3_complex.toml",
    "figure1_full": "figure1_sine_gt_0.8_full.toml",
    "figure2_full": "figure2_sine_le_0.2_full.toml",
    "figure3_full": "figure3_complex_full.toml",
}


def shipped_scenario_path(name: str) -> Path:
    try:
        fname = SHIPPED[name]
    except KeyError:
        raise ConfigInvalid(f"no shipped scenario {name!r}; choose from {sorted(SHIPPED)}") from None
    return Path(str(resources.files("psmlab.scenarios").joinpath(fname)))


def load_scenario(name: str, seed_override: int | None = None) -> ScenarioConfig:
    """Load one of the scenarios bundled with the package."""
    return load_config(shipped_scenario_path(name), seed_override)
