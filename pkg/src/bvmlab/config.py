"""Flat key=value experiment configuration with section prefixes.

Unknown keys are rejected by name; defaults are applied at parse time and
echoed into every output file's metadata block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigurationError

__all__ = ["ExperimentConfig", "parse_config", "resolved_items"]

DEFAULT_EPSILONS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)

EXPERIMENTS = ("coverage", "rates", "tightness", "concentration", "conjugacy")
OPERATOR_KINDS = ("psido", "bvp", "heat")
TRUTH_KINDS = ("bump", "sobolev", "modes")
FUNCTIONAL_KINDS = ("smoothed_image", "mode", "heat_mode", "sobolev")


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_pair(text: str) -> tuple[float, float]:
    parts = _parse_float_list(text)
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return parts  # type: ignore[return-value]


def _parse_str(text: str) -> str:
    return text


# key -> (attribute, parser)
_KEY_TABLE = {
    "experiment": ("experiment", _parse_str),
    "n_modes": ("n_modes", _parse_int),
    "oversample": ("oversample", _parse_int),
    "master_seed": ("master_seed", _parse_int),
    "output_path": ("output_path", _parse_str),
    "epsilons": ("epsilons", _parse_float_list),
    "n_replicates": ("n_replicates", _parse_int),
    "level": ("level", _parse_float),
    "ball_beta": ("ball_beta", _parse_float),
    "ball_draws": ("ball_draws", _parse_int),
    "operator.kind": ("operator_kind", _parse_str),
    "operator.t": ("operator_t", _parse_float),
    "operator.time": ("operator_time", _parse_float),
    "operator.coefficient": ("coefficient", _parse_str),
    "operator.coefficient_base": ("coefficient_base", _parse_float),
    "operator.coefficient_amplitude": ("coefficient_amplitude", _parse_float),
    "operator.cond_limit": ("cond_limit", _parse_float),
    "prior.r": ("prior_r", _parse_float),
    "prior.amplitude": ("prior_amplitude", _parse_float),
    "truth.kind": ("truth_kind", _parse_str),
    "truth.support": ("truth_support", _parse_pair),
    "truth.plateau": ("truth_plateau", _parse_pair),
    "truth.scale": ("truth_scale", _parse_float),
    "truth.alpha": ("truth_alpha", _parse_float),
    "truth.seed": ("truth_seed", _parse_int),
    "truth.modes": ("truth_modes", _parse_int_list),
    "truth.values": ("truth_values", _parse_float_list),
    "functional.kind": ("functional_kind", _parse_str),
    "functional.support": ("functional_support", _parse_pair),
    "functional.plateau": ("functional_plateau", _parse_pair),
    "functional.sine": ("functional_sine", _parse_int),
    "functional.band": ("functional_band", _parse_int),
    "functional.mode": ("functional_mode", _parse_int),
    "functional.alpha": ("functional_alpha", _parse_float),
    "functional.seed": ("functional_seed", _parse_int),
    "tightness.beta": ("tightness_beta", _parse_float),
    "tightness.max_modes": ("tightness_max_modes", _parse_int),
    "concentration.deltas": ("concentration_deltas", _parse_float_list),
    "concentration.ambient": ("concentration_ambient", _parse_float),
    "concentration.mc_samples": ("concentration_mc_samples", _parse_int),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEY_TABLE.items()}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description (defaults applied)."""

    experiment: str = "coverage"
    n_modes: int = 256
    oversample: int = 8
    master_seed: int = 0
    output_path: str = "results.csv"
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    n_replicates: int = 100
    level: float = 0.95
    ball_beta: Optional[float] = None
    ball_draws: int = 1000
    operator_kind: str = "bvp"
    operator_t: float = 2.0
    operator_time: float = 0.1
    coefficient: str = "constant"
    coefficient_base: float = 1.0
    coefficient_amplitude: float = 0.5
    cond_limit: float = 1e12
    prior_r: float = 1.0
    prior_amplitude: float = 1.0
    truth_kind: str = "bump"
    truth_support: tuple[float, float] = (0.2, 0.7)
    truth_plateau: tuple[float, float] = (0.35, 0.55)
    truth_scale: float = 1.0
    truth_alpha: float = 2.0
    truth_seed: int = 3
    truth_modes: tuple[int, ...] = (1,)
    truth_values: tuple[float, ...] = (1.0,)
    functional_kind: str = "smoothed_image"
    functional_support: tuple[float, float] = (0.02, 0.98)
    functional_plateau: tuple[float, float] = (0.10, 0.90)
    functional_sine: int = 2
    functional_band: int = 64
    functional_mode: int = 1
    functional_alpha: float = 5.0
    functional_seed: int = 12
    tightness_beta: float = 3.5
    tightness_max_modes: int = 400
    concentration_deltas: tuple[float, ...] = (0.5, 0.35, 0.25, 0.18)
    concentration_ambient: float = -2.0
    concentration_mc_samples: int = 100_000
    explicit_keys: frozenset = field(default_factory=frozenset, repr=False)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"key 'experiment': unknown experiment {self.experiment!r}; "
                f"choose from {', '.join(EXPERIMENTS)}"
            )
        if self.operator_kind not in OPERATOR_KINDS:
            raise ConfigurationError(
                f"key 'operator.kind': unknown operator {self.operator_kind!r}"
            )
        if self.truth_kind not in TRUTH_KINDS:
            raise ConfigurationError(f"key 'truth.kind': unknown truth {self.truth_kind!r}")
        if self.functional_kind not in FUNCTIONAL_KINDS:
            raise ConfigurationError(
                f"key 'functional.kind': unknown functional {self.functional_kind!r}"
            )
        if self.n_modes < 1:
            raise ConfigurationError("key 'n_modes': must be a positive integer")
        if self.operator_kind == "psido" and self.n_modes % 2 == 0:
            raise ConfigurationError(
                "key 'n_modes': the torus basis needs an odd mode count"
            )
        if self.oversample < 4:
            raise ConfigurationError("key 'oversample': must be at least 4")
        if self.prior_r <= 0.5:
            raise ConfigurationError(
                f"key 'prior.r': smoothness {self.prior_r} violates the requirement r > d/2 = 0.5"
            )
        if self.prior_amplitude <= 0:
            raise ConfigurationError("key 'prior.amplitude': must be positive")
        if not 0.0 < self.level < 1.0:
            raise ConfigurationError("key 'level': must lie strictly between 0 and 1")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigurationError("key 'epsilons': need a nonempty list of positive values")
        if self.n_replicates < 1:
            raise ConfigurationError("key 'n_replicates': must be a positive integer")
        if self.ball_beta is not None and self.ball_beta < 0:
            raise ConfigurationError("key 'ball_beta': must be nonnegative")
        if self.operator_kind == "heat" and self.operator_time < 0:
            raise ConfigurationError("key 'operator.time': must be nonnegative")
        if self.operator_kind == "bvp" and self.coefficient not in ("constant", "sine"):
            raise ConfigurationError(
                f"key 'operator.coefficient': unknown coefficient {self.coefficient!r}"
            )
        if self.coefficient == "sine" and abs(self.coefficient_amplitude) >= self.coefficient_base:
            raise ConfigurationError(
                "key 'operator.coefficient_amplitude': sine swing must stay below the base "
                "(uniform ellipticity)"
            )
        if self.truth_kind == "modes" and len(self.truth_modes) != len(self.truth_values):
            raise ConfigurationError(
                "keys 'truth.modes'/'truth.values': lists must have equal length"
            )
        if self.experiment == "rates" and self.operator_kind == "heat":
            raise ConfigurationError(
                "key 'experiment': polynomial rate fits are not defined for the heat semigroup"
            )
        if self.experiment == "concentration" and self.concentration_mc_samples < 1000:
            raise ConfigurationError(
                "key 'concentration.mc_samples': need at least 1000 samples"
            )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a key=value configuration document."""
    config = ExperimentConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEY_TABLE:
            raise ConfigurationError(f"line {lineno}: unknown configuration key '{key}'")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate configuration key '{key}'")
        seen.add(key)
        attr, parser = _KEY_TABLE[key]
        try:
            setattr(config, attr, parser(value))
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(
                f"line {lineno}: key '{key}': cannot parse {value!r} ({exc})"
            ) from exc
    config.explicit_keys = frozenset(seen)
    config.validate()
    return config


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_items(config: ExperimentConfig) -> list[tuple[str, str]]:
    """Every configuration key with its resolved (post-default) value."""
    items = []
    for key, (attr, _) in _KEY_TABLE.items():
        value = getattr(config, attr)
        if value is None:
            continue
        items.append((key, _format_value(value)))
    return items
