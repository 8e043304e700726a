"""Run configuration: flat key=value files, environment and flag overrides.

Precedence, highest first: command-line flags, environment variables
(prefix BOTCLF_, e.g. BOTCLF_SEED), config file, built-in defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .dataio import CsvSchema, FeatureSpec, LabelMap, DEFAULT_LABEL_MAP
from .errors import ConfigError

ENV_PREFIX = "BOTCLF_"


@dataclass
class RunConfig:
    data: str | None = None
    weights: str = "botclf.weights"
    report: str | None = None
    features: str | None = None      # path to a features config file
    seed: int = 0
    epochs: int = 4
    batch_size: int = 10
    learning_rate: float = 1e-3
    validation_fraction: float = 0.10
    stratified: bool = False
    precision: str = "double"
    policy: str = "skip"             # malformed-row policy: skip | fail
    gru_units: int = 10
    filters: int = 128
    probes: int = 100
    tolerance: float = 1e-5
    verbose: bool = False


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, kind: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in _BOOL_TRUE:
                return True
            if lowered in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for option {name}") from None


def read_kv_file(path) -> dict:
    """Parse `key = value` lines; # starts a comment, blank lines ignored."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected key = value, got {stripped!r}")
                key, _, value = stripped.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def resolve(cli_values: dict, config_path: str | None = None,
            environ: dict | None = None) -> RunConfig:
    """Merge flag values, env vars, and a config file into a RunConfig.

    `cli_values` holds only options the user actually passed (unset flags
    are absent or None).
    """
    environ = os.environ if environ is None else environ
    file_values = read_kv_file(config_path) if config_path else {}
    field_map = {f.name: f for f in fields(RunConfig)}
    # keys in files may be spelled with dashes
    normalized_file = {}
    for key, value in file_values.items():
        name = key.replace("-", "_")
        if name not in field_map:
            raise ConfigError(f"unknown config key {key!r}")
        normalized_file[name] = value

    cfg = RunConfig()
    for name, f in field_map.items():
        type_name = f.type.replace(" | None", "")
        base_kind = type_name if type_name in ("bool", "int", "float") else "str"
        if name in cli_values and cli_values[name] is not None:
            setattr(cfg, name, cli_values[name])
        elif (env_val := environ.get(ENV_PREFIX + name.upper())) is not None:
            setattr(cfg, name, _coerce(name, base_kind, env_val))
        elif name in normalized_file:
            setattr(cfg, name, _coerce(name, base_kind, normalized_file[name]))
    if cfg.precision not in ("double", "single"):
        raise ConfigError(f"precision must be 'double' or 'single', got {cfg.precision!r}")
    if cfg.policy not in ("skip", "fail"):
        raise ConfigError(f"policy must be 'skip' or 'fail', got {cfg.policy!r}")
    return cfg


def load_features_config(path) -> tuple[FeatureSpec, CsvSchema, LabelMap]:
    """Features config: column list, label columns, class map.

        features = pkts, bytes, ...
        category_column = category
        subcategory_column = subcategory
        class.0 = Normal, Normal, Normal
        class.1 = DDoS, TCP, DDoS-TCP       # category, subcategory, display name
    """
    raw = read_kv_file(path)
    names = None
    category_col = "category"
    subcategory_col = "subcategory"
    class_entries = {}
    for key, value in raw.items():
        if key == "features":
            names = tuple(tok.strip() for tok in value.split(",") if tok.strip())
        elif key == "category_column":
            category_col = value
        elif key == "subcategory_column":
            subcategory_col = value
        elif key.startswith("class."):
            try:
                idx = int(key.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"{path}: bad class key {key!r}") from None
            parts = [tok.strip() for tok in value.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"{path}: class entries need "
                                  f"'category, subcategory, name', got {value!r}")
            class_entries[idx] = (parts[0], parts[1], parts[2])
        else:
            raise ConfigError(f"{path}: unknown features-config key {key!r}")
    spec = FeatureSpec(names=names) if names else FeatureSpec()
    schema = CsvSchema(category_column=category_col, subcategory_column=subcategory_col)
    if class_entries:
        if sorted(class_entries) != list(range(len(class_entries))):
            raise ConfigError(f"{path}: class indices must be 0..K-1 without gaps")
        pairs = tuple((class_entries[i][0], class_entries[i][1])
                      for i in range(len(class_entries)))
        display = tuple(class_entries[i][2] for i in range(len(class_entries)))
        label_map = LabelMap(pairs=pairs, names=display)
    else:
        label_map = DEFAULT_LABEL_MAP
    return spec, schema, label_map
