"""Campaign configuration: the versioned key = value file format and overrides.

Files start with the header line ``qlandscape-config v1`` followed by
``key = value`` lines; repeating a list-valued key appends.  Blank lines and
lines starting with ``#`` are ignored.  Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

from .optimizer import ClimbSettings
from .qsys import DipoleSpec

CONFIG_HEADER = "qlandscape-config v1"

KINDS = ("random_stats", "trap_test", "scaling_sweep", "structure_study")
OMEGA_RULES = ("omega_f", "omega_20", "omega_n_half")


class ConfigError(ValueError):
    """Malformed or inconsistent campaign configuration."""


@dataclass(frozen=True)
class CampaignConfig:
    kind: str = "trap_test"
    h0_kind: str = "rotor"
    gamma: float = 0.25
    omega: float = 5.0
    dissoc: float = 1200.0
    dipoles: tuple = (("dropoff", 1.0),)
    target_i: int = 1
    target_f: int = 5
    one_to_n: bool = False
    strengths: tuple = (1.0,)
    k_components: int = 20
    envelope_beta: float = 0.05
    omega_rule: str = "omega_f"
    n_values: tuple = (5,)
    runs_per_cell: int = 20
    master_seed: int = 0
    horizon: float = 28.0
    n_t: int = 0  # 0 = automatic (2048; 4096 for the receding target at N >= 30)
    settings: ClimbSettings = dataclass_field(default_factory=ClimbSettings)
    spectra: bool = False
    spectrum_stride: int = 4
    bottom_p: float = 1e-14
    write_traces: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown campaign kind {self.kind!r}")
        if self.h0_kind not in ("rotor", "oscillator"):
            raise ConfigError(f"unknown h0 kind {self.h0_kind!r}")
        if self.omega_rule not in OMEGA_RULES:
            raise ConfigError(f"unknown omega rule {self.omega_rule!r}")
        if not self.n_values or not self.dipoles or not self.strengths:
            raise ConfigError("n, dipole, and strength lists must be non-empty")
        if self.runs_per_cell < 1:
            raise ConfigError("runs_per_cell must be positive")
        if not self.one_to_n:
            for n in self.n_values:
                if not (1 <= self.target_i <= n and 1 <= self.target_f <= n):
                    raise ConfigError(
                        f"target ({self.target_i},{self.target_f}) outside 1..{n}"
                    )
        if self.spectrum_stride < 1:
            raise ConfigError("spectrum_stride must be >= 1")


def parse_dipole(text: str):
    """Dipole cell syntax: 'alpha' or 'D:<rate>'."""
    text = text.strip()
    if text == "alpha":
        return ("alpha", None)
    if text.startswith("D:"):
        try:
            rate = float(text[2:])
        except ValueError as exc:
            raise ConfigError(f"bad drop-off rate in {text!r}") from exc
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"drop-off rate must lie in [0, 1], got {rate}")
        return ("dropoff", rate)
    raise ConfigError(f"bad dipole spec {text!r} (expected 'alpha' or 'D:<rate>')")


def dipole_label(dip) -> str:
    kind, rate = dip
    return "alpha" if kind == "alpha" else f"D={rate:g}"


def make_dipole_spec(dip, seed: int) -> DipoleSpec:
    kind, rate = dip
    return DipoleSpec(kind, rate, seed)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_target(text: str):
    """Returns (one_to_n, i, f); 'i,f' for a fixed pair, '1toN' for receding."""
    norm = text.strip().lower().replace(" ", "")
    if norm in ("1ton", "1,n", "one_to_n"):
        return True, 1, 0
    parts = norm.split(",")
    if len(parts) != 2:
        raise ConfigError(f"bad target {text!r} (expected 'i,f' or '1toN')")
    try:
        i, f = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"bad target {text!r}") from exc
    if i == f or i < 1 or f < 1:
        raise ConfigError(f"bad target pair ({i}, {f})")
    return False, i, f


# key -> (is_list, parser); parsers run per raw string value
_SCALARS = {
    "kind": str,
    "h0": str,
    "gamma": float,
    "omega": float,
    "dissoc": float,
    "target": str,
    "k_components": int,
    "beta": float,
    "omega_rule": str,
    "runs_per_cell": int,
    "master_seed": int,
    "horizon": float,
    "n_t": int,
    "spectra": _parse_bool,
    "spectrum_stride": int,
    "bottom_p": float,
    "traces": _parse_bool,
    "jobs": int,
    # climb settings
    "target_p": float,
    "count_from_p": float,
    "discard_above_p": float,
    "initial_step": float,
    "step_tol": float,
    "max_iterations": int,
    "stall_window": int,
    "stall_delta": float,
    "max_refinements": int,
    "step_max": float,
    "milestones": _parse_bool,
}
_LISTS = {"dipole": str, "n": int, "strength": float}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Header check plus raw key/value collection; list keys accumulate."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != CONFIG_HEADER:
        raise ConfigError(f"{source}: first line must be {CONFIG_HEADER!r}")
    raw: dict = {}
    for ln, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key in _LISTS:
            raw.setdefault(key, []).append(value)
        elif key in _SCALARS:
            if key in raw:
                raise ConfigError(f"{source}:{ln}: duplicate key {key!r}")
            raw[key] = value
        else:
            raise ConfigError(f"{source}:{ln}: unknown key {key!r}")
    return raw


def apply_overrides(raw: dict, overrides) -> dict:
    """Merge --set key=value pairs; list keys take comma-separated values."""
    out = dict(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"bad override {item!r} (expected key=value)")
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if key in _LISTS:
            out[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in _SCALARS:
            out[key] = value
        else:
            raise ConfigError(f"unknown key {key!r} in override")
    return out


def build_campaign_config(raw: dict, kind: str | None = None) -> CampaignConfig:
    """Typed CampaignConfig from raw strings; ``kind`` (from the subcommand)
    must agree with an explicit kind key when both are present."""
    try:
        parsed = {}
        for key, value in raw.items():
            if key in _LISTS:
                parsed[key] = [_LISTS[key](v) for v in value]
            else:
                parsed[key] = _SCALARS[key](value)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc

    file_kind = parsed.pop("kind", None)
    if kind and file_kind and file_kind != kind:
        raise ConfigError(f"config kind {file_kind!r} conflicts with subcommand {kind!r}")
    kind = kind or file_kind
    if kind is None:
        raise ConfigError("campaign kind is not set")

    settings_kwargs = {}
    for cfg_key, field in [
        ("target_p", "target_p"),
        ("count_from_p", "count_from_p"),
        ("discard_above_p", "discard_above_p"),
        ("initial_step", "initial_step"),
        ("step_tol", "step_tol"),
        ("max_iterations", "max_iterations"),
        ("stall_window", "stall_window"),
        ("stall_delta", "stall_delta"),
        ("max_refinements", "max_refinements"),
        ("step_max", "step_max"),
        ("milestones", "track_milestones"),
    ]:
        if cfg_key in parsed:
            settings_kwargs[field] = parsed.pop(cfg_key)
    if kind == "structure_study":
        settings_kwargs.setdefault("track_milestones", True)
    try:
        settings = ClimbSettings(**settings_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    kwargs = {"kind": kind, "settings": settings}
    if "h0" in parsed:
        kwargs["h0_kind"] = parsed.pop("h0")
    for key, field in [
        ("gamma", "gamma"),
        ("omega", "omega"),
        ("dissoc", "dissoc"),
        ("k_components", "k_components"),
        ("beta", "envelope_beta"),
        ("omega_rule", "omega_rule"),
        ("runs_per_cell", "runs_per_cell"),
        ("master_seed", "master_seed"),
        ("horizon", "horizon"),
        ("n_t", "n_t"),
        ("spectra", "spectra"),
        ("spectrum_stride", "spectrum_stride"),
        ("bottom_p", "bottom_p"),
        ("traces", "write_traces"),
        ("jobs", "jobs"),
    ]:
        if key in parsed:
            kwargs[field] = parsed.pop(key)
    if "target" in parsed:
        one_to_n, i, f = _parse_target(parsed.pop("target"))
        kwargs["one_to_n"] = one_to_n
        kwargs["target_i"] = i
        if not one_to_n:
            kwargs["target_f"] = f
    if "dipole" in parsed:
        kwargs["dipoles"] = tuple(parse_dipole(d) for d in parsed.pop("dipole"))
    if "n" in parsed:
        kwargs["n_values"] = tuple(parsed.pop("n"))
    if "strength" in parsed:
        kwargs["strengths"] = tuple(parsed.pop("strength"))
    if parsed:
        raise ConfigError(f"unhandled keys: {sorted(parsed)}")
    try:
        return CampaignConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=(), kind: str | None = None) -> CampaignConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = apply_overrides(parse_config_text(text, source=str(path)), overrides)
    return build_campaign_config(raw, kind=kind)


def default_config(kind: str, overrides=()) -> CampaignConfig:
    """Config built from defaults plus overrides only (no file)."""
    raw = apply_overrides({}, overrides)
    return build_campaign_config(raw, kind=kind)


def with_seed(config: CampaignConfig, master_seed: int) -> CampaignConfig:
    return replace(config, master_seed=master_seed)


def with_jobs(config: CampaignConfig, jobs: int) -> CampaignConfig:
    return replace(config, jobs=jobs)
