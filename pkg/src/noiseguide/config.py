"""INI-style run configuration with strict keys and typed defaults."""

from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, None),
        "workers": (int, 1),
        "out": (str, "out"),
    },
    "schedule": {
        "T": (int, 200),
        "beta_start": (float, 1e-4),
        "beta_end": (float, 0.05),
    },
    "backbone": {
        "layers": (int, 6),
        "channels": (int, 16),
        "kernel_size": (int, 3),
        "epochs": (int, 200),
        "lr": (float, 2e-3),
        "batch": (int, 16),
        "segment": (int, 2048),
    },
    "noise_model": {
        "epochs": (int, 60),
        "lr": (float, 1e-2),
        "draw_mode": (str, "vector"),
        "strict": (_bool, True),
        "val_fraction": (float, 0.2),
        "shared": (_bool, False),
        "channels": (int, 2),
        "kernel_size": (int, 9),
        "dilations": (_ints, [1, 2, 4, 8]),
    },
    "guidance": {
        "lambda_max": (str, "auto"),
        "gamma": (float, 0.7),
        "ratio_inverted": (_bool, False),
        "literal_sign": (_bool, False),
        "grad_clip": (float, 1e3),
        "final_noise": (_bool, True),
        "snr": (float, 5.0),
        "lambda_grid": (_floats, [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]),
        "gamma_grid": (_floats, [0.5, 0.7, 1.0]),
    },
    "io": {
        "kind": (str, "harmonic"),
        "count": (int, 32),
        "length": (int, 16000),
        "snr_list": (_floats, [10.0, 5.0, 0.0, -5.0]),
        "sample_rate": (int, 16000),
    },
}

# lambda_max calibrated per input SNR (dB)
LAMBDA_BY_SNR = {10.0: 0.8, 5.0: 0.72, 0.0: 0.6, -5.0: 0.55}


class Config:
    """Resolved configuration; access as ``cfg["section"]["key"]``."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def sub_seed(self, offset: int) -> int:
        return (self.seed * 1_000_003 + offset) % (2**63 - 1)

    def lambda_max(self) -> float:
        raw = self.values["guidance"]["lambda_max"]
        if str(raw).strip().lower() == "auto":
            snr = self.values["guidance"]["snr"]
            nearest = min(LAMBDA_BY_SNR, key=lambda s: abs(s - snr))
            return LAMBDA_BY_SNR[nearest]
        return float(raw)

    def to_text(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in keys.items())
            lines.append("")
        return "\n".join(lines)


def defaults() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config(text: str = "", overrides: dict | None = None) -> Config:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}".splitlines()[0]) from None
    values = defaults()
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            parser = SCHEMA[section][key][0]
            try:
                values[section][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from None
    for dotted, v in (overrides or {}).items():
        section, key = dotted.split(".")
        values[section][key] = v
    if values["run"]["seed"] is None:
        raise ConfigError("run.seed is required (set it in the config or pass --seed)")
    if values["noise_model"]["draw_mode"] not in ("vector", "scalar"):
        raise ConfigError("noise_model.draw_mode must be 'vector' or 'scalar'")
    return Config(values)


def load_config(path=None, overrides: dict | None = None) -> Config:
    text = ""
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
    return parse_config(text, overrides)
