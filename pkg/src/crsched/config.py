"""Flat `key = value` experiment configuration.

No sections, no nesting: one key per line, `#` starts a comment, lists are
comma-separated.  Serialization writes keys in schema order with repr
precision, so parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .params import ModelParams

_FLOAT_LIST = "float_list"
_SCHEMA: dict[str, str] = {
    # model constants
    "theta": "float",
    "zeta": "float",
    "rho_p": "float",
    "rho_s": "float",
    "epsilon": "float",
    "sigma_a2": "float",
    "sigma_z2": "float",
    "c_s": "float",
    "c_tx": "float",
    "f_bands": "int",
    "b_channels": "int",
    "n_su": "int",
    "xi": "float",
    "lam": "float",
    # slot split between sensing and scheduling phases; kept for
    # documentation, no metric depends on it
    "sensing_duration": "float",
    # discretization and estimation
    "level_step": "float",
    "psi_step": "float",
    "n_lambda": "int",
    "n_mc": "int",
    # simulation
    "slots": "int",
    "burn_in_frac": "float",
    "seed": "opt_int",
    # sweep specifications
    "lambda_values": _FLOAT_LIST,
    "xi_values": _FLOAT_LIST,
    "cmax_values": _FLOAT_LIST,
    "jobs": "int",
}


@dataclass
class ExperimentConfig:
    theta: float = 0.95
    zeta: float = 0.095
    rho_p: float = 0.1
    rho_s: float = 0.1
    epsilon: float = 0.9
    sigma_a2: float = 1.0
    sigma_z2: float = 0.05
    c_s: float = 1.0
    c_tx: float = 1.0
    f_bands: int = 20
    b_channels: int = 5
    n_su: int = 100
    xi: float = 0.7
    lam: float = 0.025
    sensing_duration: float = 0.1
    level_step: float = 0.05
    psi_step: float = 0.05
    n_lambda: int = 21
    n_mc: int = 2000
    slots: int = 20000
    burn_in_frac: float = 0.1
    seed: int | None = None
    lambda_values: list = field(default_factory=lambda: [0.025])
    xi_values: list = field(default_factory=lambda: [0.7])
    cmax_values: list = field(
        default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.6, 0.8, 1.0]
    )
    jobs: int = 1

    def model_params(self, xi: float | None = None, lam: float | None = None) -> ModelParams:
        return ModelParams(
            theta=self.theta,
            zeta=self.zeta,
            rho_p=self.rho_p,
            rho_s=self.rho_s,
            epsilon=self.epsilon,
            sigma_a2=self.sigma_a2,
            sigma_z2=self.sigma_z2,
            c_s=self.c_s,
            c_tx=self.c_tx,
            f_bands=self.f_bands,
            b_channels=self.b_channels,
            n_su=self.n_su,
            xi=self.xi if xi is None else xi,
            lam=self.lam if lam is None else lam,
        )

    def burn_in(self) -> int:
        return int(self.slots * self.burn_in_frac)


def _parse_value(key: str, raw: str):
    kind = _SCHEMA[key]
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "opt_int":
        return None if raw.lower() in ("", "none") else int(raw)
    if kind == _FLOAT_LIST:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    raise AssertionError(f"unhandled kind {kind}")


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            rendered = ", ".join(repr(x) for x in v)
        elif v is None:
            rendered = "none"
        else:
            rendered = repr(v)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
