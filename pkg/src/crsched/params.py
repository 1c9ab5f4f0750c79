"""Model constants shared by every layer of the simulator."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """Scalar constants of the network model.

    theta:      probability that a PU with a delivered packet has a new one
    zeta:       probability that an idle band is claimed by a new PU
    rho_p:      PU transmission failure probability (collision-free slot)
    rho_s:      SU transmission failure probability (collision-free slot)
    epsilon:    probability that PU feedback is erased before reaching the CC
    sigma_a2:   variance of each measurement-gain entry
    sigma_z2:   variance of the additive measurement noise
    c_s:        cost of one sensing transmission
    c_tx:       cost per unit of scheduled SU traffic
    f_bands:    number of licensed frequency bands (F)
    b_channels: number of shared control channels for reporting (B)
    n_su:       number of secondary users (enters only via the large-network
                collision approximations exp(-r) and r*exp(-r))
    xi:         weight of SU vs PU throughput in the scalarized objective
    lam:        cost multiplier in the scalarized objective
    """

    theta: float
    zeta: float
    rho_p: float
    rho_s: float
    epsilon: float
    sigma_a2: float
    sigma_z2: float
    c_s: float
    c_tx: float
    f_bands: int
    b_channels: int
    n_su: int
    xi: float
    lam: float

    def __post_init__(self) -> None:
        for name in ("theta", "rho_p", "rho_s", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} must lie in [0, 1]")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError(f"zeta={self.zeta!r} must lie in (0, 1)")
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"xi={self.xi!r} must lie in (0, 1)")
        if self.lam < 0.0:
            raise ValueError(f"lam={self.lam!r} must be nonnegative")
        for name in ("sigma_a2", "sigma_z2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_s", "c_tx"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("f_bands", "b_channels", "n_su"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive count")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, exclude: tuple[str, ...] = ()) -> str:
        """Stable hex digest of the parameter values.

        `exclude` drops fields that a cached artifact does not depend on
        (e.g. detection tables are independent of xi and lam).
        """
        d = {k: v for k, v in sorted(self.as_dict().items()) if k not in exclude}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_params(**overrides) -> ModelParams:
    """The default 20-band operating point used by the bundled experiments."""
    base = dict(
        theta=0.95,
        zeta=0.095,
        rho_p=0.1,
        rho_s=0.1,
        epsilon=0.9,
        sigma_a2=1.0,
        sigma_z2=1.0 / 20.0,
        c_s=1.0,
        c_tx=1.0,
        f_bands=20,
        b_channels=5,
        n_su=100,
        xi=0.7,
        lam=0.025,
    )
    base.update(overrides)
    return ModelParams(**base)
