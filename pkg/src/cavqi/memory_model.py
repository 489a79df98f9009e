"""Closed-form count-level model of the multiplexed spin-wave/photon interface.

All rates are per trial and per channel (one channel = one spatial mode in
one polarization arm).  Channels are identical unless ``channel_overrides``
says otherwise.

Two cross-correlation evaluators are provided.  ``analytic_g2`` is what the
single-channel click and coincidence probabilities actually give when
inserted into the multiplexed ratio:

    g2 = 1 + R / (chi R + chi (1 - R) xi_se A + Z)

``printed_g2`` is the commonly quoted form with an extra chi in the
numerator.  The two differ by exactly (printed - 1) = chi (derived - 1); for
the default parameters only the derived form reaches the measured values
well above 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDenominator, DomainError, ProbabilityOverflow, ValidationError

EFFICIENCY_FIELDS = ("eta_esp", "eta_t", "eta_D", "eta_S")
OVERRIDABLE = ("chi", "Z", "eta_esp", "eta_t", "eta_D", "eta_S")


@dataclass(frozen=True)
class DecayModel:
    R0: float
    tau0: float  # us

    def __call__(self, t):
        return retrieval_efficiency(t, self)


def retrieval_efficiency(t, model: DecayModel):
    """R0 * (exp(-t^2/tau0^2) + exp(-t/tau0)) / 2, t in microseconds."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError(f"storage time must be non-negative, got {t}")
    x = t_arr / model.tau0
    out = model.R0 * 0.5 * (np.exp(-x * x) + np.exp(-x))
    return float(out) if out.ndim == 0 else out


def cavity_enhancement(F: float) -> float:
    """A = 2F/pi."""
    if not F >= 1:
        raise DomainError(f"finesse must be >= 1, got {F}")
    return 2.0 * F / math.pi


def detection_efficiency_aS(eta_esp: float, eta_t: float, eta_D: float) -> float:
    for name, v in (("eta_esp", eta_esp), ("eta_t", eta_t), ("eta_D", eta_D)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name}={v} outside [0, 1]")
    return eta_esp * eta_t * eta_D


@dataclass(frozen=True)
class PhysicsParams:
    """Scalar physics constants; times in microseconds.

    ``chi`` is the mean number of Stokes/spin-wave pairs created per channel
    per trial.  ``channel_overrides`` maps a channel name such as ``"3V"`` to
    replacement values for any of ``OVERRIDABLE``.
    """

    chi: float = 0.0179
    R0: float = 0.70
    tau0: float = 600.0
    F: float = 16.0
    xi_se: float = 0.3
    Z: float = 2e-3
    eta_esp: float = 0.60
    eta_t: float = 0.34
    eta_D: float = 0.68
    eta_S: float = 0.14
    m: int = 6
    channel_overrides: dict = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        problems = validation_problems(self)
        if problems:
            if all("probability overflow" in p for p in problems):
                raise ProbabilityOverflow(problems)
            raise ValidationError(problems)

    @property
    def A(self) -> float:
        return cavity_enhancement(self.F)

    @property
    def eta_aS(self) -> float:
        return detection_efficiency_aS(self.eta_esp, self.eta_t, self.eta_D)

    @property
    def decay(self) -> DecayModel:
        return DecayModel(self.R0, self.tau0)

    @property
    def n_channels(self) -> int:
        return 2 * self.m

    def for_channel(self, name: str) -> "PhysicsParams":
        """Parameters seen by one channel after applying its override (if any)."""
        override = self.channel_overrides.get(name)
        if not override:
            return self
        return replace(self, channel_overrides={}, **override)

    def with_modes(self, m: int) -> "PhysicsParams":
        return replace(self, m=m)

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in self.__dataclass_fields__}
        out["channel_overrides"] = {k: dict(v) for k, v in self.channel_overrides.items()}
        return out


def validation_problems(p: PhysicsParams) -> list[str]:
    problems = []
    for name in ("chi", "R0", "xi_se", "Z") + EFFICIENCY_FIELDS:
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
            problems.append(f"{name}={v!r} must lie in [0, 1]")
    if not (isinstance(p.tau0, (int, float)) and p.tau0 > 0):
        problems.append(f"tau0={p.tau0!r} must be > 0")
    if not (isinstance(p.F, (int, float)) and p.F >= 1):
        problems.append(f"F={p.F!r} must be >= 1")
    if isinstance(p.m, bool) or not isinstance(p.m, int) or not 1 <= p.m <= 6:
        problems.append(f"m={p.m!r} must be an integer in 1..6")
    if problems:
        return problems
    if 2 * p.m * p.chi > 1:
        problems.append(f"chi * 2m = {2 * p.m * p.chi:.4g} must not exceed 1")
    for name, override in p.channel_overrides.items():
        bad = set(override) - set(OVERRIDABLE)
        if bad:
            problems.append(f"channel override {name!r} has unsupported keys {sorted(bad)}")
        for key, v in override.items():
            if key in OVERRIDABLE and not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                problems.append(f"channel override {name}.{key}={v!r} must lie in [0, 1]")
    # the pre-detection anti-Stokes term is linear in R, so check both ends
    A = 2.0 * p.F / math.pi
    worst = max(p.chi * p.xi_se * A, p.chi * (p.R0 + (1 - p.R0) * p.xi_se * A)) + p.Z
    if worst > 1:
        problems.append(
            f"probability overflow: chi (R + (1 - R) xi_se A) + Z reaches {worst:.4g} > 1"
        )
    return problems


def stokes_click_prob(params: PhysicsParams) -> float:
    """P_DS = chi * eta_S."""
    return params.chi * params.eta_S


def _predetection(params: PhysicsParams, R):
    return params.chi * R + params.chi * (1.0 - R) * params.xi_se * params.A + params.Z


def antistokes_click_prob(params: PhysicsParams, t):
    """eta_aS * (chi R + chi (1 - R) xi_se A + Z)."""
    R = retrieval_efficiency(t, params.decay)
    pre = _predetection(params, R)
    if np.any(np.asarray(pre) > 1.0):
        raise ProbabilityOverflow(f"anti-Stokes pre-detection probability {pre} exceeds 1")
    return params.eta_aS * pre


def coincidence_prob(params: PhysicsParams, t):
    """Correlated term chi R eta_S eta_aS plus accidentals P_DS * P_DaS."""
    R = retrieval_efficiency(t, params.decay)
    return (
        params.chi * R * params.eta_S * params.eta_aS
        + stokes_click_prob(params) * antistokes_click_prob(params, t)
    )


def g2_from_retrieval(R, chi, xi_se, A, Z):
    """1 + R / (chi R + chi (1 - R) xi_se A + Z), vectorized over R."""
    R = np.asarray(R, dtype=float)
    den = chi * R + chi * (1.0 - R) * xi_se * A + Z
    if np.any(den <= 0):
        raise DegenerateDenominator("g2 denominator vanishes: no retrieval, no noise and no background")
    out = 1.0 + R / den
    return float(out) if out.ndim == 0 else out


def analytic_g2(params: PhysicsParams, t):
    R = retrieval_efficiency(t, params.decay)
    return g2_from_retrieval(R, params.chi, params.xi_se, params.A, params.Z)


def printed_g2(params: PhysicsParams, t):
    """The widely quoted form 1 + chi R / (chi R + chi (1 - R) xi_se A + Z)."""
    R = np.asarray(retrieval_efficiency(t, params.decay), dtype=float)
    den = _predetection(params, R)
    if np.any(den <= 0):
        raise DegenerateDenominator("g2 denominator vanishes: no retrieval, no noise and no background")
    out = 1.0 + params.chi * R / den
    return float(out) if out.ndim == 0 else out
