"""Estimators that turn CountsTable data into retrieval, cross-correlation and pair rates.

Intrinsic retrieval uses coincidences / (eta_aS * Stokes clicks), summing
both polarization arms of every spatial mode in the denominator (H + V).
When channel-resolved unconditional anti-Stokes counts exist, accidental
coincidences are removed first: with an uncorrelated anti-Stokes click
probability a, the heralded click probability is q = 1 - (1 - R eta)(1 - a),
hence R eta = (q - a) / (1 - a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError, NoStokesCounts, ZeroDenominator
from .trial_engine import CountsTable

Z95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    ci_low: float
    ci_high: float
    n_effective: int
    stderr: float = float("nan")

    def __post_init__(self):
        if not self.ci_low <= self.value <= self.ci_high:
            raise DomainError(f"estimate {self.value} outside its interval [{self.ci_low}, {self.ci_high}]")

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_effective": self.n_effective,
            "stderr": self.stderr,
        }


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion k/n."""
    if n < 1 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    low = 0.0 if k == 0 else max(0.0, centre - half)
    high = 1.0 if k == n else min(1.0, centre + half)
    return low, high


def _retrieval(k: int, n: int, accidental: float, eta_aS: float) -> EstimateWithCI:
    lo, hi = wilson_interval(k, n)
    q = k / n

    def to_r(v):
        return min(1.0, max(0.0, (v - accidental) / ((1.0 - accidental) * eta_aS)))

    value = to_r(q)
    stderr = math.sqrt(q * (1 - q) / n) / ((1.0 - accidental) * eta_aS)
    return EstimateWithCI(value, min(value, to_r(lo)), max(value, to_r(hi)), n, stderr)


def estimate_retrieval(counts: CountsTable, eta_aS: float, subtract_accidentals: bool | None = None) -> dict:
    """Per-mode and multiplexed intrinsic retrieval efficiency.

    ``subtract_accidentals`` defaults to True when the table carries
    unconditional anti-Stokes counts (unconditioned readout).  The multiplexed
    value pools all channels: sum(coincidences) / sum(Stokes clicks), with the
    accidental rate weighted by each channel's Stokes clicks.
    """
    if counts.trials < 1:
        raise DomainError("counts.trials must be >= 1")
    if not 0.0 < eta_aS <= 1.0:
        raise DomainError(f"eta_aS={eta_aS} outside (0, 1]")
    if subtract_accidentals is None:
        subtract_accidentals = counts.readout == "unconditioned" and counts.n_antistokes.sum() > 0
    total_s = int(counts.n_stokes.sum())
    if total_s == 0:
        raise NoStokesCounts("no Stokes clicks in the table")
    if subtract_accidentals:
        acc = counts.n_antistokes / counts.trials
    else:
        acc = np.zeros(len(counts.modes))

    per_mode = {}
    for i, mode in enumerate(counts.modes):
        n = int(counts.n_stokes[i])
        if n:
            per_mode[mode] = _retrieval(int(counts.n_coinc[i]), n, float(acc[i]), eta_aS)
    pooled_acc = float(np.dot(counts.n_stokes, acc) / total_s)
    multiplexed = _retrieval(int(counts.n_coinc.sum()), total_s, pooled_acc, eta_aS)
    return {"perMode": per_mode, "multiplexed": multiplexed}


def estimate_g2(counts: CountsTable) -> EstimateWithCI:
    """Multiplexed cross-correlation from an unconditioned-readout table.

    g2 = sum_i P(S_i, aS_i) / sum_i P(S_i) P(aS_i).  The standard error is a
    first-order (delta-method) propagation using the per-channel multinomial
    covariances of (coincidence, Stokes, anti-Stokes) counts.
    """
    T = counts.trials
    c = counts.n_coinc.astype(float)
    s = counts.n_stokes.astype(float)
    a = counts.n_antistokes.astype(float)
    denom = float(np.dot(s, a))
    if counts.readout != "unconditioned" or denom == 0.0:
        raise ZeroDenominator("no unconditional anti-Stokes statistics (need unconditioned readout with clicks)")
    C = float(c.sum())
    g2 = T * C / denom
    if C == 0:
        return EstimateWithCI(0.0, 0.0, 0.0, 0, 0.0)

    # per-channel multinomial (co)variances
    pc, ps, pa = c / T, s / T, a / T
    var_c = T * pc * (1 - pc)
    var_s = T * ps * (1 - ps)
    var_a = T * pa * (1 - pa)
    cov_cs = T * pc * (1 - ps)
    cov_ca = T * pc * (1 - pa)
    cov_sa = T * (pc - ps * pa)
    dc = 1.0 / C
    ds = -a / denom
    da = -s / denom
    var_log = np.sum(
        dc * dc * var_c + ds * ds * var_s + da * da * var_a
        + 2 * dc * ds * cov_cs + 2 * dc * da * cov_ca + 2 * ds * da * cov_sa
    )
    stderr = g2 * math.sqrt(max(var_log, 0.0))
    low = max(0.0, g2 - Z95 * stderr)
    return EstimateWithCI(g2, low, g2 + Z95 * stderr, int(C), stderr)


def estimate_pS_total(counts: CountsTable, active_modes: int | None = None) -> EstimateWithCI:
    """P_S^(N): Stokes clicks summed over the first N channels, per trial."""
    n_ch = len(counts.modes)
    N = n_ch if active_modes is None else active_modes
    if not 0 <= N <= n_ch:
        raise DomainError(f"active_modes={N} must lie in 0..{n_ch}")
    return _rate_sum(counts.n_stokes[:N], counts.trials)


def estimate_pair_total(counts: CountsTable, active_modes: int | None = None) -> EstimateWithCI:
    """P_S,aS^(N): coincidences summed over the first N channels, per trial."""
    n_ch = len(counts.modes)
    N = n_ch if active_modes is None else active_modes
    if not 0 <= N <= n_ch:
        raise DomainError(f"active_modes={N} must lie in 0..{n_ch}")
    return _rate_sum(counts.n_coinc[:N], counts.trials)


def _rate_sum(k: np.ndarray, trials: int) -> EstimateWithCI:
    # sum of per-channel proportions; each channel is at most one click per trial
    k_tot = int(np.sum(k))
    value = k_tot / trials
    if len(k) == 0:
        return EstimateWithCI(0.0, 0.0, 0.0, 0, 0.0)
    # Wilson interval on the mean per-channel rate, scaled back up
    lo, hi = wilson_interval(k_tot, trials * len(k))
    stderr = math.sqrt(sum(v / trials * (1 - v / trials) for v in k) / trials)
    return EstimateWithCI(value, min(value, lo * len(k)), max(value, hi * len(k)), trials, stderr)
