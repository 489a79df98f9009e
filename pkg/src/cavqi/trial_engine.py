"""Seeded Monte Carlo of write/read trials over the multiplexed channels.

Per channel and trial the simulator draws

* K ~ Poisson(chi) spin-wave/Stokes pairs;
* for every pair, a Stokes detection (prob. eta_S) and a retrieval that
  survives detection (prob. R(t) * eta_aS), independently;
* one uncorrelated anti-Stokes noise click with probability
  1 - exp(-eta_aS (chi (1 - R) xi_se A + Z)).

Stokes click = any pair detected; anti-Stokes click = any retrieval or noise.
The Poisson pair number supplies the accidental coincidences from
independent excitations, so the count-level probabilities agree with the
closed forms in ``memory_model`` up to second order in the click rates.

Readout modes:

``unconditioned``
    read pulse on every trial, every channel's anti-Stokes output is
    resolved; used for retrieval and cross-correlation estimates.
``conditioned``
    feed-forward: read only after a Stokes click, the switch network routes
    the heralded channels to the two common detectors (one per polarization)
    and every heralded channel of polarization a is credited with a
    coincidence when common detector a fires.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import DomainError
from .memory_model import PhysicsParams, antistokes_click_prob, retrieval_efficiency
from .rng import MAX_CHANNELS, draw_words, split_seed, threshold

READOUT_MODES = ("unconditioned", "conditioned")
CHUNK_TRIALS = 1 << 18
MAX_PAIRS = 24  # Poisson tail beyond this is below 2**-32 for chi <= 0.5


@dataclass(frozen=True, order=True)
class ModeId:
    spatial: int
    pol: str

    def __post_init__(self):
        if self.pol not in ("H", "V") or not 1 <= self.spatial <= 6:
            raise DomainError(f"invalid mode id {self.spatial}{self.pol}")

    @property
    def name(self) -> str:
        return f"{self.spatial}{self.pol}"

    @property
    def index(self) -> int:
        return 2 * (self.spatial - 1) + (0 if self.pol == "H" else 1)

    def __str__(self):
        return self.name


def channels(m: int) -> tuple[ModeId, ...]:
    return tuple(ModeId(i, pol) for i in range(1, m + 1) for pol in ("H", "V"))


@dataclass(frozen=True)
class TrialStream:
    """Address of one trial's random words."""

    master_seed: int
    trial_index: int
    stream: int = 0


@dataclass(frozen=True)
class TrialRecord:
    storage_time: float
    stokes_clicks: frozenset
    anti_stokes_clicks: frozenset
    coincidences: frozenset
    readout_triggered: bool


@dataclass
class CountsTable:
    """Click and coincidence counts of a batch of trials.

    ``n_antistokes`` holds channel-resolved unconditional anti-Stokes clicks
    (unconditioned readout only; zeros otherwise).  ``n_antistokes_pol``
    holds common-detector clicks on triggered readouts, ordered (H, V).
    """

    trials: int
    storage_time: float
    readout: str
    modes: tuple
    n_stokes: np.ndarray
    n_coinc: np.ndarray
    n_antistokes: np.ndarray
    n_antistokes_pol: np.ndarray = field(default_factory=lambda: np.zeros(2, np.int64))

    def __post_init__(self):
        for name in ("n_stokes", "n_coinc", "n_antistokes", "n_antistokes_pol"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if np.any(self.n_coinc > self.n_stokes):
            raise DomainError("coincidences exceed Stokes counts")
        if self.trials and (
            np.any(self.n_stokes > self.trials)
            or np.any(self.n_antistokes > self.trials)
            or np.any(self.n_antistokes_pol > self.trials)
        ):
            raise DomainError("a count exceeds the number of trials")

    @property
    def per_mode(self) -> dict:
        return {
            mode: {
                "n_stokes": int(self.n_stokes[i]),
                "n_coinc": int(self.n_coinc[i]),
                "n_antistokes": int(self.n_antistokes[i]),
            }
            for i, mode in enumerate(self.modes)
        }

    @property
    def per_pol(self) -> dict:
        return {"H": int(self.n_antistokes_pol[0]), "V": int(self.n_antistokes_pol[1])}

    def merge(self, other: "CountsTable") -> "CountsTable":
        if (self.storage_time, self.readout, self.modes) != (other.storage_time, other.readout, other.modes):
            raise DomainError("can only merge tables of the same storage time, readout and modes")
        return CountsTable(
            self.trials + other.trials,
            self.storage_time,
            self.readout,
            self.modes,
            self.n_stokes + other.n_stokes,
            self.n_coinc + other.n_coinc,
            self.n_antistokes + other.n_antistokes,
            self.n_antistokes_pol + other.n_antistokes_pol,
        )

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, CountsTable):
            return NotImplemented
        return (
            self.trials == other.trials
            and self.storage_time == other.storage_time
            and self.readout == other.readout
            and self.modes == other.modes
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("n_stokes", "n_coinc", "n_antistokes", "n_antistokes_pol")
            )
        )

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "storage_time_us": self.storage_time,
            "readout": self.readout,
            "modes": [m.name for m in self.modes],
            "n_stokes": self.n_stokes.tolist(),
            "n_coinc": self.n_coinc.tolist(),
            "n_antistokes": self.n_antistokes.tolist(),
            "n_antistokes_pol": self.n_antistokes_pol.tolist(),
        }


# ---------------------------------------------------------------------------
# per-channel draw tables


@dataclass(frozen=True)
class _Tables:
    pair_cdf: np.ndarray  # (n_ch, MAX_PAIRS) uint64 cumulative thresholds
    stokes: np.ndarray  # (n_ch,) uint64
    retrieve: np.ndarray
    noise: np.ndarray
    pol: np.ndarray  # (n_ch,) int64, 0 = H


def _poisson_cdf_thresholds(mu: float) -> np.ndarray:
    out = np.empty(MAX_PAIRS, dtype=np.uint64)
    term = math.exp(-mu)
    cdf = term
    for k in range(MAX_PAIRS):
        out[k] = threshold(min(1.0, cdf))
        term *= mu / (k + 1)
        cdf += term
    out[-1] = np.uint64(1 << 32)
    return out


def _tables(params: PhysicsParams, t: float) -> _Tables:
    if t < 0:
        raise DomainError(f"storage time must be non-negative, got {t}")
    modes = channels(params.m)
    if len(modes) > MAX_CHANNELS:
        raise DomainError("too many channels")
    R = retrieval_efficiency(t, params.decay)
    n = len(modes)
    pair_cdf = np.empty((n, MAX_PAIRS), dtype=np.uint64)
    stokes = np.empty(n, dtype=np.uint64)
    retrieve = np.empty(n, dtype=np.uint64)
    noise = np.empty(n, dtype=np.uint64)
    pol = np.empty(n, dtype=np.int64)
    for i, mode in enumerate(modes):
        p = params.for_channel(mode.name)
        antistokes_click_prob(p, t)  # raises ProbabilityOverflow
        eta_aS = p.eta_aS
        pair_cdf[i] = _poisson_cdf_thresholds(p.chi)
        stokes[i] = threshold(p.eta_S)
        retrieve[i] = threshold(R * eta_aS)
        noise_mean = eta_aS * (p.chi * (1.0 - R) * p.xi_se * p.A + p.Z)
        noise[i] = threshold(-math.expm1(-noise_mean))
        pol[i] = 0 if mode.pol == "H" else 1
    return _Tables(pair_cdf, stokes, retrieve, noise, pol)


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(nogil=True, cache=True)
def _channel_flags(k0, k1, stream, trial, ch, pair_cdf, thr_s, thr_r, thr_n):
    w0, w1, w2, w3 = draw_words(k0, k1, stream, trial, ch, 0)
    n_pairs = 0
    while n_pairs < pair_cdf.shape[1] and w0 >= pair_cdf[ch, n_pairs]:
        n_pairs += 1
    s = False
    r = False
    if n_pairs > 0:
        s = w2 < thr_s[ch]
        r = w3 < thr_r[ch]
        for j in range(1, n_pairs):
            v0, v1, _, _ = draw_words(k0, k1, stream, trial, ch, j)
            s = s or v0 < thr_s[ch]
            r = r or v1 < thr_r[ch]
    a = r or w1 < thr_n[ch]
    return s, a


@numba.njit(nogil=True, cache=True)
def _trial(k0, k1, stream, trial, pair_cdf, thr_s, thr_r, thr_n, pol, conditioned, s, a, c, det):
    """Fill per-channel Stokes/anti-Stokes/coincidence flags and detector clicks for one trial."""
    n_ch = thr_s.shape[0]
    any_s = False
    for ch in range(n_ch):
        s[ch], a[ch] = _channel_flags(k0, k1, stream, trial, ch, pair_cdf, thr_s, thr_r, thr_n)
        any_s = any_s or s[ch]
    det[0] = False
    det[1] = False
    if conditioned:
        if any_s:
            for ch in range(n_ch):
                if s[ch] and a[ch]:
                    det[pol[ch]] = True
        for ch in range(n_ch):
            c[ch] = s[ch] and det[pol[ch]]
    else:
        for ch in range(n_ch):
            if a[ch]:
                det[pol[ch]] = True
            c[ch] = s[ch] and a[ch]
    return any_s


@numba.njit(nogil=True, cache=True)
def _block(k0, k1, stream, first, last, pair_cdf, thr_s, thr_r, thr_n, pol, conditioned):
    n_ch = thr_s.shape[0]
    n_s = np.zeros(n_ch, np.int64)
    n_c = np.zeros(n_ch, np.int64)
    n_a = np.zeros(n_ch, np.int64)
    n_pol = np.zeros(2, np.int64)
    s = np.zeros(n_ch, np.bool_)
    a = np.zeros(n_ch, np.bool_)
    c = np.zeros(n_ch, np.bool_)
    det = np.zeros(2, np.bool_)
    for trial in range(first, last):
        _trial(k0, k1, stream, trial, pair_cdf, thr_s, thr_r, thr_n, pol, conditioned, s, a, c, det)
        for ch in range(n_ch):
            n_s[ch] += s[ch]
            n_c[ch] += c[ch]
            if not conditioned:
                n_a[ch] += a[ch]
        n_pol[0] += det[0]
        n_pol[1] += det[1]
    return n_s, n_c, n_a, n_pol


# ---------------------------------------------------------------------------
# public API


def _check_readout(readout: str) -> bool:
    if readout not in READOUT_MODES:
        raise DomainError(f"readout must be one of {READOUT_MODES}, got {readout!r}")
    return readout == "conditioned"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SIM_THREADS", "1")))
    except ValueError:
        return 1


def run_trial(params: PhysicsParams, t: float, rng_stream: TrialStream, readout: str = "unconditioned") -> TrialRecord:
    conditioned = _check_readout(readout)
    tab = _tables(params, t)
    k0, k1 = split_seed(rng_stream.master_seed)
    n_ch = len(tab.stokes)
    s = np.zeros(n_ch, np.bool_)
    a = np.zeros(n_ch, np.bool_)
    c = np.zeros(n_ch, np.bool_)
    det = np.zeros(2, np.bool_)
    any_s = _trial(
        k0, k1, np.uint64(rng_stream.stream), np.uint64(rng_stream.trial_index),
        tab.pair_cdf, tab.stokes, tab.retrieve, tab.noise, tab.pol, conditioned, s, a, c, det,
    )
    modes = channels(params.m)
    triggered = bool(any_s) if conditioned else True
    return TrialRecord(
        storage_time=t,
        stokes_clicks=frozenset(mode for mode, flag in zip(modes, s) if flag),
        anti_stokes_clicks=frozenset(p for p, flag in zip("HV", det) if flag) if triggered else frozenset(),
        coincidences=frozenset(mode for mode, flag in zip(modes, c) if flag),
        readout_triggered=triggered,
    )


def run_batch(
    params: PhysicsParams,
    t: float,
    n_trials: int,
    master_seed: int,
    *,
    readout: str = "unconditioned",
    stream: int = 0,
    first_trial: int = 0,
    workers: int | None = None,
) -> CountsTable:
    """Aggregate trials ``first_trial .. first_trial + n_trials - 1`` into a CountsTable.

    Trials are cut into fixed chunks that may run on several threads; the
    integer totals do not depend on how the chunks are scheduled.
    """
    if isinstance(n_trials, bool) or not isinstance(n_trials, (int, np.integer)) or n_trials < 1:
        raise DomainError(f"n_trials must be a positive integer, got {n_trials!r}")
    if first_trial < 0:
        raise DomainError("first_trial must be non-negative")
    conditioned = _check_readout(readout)
    tab = _tables(params, t)
    k0, k1 = split_seed(master_seed)
    stream = np.uint64(stream)
    workers = workers or default_workers()

    bounds = []
    start, stop = first_trial, first_trial + int(n_trials)
    while start < stop:
        end = min(stop, (start // CHUNK_TRIALS + 1) * CHUNK_TRIALS)
        bounds.append((start, end))
        start = end

    def work(span):
        return _block(k0, k1, stream, span[0], span[1], tab.pair_cdf, tab.stokes, tab.retrieve, tab.noise, tab.pol, conditioned)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(span) for span in bounds]

    n_ch = len(tab.stokes)
    totals = [np.zeros(n_ch, np.int64), np.zeros(n_ch, np.int64), np.zeros(n_ch, np.int64), np.zeros(2, np.int64)]
    for part in parts:
        for acc, arr in zip(totals, part):
            acc += arr
    return CountsTable(int(n_trials), float(t), readout, channels(params.m), *totals)


def schedule_sweep(
    params: PhysicsParams,
    time_points: Sequence[float],
    n_trials_per_point: int,
    master_seed: int,
    *,
    readout: str = "unconditioned",
    workers: int | None = None,
) -> list[CountsTable]:
    """One CountsTable per storage time; point i uses random stream i."""
    if len(time_points) == 0:
        raise DomainError("time_points must not be empty")
    if any(t < 0 for t in time_points):
        raise DomainError("time points must be non-negative")
    return [
        run_batch(params, t, n_trials_per_point, master_seed, readout=readout, stream=i, workers=workers)
        for i, t in enumerate(time_points)
    ]


def mode_sweep(
    params: PhysicsParams,
    mode_counts: Sequence[int],
    n_trials_per_point: int,
    master_seed: int,
    *,
    t: float = 0.0,
    readout: str = "conditioned",
    workers: int | None = None,
) -> list[CountsTable]:
    """Run with N = 2m active channels for each N in ``mode_counts`` (streams 1000 + i)."""
    tables = []
    for i, n in enumerate(mode_counts):
        if n < 2 or n % 2 or n > 12:
            raise DomainError(f"mode count must be an even number in 2..12, got {n}")
        tables.append(
            run_batch(params.with_modes(n // 2), t, n_trials_per_point, master_seed,
                      readout=readout, stream=1000 + i, workers=workers)
        )
    return tables
