"""Misalignment trajectories and aggregate session simulation.

A session is sliced into time windows; each window's per-cell counts are
drawn binomially from the forward model at the window's frame angle(s).
Per-pulse simulation is never performed: per-cell counts are sufficient
statistics, which keeps 1e12-pulse sessions at interactive speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import model
from .errors import ConfigError, InsufficientStatisticsError
from .params import (
    BASES,
    BASIS_PAIR_INDEX,
    BASIS_PAIRS,
    DISCARDED_COMBOS,
    LEVELS,
    BasisPair,
    SystemParams,
)

DRIFT_KINDS = ("fixed", "linear", "sinusoidal", "random_walk")

# within-slice frame drift above which rates are averaged over sub-steps
SUBSTEP_MAX_DRIFT = 0.05


@dataclass(frozen=True)
class DriftModel:
    """Deterministic (given seed) misalignment trajectory beta(t)."""

    kind: str = "linear"
    beta0: float = 0.0
    omega_rf: float = 0.0  # rad/s, linear drift rate
    amplitude: float = 0.0  # rad, sinusoidal
    period_s: float = 1000.0  # s, sinusoidal
    step_var: float = 0.0  # rad^2 per second, random walk
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"must be one of {DRIFT_KINDS}, got {self.kind!r}", key="drift_kind")
        if self.omega_rf < 0.0:
            raise ConfigError(f"must be >= 0, got {self.omega_rf}", key="drift_omega_rf")
        if self.kind == "sinusoidal" and self.period_s <= 0.0:
            raise ConfigError(f"must be > 0, got {self.period_s}", key="drift_period_s")
        if self.step_var < 0.0:
            raise ConfigError(f"must be >= 0, got {self.step_var}", key="drift_step_var")


@lru_cache(maxsize=32)
def _walk_increments(seed, n_seconds):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), 0x77a1c))))
    steps = rng.standard_normal(n_seconds)
    walk = np.concatenate([[0.0], np.cumsum(steps)])
    walk.flags.writeable = False
    return walk


def beta_at(drift, t):
    """Misalignment angle at time t (seconds, scalar or array), in radians.

    random_walk uses a unit-second standard walk scaled by sqrt(step_var),
    linearly interpolated between grid points; identical (seed, t) always
    yields identical values.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("t must be >= 0")
    if drift.kind == "fixed":
        out = np.full_like(t_arr, drift.beta0)
    elif drift.kind == "linear":
        out = drift.beta0 + drift.omega_rf * t_arr
    elif drift.kind == "sinusoidal":
        out = drift.beta0 + drift.amplitude * np.sin(2.0 * math.pi * t_arr / drift.period_s)
    else:
        n_seconds = int(np.ceil(t_arr.max())) + 1 if t_arr.size else 1
        walk = _walk_increments(drift.seed, n_seconds)
        grid = np.arange(n_seconds + 1, dtype=float)
        out = drift.beta0 + math.sqrt(drift.step_var) * np.interp(t_arr, grid, walk)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


@dataclass(frozen=True)
class SessionConfig:
    """Acquisition session: total pulse pairs, slicing granularity, seed."""

    n_tot: int
    slice_interval: float = 10.0
    duration: float | None = None  # seconds; defaults to n_tot / rep_rate
    seed: int = 0

    def __post_init__(self):
        if self.n_tot < 1:
            raise ConfigError(f"must be >= 1, got {self.n_tot}", key="n_tot")
        if self.slice_interval <= 0.0:
            raise ConfigError(f"must be > 0, got {self.slice_interval}", key="slice_interval_s")
        if self.duration is not None and self.duration <= 0.0:
            raise ConfigError(f"must be > 0, got {self.duration}", key="duration_s")

    def session_duration(self, params):
        return self.duration if self.duration is not None else self.n_tot / params.rep_rate

    def n_slices(self, params):
        n = math.ceil(self.session_duration(params) / self.slice_interval)
        if n < 1:
            raise ConfigError("slice interval produces zero slices", key="slice_interval_s")
        return n


@dataclass
class SubsetTally:
    """Counts for one time slice: per (intensity pair, basis pair) cell.

    Arrays are indexed [level_a, level_b, basis_pair] with the orderings of
    params.LEVELS and params.BASIS_PAIRS. `discarded` counts pulses whose
    basis combination is removed by sifting, so that
    sent.sum() + discarded == n_pulses exactly.
    """

    index: int
    t_start: float
    t_end: float
    n_pulses: int
    sent: np.ndarray
    detected: np.ndarray
    errors: np.ndarray
    discarded: int = 0

    def cell(self, level_a, level_b, basis_pair):
        i = LEVELS.index(level_a)
        j = LEVELS.index(level_b)
        k = BASIS_PAIR_INDEX[basis_pair]
        return (int(self.sent[i, j, k]), int(self.detected[i, j, k]), int(self.errors[i, j, k]))


def subset_qber(tally, level_a, level_b, basis_pair):
    """Observed error fraction of one cell; errors/detected."""
    _, det, err = tally.cell(level_a, level_b, basis_pair)
    if det <= 0:
        raise InsufficientStatisticsError(
            f"no detections in cell ({level_a}, {level_b}, {basis_pair.value}) "
            f"of slice {tally.index}; merge slices or lengthen the interval"
        )
    return err / det


def _largest_remainder(total, weights):
    """Integer apportionment of `total` by `weights` (sums exactly to total)."""
    weights = np.asarray(weights, dtype=float)
    quota = total * weights / weights.sum()
    base = np.floor(quota).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:short]] += 1
    return base


def _cell_probability_grid(params):
    """(p_tracked[4,4,5], p_discarded) emission probabilities per pulse pair."""
    pa = np.asarray(params.intensity_probs_a)
    pb = np.asarray(params.intensity_probs_b)
    ba = np.asarray(params.basis_probs_a)
    bb = np.asarray(params.basis_probs_b)
    tracked = np.zeros((4, 4, len(BASIS_PAIRS)))
    for k, bp in enumerate(BASIS_PAIRS):
        w = ba[BASES.index(bp.value[0])] * bb[BASES.index(bp.value[1])]
        tracked[:, :, k] = np.outer(pa, pb) * w
    w_disc = sum(
        ba[BASES.index(x)] * bb[BASES.index(y)] for x, y in DISCARDED_COMBOS
    )
    return tracked, float(w_disc)


def _slice_angle_factors(params, drift, cfg):
    """Per-slice time spans and sub-step-averaged (cos 2beta, sin 2beta)."""
    duration = cfg.session_duration(params)
    n = cfg.n_slices(params)
    edges = np.minimum(np.arange(n + 1) * cfg.slice_interval, duration)
    beta_edges = beta_at(drift, edges)
    max_span = float(np.max(np.abs(np.diff(beta_edges)))) if n > 0 else 0.0
    if drift.kind == "sinusoidal":
        max_span = max(
            max_span, 2.0 * math.pi * abs(drift.amplitude) / drift.period_s * cfg.slice_interval
        )
    k_sub = max(1, math.ceil(max_span / SUBSTEP_MAX_DRIFT))
    # sub-step midpoints, shape (n, k_sub)
    frac = (np.arange(k_sub) + 0.5) / k_sub
    t_mid = edges[:-1, None] + np.diff(edges)[:, None] * frac[None, :]
    beta_mid = beta_at(drift, t_mid.ravel()).reshape(n, k_sub)
    cos2 = np.cos(2.0 * beta_mid).mean(axis=1)
    sin2 = np.sin(2.0 * beta_mid).mean(axis=1)
    return edges, cos2, sin2


def _expected_rates(params, cos2, sin2):
    """gain[n,4,4,5], qber[n,4,4,5] for per-slice averaged angle factors."""
    t = model._pair_tables(params)
    n = cos2.shape[0]
    gain = np.empty((n, 4, 4, len(BASIS_PAIRS)))
    qber = np.empty_like(gain)
    amp = t["amp_eq"] * (0.5 - params.e_d_xy)  # [4,4]
    e_zz = params.e_d_z + (1.0 - 2.0 * params.e_d_z) * t["err_zz"]
    for k, bp in enumerate(BASIS_PAIRS):
        if bp is BasisPair.ZZ:
            gain[:, :, :, k] = t["gain_zz"][None, :, :]
            qber[:, :, :, k] = e_zz[None, :, :]
            continue
        gain[:, :, :, k] = t["gain_eq"][None, :, :]
        if bp is BasisPair.XX or bp is BasisPair.YY:
            swing = -amp[None, :, :] * cos2[:, None, None]
        elif bp is BasisPair.XY:
            swing = -amp[None, :, :] * sin2[:, None, None]
        else:  # YX
            swing = amp[None, :, :] * sin2[:, None, None]
        qber[:, :, :, k] = 0.5 + swing
    return gain, np.clip(qber, 0.0, 1.0)


def simulate_session(params, drift, cfg):
    """Simulate a full acquisition into per-slice tallies.

    Counts are reproducible bit-for-bit from (params, drift, cfg): the RNG
    stream of a slice is derived from (cfg.seed, slice index), so results do
    not depend on evaluation order.
    """
    n = cfg.n_slices(params)
    edges, cos2, sin2 = _slice_angle_factors(params, drift, cfg)
    gain, qber = _expected_rates(params, cos2, sin2)
    tracked_p, disc_p = _cell_probability_grid(params)
    weights = np.concatenate([tracked_p.ravel(), [disc_p]])
    pulses = _largest_remainder(cfg.n_tot, np.diff(edges))
    tallies = []
    for s in range(n):
        alloc = _largest_remainder(int(pulses[s]), weights)
        sent = alloc[:-1].reshape(tracked_p.shape)
        discarded = int(alloc[-1])
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((int(cfg.seed), int(s))))
        )
        detected = rng.binomial(sent, gain[s])
        errors = rng.binomial(detected, qber[s])
        tallies.append(
            SubsetTally(
                index=s,
                t_start=float(edges[s]),
                t_end=float(edges[s + 1]),
                n_pulses=int(pulses[s]),
                sent=sent,
                detected=detected,
                errors=errors,
                discarded=discarded,
            )
        )
    return tallies


def pooled_counts(tallies):
    """Element-wise sums of (sent, detected, errors) over tallies."""
    sent = np.zeros((4, 4, len(BASIS_PAIRS)), dtype=np.int64)
    detected = np.zeros_like(sent)
    errors = np.zeros_like(sent)
    for t in tallies:
        sent += t.sent
        detected += t.detected
        errors += t.errors
    return sent, detected, errors
