"""Frame-angle classification and dataset merging.

Each time slice gets a classification angle rho in [0, pi) inverted from its
X-basis error quadrature; the interval [0, pi) is split into m arcs offset by
rho_offset and slices are merged per arc. Subsets that cannot be classified
(no interference amplitude, empty cells, or rates far outside the model
envelope) land in an auditable reject pool, never silently dropped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model
from .drift import SubsetTally, pooled_counts
from .errors import (
    InsufficientStatisticsError,
    StatisticsInconsistentError,
    StatisticsInconsistentWarning,
    UnclassifiableSubsetError,
)
from .params import BASIS_PAIR_INDEX, LEVELS, BasisPair, SystemParams

EPS_AMPLITUDE = 1e-4  # below this the X/Y quadrature carries no angle information
ARG_CLAMP_TOLERANCE = 0.1  # |arccos argument| beyond 1 + this flags inconsistency

_XX = BASIS_PAIR_INDEX[BasisPair.XX]
_XY = BASIS_PAIR_INDEX[BasisPair.XY]


@dataclass(frozen=True)
class ClassificationConfig:
    """Partition parameters and the source of the quadrature amplitude.

    pool_pairs lists the intensity-level pairs whose X-basis cells feed the
    per-subset angle estimate (signal-signal only by default; pooling decoy
    pairs trades amplitude for counts).
    """

    m: int = 1
    rho_offset: float = 0.0
    amplitude_source: str = "model_derived"  # or "self_calibrated"
    pool_pairs: tuple = (("mu", "mu"),)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not (0.0 <= self.rho_offset < math.pi / self.m):
            raise ValueError(
                f"rho_offset must lie in [0, pi/m) = [0, {math.pi / self.m:.6f}), got {self.rho_offset}"
            )
        if self.amplitude_source not in ("model_derived", "self_calibrated"):
            raise ValueError(f"unknown amplitude_source: {self.amplitude_source}")
        if not self.pool_pairs:
            raise ValueError("pool_pairs must name at least one intensity pair")


@dataclass
class ClassifiedDataset:
    """Merged tallies of all subsets assigned to one partition arc."""

    j: int
    member_indices: list
    sent: np.ndarray
    detected: np.ndarray
    errors: np.ndarray
    n_pulses: int = 0
    discarded: int = 0

    @property
    def n_events(self):
        return int(self.detected.sum())

    def cell(self, level_a, level_b, basis_pair):
        i = LEVELS.index(level_a)
        j = LEVELS.index(level_b)
        k = BASIS_PAIR_INDEX[basis_pair]
        return (int(self.sent[i, j, k]), int(self.detected[i, j, k]), int(self.errors[i, j, k]))


def estimate_rho(e_xx, e_xy, amplitude, e_d_xy, eps_amplitude=EPS_AMPLITUDE):
    """Invert the X-basis error quadrature to a frame angle in [0, pi).

    The arccos argument is clamped to [-1, 1] to absorb sampling noise; an
    argument beyond 1 + ARG_CLAMP_TOLERANCE is treated as evidence of model
    miscalibration and raises StatisticsInconsistentError instead of being
    clamped. Amplitudes at or below eps_amplitude are unclassifiable.
    """
    if amplitude <= eps_amplitude:
        raise UnclassifiableSubsetError(
            f"quadrature amplitude {amplitude:.3g} <= {eps_amplitude:.3g}; no angle information"
        )
    if not e_d_xy < 0.5:
        raise ValueError("e_d_xy must be < 0.5")
    arg = (e_xx - 0.5) / (-amplitude * (0.5 - e_d_xy))
    if abs(arg) > 1.0 + ARG_CLAMP_TOLERANCE:
        warnings.warn(
            f"arccos argument {arg:.3f} beyond clamping tolerance; statistics inconsistent "
            "with the calibrated amplitude",
            StatisticsInconsistentWarning,
            stacklevel=2,
        )
        raise StatisticsInconsistentError(
            f"arccos argument {arg:.3f} outside [-1.1, 1.1]"
        )
    arg = min(1.0, max(-1.0, arg))
    half = 0.5 * math.acos(arg)
    rho = half if e_xy >= 0.5 else math.pi - half
    return rho if rho < math.pi else 0.0


def self_calibrate_amplitude(e_xx, e_xy, e_d_xy):
    """Quadrature radius estimate of the amplitude, clamped to [0, 1]."""
    if not e_d_xy < 0.5:
        raise ValueError("e_d_xy must be < 0.5")
    radius = math.hypot(e_xx - 0.5, e_xy - 0.5) / (0.5 - e_d_xy)
    return min(1.0, max(0.0, radius))


def slice_index(rho_i, m, rho_offset):
    """Partition arc (1..m) containing rho_i.

    Arc 1 is the wrap-around arc [(m-1)pi/m + rho, pi) u [0, rho); interior
    angles keep the plain half-open-arc index floor((rho_i - rho)/(pi/m)) + 1,
    whose residual first arc [rho, pi/m + rho) takes the remaining label m.
    Labels only group subsets; downstream results are relabeling-invariant.
    """
    if not (0.0 <= rho_i < math.pi):
        raise ValueError(f"rho_i must lie in [0, pi), got {rho_i}")
    if m == 1:
        return 1
    width = math.pi / m
    if rho_i < rho_offset or rho_i >= (m - 1) * width + rho_offset:
        return 1
    k = int((rho_i - rho_offset) / width) + 1
    k = min(k, m - 1)  # guard the upper boundary against rounding
    return k if k >= 2 else m


def _pooled_xy_rates(counts, pairs):
    """Pooled (e_xx, e_xy) over the configured intensity pairs; counts-based."""
    _sent, det, err = counts
    det_xx = det_xy = err_xx = err_xy = 0
    for la, lb in pairs:
        i, j = LEVELS.index(la), LEVELS.index(lb)
        det_xx += int(det[i, j, _XX])
        err_xx += int(err[i, j, _XX])
        det_xy += int(det[i, j, _XY])
        err_xy += int(err[i, j, _XY])
    if det_xx == 0 or det_xy == 0:
        raise InsufficientStatisticsError("empty XX or XY cell in classification pool")
    return err_xx / det_xx, err_xy / det_xy


def pooled_model_amplitude(params, pairs):
    """Gain-weighted effective amplitude of a pooled group of intensity pairs."""
    num = 0.0
    den = 0.0
    t = model._pair_tables(params)
    for la, lb in pairs:
        i, j = LEVELS.index(la), LEVELS.index(lb)
        q = t["gain_eq"][i, j]
        num += q * t["amp_eq"][i, j]
        den += q
    return num / den if den > 0.0 else 0.0


def _self_calibrated_amplitude(subsets, params, cfg):
    """Median per-subset quadrature radius (noise biases single estimates up)."""
    values = []
    for tally in subsets:
        try:
            e_xx, e_xy = _pooled_xy_rates((tally.sent, tally.detected, tally.errors), cfg.pool_pairs)
        except InsufficientStatisticsError:
            continue
        values.append(self_calibrate_amplitude(e_xx, e_xy, params.e_d_xy))
    if not values:
        raise InsufficientStatisticsError("no subset has usable X-basis cells for self-calibration")
    return float(np.median(values))


def classify_subsets(subsets, params, cfg):
    """Assign each subset an angle and merge per partition arc.

    Returns (datasets, reject_pool, assignments): m datasets in arc order
    (possibly with empty members), a reject ClassifiedDataset (j = 0) holding
    every unclassifiable subset, and the per-subset list of (index, rho, j)
    with rho = None for rejected subsets.
    """
    if not subsets:
        raise ValueError("classify_subsets requires at least one subset")
    if cfg.amplitude_source == "model_derived":
        amplitude = pooled_model_amplitude(params, cfg.pool_pairs)
    else:
        amplitude = _self_calibrated_amplitude(subsets, params, cfg)

    shape = subsets[0].sent.shape
    datasets = [
        ClassifiedDataset(
            j=j + 1,
            member_indices=[],
            sent=np.zeros(shape, dtype=np.int64),
            detected=np.zeros(shape, dtype=np.int64),
            errors=np.zeros(shape, dtype=np.int64),
        )
        for j in range(cfg.m)
    ]
    reject = ClassifiedDataset(
        j=0,
        member_indices=[],
        sent=np.zeros(shape, dtype=np.int64),
        detected=np.zeros(shape, dtype=np.int64),
        errors=np.zeros(shape, dtype=np.int64),
    )
    assignments = []
    for tally in subsets:
        try:
            e_xx, e_xy = _pooled_xy_rates((tally.sent, tally.detected, tally.errors), cfg.pool_pairs)
            rho = estimate_rho(e_xx, e_xy, amplitude, params.e_d_xy)
            j = slice_index(rho, cfg.m, cfg.rho_offset)
        except (UnclassifiableSubsetError, InsufficientStatisticsError):
            target, rho, j = reject, None, 0
        else:
            target = datasets[j - 1]
        target.member_indices.append(tally.index)
        target.sent += tally.sent
        target.detected += tally.detected
        target.errors += tally.errors
        target.n_pulses += tally.n_pulses
        target.discarded += tally.discarded
        assignments.append((tally.index, rho, j))
    return datasets, reject, assignments


# ---------------------------------------------------------------------------
# Classification report (structured text, consumed by the CLI)
# ---------------------------------------------------------------------------

REPORT_SCHEMA_HEADER = "frqkd-classification-1"


def classification_report(datasets, reject, assignments):
    """Render per-subset assignments and per-dataset QBER summaries."""
    lines = [REPORT_SCHEMA_HEADER]
    lines.append("subset_index,rho,dataset")
    for idx, rho, j in assignments:
        rho_txt = "" if rho is None else repr(rho)
        lines.append(f"{idx},{rho_txt},{j}")
    lines.append("dataset,n_subsets,n_events,pair,E_XX,E_XY,E_YX,E_YY")
    mu_i = LEVELS.index("mu")
    for ds in list(datasets) + [reject]:
        vals = []
        for bp in (BasisPair.XX, BasisPair.XY, BasisPair.YX, BasisPair.YY):
            k = BASIS_PAIR_INDEX[bp]
            det = int(ds.detected[mu_i, mu_i, k])
            err = int(ds.errors[mu_i, mu_i, k])
            vals.append(f"{err / det:.6f}" if det > 0 else "")
        lines.append(
            f"{ds.j},{len(ds.member_indices)},{ds.n_events},mu-mu," + ",".join(vals)
        )
    return "\n".join(lines) + "\n"
