"""Per-dataset key distillation: decoy bounds, leakage, and merged rates.

The decoy analysis is a linear program over photon-number-pair yields
truncated at N_CUT photons per side, with the tail mass assigned worst-case
and every observed rate replaced by its two-sided Hoeffding worst case at a
per-use failure probability. Minimizing (maximizing) the single-photon
objective over the feasible region certifies a lower (upper) bound: the true
yield vector is feasible except with the allotted failure probability, so the
optimum brackets the truth by construction.

The per-dataset secret length composes the single-photon fraction, the
frame-invariant statistic's bound on the eavesdropper's information, error
correction leakage, and the correctness/privacy-amplification epsilon terms;
negative lengths are floored at zero (a dataset may simply be discarded).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import model
from .classify import ClassificationConfig, ClassifiedDataset, classify_subsets
from .drift import pooled_counts
from .errors import ComputationError, InsufficientStatisticsError
from .model import binary_entropy
from .params import (
    BASIS_PAIR_INDEX,
    BASIS_PAIRS,
    EQUATORIAL_PAIRS,
    LEVELS,
    BasisPair,
    SystemParams,
)

N_CUT = 7  # photon-number truncation of the decoy linear program

# Fixed epsilon allocation inside one dataset: one two-sided Hoeffding use per
# (cell, observable) pair over the 16-cell grid of the three estimation
# families (key basis, cosine quadrature, sine quadrature), plus privacy
# amplification.
_N_FAMILIES = 3
_N_HOEFFDING_USES = 2 * len(LEVELS) * len(LEVELS) * _N_FAMILIES
_N_EPS_PARTS = _N_HOEFFDING_USES + 1

_TINY_YIELD = 1e-15


@dataclass(frozen=True)
class DecoyBounds:
    """Certified single-photon-pair bounds for one dataset.

    e11_xy_bounds maps each X/Y basis pair to a closed interval known to
    contain the single-photon error rate. audit carries every intermediate
    LP optimum for report serialization.
    """

    y11_low: float
    e11_zz_up: float
    e11_xy_bounds: dict
    audit: dict = field(default_factory=dict)


def _kl_bernoulli(q, p):
    """KL divergence between Bernoulli(q) and Bernoulli(p)."""
    if p <= 0.0 or p >= 1.0:
        return math.inf if (q != p) else 0.0
    term0 = 0.0 if q == 0.0 else q * math.log(q / p)
    term1 = 0.0 if q == 1.0 else (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return term0 + term1


def rate_confidence_interval(k, n, eps):
    """Two-sided confidence interval for a Bernoulli rate from k/n at failure eps.

    Uses the relative-entropy form of Hoeffding's tail inequality
    (P(K >= n q) <= exp(-n KL(q||p)) for q > p, and symmetrically below),
    inverted by bisection with eps/2 per side. For rare events this is
    near-multiplicative where the additive sqrt(ln(2/eps)/2n) radius would
    swamp the rate itself.
    """
    if n <= 0:
        return 0.0, 1.0
    q = k / n
    budget = math.log(2.0 / eps) / n

    def invert(lo, hi, target_above):
        # find p between lo and hi with KL(q||p) == budget; KL is monotone
        # in p on either side of q
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _kl_bernoulli(q, mid) > budget:
                lo, hi = (lo, mid) if target_above else (mid, hi)
            else:
                lo, hi = (mid, hi) if target_above else (lo, mid)
        return 0.5 * (lo + hi)

    p_hi = 1.0 if _kl_bernoulli(q, 1.0) <= budget else invert(q, 1.0, target_above=True)
    p_lo = 0.0 if q == 0.0 or _kl_bernoulli(q, 0.0) <= budget else invert(0.0, q, target_above=False)
    return p_lo, p_hi


def hoeffding_radius(eps, n):
    """Additive two-sided Hoeffding radius (kept for coarse checks)."""
    if n <= 0:
        return 1.0
    return math.sqrt(math.log(2.0 / eps) / (2.0 * n))


@dataclass(frozen=True)
class EpsilonBudget:
    """Uniform split of a dataset's security failure budget.

    eps_use covers each two-sided Hoeffding adjustment; eps_pa the privacy
    amplification term. total_consumed() never exceeds eps_dataset.
    """

    eps_dataset: float

    @property
    def eps_use(self):
        return self.eps_dataset / _N_EPS_PARTS

    @property
    def eps_pa(self):
        return self.eps_dataset / _N_EPS_PARTS

    def total_consumed(self):
        return _N_HOEFFDING_USES * self.eps_use + self.eps_pa

    def assert_within_budget(self):
        assert self.total_consumed() <= self.eps_dataset * (1.0 + 1e-12), (
            f"epsilon bookkeeping violated: {self.total_consumed()} > {self.eps_dataset}"
        )


def _poisson_matrix(params, level_a, level_b):
    """(p_vec[(N_CUT+1)^2], tail) Poisson weights of one intensity pair."""
    pa = model.poisson_weights(params.intensity("a", level_a), N_CUT)
    pb = model.poisson_weights(params.intensity("b", level_b), N_CUT)
    p = np.outer(pa, pb)
    return p.ravel(), 1.0 - float(p.sum())


def _pooled_cells(dataset, family):
    """(sent, det, err)[4,4] for one estimation family.

    Families pool exactly-equivalent basis pairs: the cosine quadrature pair
    (XX, YY) shares gains and error rates; the sine pair's statistics are
    mirror images (E_YX = 1 - E_XY), so YX non-errors sample the XY error
    rate. Pooling doubles the counts without changing what is estimated.
    """
    if family == "zz":
        k = BASIS_PAIR_INDEX[BasisPair.ZZ]
        return dataset.sent[:, :, k], dataset.detected[:, :, k], dataset.errors[:, :, k]
    if family == "cos":
        kx = BASIS_PAIR_INDEX[BasisPair.XX]
        ky = BASIS_PAIR_INDEX[BasisPair.YY]
        sent = dataset.sent[:, :, kx] + dataset.sent[:, :, ky]
        det = dataset.detected[:, :, kx] + dataset.detected[:, :, ky]
        err = dataset.errors[:, :, kx] + dataset.errors[:, :, ky]
        return sent, det, err
    if family == "sin":
        kxy = BASIS_PAIR_INDEX[BasisPair.XY]
        kyx = BASIS_PAIR_INDEX[BasisPair.YX]
        sent = dataset.sent[:, :, kxy] + dataset.sent[:, :, kyx]
        det = dataset.detected[:, :, kxy] + dataset.detected[:, :, kyx]
        err = dataset.errors[:, :, kxy] + (
            dataset.detected[:, :, kyx] - dataset.errors[:, :, kyx]
        )
        return sent, det, err
    raise ValueError(f"unknown family: {family}")


def _family_rows(dataset, params, family, eps_use):
    """Hoeffding-adjusted observation rows of one estimation family.

    Each row: (p_vec, tail, q_lo, q_hi, eg_lo, eg_hi) with rate intervals for
    the gain and the error gain.
    """
    sent_g, det_g, err_g = _pooled_cells(dataset, family)
    rows = []
    for i, la in enumerate(LEVELS):
        for j, lb in enumerate(LEVELS):
            sent = int(sent_g[i, j])
            if sent <= 0:
                continue
            det = int(det_g[i, j])
            err = int(err_g[i, j])
            q_lo, q_hi = rate_confidence_interval(det, sent, eps_use)
            eg_lo, eg_hi = rate_confidence_interval(err, sent, eps_use)
            p_vec, tail = _poisson_matrix(params, la, lb)
            rows.append(
                (
                    p_vec,
                    tail,
                    max(0.0, q_lo - _LP_SLACK),
                    min(1.0, q_hi + _LP_SLACK),
                    max(0.0, eg_lo - _LP_SLACK),
                    min(1.0, eg_hi + _LP_SLACK),
                )
            )
    return rows


_N_VARS = (N_CUT + 1) ** 2
_IDX_11 = 1 * (N_CUT + 1) + 1


# yields sit at 1e-9..1e-3 scale; default solver tolerances (1e-7) would
# swallow the feasible slack entirely
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}

# absolute widening of every rate interval: keeps the polytope comfortably
# wider than the solver tolerance; purely conservative (loosens bounds by
# ~1e-9/p11 on the yields, orders of magnitude below their statistical width)
_LP_SLACK = 1e-9


def _solve(c, a_ub, b_ub, n_vars, what):
    res = linprog(
        c,
        A_ub=a_ub if len(b_ub) else None,
        b_ub=b_ub if len(b_ub) else None,
        bounds=[(0.0, 1.0)] * n_vars,
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status != 0:
        raise ComputationError(
            f"decoy linear program infeasible while bounding {what}; observed statistics "
            f"are inconsistent with the configured intensities ({res.message})"
        )
    return float(res.fun)


# Joint-study variable layout: the low photon-number yields (n, m <= 1) are
# basis-independent (an announcement needs two clicks, and with at most one
# real photon per side the click pattern cannot depend on the encoded
# states), so all three families share them; this lets the well-populated
# key-basis data pin the single-photon yield used by the X/Y error bounds.
# High-block yields are genuinely basis-dependent (same-side multiphotons
# interfere differently per basis) and stay separate per family.
_LOW_RAVEL = (0, 1, N_CUT + 1, N_CUT + 2)  # (0,0), (0,1), (1,0), (1,1)
_HIGH_RAVEL = tuple(i for i in range(_N_VARS) if i not in _LOW_RAVEL)
_FAMILIES = ("zz", "cos", "sin")
_N_SHARED = len(_LOW_RAVEL)
_N_HIGH = len(_HIGH_RAVEL)
_OFF_HIGH = {f: _N_SHARED + i * _N_HIGH for i, f in enumerate(_FAMILIES)}
_OFF_Z = {
    f: _N_SHARED + len(_FAMILIES) * _N_HIGH + i * _N_VARS for i, f in enumerate(_FAMILIES)
}
_N_JOINT = _N_SHARED + len(_FAMILIES) * (_N_HIGH + _N_VARS)
_IDX_Y11_SHARED = 3  # position of (1,1) inside the shared block


def _joint_constraints(dataset, params, eps_use):
    """A_ub, b_ub of the joint three-family decoy program."""
    a_ub = []
    b_ub = []
    for family in _FAMILIES:
        off_h = _OFF_HIGH[family]
        off_z = _OFF_Z[family]
        for p_vec, tail, q_lo, q_hi, eg_lo, eg_hi in _family_rows(
            dataset, params, family, eps_use
        ):
            gain_row = np.zeros(_N_JOINT)
            gain_row[:_N_SHARED] = p_vec[list(_LOW_RAVEL)]
            gain_row[off_h : off_h + _N_HIGH] = p_vec[list(_HIGH_RAVEL)]
            err_row = np.zeros(_N_JOINT)
            err_row[off_z : off_z + _N_VARS] = p_vec
            a_ub.extend([gain_row, -gain_row, err_row, -err_row])
            b_ub.extend([q_hi, -(q_lo - tail), eg_hi, -(eg_lo - tail)])
        # coupling Z_nm <= Y_nm (Y split between shared and high blocks)
        for pos in range(_N_VARS):
            row = np.zeros(_N_JOINT)
            row[off_z + pos] = 1.0
            if pos in _LOW_RAVEL:
                row[_LOW_RAVEL.index(pos)] = -1.0
            else:
                row[off_h + _HIGH_RAVEL.index(pos)] = -1.0
            a_ub.append(row)
            b_ub.append(0.0)
    return np.array(a_ub), np.array(b_ub)


def _optimize_joint(a_ub, b_ub, var_index, maximize, what):
    c = np.zeros(_N_JOINT)
    c[var_index] = -1.0 if maximize else 1.0
    val = _solve(c, a_ub, b_ub, _N_JOINT, what)
    return -val if maximize else val


def decoy_bounds(dataset, params, eps):
    """Certified decoy-state bounds for one dataset.

    eps is the dataset's statistical-estimation failure budget; it is split
    uniformly over the fixed grid of Hoeffding uses. Raises
    InsufficientStatisticsError when the key-basis signal cell is empty and
    ComputationError when the program is infeasible.
    """
    mu_i = LEVELS.index("mu")
    zz_k = BASIS_PAIR_INDEX[BasisPair.ZZ]
    if int(dataset.sent[mu_i, mu_i, zz_k]) <= 0:
        raise InsufficientStatisticsError("dataset has no key-basis signal statistics")
    eps_use = eps / _N_HOEFFDING_USES
    a_ub, b_ub = _joint_constraints(dataset, params, eps_use)

    y11_low = _optimize_joint(a_ub, b_ub, _IDX_Y11_SHARED, False, "Y11 lower")
    y11_up = _optimize_joint(a_ub, b_ub, _IDX_Y11_SHARED, True, "Y11 upper")
    audit = {"eps_use": eps_use, "y11_low": y11_low, "y11_up": y11_up}

    def error_interval(family):
        idx = _OFF_Z[family] + _IDX_11
        z_lo = _optimize_joint(a_ub, b_ub, idx, False, f"Z11 {family} lower")
        z_up = _optimize_joint(a_ub, b_ub, idx, True, f"Z11 {family} upper")
        e_lo = 0.0 if y11_up <= _TINY_YIELD else max(0.0, min(1.0, z_lo / y11_up))
        e_up = 1.0 if y11_low <= _TINY_YIELD else max(0.0, min(1.0, z_up / y11_low))
        if e_lo > e_up:
            e_lo = e_up
        audit[family] = {"z11_low": z_lo, "z11_up": z_up, "e_low": e_lo, "e_up": e_up}
        return e_lo, e_up

    e11_zz_up = min(0.5, error_interval("zz")[1])
    cos_iv = error_interval("cos")
    sin_iv = error_interval("sin")
    e11_xy_bounds = {
        BasisPair.XX: cos_iv,
        BasisPair.YY: cos_iv,
        BasisPair.XY: sin_iv,
        BasisPair.YX: (1.0 - sin_iv[1], 1.0 - sin_iv[0]),
    }
    return DecoyBounds(
        y11_low=y11_low, e11_zz_up=e11_zz_up, e11_xy_bounds=e11_xy_bounds, audit=audit
    )


def c_statistic_lower(bounds):
    """Worst-case frame-invariant statistic over the e11 interval bounds.

    C = sum over the four X/Y pairs of (1 - 2 e11)^2, minimized per interval;
    0 when every interval straddles one half, 2 for two perfect quadratures.
    """
    total = 0.0
    for bp in EQUATORIAL_PAIRS:
        lo, up = bounds.e11_xy_bounds[bp]
        if lo <= 0.5 <= up:
            continue
        e = lo if lo > 0.5 else up
        total += (1.0 - 2.0 * e) ** 2
    return min(2.0, max(0.0, total))


def eve_information(c_low, e11_zz_up):
    """Upper bound on the eavesdropper's information per single-photon key bit.

    I_E = (1-e) h((1+u)/2) + e h((1+v)/2) with u = min(sqrt(C/2)/(1-e), 1)
    and v = sqrt(max(C/2 - (1-e)^2 u^2, 0))/e (v = 0 when e = 0). v is capped
    at 1 when C exceeds what the given e admits. Nonincreasing in c_low.
    """
    if not (0.0 <= c_low <= 2.0):
        raise ValueError(f"c_low out of range [0, 2]: {c_low}")
    if not (0.0 <= e11_zz_up <= 0.5):
        raise ValueError(f"e11_zz_up out of range [0, 0.5]: {e11_zz_up}")
    e = e11_zz_up
    root = math.sqrt(c_low / 2.0)
    u = min(root / (1.0 - e), 1.0) if e < 1.0 else 1.0
    if e == 0.0:
        v = 0.0
    else:
        v = math.sqrt(max(c_low / 2.0 - (1.0 - e) ** 2 * u**2, 0.0)) / e
        v = min(v, 1.0)
    i_e = (1.0 - e) * binary_entropy((1.0 + u) / 2.0) + e * binary_entropy((1.0 + v) / 2.0)
    return min(1.0, max(0.0, i_e))


def secret_key_length(dataset, params, bounds, i_e, eps_cor, eps_pa):
    """Secure bits extractable from one dataset, floored at zero.

    L = s11_low (1 - I_E) - f_ec n_zz h(E_zz) - log2(2/eps_cor) - 2 log2(1/eps_pa)
    with s11_low the certified single-photon signal events in the key basis.
    """
    sent_zz, n_zz, err_zz = dataset.cell("mu", "mu", BasisPair.ZZ)
    if n_zz <= 0:
        return 0
    p1a = params.intensity("a", "mu") * math.exp(-params.intensity("a", "mu"))
    p1b = params.intensity("b", "mu") * math.exp(-params.intensity("b", "mu"))
    s11_low = sent_zz * p1a * p1b * bounds.y11_low
    e_zz_obs = err_zz / n_zz
    leak_ec = params.f_ec * n_zz * binary_entropy(e_zz_obs)
    length = (
        s11_low * (1.0 - i_e)
        - leak_ec
        - math.log2(2.0 / eps_cor)
        - 2.0 * math.log2(1.0 / eps_pa)
    )
    return max(0, math.floor(length))


# ---------------------------------------------------------------------------
# Per-dataset pipeline and merged reports
# ---------------------------------------------------------------------------


@dataclass
class DatasetResult:
    """Everything the distillation derived from one dataset (auditable)."""

    j: int
    n_members: int
    n_events: int
    n_zz: int
    e_zz_obs: float
    s11_low: float
    y11_low: float
    e11_zz_up: float
    e11_xy_bounds: dict
    c_low: float
    i_e: float
    length: int
    rate_per_event: float
    note: str = ""

    def to_dict(self):
        return {
            "dataset": self.j,
            "n_members": self.n_members,
            "n_events": self.n_events,
            "n_zz": self.n_zz,
            "e_zz_observed": self.e_zz_obs,
            "s11_low": self.s11_low,
            "y11_low": self.y11_low,
            "e11_zz_up": self.e11_zz_up,
            "e11_xy_bounds": {bp.value: list(v) for bp, v in self.e11_xy_bounds.items()},
            "c_low": self.c_low,
            "i_e": self.i_e,
            "secure_bits": self.length,
            "rate_per_event": self.rate_per_event,
            "note": self.note,
        }


@dataclass
class KeyRateReport:
    """Merged secret-key accounting for a session.

    total_bits == sum of per-dataset lengths exactly (integer identity);
    rate_per_pulse = total_bits / n_tot and skr_bps = rate * rep_rate.
    """

    n_tot: int
    rep_rate: float
    m: int
    rho_offset: float
    lengths: list
    dataset_results: list = field(default_factory=list)
    eps_sec: float = 0.0
    eps_cor: float = 0.0
    rejected_subsets: int = 0
    rejected_events: int = 0

    @property
    def total_bits(self):
        return sum(self.lengths)

    @property
    def rate_per_pulse(self):
        return self.total_bits / self.n_tot

    @property
    def skr_bps(self):
        return self.rate_per_pulse * self.rep_rate

    def to_dict(self):
        return {
            "schema": "frqkd-report-1",
            "n_tot": self.n_tot,
            "rep_rate_hz": self.rep_rate,
            "m": self.m,
            "rho_offset": self.rho_offset,
            "eps_sec": self.eps_sec,
            "eps_cor": self.eps_cor,
            "secure_bits_per_dataset": list(self.lengths),
            "total_secure_bits": self.total_bits,
            "rate_per_pulse": self.rate_per_pulse,
            "skr_bps": self.skr_bps,
            "rejected_subsets": self.rejected_subsets,
            "rejected_events": self.rejected_events,
            "datasets": [r.to_dict() for r in self.dataset_results],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def merged_key_rate(lengths, n_tot, rep_rate, m=None, rho_offset=0.0):
    """Combine per-dataset secure lengths into the overall rate report."""
    clean = [max(0, int(x)) for x in lengths]
    return KeyRateReport(
        n_tot=int(n_tot),
        rep_rate=float(rep_rate),
        m=m if m is not None else len(clean),
        rho_offset=rho_offset,
        lengths=clean,
    )


def _min_useful_events(eps_cor_j, eps_pa_j):
    """Below this many key-basis detections the epsilon terms alone force L = 0."""
    return math.log2(2.0 / eps_cor_j) + 2.0 * math.log2(1.0 / eps_pa_j)


def distill_dataset(dataset, params, eps_sec_dataset, eps_cor_dataset):
    """Run decoy bounds, the invariant statistic, and the length formula."""
    budget = EpsilonBudget(eps_sec_dataset)
    budget.assert_within_budget()
    _sent_zz, n_zz, err_zz = dataset.cell("mu", "mu", BasisPair.ZZ)
    base = dict(
        j=dataset.j,
        n_members=len(dataset.member_indices),
        n_events=dataset.n_events,
        n_zz=n_zz,
        e_zz_obs=err_zz / n_zz if n_zz > 0 else 0.5,
    )
    if n_zz <= _min_useful_events(eps_cor_dataset, budget.eps_pa):
        return DatasetResult(
            **base,
            s11_low=0.0,
            y11_low=0.0,
            e11_zz_up=0.5,
            e11_xy_bounds={bp: (0.0, 1.0) for bp in EQUATORIAL_PAIRS},
            c_low=0.0,
            i_e=1.0,
            length=0,
            rate_per_event=0.0,
            note="too few key-basis events for the epsilon terms",
        )
    try:
        bounds = decoy_bounds(dataset, params, _N_HOEFFDING_USES * budget.eps_use)
    except InsufficientStatisticsError as exc:
        return DatasetResult(
            **base,
            s11_low=0.0,
            y11_low=0.0,
            e11_zz_up=0.5,
            e11_xy_bounds={bp: (0.0, 1.0) for bp in EQUATORIAL_PAIRS},
            c_low=0.0,
            i_e=1.0,
            length=0,
            rate_per_event=0.0,
            note=str(exc),
        )
    c_low = c_statistic_lower(bounds)
    i_e = eve_information(c_low, bounds.e11_zz_up)
    length = secret_key_length(
        dataset, params, bounds, i_e, eps_cor=eps_cor_dataset, eps_pa=budget.eps_pa
    )
    p1a = params.intensity("a", "mu") * math.exp(-params.intensity("a", "mu"))
    p1b = params.intensity("b", "mu") * math.exp(-params.intensity("b", "mu"))
    s11_low = dataset.cell("mu", "mu", BasisPair.ZZ)[0] * p1a * p1b * bounds.y11_low
    return DatasetResult(
        **base,
        s11_low=s11_low,
        y11_low=bounds.y11_low,
        e11_zz_up=bounds.e11_zz_up,
        e11_xy_bounds=dict(bounds.e11_xy_bounds),
        c_low=c_low,
        i_e=i_e,
        length=length,
        rate_per_event=length / dataset.n_events if dataset.n_events else 0.0,
    )


def distill_datasets(datasets, params, n_tot, m, rho_offset, reject=None,
                     eps_per_dataset=None):
    """Distill every dataset and merge; the free-running pipeline's tail end.

    eps_per_dataset overrides the uniform eps_sec/m split (used by the
    optimizer for security-consistent like-for-like comparisons).
    """
    eps_d = eps_per_dataset if eps_per_dataset is not None else params.eps_sec / m
    eps_c = params.eps_cor / m
    assert eps_d * m <= params.eps_sec * (1.0 + 1e-12) or eps_per_dataset is not None
    results = [distill_dataset(ds, params, eps_d, eps_c) for ds in datasets]
    report = merged_key_rate(
        [r.length for r in results], n_tot, params.rep_rate, m=m, rho_offset=rho_offset
    )
    report.dataset_results = results
    report.eps_sec = eps_d * m
    report.eps_cor = eps_c * m
    if reject is not None:
        report.rejected_subsets = len(reject.member_indices)
        report.rejected_events = reject.n_events
    return report


def original_scheme_rate(subsets, params, n_tot=None, eps_per_dataset=None):
    """Pooled single-dataset baseline: no classification, m = 1."""
    sent, detected, errors = pooled_counts(subsets)
    pooled = ClassifiedDataset(
        j=1,
        member_indices=[t.index for t in subsets],
        sent=sent,
        detected=detected,
        errors=errors,
        n_pulses=sum(t.n_pulses for t in subsets),
        discarded=sum(t.discarded for t in subsets),
    )
    if n_tot is None:
        n_tot = pooled.n_pulses
    return distill_datasets(
        [pooled], params, n_tot, m=1, rho_offset=0.0, eps_per_dataset=eps_per_dataset
    )


def free_running_rate(subsets, params, cfg, n_tot=None, eps_per_dataset=None):
    """Classify subsets with cfg and distill the resulting datasets."""
    datasets, reject, _assign = classify_subsets(subsets, params, cfg)
    if n_tot is None:
        n_tot = sum(t.n_pulses for t in subsets)
    return distill_datasets(
        datasets, params, n_tot, m=cfg.m, rho_offset=cfg.rho_offset,
        reject=reject, eps_per_dataset=eps_per_dataset,
    )
