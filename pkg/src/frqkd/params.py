"""System parameters, basis-pair enumeration, and the flat key-value config format.

All probabilities are dimensionless, losses in dB, rates in Hz, intensities in
mean photon number per pulse pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

from .errors import ConfigError

LEVELS = ("mu", "nu", "omega", "vac")
LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS)}

BASES = ("Z", "X", "Y")

PROB_SUM_TOL = 1e-12


class BasisPair(Enum):
    """Sifted basis combinations that carry statistics.

    ZZ is the key basis; the four X/Y pairs feed the frame-invariant
    statistic. Other combinations are discarded by sifting.
    """

    ZZ = "ZZ"
    XX = "XX"
    XY = "XY"
    YX = "YX"
    YY = "YY"


BASIS_PAIRS = (BasisPair.ZZ, BasisPair.XX, BasisPair.XY, BasisPair.YX, BasisPair.YY)
BASIS_PAIR_INDEX = {bp: i for i, bp in enumerate(BASIS_PAIRS)}
EQUATORIAL_PAIRS = (BasisPair.XX, BasisPair.XY, BasisPair.YX, BasisPair.YY)

# basis combinations removed by sifting, tracked only as an aggregate count
DISCARDED_COMBOS = (("Z", "X"), ("Z", "Y"), ("X", "Z"), ("Y", "Z"))


@dataclass(frozen=True)
class PairStatistics:
    """Expected per-emitted-pair detection statistics for one cell.

    gain: probability of a successful Bell-state announcement.
    qber: conditional error probability among announced events (may exceed
    0.5 under frame misalignment).
    """

    gain: float
    qber: float


@dataclass(frozen=True)
class SystemParams:
    """Source, channel, detector and protocol parameters.

    Intensity tuples are ordered (mu, nu, omega, vac) and must be strictly
    decreasing with vac >= 0. Probability tuples must sum to 1 within 1e-12.
    """

    rep_rate: float = 1.0e8
    intensities_a: tuple = (0.4, 0.1, 0.02, 0.0)
    intensities_b: tuple = (0.4, 0.1, 0.02, 0.0)
    intensity_probs_a: tuple = (0.5, 0.25, 0.15, 0.1)
    intensity_probs_b: tuple = (0.5, 0.25, 0.15, 0.1)
    basis_probs_a: tuple = (0.6, 0.25, 0.15)
    basis_probs_b: tuple = (0.6, 0.25, 0.15)
    e_d_xy: float = 0.03
    e_d_z: float = 0.005
    loss_a_db: float = 10.0
    loss_b_db: float = 10.0
    receiver_loss_db: float = 1.40
    det_eff: float = 0.60
    dark_per_gate: float = 1.6e-8
    f_ec: float = 1.16
    eps_sec: float = 1e-10
    eps_cor: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "intensities_a", tuple(float(x) for x in self.intensities_a))
        object.__setattr__(self, "intensities_b", tuple(float(x) for x in self.intensities_b))
        object.__setattr__(self, "intensity_probs_a", tuple(float(x) for x in self.intensity_probs_a))
        object.__setattr__(self, "intensity_probs_b", tuple(float(x) for x in self.intensity_probs_b))
        object.__setattr__(self, "basis_probs_a", tuple(float(x) for x in self.basis_probs_a))
        object.__setattr__(self, "basis_probs_b", tuple(float(x) for x in self.basis_probs_b))
        self.validate()

    def validate(self):
        for party, intens in (("a", self.intensities_a), ("b", self.intensities_b)):
            if len(intens) != 4:
                raise ConfigError("exactly four intensity levels required", key=f"intensities_{party}")
            mu, nu, om, vac = intens
            if not (mu > nu > om > vac >= 0.0):
                raise ConfigError(
                    f"levels must satisfy mu > nu > omega > vac >= 0, got {intens}",
                    key=f"intensities_{party}",
                )
        for key, probs, n in (
            ("intensity_probs_a", self.intensity_probs_a, 4),
            ("intensity_probs_b", self.intensity_probs_b, 4),
            ("basis_probs_a", self.basis_probs_a, 3),
            ("basis_probs_b", self.basis_probs_b, 3),
        ):
            if len(probs) != n:
                raise ConfigError(f"expected {n} probabilities", key=key)
            if any(p < 0.0 or p > 1.0 for p in probs):
                raise ConfigError(f"probabilities must lie in [0, 1], got {probs}", key=key)
            if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
                raise ConfigError(f"probabilities must sum to 1 within {PROB_SUM_TOL}, got sum {sum(probs)!r}", key=key)
        for key, val, lo, hi in (
            ("e_d_xy", self.e_d_xy, 0.0, 0.5),
            ("e_d_z", self.e_d_z, 0.0, 0.5),
        ):
            if not (lo <= val < hi):
                raise ConfigError(f"must lie in [0, 0.5), got {val}", key=key)
        for key, val in (
            ("loss_a_db", self.loss_a_db),
            ("loss_b_db", self.loss_b_db),
            ("receiver_loss_db", self.receiver_loss_db),
        ):
            if val < 0.0:
                raise ConfigError(f"loss must be >= 0 dB, got {val}", key=key)
        if not (0.0 < self.det_eff <= 1.0):
            raise ConfigError(f"must lie in (0, 1], got {self.det_eff}", key="det_eff")
        if not (0.0 <= self.dark_per_gate < 1.0):
            raise ConfigError(f"must lie in [0, 1), got {self.dark_per_gate}", key="dark_per_gate")
        if self.rep_rate <= 0.0:
            raise ConfigError(f"must be > 0, got {self.rep_rate}", key="rep_rate")
        if self.f_ec < 1.0:
            raise ConfigError(f"error-correction inefficiency must be >= 1, got {self.f_ec}", key="f_ec")
        for key, val in (("eps_sec", self.eps_sec), ("eps_cor", self.eps_cor)):
            if not (0.0 < val < 1.0):
                raise ConfigError(f"must lie in (0, 1), got {val}", key=key)

    @property
    def eta_a(self):
        """One-sided transmittance Alice -> detection, detector efficiency folded in."""
        return 10.0 ** (-(self.loss_a_db + self.receiver_loss_db) / 10.0) * self.det_eff

    @property
    def eta_b(self):
        return 10.0 ** (-(self.loss_b_db + self.receiver_loss_db) / 10.0) * self.det_eff

    def intensity(self, party, level):
        intens = self.intensities_a if party == "a" else self.intensities_b
        return intens[LEVEL_INDEX[level]]

    def cell_probability(self, level_a, level_b, basis_a, basis_b):
        """Joint emission probability of one (intensity pair, basis combo) cell."""
        return (
            self.intensity_probs_a[LEVEL_INDEX[level_a]]
            * self.intensity_probs_b[LEVEL_INDEX[level_b]]
            * self.basis_probs_a[BASES.index(basis_a)]
            * self.basis_probs_b[BASES.index(basis_b)]
        )


# ---------------------------------------------------------------------------
# Flat key-value config format (one parameter per line, "key = value").
# ---------------------------------------------------------------------------

CONFIG_SCHEMA_HEADER = "frqkd-config-1"

_PARAM_KEYS = {
    "rep_rate_hz": ("rep_rate", float),
    "e_d_xy": ("e_d_xy", float),
    "e_d_z": ("e_d_z", float),
    "loss_a_db": ("loss_a_db", float),
    "loss_b_db": ("loss_b_db", float),
    "receiver_loss_db": ("receiver_loss_db", float),
    "det_eff": ("det_eff", float),
    "dark_per_gate": ("dark_per_gate", float),
    "f_ec": ("f_ec", float),
    "eps_sec": ("eps_sec", float),
    "eps_cor": ("eps_cor", float),
}

for _party in ("a", "b"):
    for _i, _lv in enumerate(LEVELS):
        _PARAM_KEYS[f"intensity_{_lv}_{_party}"] = ((f"intensities_{_party}", _i), float)
        _PARAM_KEYS[f"prob_{_lv}_{_party}"] = ((f"intensity_probs_{_party}", _i), float)
    for _i, _bs in enumerate(BASES):
        _PARAM_KEYS[f"basis_{_bs.lower()}_{_party}"] = ((f"basis_probs_{_party}", _i), float)

# session / drift keys are parsed by the CLI layer; listed here so the parser
# can tell "unknown key" apart from "not a SystemParams key"
SESSION_KEYS = {
    "n_tot": int,
    "slice_interval_s": float,
    "duration_s": float,
    "seed": int,
    "drift_kind": str,
    "drift_beta0": float,
    "drift_omega_rf": float,
    "drift_amplitude": float,
    "drift_period_s": float,
    "drift_step_var": float,
    "drift_seed": int,
}


def parse_config_text(text):
    """Parse flat key-value config text.

    Returns (values, lines) where values maps key -> typed value and lines
    maps key -> 1-based line number of its definition.
    """
    values = {}
    lines = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != CONFIG_SCHEMA_HEADER:
                raise ConfigError(
                    f"first non-comment line must be the schema header {CONFIG_SCHEMA_HEADER!r}",
                    key="schema", line=lineno,
                )
            header_seen = True
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", key=line.split()[0], line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        if key in _PARAM_KEYS:
            typ = _PARAM_KEYS[key][1]
        elif key in SESSION_KEYS:
            typ = SESSION_KEYS[key]
        else:
            raise ConfigError("unknown key", key=key, line=lineno)
        try:
            if typ is int:
                parsed = int(float(val)) if ("e" in val or "." in val) else int(val)
                if typ is int and float(val) != parsed:
                    raise ValueError(f"not an integer: {val}")
            elif typ is str:
                parsed = val
            else:
                parsed = typ(val)
        except ValueError as exc:
            raise ConfigError(f"cannot parse value {val!r}: {exc}", key=key, line=lineno) from None
        values[key] = parsed
        lines[key] = lineno
    if not header_seen:
        raise ConfigError(f"missing schema header {CONFIG_SCHEMA_HEADER!r}", key="schema", line=1)
    return values, lines


def params_from_config(values, lines=None):
    """Build a validated SystemParams from parsed config values."""
    lines = lines or {}
    kwargs = {}
    tuples = {}
    for key, (target, _typ) in _PARAM_KEYS.items():
        if key not in values:
            continue
        if isinstance(target, tuple):
            name, idx = target
            tuples.setdefault(name, dict())[idx] = values[key]
        else:
            kwargs[target] = values[key]
    defaults = SystemParams.__dataclass_fields__
    for name, parts in tuples.items():
        base = list(defaults[name].default)
        for idx, val in parts.items():
            base[idx] = val
        kwargs[name] = tuple(base)
    try:
        return SystemParams(**kwargs)
    except ConfigError as exc:
        # map the violated field back to a config key and its line
        for key, (target, _typ) in _PARAM_KEYS.items():
            name = target[0] if isinstance(target, tuple) else target
            if exc.key is not None and name == exc.key and key in lines:
                raise ConfigError(str(exc), key=key, line=lines[key]) from None
        raise


def params_to_config_text(params, session_values=None):
    """Serialize SystemParams (and optional session keys) to config text."""
    out = [CONFIG_SCHEMA_HEADER]
    out.append(f"rep_rate_hz = {params.rep_rate!r}")
    for party in ("a", "b"):
        intens = getattr(params, f"intensities_{party}")
        probs = getattr(params, f"intensity_probs_{party}")
        for i, lv in enumerate(LEVELS):
            out.append(f"intensity_{lv}_{party} = {intens[i]!r}")
        for i, lv in enumerate(LEVELS):
            out.append(f"prob_{lv}_{party} = {probs[i]!r}")
        bases = getattr(params, f"basis_probs_{party}")
        for i, bs in enumerate(BASES):
            out.append(f"basis_{bs.lower()}_{party} = {bases[i]!r}")
    for key in ("e_d_xy", "e_d_z", "loss_a_db", "loss_b_db", "receiver_loss_db",
                "det_eff", "dark_per_gate", "f_ec", "eps_sec", "eps_cor"):
        out.append(f"{key} = {getattr(params, key)!r}")
    for key, val in (session_values or {}).items():
        if key not in SESSION_KEYS:
            raise ConfigError("not a session key", key=key)
        out.append(f"{key} = {val!r}")
    return "\n".join(out) + "\n"
