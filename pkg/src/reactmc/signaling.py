"""Binary modulation schedules and Poisson-count detectors.

Maps bit sequences to release schedules for the two signaling species
(type-shift, on-off, and order-shift keying, plus single-species and
simultaneous-release benchmarks) and implements maximum-likelihood and
simplified threshold detectors for receivers that count one or both
molecule types at the per-symbol sampling instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import (ChannelResponse, CrTable, ReactionDiffusionConfig,
                     ReleaseSchedule, validate)
from .solver import compute_cr

#: Smallest mean used inside logs/ratios; exact-zero means (e.g. kb = 0
#: with an all-zeros sequence) would otherwise produce -inf thresholds.
MEAN_EPS = 1e-6

SCHEME_KINDS = ("mosk", "ook", "osk", "conv-ook-1tm", "nonreactive-ook-2tm")

_NEEDS_TAU1 = ("ook", "osk")
_NEEDS_TAU0 = ("osk",)


@dataclass(frozen=True)
class ModulationScheme:
    """A scheme kind plus the secondary-release offsets it may need.

    tau1 delays the B release inside a one-symbol (and the A release is
    immediate); tau0 delays the A release inside a zero-symbol for the
    order-shift scheme. Offsets are set from compute_tau.
    """

    kind: str
    tau0: Optional[float] = None
    tau1: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(
                f"unknown scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        for name in ("tau0", "tau1"):
            v = getattr(self, name)
            if v is not None and not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class Observation:
    """Receiver counts of both species at one sampling instant."""

    y_a: int
    y_b: int

    def __post_init__(self):
        for v in (self.y_a, self.y_b):
            if v < 0 or v != int(v):
                raise ValueError(f"counts must be nonnegative integers: {v}")


def _require_tau(scheme: ModulationScheme, t_symb: float) -> None:
    if scheme.kind in _NEEDS_TAU1 and scheme.tau1 is None:
        raise ValueError(f"scheme {scheme.kind!r} requires tau1 (compute_tau)")
    if scheme.kind in _NEEDS_TAU0 and scheme.tau0 is None:
        raise ValueError(f"scheme {scheme.kind!r} requires tau0 (compute_tau)")
    for name in ("tau0", "tau1"):
        v = getattr(scheme, name)
        if v is not None and not v < t_symb:
            raise ValueError(f"{name} = {v} must be < t_symb = {t_symb}")


def build_schedule(scheme: ModulationScheme, bits: Sequence[int],
                   config: ReactionDiffusionConfig) -> ReleaseSchedule:
    """Release instants encoding `bits`, one symbol per t_symb interval.

    mosk: A on ones, B on zeros, both at the symbol start. ook: on a one,
    A at the symbol start and B tau1 later (the trailing B release cleans
    up the A pulse); zeros release nothing. osk: every symbol releases
    both species, the bit encoded in the order — a one releases A first
    and B tau1 later, a zero releases B first and A tau0 later.
    conv-ook-1tm: classical on-off keying, A alone on ones.
    nonreactive-ook-2tm: A and B together on ones with no offset.
    """
    if any(b not in (0, 1) for b in bits):
        raise ValueError("bits must be 0/1")
    _require_tau(scheme, config.t_symb)
    t_sym = config.t_symb
    na, nb = config.n_tx_a, config.n_tx_b
    rel_a: list[tuple[float, float]] = []
    rel_b: list[tuple[float, float]] = []
    for k, s in enumerate(bits):
        t0 = k * t_sym
        if scheme.kind == "mosk":
            if s == 1:
                rel_a.append((t0, na))
            else:
                rel_b.append((t0, nb))
        elif scheme.kind == "ook":
            if s == 1:
                rel_a.append((t0, na))
                rel_b.append((t0 + scheme.tau1, nb))
        elif scheme.kind == "osk":
            rel_a.append((t0 + (1 - s) * scheme.tau0, na))
            rel_b.append((t0 + s * scheme.tau1, nb))
        elif scheme.kind == "conv-ook-1tm":
            if s == 1:
                rel_a.append((t0, na))
        else:  # nonreactive-ook-2tm
            if s == 1:
                rel_a.append((t0, na))
                rel_b.append((t0, nb))
    return ReleaseSchedule(tuple(rel_a), tuple(rel_b))


def compute_tau(config: ReactionDiffusionConfig) -> tuple[float, float]:
    """Secondary-release offsets: the single-release response peak times.

    tau1 is the instant at which the receiver mean of species A peaks
    when only A is released at t = 0 (zero initial concentrations, full
    reactive dynamics); tau0 likewise for a B-only release. Ties resolve
    to the earliest instant on the dt grid.
    """
    cfg = validate(config).replace(t_max=config.t_symb,
                                   init_conc_a=0.0, init_conc_b=0.0)
    taus = []
    for species in ("b", "a"):                     # tau0 first, then tau1
        if species == "a":
            sched = ReleaseSchedule(releases_a=((0.0, config.n_tx_a),))
        else:
            sched = ReleaseSchedule(releases_b=((0.0, config.n_tx_b),))
        resp = compute_cr(cfg, sched)
        y = resp.ybar_a if species == "a" else resp.ybar_b
        if not np.any(y > 0.0):
            raise ValueError(
                f"flat channel response for a {species.upper()}-only "
                "release; cannot place the peak")
        taus.append(float(resp.times[int(np.argmax(y))]))
    tau0, tau1 = taus
    return tau0, tau1


def build_cr_table(config: ReactionDiffusionConfig, scheme: ModulationScheme,
                   memory_len: int) -> CrTable:
    """Expected-count table over (current symbol, preceding bits).

    For every current symbol s and every possible length L-1 history,
    runs the full nonlinear solver on the L-symbol bit sequence
    (history oldest-first, s last) from zero initial concentration and
    samples the receiver means at (L-1)*t_symb + t_samp.
    """
    if memory_len < 1:
        raise ValueError(f"memory_len must be >= 1, got {memory_len}")
    t_sample = (memory_len - 1) * config.t_symb + config.t_samp
    cfg = validate(config).replace(t_max=t_sample,
                                   init_conc_a=0.0, init_conc_b=0.0)
    means = {}
    for s in (0, 1):
        for code in range(2 ** (memory_len - 1)):
            isi = format(code, f"0{memory_len - 1}b") if memory_len > 1 else ""
            bits = [int(c) for c in isi] + [s]
            resp = compute_cr(cfg, build_schedule(scheme, bits, config))
            means[(s, isi)] = resp.at(t_sample)
    return CrTable(memory_len, scheme.kind, means)


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorThresholds:
    """Linear-threshold coefficients derived from a mean table.

    Per history: y_a >= alpha*y_b + beta decides a one for two-species
    receivers (chi is the log mean ratio of species A, the factor the
    log-likelihood ratio is divided by); y_a >= gamma decides a one for
    single-species receivers. The *_free values are the history-free
    (memory length 1) coefficients used by the simplified detectors.
    """

    alpha: dict
    beta: dict
    chi: dict
    gamma: dict
    alpha_free: float
    beta_free: float
    gamma_free: float


def _clamped_means(table: CrTable, s: int, isi: str) -> tuple[float, float]:
    ya, yb = table.mean(s, isi)
    return max(ya, MEAN_EPS), max(yb, MEAN_EPS)


def _coeffs(a1: float, b1: float, a0: float, b0: float):
    chi = math.log(a1 / a0)
    if chi == 0.0:
        raise ValueError(
            "uninformative channel: species-A means identical under both "
            "hypotheses")
    alpha = math.log(b0 / b1) / chi
    beta = (a1 + b1 - a0 - b0) / chi
    return alpha, beta, chi


def thresholds_from_table(table: CrTable,
                          free_table: Optional[CrTable] = None
                          ) -> DetectorThresholds:
    """Per-history coefficients, plus history-free ones from an L=1 table.

    The history-free coefficients come from `free_table` (which must have
    memory length 1); when `table` itself has memory length 1 it doubles
    as its own free table.
    """
    alpha, beta, chi, gamma = {}, {}, {}, {}
    for isi in {k[1] for k in table.means}:
        a1, b1 = _clamped_means(table, 1, isi)
        a0, b0 = _clamped_means(table, 0, isi)
        alpha[isi], beta[isi], chi[isi] = _coeffs(a1, b1, a0, b0)
        gamma[isi] = (a1 - a0) / math.log(a1 / a0)
    if free_table is None and table.memory_len == 1:
        free_table = table
    if free_table is None or free_table.memory_len != 1:
        raise ValueError(
            "history-free coefficients need a memory-length-1 table")
    a1, b1 = _clamped_means(free_table, 1, "")
    a0, b0 = _clamped_means(free_table, 0, "")
    af, bf, _ = _coeffs(a1, b1, a0, b0)
    gf = (a1 - a0) / math.log(a1 / a0)
    return DetectorThresholds(alpha, beta, chi, gamma, af, bf, gf)


def detect_genie_2tm(obs: Observation, table: CrTable, isi: str) -> int:
    """Exact two-count maximum-likelihood decision given the true history.

    Evaluates the joint Poisson log-likelihood ratio
    chi*y_a - log(b0/b1)*y_b - (a1 + b1 - a0 - b0) and decides one when
    it is >= 0, which coincides with y_a >= alpha*y_b + beta whenever
    the one-hypothesis raises the species-A mean (chi > 0).
    """
    a1, b1 = _clamped_means(table, 1, isi)
    a0, b0 = _clamped_means(table, 0, isi)
    alpha, beta, chi = _coeffs(a1, b1, a0, b0)
    llr = chi * (obs.y_a - alpha * obs.y_b - beta)
    return 1 if llr >= 0.0 else 0


def detect_genie_1tm(obs: Observation, table: CrTable, isi: str) -> int:
    """Single-count maximum-likelihood decision given the true history.

    Decides one when y_a >= gamma with gamma = (a1 - a0)/log(a1/a0) for
    chi > 0; evaluated through the log-likelihood ratio so the decision
    stays the exact argmax when a1 < a0.
    """
    a1, _ = _clamped_means(table, 1, isi)
    a0, _ = _clamped_means(table, 0, isi)
    chi = math.log(a1 / a0)
    if chi == 0.0:
        raise ValueError(
            "uninformative channel: species-A means identical under both "
            "hypotheses")
    llr = chi * obs.y_a - (a1 - a0)
    return 1 if llr >= 0.0 else 0


def detect_ml_estimated_isi(stream: Sequence[Observation], table: CrTable,
                            receiver: str = "2tm") -> list[int]:
    """Decision-feedback detection: past decisions stand in for the history.

    Symbol k is decided with the exact-likelihood rule keyed by the last
    L-1 decided bits (all-zeros padding before the block).
    """
    detect = _pick_genie(receiver)
    mem = table.memory_len - 1
    decided: list[int] = []
    for obs in stream:
        hist = ([0] * mem + decided)[len(decided):len(decided) + mem]
        decided.append(detect(obs, table, "".join(map(str, hist))))
    return decided


def detect_isi_neglecting(obs: Observation, thresholds: DetectorThresholds,
                          receiver: str = "2tm") -> int:
    """History-free simplified rules.

    Two-species receivers compare the two counts directly (y_a >= y_b),
    valid under symmetric diffusion and release counts and needing no
    mean table at run time; single-species receivers compare y_a against
    the history-free gamma.
    """
    if receiver == "2tm":
        return 1 if obs.y_a >= obs.y_b else 0
    if receiver == "1tm":
        return 1 if obs.y_a >= thresholds.gamma_free else 0
    raise ValueError(f"unknown receiver kind {receiver!r}")


def _pick_genie(receiver: str):
    if receiver == "2tm":
        return detect_genie_2tm
    if receiver == "1tm":
        return detect_genie_1tm
    raise ValueError(f"unknown receiver kind {receiver!r}")


def sample_observation(mean_a: float, mean_b: float,
                       rng: np.random.Generator) -> Observation:
    """Independent Poisson draws of the two receiver counts."""
    if mean_a < 0 or mean_b < 0:
        raise ValueError("means must be nonnegative")
    return Observation(int(rng.poisson(mean_a)), int(rng.poisson(mean_b)))
