"""Monte Carlo bit-error-rate harness and parameter-sweep drivers.

Block means are computed exactly: one full nonlinear solver run per
possible K-bit block, cached to disk keyed by a content hash of the
configuration, scheme, and block length. Observations are independent
Poisson draws around those means; detection uses the rules from
`signaling`. Everything is reproducible from a single integer seed.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import (ChannelResponse, CrTable, ReactionDiffusionConfig,
                     ReleaseSchedule, config_hash, config_to_dict, validate)
from .signaling import (ModulationScheme, Observation, build_schedule,
                        detect_genie_1tm, detect_genie_2tm,
                        detect_isi_neglecting, detect_ml_estimated_isi,
                        thresholds_from_table)
from .solver import compute_cr

MAX_BLOCK_LEN = 12          # 2^K solver runs; enforced feasibility bound

DETECTORS = ("genie", "ml-isi", "isi-neglect")

#: Forward-rate stand-in for an instantaneous reaction; doubling it moves
#: the response by well under a percent (converged-limit check in tests).
KF_INSTANT = 1e-13


def default_cache_dir() -> Path:
    return Path(os.environ.get("REACTMC_CACHE",
                               "~/.cache/reactmc")).expanduser()


@dataclass(frozen=True)
class BerRun:
    """Specification of one BER-vs-release-size experiment."""

    scheme: ModulationScheme
    detector: str = "genie"
    receiver: str = "2tm"
    k_symbols: int = 8
    memory_len: int = 5
    n_blocks: int = 10_000
    n_tx_values: tuple = (1.25e3, 2.5e3, 5e3, 10e3)
    seed: int = 0
    noise_mean: float = 0.0

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}")
        if self.receiver not in ("1tm", "2tm"):
            raise ValueError("receiver must be '1tm' or '2tm'")
        if not 1 <= self.memory_len <= self.k_symbols:
            raise ValueError("need 1 <= memory_len <= k_symbols")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")


@dataclass(frozen=True)
class BerPoint:
    """BER estimate at one sweep value with a 95% binomial half-width."""

    n_tx: float
    ber: float
    ci_half: float
    n_errors: int
    n_bits: int


def precompute_block_means(config: ReactionDiffusionConfig,
                           scheme: ModulationScheme, k_symbols: int,
                           cache_dir: Optional[Path] = None) -> dict:
    """Exact per-symbol receiver means for every possible K-bit block.

    Runs the full nonlinear solver once per bit pattern (memory of all
    previous symbols included by construction) and samples both species
    at k*t_symb + t_samp for each symbol k. Results are cached on disk
    keyed by a content hash of (config, scheme, K); any field change
    invalidates the entry.
    """
    if not 1 <= k_symbols <= MAX_BLOCK_LEN:
        raise ValueError(
            f"k_symbols must be in [1, {MAX_BLOCK_LEN}] (2^K solver runs)")
    validate(config)
    cache_dir = default_cache_dir() if cache_dir is None else Path(cache_dir)
    key = config_hash(config, scheme.kind, scheme.tau0, scheme.tau1,
                      k_symbols)
    cache_file = cache_dir / f"block_means_{key}.npz"
    patterns = [format(i, f"0{k_symbols}b") for i in range(2 ** k_symbols)]
    if cache_file.exists():
        data = np.load(cache_file)["means"]
        return {p: data[i] for i, p in enumerate(patterns)}
    t_sample = np.arange(k_symbols) * config.t_symb + config.t_samp
    cfg = config.replace(t_max=float(t_sample[-1]),
                         init_conc_a=0.0, init_conc_b=0.0)
    means = np.empty((len(patterns), k_symbols, 2))
    for i, pattern in enumerate(patterns):
        bits = [int(c) for c in pattern]
        resp = compute_cr(cfg, build_schedule(scheme, bits, config))
        for k, t in enumerate(t_sample):
            means[i, k] = resp.at(float(t))
    cache_dir.mkdir(parents=True, exist_ok=True)
    np.savez(cache_file, means=means)
    return {p: means[i] for i, p in enumerate(patterns)}


def table_from_block_means(block_means: dict, scheme_kind: str,
                           memory_len: int) -> CrTable:
    """Mean table keyed by (symbol, history) from an L-symbol precompute.

    The last-symbol means of the length-L block `history + s` are exactly
    the table entry for (s, history), so the same disk cache backs both.
    """
    means = {}
    for pattern, m in block_means.items():
        if len(pattern) != memory_len:
            raise ValueError("block means were built for a different length")
        means[(int(pattern[-1]), pattern[:-1])] = (float(m[-1, 0]),
                                                   float(m[-1, 1]))
    return CrTable(memory_len, scheme_kind, means)


def _genie_history(bits: Sequence[int], k: int, memory_len: int) -> str:
    pad = [0] * (memory_len - 1)
    window = (pad + list(bits))[k:k + memory_len - 1]
    return "".join(map(str, window))


def run_ber(run: BerRun, config: ReactionDiffusionConfig,
            cache_dir: Optional[Path] = None) -> list[BerPoint]:
    """Monte Carlo BER over the release-size sweep.

    Per block: K uniform bits, exact full-memory means, independent
    Poisson observations (plus any constant noise mean), then the
    selected detector with memory `memory_len`. The genie detector sees
    the true previous bits; the decision-feedback detector its own; the
    simplified detector none.
    """
    results = []
    for n_tx in run.n_tx_values:
        cfg = config.replace(n_tx_a=float(n_tx), n_tx_b=float(n_tx))
        block_means = precompute_block_means(cfg, run.scheme, run.k_symbols,
                                             cache_dir)
        table_means = precompute_block_means(cfg, run.scheme, run.memory_len,
                                             cache_dir)
        table = table_from_block_means(table_means, run.scheme.kind,
                                       run.memory_len)
        free_means = precompute_block_means(cfg, run.scheme, 1, cache_dir)
        free_table = table_from_block_means(free_means, run.scheme.kind, 1)
        thresholds = thresholds_from_table(table, free_table)
        genie = detect_genie_2tm if run.receiver == "2tm" else detect_genie_1tm
        errors = 0
        for block in range(run.n_blocks):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([run.seed, block])))
            bits = rng.integers(0, 2, run.k_symbols)
            means = block_means["".join(map(str, bits))]
            obs = [Observation(
                int(rng.poisson(means[k, 0] + run.noise_mean)),
                int(rng.poisson(means[k, 1] + run.noise_mean)))
                for k in range(run.k_symbols)]
            if run.detector == "genie":
                decided = [genie(obs[k],
                                 table, _genie_history(bits, k,
                                                       run.memory_len))
                           for k in range(run.k_symbols)]
            elif run.detector == "ml-isi":
                decided = detect_ml_estimated_isi(obs, table, run.receiver)
            else:
                decided = [detect_isi_neglecting(o, thresholds, run.receiver)
                           for o in obs]
            errors += int(np.sum(np.asarray(decided) != bits))
        n_bits = run.n_blocks * run.k_symbols
        ber = errors / n_bits
        ci = 1.96 * np.sqrt(max(ber * (1.0 - ber), 1.0 / n_bits) / n_bits)
        results.append(BerPoint(float(n_tx), ber, float(ci), errors, n_bits))
    return results


# ---------------------------------------------------------------------------
# channel-response parameter sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMETERS = ("diff_b", "kf", "kb")


def _sweep_schedule(config: ReactionDiffusionConfig,
                    parameter: str) -> ReleaseSchedule:
    if parameter == "kf":
        # forward-rate family: A at t=0, B at 100 us, no production
        return ReleaseSchedule(releases_a=((0.0, config.n_tx_a),),
                               releases_b=((100e-6, config.n_tx_b),))
    return ReleaseSchedule(releases_a=((200e-6, config.n_tx_a),),
                           releases_b=((300e-6, config.n_tx_b),))


def sweep_parameter(config: ReactionDiffusionConfig, parameter: str,
                    values: Sequence[float]) -> dict:
    """Family of channel responses varying one rate or diffusion constant.

    Returns {value: ChannelResponse}. The release schedule is the
    standard two-release probe (A at 200 us, B at 300 us); the forward
    rate family instead uses A at 0 and B at 100 us with production
    disabled, where an infinite value is realized by the finite
    surrogate KF_INSTANT (the response is already converged there).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
    schedule = _sweep_schedule(config, parameter)
    out = {}
    for v in values:
        changes = {}
        if parameter == "kf":
            changes["kb"] = 0.0
            changes["kf"] = KF_INSTANT if np.isinf(v) else float(v)
        else:
            changes[parameter] = float(v)
        cfg = config.replace(init_conc_a=0.0, init_conc_b=0.0, **changes)
        out[v] = compute_cr(validate(cfg), schedule)
    return out


def response_width(resp: ChannelResponse, species: str = "a",
                   level: float = 0.1) -> float:
    """Width of the species pulse from its peak down to level*peak.

    Measured from the peak instant to the first later instant at which
    the response falls below level*peak (minus the equilibrium tail,
    taken as the final value).
    """
    y = resp.ybar_a if species == "a" else resp.ybar_b
    eq = float(y[-1])
    sig = y - eq
    i_pk = int(np.argmax(sig))
    target = level * sig[i_pk]
    below = np.where(sig[i_pk:] <= target)[0]
    if len(below) == 0:
        raise ValueError("response never decays to the requested level")
    return float(resp.times[i_pk + below[0]] - resp.times[i_pk])


def sweep_memory(config: ReactionDiffusionConfig, run: BerRun,
                 memory_values: Sequence[int] = (),
                 block_values: Sequence[int] = (),
                 cache_dir: Optional[Path] = None) -> dict:
    """BER as a function of detector memory and of block length.

    Returns {("L", L): [BerPoint...]} and {("K", K): [BerPoint...]}
    entries; all runs share the base run parameters (and seeds).
    """
    import dataclasses
    out = {}
    for L in memory_values:
        r = dataclasses.replace(run, memory_len=L)
        out[("L", L)] = run_ber(r, config, cache_dir)
    for K in block_values:
        r = dataclasses.replace(run, k_symbols=K,
                                memory_len=min(run.memory_len, K))
        out[("K", K)] = run_ber(r, config, cache_dir)
    return out


# ---------------------------------------------------------------------------
# result persistence
# ---------------------------------------------------------------------------


def ber_to_csv(points: Sequence[BerPoint], path) -> None:
    with open(path, "w") as f:
        f.write("x,value,ci\n")
        for p in points:
            f.write(f"{p.n_tx!r},{p.ber!r},{p.ci_half!r}\n")


def sweep_to_csv(family: dict, path) -> None:
    """One CSV for a response family: t column plus one column per value."""
    values = sorted(family)
    times = family[values[0]].times
    with open(path, "w") as f:
        f.write("t," + ",".join(f"ybar_a[{v!r}]" for v in values) + "\n")
        for i, t in enumerate(times):
            row = ",".join(repr(float(family[v].ybar_a[i])) for v in values)
            f.write(f"{float(t)!r},{row}\n")


def write_manifest(path, config: ReactionDiffusionConfig, seed: int,
                   runtimes: Optional[dict] = None, **extra) -> None:
    """Reproducibility record: config (and its hash), seed, runtimes."""
    payload = {
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "runtimes_s": runtimes or {},
        "created_unix": int(time.time()),
        **extra,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
