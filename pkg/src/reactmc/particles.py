"""Particle-based stochastic simulator for the two-species reactive channel.

Brownian dynamics with binding-radius bimolecular degradation and
zeroth-order Poisson production; serves as the stochastic oracle the
grid solver is validated against, and as the source of receiver-count
histograms. 3-D only.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .config import ReactionDiffusionConfig, ReleaseSchedule, validate

# regime thresholds relative to T_crt = kf^2 / (32 pi^2 (DA+DB)^3)
SMALL_DT_FACTOR = 0.1    # dt <= T_crt/10 -> small-dt formula
LARGE_DT_FACTOR = 22.5   # dt >= 22.5*T_crt (= 10 * (9/4) T_crt) -> large-dt


class RegimeError(ValueError):
    """Time step falls between the two binding-radius regimes."""


def binding_radius(kf: float, diff_a: float, diff_b: float,
                   dt: float) -> tuple[float, str]:
    """Reaction distance realizing rate kf, with the regime it came from.

    Small time steps: rho_b = kf / (4 pi (DA+DB)) (diffusion-limited
    encounter rate); large time steps: rho_b = (3 kf dt / 4 pi)^(1/3)
    (per-step reaction volume). In between neither closed form is valid.
    """
    if kf < 0:
        raise ValueError("kf must be nonnegative")
    if kf == 0.0:
        return 0.0, "large-dt"
    dsum = diff_a + diff_b
    if dsum <= 0:
        raise ValueError("need a positive diffusion coefficient")
    t_crt = kf**2 / (32.0 * np.pi**2 * dsum**3)
    if dt <= SMALL_DT_FACTOR * t_crt:
        return kf / (4.0 * np.pi * dsum), "small-dt"
    if dt >= LARGE_DT_FACTOR * t_crt:
        return (3.0 * kf * dt / (4.0 * np.pi)) ** (1.0 / 3.0), "large-dt"
    raise RegimeError(
        f"dt = {dt:.3g} s is in the intermediate regime "
        f"({SMALL_DT_FACTOR * t_crt:.3g} s < dt < "
        f"{LARGE_DT_FACTOR * t_crt:.3g} s for these rates); "
        "decrease or increase dt")


def _steady_state_rate(rho: float, p: float, d_sum: float, dt: float,
                       n_in: int = 40) -> float:
    """Long-run rate realized by reacting with probability p inside rho.

    The first step of a reaction-radius scheme removes exactly the
    mass-action fraction of pairs, but sustained operation depletes the
    pair density near contact and the realized rate settles below the
    single-step value. This solves for that steady state: the relative
    coordinate of an A-B pair diffuses radially with per-axis step std
    sqrt(2(DA+DB)dt), pairs inside rho react with probability p after
    every step, and the far field is held at unit density. Returns the
    converged removals per step divided by dt (units m^3/s, per unit
    pair density).
    """
    sig = np.sqrt(2.0 * d_sum * dt)
    dr = rho / n_in              # grid aligned so rho is a cell edge
    r_bath = rho + 20.0 * sig    # inner edge of the clamped far field
    n_grid = int(np.ceil((r_bath + 6.0 * sig) / dr))
    r = (np.arange(n_grid) + 0.5) * dr
    ri, rj = r[:, None], r[None, :]
    # radial propagator of an isotropic Gaussian displacement
    kern = (ri / (rj * sig * np.sqrt(2.0 * np.pi))
            * (np.exp(-(ri - rj) ** 2 / (2.0 * sig**2))
               - np.exp(-(ri + rj) ** 2 / (2.0 * sig**2)))) * dr
    kern /= kern.sum(axis=0, keepdims=True)
    inside = r < rho
    bath = r >= r_bath
    # One step maps the post-removal state m to diag(d) @ kern @ m plus
    # the clamped bath values, so the stationary state solves a linear
    # system directly (no relaxation loop, no convergence tolerance).
    d_fac = np.where(inside, 1.0 - p, 1.0)
    d_fac[bath] = 0.0
    mat = np.eye(n_grid) - d_fac[:, None] * kern
    rhs = np.where(bath, r**2, 0.0)
    m = np.linalg.solve(mat, rhs)
    removed = p * np.sum((kern @ m)[inside]) * 4.0 * np.pi * dr
    rate = removed / dt
    # The clamp holds the pair density at its bath value at finite radius,
    # which overstates the rate relative to a bath at infinity; the
    # quasi-static 1/r depletion tail gives the exact correction.
    return rate / (1.0 + rate / (4.0 * np.pi * d_sum * r_bath))


@functools.lru_cache(maxsize=32)
def _large_dt_reaction_params(kf: float, d_sum: float,
                              dt: float) -> tuple[float, float]:
    rho_naive = (3.0 * kf * dt / (4.0 * np.pi)) ** (1.0 / 3.0)
    rho = brentq(lambda r: _steady_state_rate(r, 1.0, d_sum, dt) - kf,
                 rho_naive, 3.0 * rho_naive, rtol=1e-6)
    return rho, 1.0


def reaction_parameters(kf: float, diff_a: float, diff_b: float,
                        dt: float) -> tuple[float, float, str]:
    """Reaction radius and per-step reaction probability realizing rate kf.

    Returns (rho, p, regime): candidate A-B pairs closer than rho react
    with probability p each step. In the small-dt regime the absorbing
    radius kf/(4 pi (DA+DB)) is already the diffusion-limited steady-state
    rate, so (rho_b, 1) is returned. In the large-dt regime the naive
    absorbing radius (3 kf dt / 4 pi)^(1/3) matches kf only in its
    asymptote of step length >> radius; at moderate ratios sustained
    operation depletes the pair density near contact and the realized
    long-run rate lands 5-15% below kf. The radius is therefore widened
    (here by solving _steady_state_rate for the radius whose long-run
    rate equals kf) rather than spread over a larger ball with p < 1:
    reacting across a wide ball couples regions with strong opposing
    concentration gradients and overestimates annihilation wherever one
    species peaks inside the other's depletion zone, so the smallest
    radius that sustains kf is the accurate choice.
    """
    rho_b, regime = binding_radius(kf, diff_a, diff_b, dt)
    if kf == 0.0 or regime == "small-dt":
        return rho_b, 1.0, regime
    rho, prob = _large_dt_reaction_params(kf, diff_a + diff_b, dt)
    return rho, prob, regime


@dataclass
class ParticleWorld:
    """Positions and reaction distances of one stochastic realization."""

    pos_a: np.ndarray            # (M_A, 3) [m]
    pos_b: np.ndarray            # (M_B, 3) [m]
    box_side: float              # production cube side [m]
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rho_b: float = 0.0
    rho_u: float = 0.0
    regime: str = "large-dt"
    seed: int = 0
    rng: np.random.Generator = None

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        if self.regime == "small-dt" and self.rho_u < self.rho_b:
            raise ValueError(
                "unbinding radius must be >= binding radius in the "
                "small-dt regime")

    @property
    def m_a(self) -> int:
        return len(self.pos_a)

    @property
    def m_b(self) -> int:
        return len(self.pos_b)


def world_from_config(config: ReactionDiffusionConfig,
                      seed: int = 0) -> ParticleWorld:
    """Empty world sized per config: production cube side 2*r_max."""
    if config.dim != 3:
        raise ValueError("particle simulation supports dim = 3 only")
    rho_b, regime = binding_radius(config.kf, config.diff_a, config.diff_b,
                                   config.dt)
    rho_u = 2.0 * rho_b if regime == "small-dt" else 0.0
    return ParticleWorld(np.empty((0, 3)), np.empty((0, 3)),
                         box_side=2.0 * config.r_max, rho_b=rho_b,
                         rho_u=rho_u, regime=regime, seed=seed)


def brownian_pass(world: ParticleWorld,
                  config: ReactionDiffusionConfig) -> ParticleWorld:
    """Advance every particle by one Brownian increment."""
    for pos, diff in ((world.pos_a, config.diff_a),
                      (world.pos_b, config.diff_b)):
        if len(pos) and diff > 0:
            pos += world.rng.normal(
                0.0, np.sqrt(2.0 * diff * config.dt), pos.shape)
    return world


def forward_reaction_pass(world: ParticleWorld) -> ParticleWorld:
    """Annihilate A-B pairs closer than the binding radius.

    Greedy: A particles in ascending index order each take their nearest
    still-available B within rho_b; the pairing uses a uniform spatial hash
    of cell size rho_b, so cost is near-linear in particle count.
    """
    if world.rho_b <= 0 or world.m_a == 0 or world.m_b == 0:
        return world
    keep_a, keep_b = _pair_and_remove(world.pos_a, world.pos_b, world.rho_b)
    world.pos_a = world.pos_a[keep_a]
    world.pos_b = world.pos_b[keep_b]
    return world


def backward_reaction_pass(world: ParticleWorld,
                           config: ReactionDiffusionConfig) -> ParticleWorld:
    """Insert Poisson(V kb dt) fresh A/B molecules uniformly in the box.

    In the small-dt regime each B partner is placed at distance rho_u from
    its A in a uniformly random direction, so the pair does not re-react
    immediately. In the large-dt regime B positions are drawn independently
    and uniformly instead: at moderate step-to-binding-radius ratios a
    co-located pair would re-react within the next few steps with ~10%
    probability, which suppresses the effective production rate below
    kb and biases the approach to equilibrium; independent placement
    removes the pair correlation entirely, matching the well-mixed rate
    equations the grid solver integrates.
    """
    if config.kb <= 0:
        return world
    volume = world.box_side**3
    n = world.rng.poisson(volume * config.kb * config.dt)
    if n == 0:
        return world
    half = world.box_side / 2.0
    new_a = world.center + world.rng.uniform(-half, half, (n, 3))
    if world.regime == "small-dt":
        direction = world.rng.normal(size=(n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        new_b = new_a + world.rho_u * direction
    else:
        new_b = world.center + world.rng.uniform(-half, half, (n, 3))
    world.pos_a = np.concatenate([world.pos_a, new_a])
    world.pos_b = np.concatenate([world.pos_b, new_b])
    return world


@dataclass(frozen=True)
class ParticleEnsemble:
    """Per-trial receiver-count time series and ensemble statistics."""

    times: np.ndarray       # (T,)
    counts_a: np.ndarray    # (n_trials, T) integer counts
    counts_b: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.counts_a.shape[0]

    @property
    def mean_a(self) -> np.ndarray:
        return self.counts_a.mean(axis=0)

    @property
    def mean_b(self) -> np.ndarray:
        return self.counts_b.mean(axis=0)

    def band95(self, species: str = "a") -> tuple[np.ndarray, np.ndarray]:
        """95% confidence band for the ensemble mean at each instant."""
        c = self.counts_a if species == "a" else self.counts_b
        m = c.mean(axis=0)
        half = 1.96 * c.std(axis=0, ddof=1) / np.sqrt(self.n_trials)
        return m - half, m + half

    def histogram(self, t: float, species: str = "a") -> np.ndarray:
        """Empirical frequencies of the receiver count at instant t."""
        i = int(np.argmin(np.abs(self.times - t)))
        c = self.counts_a if species == "a" else self.counts_b
        return np.bincount(c[:, i]) / self.n_trials

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("t,ybar_a,ybar_b,n_trials\n")
            for t, ya, yb in zip(self.times, self.mean_a, self.mean_b):
                f.write(f"{float(t)!r},{float(ya)!r},{float(yb)!r},"
                        f"{self.n_trials}\n")

    def histogram_to_csv(self, path, t: float, species: str = "a") -> None:
        freqs = self.histogram(t, species)
        with open(path, "w") as f:
            f.write("count,freq\n")
            for k, p in enumerate(freqs):
                f.write(f"{k},{float(p)!r}\n")


def run_particle_sim(config: ReactionDiffusionConfig,
                     schedule: ReleaseSchedule, n_trials: int,
                     seed: int = 0) -> ParticleEnsemble:
    """Monte Carlo ensemble of receiver counts for a release schedule.

    Per step and trial: release due molecules at the origin, Brownian
    update, binding-radius degradation, Poisson production, then count
    particles inside the receiver ball at (distance, 0, 0). Trials are
    reproducible from (seed, trial index) alone and independent.
    """
    validate(config)
    if config.dim != 3:
        raise ValueError("particle simulation supports dim = 3 only")
    rho_b, p_react, regime = reaction_parameters(
        config.kf, config.diff_a, config.diff_b, config.dt)
    n_steps = config.n_steps
    rel_a = np.zeros(n_steps + 1)
    rel_b = np.zeros(n_steps + 1)
    for t, n in schedule.releases_a:
        rel_a[int(round(t / config.dt))] += n
    for t, n in schedule.releases_b:
        rel_b[int(round(t / config.dt))] += n

    rel_a = np.rint(rel_a).astype(np.int64)
    rel_b = np.rint(rel_b).astype(np.int64)

    box_side = 2.0 * config.r_max
    half = box_side / 2.0
    lam = box_side**3 * config.kb * config.dt
    rho_u = 2.0 * rho_b if regime == "small-dt" else 0.0
    sig_a = np.sqrt(2.0 * config.diff_a * config.dt)
    sig_b = np.sqrt(2.0 * config.diff_b * config.dt)
    rx2 = config.rx_radius**2
    counts_a = np.zeros((n_trials, n_steps + 1), dtype=np.int64)
    counts_b = np.zeros((n_trials, n_steps + 1), dtype=np.int64)

    cap = 1 << 16
    pos_a = np.empty((cap, 3))
    pos_b = np.empty((cap, 3))
    ws = _PairWorkspace(cap)
    inv_cell = 1.0 / (2.0 * rho_b) if rho_b > 0.0 else 0.0

    for trial in range(n_trials):
        # distinct, reproducible trial streams derived from (seed, trial)
        ss = np.random.SeedSequence([seed, trial])
        rng = np.random.Generator(np.random.PCG64(ss))
        if p_react < 1.0:
            # acceptance draws inside _degrade_step use the compiled
            # kernel's own global RNG; reseed it per trial
            _seed_kernel_rng(int(ss.generate_state(2)[1]) & 0x7FFFFFFF)
        m_a = 0
        m_b = 0
        for step in range(1, n_steps + 1):
            # release at the start of the step
            na, nb = rel_a[step - 1], rel_b[step - 1]
            if na or nb:
                if m_a + na > cap or m_b + nb > cap:
                    raise RuntimeError("particle capacity exceeded")
                pos_a[m_a:m_a + na] = 0.0
                pos_b[m_b:m_b + nb] = 0.0
                m_a += na
                m_b += nb
            # diffusion
            if m_a:
                pos_a[:m_a] += sig_a * rng.standard_normal((m_a, 3))
            if m_b:
                pos_b[:m_b] += sig_b * rng.standard_normal((m_b, 3))
            # degradation: greedy pairing within the reaction radius
            if rho_b > 0.0 and m_a and m_b:
                m_a, m_b = _degrade_step(pos_a, m_a, pos_b, m_b, rho_b,
                                         p_react, inv_cell, ws.slot_key,
                                         ws.head, ws.nxt, ws.used_slots,
                                         ws.occupied, ws.used_bytes,
                                         ws.alive_b)
            # production; placement as in backward_reaction_pass (small-dt:
            # B offset by rho_u; large-dt: B independent, no pair correlation)
            if lam > 0.0:
                n_new = rng.poisson(lam)
                if n_new:
                    if m_a + n_new > cap or m_b + n_new > cap:
                        raise RuntimeError("particle capacity exceeded")
                    pts = rng.uniform(-half, half, (n_new, 3))
                    pos_a[m_a:m_a + n_new] = pts
                    if regime == "small-dt":
                        direction = rng.standard_normal((n_new, 3))
                        direction /= np.linalg.norm(direction, axis=1,
                                                    keepdims=True)
                        pts = pts + rho_u * direction
                    else:
                        pts = rng.uniform(-half, half, (n_new, 3))
                    pos_b[m_b:m_b + n_new] = pts
                    m_a += n_new
                    m_b += n_new
            # observe
            counts_a[trial, step] = _count_in_ball(pos_a, m_a,
                                                   config.distance, rx2)
            counts_b[trial, step] = _count_in_ball(pos_b, m_b,
                                                   config.distance, rx2)
    times = np.arange(n_steps + 1) * config.dt
    return ParticleEnsemble(times, counts_a, counts_b)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

_KEY_BITS = 21
_KEY_OFF = 1 << 20


@njit(cache=True)
def _cell_keys(pos, m, inv_cell):
    keys = np.empty(m, dtype=np.int64)
    for i in range(m):
        ix = np.int64(np.floor(pos[i, 0] * inv_cell)) + _KEY_OFF
        iy = np.int64(np.floor(pos[i, 1] * inv_cell)) + _KEY_OFF
        iz = np.int64(np.floor(pos[i, 2] * inv_cell)) + _KEY_OFF
        keys[i] = (ix << (2 * _KEY_BITS)) | (iy << _KEY_BITS) | iz
    return keys


@njit(cache=True)
def _pair_kernel(pos_a, m_a, pos_b, m_b, rho_b):
    """Greedy nearest-available pairing; returns per-particle alive flags."""
    alive_a = np.ones(m_a, dtype=np.bool_)
    alive_b = np.ones(m_b, dtype=np.bool_)
    if m_a == 0 or m_b == 0:
        return alive_a, alive_b
    inv_cell = 1.0 / rho_b
    keys_b = _cell_keys(pos_b, m_b, inv_cell)
    order = np.argsort(keys_b)
    sorted_keys = keys_b[order]
    rho2 = rho_b * rho_b
    for i in range(m_a):
        ax, ay, az = pos_a[i, 0], pos_a[i, 1], pos_a[i, 2]
        cx = np.int64(np.floor(ax * inv_cell)) + _KEY_OFF
        cy = np.int64(np.floor(ay * inv_cell)) + _KEY_OFF
        cz = np.int64(np.floor(az * inv_cell)) + _KEY_OFF
        best = -1
        best_d2 = rho2
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = (((cx + dx) << (2 * _KEY_BITS))
                           | ((cy + dy) << _KEY_BITS) | (cz + dz))
                    lo = np.searchsorted(sorted_keys, key)
                    hi = np.searchsorted(sorted_keys, key + 1)
                    for s in range(lo, hi):
                        j = order[s]
                        if not alive_b[j]:
                            continue
                        ddx = pos_b[j, 0] - ax
                        ddy = pos_b[j, 1] - ay
                        ddz = pos_b[j, 2] - az
                        d2 = ddx * ddx + ddy * ddy + ddz * ddz
                        if d2 < best_d2 or (d2 == best_d2 and best >= 0
                                            and j < best):
                            best = j
                            best_d2 = d2
        if best >= 0:
            alive_a[i] = False
            alive_b[best] = False
    return alive_a, alive_b


def _pair_and_remove(pos_a, pos_b, rho_b):
    keep_a, keep_b = _pair_kernel(
        np.ascontiguousarray(pos_a), len(pos_a),
        np.ascontiguousarray(pos_b), len(pos_b), rho_b)
    return keep_a, keep_b


@njit(cache=True)
def _compact(pos, alive, m):
    n = 0
    for i in range(m):
        if alive[i]:
            pos[n, 0] = pos[i, 0]
            pos[n, 1] = pos[i, 1]
            pos[n, 2] = pos[i, 2]
            n += 1
    return n


_HASH_BITS = 15
_HASH_SIZE = 1 << _HASH_BITS
_HASH_MUL = np.int64(np.uint64(0x9E3779B97F4A7C15))
_FLOOR_OFF = 1 << 14  # cell coordinates stay well inside (-2^14, 2^14)


@njit(cache=True, inline="always")
def _hash_slot(key):
    h = (key ^ (key >> 2 * _KEY_BITS)) * _HASH_MUL
    return (h >> (64 - _HASH_BITS)) & (_HASH_SIZE - 1)


@njit(cache=True, inline="always")
def _cell_coord(x, inv_cell):
    # floor() via biased truncation; valid while |x*inv_cell| < 2^14
    return np.int64(x * inv_cell + _FLOOR_OFF)


class _PairWorkspace:
    """Reusable scratch arrays for _degrade_step (one allocation per run)."""

    def __init__(self, cap: int):
        self.slot_key = np.full(_HASH_SIZE, np.int64(-1))
        self.head = np.full(_HASH_SIZE, np.int32(-1))
        self.nxt = np.empty(cap, dtype=np.int32)
        self.used_slots = np.empty(cap, dtype=np.int32)
        self.occupied = np.zeros(_HASH_SIZE, dtype=np.uint8)
        self.used_bytes = np.empty(cap, dtype=np.int32)
        self.alive_b = np.empty(cap, dtype=np.bool_)


@njit(cache=True)
def _seed_kernel_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _degrade_step(pos_a, m_a, pos_b, m_b, rho_b, p_react, inv_cell,
                  slot_key, head, nxt, used_slots, occupied, used_bytes,
                  alive_b):
    """One pairing pass within radius rho_b; compacts in place.

    With p_react = 1 each A reacts with its nearest still-available B
    inside rho_b (absorbing radius). With p_react < 1 each candidate pair
    inside rho_b reacts independently with probability p_react and the A
    takes the first accepted partner.

    Cell size is 2*rho_b, so the rho_b-ball around any point spans at most
    2 cells per axis and 8 probed cells cover every candidate partner.
    Cells hash into an open-addressing table of chained B-particle lists;
    an L1-resident occupancy byte filter lets the (dominant) empty-
    neighborhood probes exit without touching the table. Scratch arrays
    must arrive cleared (slot_key/head -1, occupied 0) and are re-cleared
    before returning. Returns the surviving (m_a, m_b).
    """
    rho2 = rho_b * rho_b
    n_used = 0
    n_bytes = 0
    for j in range(m_b):
        alive_b[j] = True
        ix = _cell_coord(pos_b[j, 0], inv_cell)
        iy = _cell_coord(pos_b[j, 1], inv_cell)
        iz = _cell_coord(pos_b[j, 2], inv_cell)
        key = (ix << (2 * _KEY_BITS)) | (iy << _KEY_BITS) | iz
        s = _hash_slot(key)
        if occupied[s] == 0:
            occupied[s] = 1
            used_bytes[n_bytes] = s
            n_bytes += 1
        while slot_key[s] != -1 and slot_key[s] != key:
            s = (s + 1) & (_HASH_SIZE - 1)
        if slot_key[s] == -1:
            slot_key[s] = key
            used_slots[n_used] = s
            n_used += 1
        nxt[j] = head[s]
        head[s] = j
    n_removed_a = 0
    for i in range(m_a):
        ax, ay, az = pos_a[i, 0], pos_a[i, 1], pos_a[i, 2]
        x_lo = _cell_coord(ax - rho_b, inv_cell)
        x_hi = _cell_coord(ax + rho_b, inv_cell)
        y_lo = _cell_coord(ay - rho_b, inv_cell)
        y_hi = _cell_coord(ay + rho_b, inv_cell)
        z_lo = _cell_coord(az - rho_b, inv_cell)
        z_hi = _cell_coord(az + rho_b, inv_cell)
        best = -1
        best_d2 = rho2
        done = False
        for cx in range(x_lo, x_hi + 1):
            if done:
                break
            for cy in range(y_lo, y_hi + 1):
                if done:
                    break
                for cz in range(z_lo, z_hi + 1):
                    if done:
                        break
                    key = ((cx << (2 * _KEY_BITS))
                           | (cy << _KEY_BITS) | cz)
                    s = _hash_slot(key)
                    if occupied[s] == 0:
                        continue
                    while slot_key[s] != -1:
                        if slot_key[s] == key:
                            j = head[s]
                            while j >= 0:
                                if alive_b[j]:
                                    ddx = pos_b[j, 0] - ax
                                    ddy = pos_b[j, 1] - ay
                                    ddz = pos_b[j, 2] - az
                                    d2 = ddx * ddx + ddy * ddy + ddz * ddz
                                    if p_react < 1.0:
                                        if (d2 < rho2 and
                                                np.random.random()
                                                < p_react):
                                            best = j
                                            done = True
                                            break
                                    elif d2 < best_d2 or (d2 == best_d2
                                                          and best >= 0
                                                          and j < best):
                                        best = j
                                        best_d2 = d2
                                j = nxt[j]
                            break
                        s = (s + 1) & (_HASH_SIZE - 1)
        if best >= 0:
            alive_b[best] = False
            pos_a[i, 0] = np.nan  # mark removed
            n_removed_a += 1
    # clear hash and filter for the next call
    for u in range(n_used):
        s = used_slots[u]
        slot_key[s] = -1
        head[s] = -1
    for u in range(n_bytes):
        occupied[used_bytes[u]] = 0
    if n_removed_a > 0:
        n = 0
        for i in range(m_a):
            if pos_a[i, 0] == pos_a[i, 0]:  # not NaN
                pos_a[n, 0] = pos_a[i, 0]
                pos_a[n, 1] = pos_a[i, 1]
                pos_a[n, 2] = pos_a[i, 2]
                n += 1
        m_a = n
        n = 0
        for j in range(m_b):
            if alive_b[j]:
                pos_b[n, 0] = pos_b[j, 0]
                pos_b[n, 1] = pos_b[j, 1]
                pos_b[n, 2] = pos_b[j, 2]
                n += 1
        m_b = n
    return m_a, m_b


@njit(cache=True)
def _count_in_ball(pos, m, distance, rx2):
    c = 0
    for i in range(m):
        dx = pos[i, 0] - distance
        if dx * dx + pos[i, 1] ** 2 + pos[i, 2] ** 2 <= rx2:
            c += 1
    return c
