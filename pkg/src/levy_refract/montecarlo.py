"""Path simulation of the refracted-reflected process and MC estimators.

The path construction alternates the refracted branch (above 0) with the
reflected branch (at 0): between Poisson jump epochs the continuous part is
advanced by Euler steps of size dt,

    V <- V - (c_Y + delta * 1{V > b}) h + sigma sqrt(h) N(0,1),

any step ending below zero is clamped with the deficit credited to the
injection meter R, and jump epochs Exp(kappa) and jump sizes (phase-type
absorption times) are sampled exactly and applied at their exact times (the
step containing a jump is split into exact sub-intervals).  Dividends accrue
as delta times discounted time above b with the start-of-step indicator (the
boundary set {V = b} is Lebesgue-null).

Every path is a pure function of (seed, global path index): path i draws
from its own xoshiro256** stream seeded by splitmix64 from (seed, i), with
Gaussian increments from the polar method.  Blocks of BLOCK paths are
reduced in index order, so estimates are bit-identical for fixed
(seed, n_paths) regardless of the worker count (LEVY_REFRACT_THREADS, which
only sets the number of compiled-kernel threads).

Infinite-horizon functionals are truncated at ``horizon``; the dividend
estimate carries the one-sided bias bound delta * e^{-q*horizon} / q.  Runs
without an upper target support several starting levels on shared noise:
reflected paths started at different levels coalesce at their first common
visit of 0 and are tracked jointly afterwards, which prices all levels for
little more than the cost of one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit, prange, set_num_threads

from .fluctuation import Geometry, IntervalSet
from .model import PhaseTypeJump, ValidatedModel

BLOCK = 32768  # fixed: part of the RNG stream layout, never worker-dependent
CHUNK = 2048   # Euler steps between compaction checkpoints in exit runs

_FUNCTIONALS = ("dividends", "injection", "exit", "resolvent", "occupation")


@dataclass(frozen=True)
class SimConfig:
    """Discretization and sampling settings for one estimation run."""

    dt: float
    horizon: float
    n_paths: int
    seed: int
    antithetic: bool = False

    def __post_init__(self):
        if not 0 < self.dt <= 1e-2:
            raise ValueError("dt must be in (0, 1e-2]")
        if self.horizon <= 0 or self.n_paths <= 0:
            raise ValueError("horizon and n_paths must be positive")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even n_paths")


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    stderr: float
    n_paths: int
    bias_bound: float = 0.0


@dataclass
class PathRecord:
    """One recorded trajectory: times, V, cumulative L and R, exit info."""

    times: np.ndarray
    V: np.ndarray
    L: np.ndarray
    R: np.ndarray
    exit_time: float | None = None


def worker_count() -> int:
    """Worker cap from LEVY_REFRACT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("LEVY_REFRACT_THREADS", "1")))
    except ValueError:
        return 1


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """Counter-based numpy stream keyed by (seed, index), for auxiliary draws."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block_index,))
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# phase-type sampling (numpy API; the kernel has its own inline version)
# --------------------------------------------------------------------------


def _embedded_chain(jump: PhaseTypeJump):
    m = jump.m
    rates = -np.diag(jump.T)
    P = np.empty((m, m + 1))
    off = jump.T - np.diag(np.diag(jump.T))
    P[:, :m] = off / rates[:, None]
    P[:, m] = jump.t_exit / rates
    return rates, np.cumsum(P, axis=1), np.cumsum(jump.alpha)


def sample_phase_type(rng: np.random.Generator, jump: PhaseTypeJump, size: int | None = None):
    """Absorption times of the (alpha, T) chain; vectorized over ``size``.

    Each round advances every active chain by one exponential holding time
    and one embedded-chain transition (possibly absorption).
    """
    n = 1 if size is None else int(size)
    m = jump.m
    rates, C, acum = _embedded_chain(jump)
    state = np.searchsorted(acum, rng.random(n), side="right")
    state = np.minimum(state, m - 1)
    total = np.zeros(n)
    active = np.arange(n)
    while active.size:
        st = state[active]
        total[active] += rng.exponential(scale=1.0 / rates[st])
        u = rng.random(active.size)
        dest = (u[:, None] > C[st]).sum(axis=1)
        absorbed = dest >= m
        state[active[~absorbed]] = dest[~absorbed]
        active = active[~absorbed]
    return float(total[0]) if size is None else total


# --------------------------------------------------------------------------
# single recorded path (reference implementation, numpy Generator driven)
# --------------------------------------------------------------------------


def simulate_path(
    model: ValidatedModel,
    geometry: Geometry,
    x: float,
    config: SimConfig,
    rng: np.random.Generator,
) -> PathRecord:
    """Simulate and record one trajectory up to horizon (or T_a^+ if a is set)."""
    b, delta, a = geometry.b, geometry.delta, geometry.a
    c0, sigma, kappa = model.c_Y, model.sigma, model.kappa
    dt, horizon = config.dt, config.horizon

    ts, vs, Ls, Rs = [0.0], [], [], []
    t, L, R = 0.0, 0.0, 0.0
    V = x
    if x < 0:  # immediate injection at time zero
        R = -x
        V = 0.0
    vs.append(V)
    Ls.append(L)
    Rs.append(R)
    exit_time = None
    if a is not None and V > a:
        return PathRecord(np.array(ts), np.array(vs), np.array(Ls), np.array(Rs), 0.0)

    next_jump = t + rng.exponential(1.0 / kappa)
    while t < horizon - 1e-15:
        t_step = min(t + dt, horizon)
        tau = min(next_jump, t_step)
        h = tau - t
        above = V > b
        drift = c0 + (delta if above else 0.0)
        if above:
            L += delta * h
        V = V - drift * h + sigma * math.sqrt(h) * rng.standard_normal()
        if V < 0:
            R += -V
            V = 0.0
        t = tau
        if next_jump <= t:
            V += sample_phase_type(rng, model.jump)
            next_jump = t + rng.exponential(1.0 / kappa)
        ts.append(t)
        vs.append(V)
        Ls.append(L)
        Rs.append(R)
        if a is not None and V > a:
            exit_time = t
            break
    return PathRecord(
        np.array(ts), np.array(vs), np.array(Ls), np.array(Rs), exit_time
    )


# --------------------------------------------------------------------------
# compiled kernels: per-path xoshiro256** streams, polar-method Gaussians
# --------------------------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _M64
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
    return z ^ (z >> np.uint64(31)), x


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (np.uint64(64) - k))) & _M64


@njit(cache=True, inline="always")
def _xo_double(s0, s1, s2, s3):
    # uniform on (0, 1]: never returns 0, safe for log()
    out = (_rotl((s1 * np.uint64(5)) & _M64, np.uint64(7)) * np.uint64(9)) & _M64
    t = (s1 << np.uint64(17)) & _M64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, np.uint64(45))
    u = (float(out >> np.uint64(11)) + 1.0) * (0.5**53)
    return u, s0, s1, s2, s3


@njit(cache=True, inline="always")
def _polar_pair(s0, s1, s2, s3):
    while True:
        u1, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
        u2, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
        va = 2.0 * u1 - 1.0
        vb = 2.0 * u2 - 1.0
        r2 = va * va + vb * vb
        if 0.0 < r2 < 1.0:
            f = math.sqrt(-2.0 * math.log(r2) / r2)
            return va * f, vb * f, s0, s1, s2, s3


@njit(cache=True)
def _seed_states(seed, start_index, state):
    for i in range(state.shape[0]):
        x = (np.uint64(seed) * np.uint64(0xD1342543DE82EF95)) & _M64
        x ^= (np.uint64(start_index + i) + np.uint64(1)) * np.uint64(
            0x9E3779B97F4A7C15
        )
        z0, x = _splitmix64(x)
        z1, x = _splitmix64(x)
        z2, x = _splitmix64(x)
        z3, x = _splitmix64(x)
        if z0 == np.uint64(0) and z1 == np.uint64(0) and z2 == np.uint64(0) and z3 == np.uint64(0):
            z0 = np.uint64(1)
        state[i, 0], state[i, 1], state[i, 2], state[i, 3] = z0, z1, z2, z3


@njit(cache=True)
def _init_jump_times(state, next_jump, kappa):
    for i in range(state.shape[0]):
        u, s0, s1, s2, s3 = _xo_double(state[i, 0], state[i, 1], state[i, 2], state[i, 3])
        next_jump[i] = -math.log(u) / kappa
        state[i, 0], state[i, 1], state[i, 2], state[i, 3] = s0, s1, s2, s3


@njit(cache=True, inline="always")
def _phase_type_draw(s0, s1, s2, s3, rates, Ccum, acum):
    u, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
    m = rates.shape[0]
    st = 0
    while st < m - 1 and acum[st] < u:
        st += 1
    z = 0.0
    while True:
        u1, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
        z += -math.log(u1) / rates[st]
        u2, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
        j = 0
        while j <= m and Ccum[st, j] < u2:
            j += 1
        if j >= m:
            return z, s0, s1, s2, s3
        st = j


@njit(cache=True, parallel=True, nogil=True)
def _advance_exit(
    V, disc, alive, accL, accR, accB, occB, occA, next_jump, exit_disc, state,
    t0, n_steps, dt, c0, delta, sigma, b, q, kh, fh, sq, a,
    B_lo, B_hi, rates, Ccum, acum, kappa, sign,
):
    """Advance live single-level paths by n_steps Euler steps from t0.

    Used for runs with the upper target a; exits record e^{-qT} in exit_disc
    and retire the path.
    """
    n = V.shape[0]
    nB = B_lo.shape[0]
    for i in prange(n):
        if alive[i] == 0.0:
            continue
        v = V[i]
        d = disc[i]
        nj = next_jump[i]
        aL = accL[i]
        aR = accR[i]
        aB = accB[i]
        oB = occB[i]
        oA = occA[i]
        s0, s1, s2, s3 = state[i, 0], state[i, 1], state[i, 2], state[i, 3]
        spare = 0.0
        have_spare = False
        live = True
        t = t0
        for k in range(n_steps):
            t_end = t + dt
            t_loc = t
            while True:
                tau = min(nj, t_end)
                h1 = tau - t_loc
                if h1 > 0.0:
                    full = h1 == dt
                    above = v > b
                    dint = kh if full else (h1 if q == 0.0 else (1.0 - math.exp(-q * h1)) / q)
                    f1 = fh if full else math.exp(-q * h1)
                    if above:
                        aL += delta * d * dint
                        oA += h1
                    else:
                        oB += h1
                    if nB > 0:
                        for jb in range(nB):
                            if B_lo[jb] <= v < B_hi[jb]:
                                aB += d * dint
                                break
                    if have_spare:
                        z = spare
                        have_spare = False
                    else:
                        z, spare, s0, s1, s2, s3 = _polar_pair(s0, s1, s2, s3)
                        have_spare = True
                    drift = c0 + delta if above else c0
                    sc = sq if full else sigma * math.sqrt(h1)
                    v = v - drift * h1 + sc * (z * sign)
                    if v < 0.0:
                        aR += d * f1 * (-v)
                        v = 0.0
                    d *= f1
                t_loc = tau
                if nj <= t_loc:
                    jz, s0, s1, s2, s3 = _phase_type_draw(s0, s1, s2, s3, rates, Ccum, acum)
                    v += jz
                    u, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
                    nj = t_loc - math.log(u) / kappa
                    if v > a:
                        exit_disc[i] = d
                        live = False
                        break
                if t_loc >= t_end:
                    break
            if not live:
                break
            if v > a:
                exit_disc[i] = d
                live = False
                break
            t = t_end
        V[i] = v
        disc[i] = d if live else 0.0
        alive[i] = 1.0 if live else 0.0
        accL[i] = aL
        accR[i] = aR
        accB[i] = aB
        occB[i] = oB
        occA[i] = oA
        next_jump[i] = nj
        state[i, 0], state[i, 1], state[i, 2], state[i, 3] = s0, s1, s2, s3


@njit(cache=True, parallel=True, nogil=True)
def _advance_levels(
    levels, outL, outR, outB, state0,
    n_full, dt, dt_last, c0, delta, sigma, b, q, kh, fh, sq,
    B_lo, B_hi, rates, Ccum, acum, kappa, sign,
):
    """Whole-horizon run without an upper target, several starting levels.

    All levels of one path share the same jumps and Gaussian increments;
    once every level has been clamped to the same point (first common visit
    of 0), only track 0 keeps evolving and its increments are added to the
    other levels at the end.  outX[i, l] receives the discounted dividend /
    injection / time-in-B functionals of level l.
    """
    n = outL.shape[0]
    L = levels.shape[0]
    nB = B_lo.shape[0]
    for i in prange(n):
        s0, s1, s2, s3 = state0[i, 0], state0[i, 1], state0[i, 2], state0[i, 3]
        u0, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
        nj = -math.log(u0) / kappa

        vs = np.empty(L)
        aLs = np.zeros(L)
        aRs = np.zeros(L)
        aBs = np.zeros(L)
        for l in range(L):
            vs[l] = levels[l]
        d = 1.0
        n_act = L  # tracks 0..n_act-1 still distinct
        snapL = 0.0
        snapR = 0.0
        snapB = 0.0
        spare = 0.0
        have_spare = False

        t = 0.0
        total_steps = n_full + (1 if dt_last > 0.0 else 0)
        for k in range(total_steps):
            h_step = dt if k < n_full else dt_last
            t_end = t + h_step
            t_loc = t
            while True:
                tau = min(nj, t_end)
                h1 = tau - t_loc
                if h1 > 0.0:
                    full = h1 == dt
                    dint = kh if full else (h1 if q == 0.0 else (1.0 - math.exp(-q * h1)) / q)
                    f1 = fh if full else math.exp(-q * h1)
                    if have_spare:
                        z = spare
                        have_spare = False
                    else:
                        z, spare, s0, s1, s2, s3 = _polar_pair(s0, s1, s2, s3)
                        have_spare = True
                    shock = (sq if full else sigma * math.sqrt(h1)) * (z * sign)
                    for l in range(n_act):
                        v = vs[l]
                        if v > b:
                            aLs[l] += delta * d * dint
                            v = v - (c0 + delta) * h1 + shock
                        else:
                            v = v - c0 * h1 + shock
                        if nB > 0:
                            for jb in range(nB):
                                if B_lo[jb] <= vs[l] < B_hi[jb]:
                                    aBs[l] += d * dint
                                    break
                        if v < 0.0:
                            aRs[l] += d * f1 * (-v)
                            v = 0.0
                        vs[l] = v
                    d *= f1
                t_loc = tau
                if nj <= t_loc:
                    jz, s0, s1, s2, s3 = _phase_type_draw(s0, s1, s2, s3, rates, Ccum, acum)
                    for l in range(n_act):
                        vs[l] += jz
                    u, s0, s1, s2, s3 = _xo_double(s0, s1, s2, s3)
                    nj = t_loc - math.log(u) / kappa
                if t_loc >= t_end:
                    break
            t = t_end
            if n_act > 1:
                same = True
                for l in range(1, n_act):
                    if vs[l] != vs[0]:
                        same = False
                        break
                if same:
                    snapL = aLs[0]
                    snapR = aRs[0]
                    snapB = aBs[0]
                    n_act = 1
        for l in range(L):
            if l == 0 or n_act == L:
                outL[i, l] = aLs[l]
                outR[i, l] = aRs[l]
                outB[i, l] = aBs[l]
            else:
                outL[i, l] = aLs[l] + (aLs[0] - snapL)
                outR[i, l] = aRs[l] + (aRs[0] - snapR)
                outB[i, l] = aBs[l] + (aBs[0] - snapB)


# --------------------------------------------------------------------------
# block runners
# --------------------------------------------------------------------------


class _BlockResult:
    __slots__ = ("exit_disc", "disc_L", "disc_R", "disc_B", "occ_below", "occ_above")

    def __init__(self, n: int):
        self.exit_disc = np.zeros(n)
        self.disc_L = np.zeros(n)
        self.disc_R = np.zeros(n)
        self.disc_B = np.zeros(n)
        self.occ_below = np.zeros(n)
        self.occ_above = np.zeros(n)


class _PathState:
    """Mutable single-level state arrays, compactable for exit runs."""

    def __init__(self, n: int, x0: float, seed: int, start_index: int, kappa: float):
        self.V = np.full(n, max(x0, 0.0))
        self.disc = np.ones(n)
        self.alive = np.ones(n)
        self.accL = np.zeros(n)
        self.accR = np.zeros(n)
        self.accB = np.zeros(n)
        self.occB = np.zeros(n)
        self.occA = np.zeros(n)
        self.exit_disc = np.zeros(n)
        self.orig = np.arange(n)
        self.state = np.empty((n, 4), dtype=np.uint64)
        _seed_states(seed, start_index, self.state)
        self.next_jump = np.empty(n)
        _init_jump_times(self.state, self.next_jump, kappa)

    def flush(self, res: _BlockResult, idx: np.ndarray) -> None:
        oi = self.orig[idx]
        res.exit_disc[oi] = self.exit_disc[idx]
        res.disc_L[oi] = self.accL[idx]
        res.disc_R[oi] = self.accR[idx]
        res.disc_B[oi] = self.accB[idx]
        res.occ_below[oi] = self.occB[idx]
        res.occ_above[oi] = self.occA[idx]

    def compact(self, res: _BlockResult) -> None:
        keep = self.alive > 0
        self.flush(res, np.nonzero(~keep)[0])
        for name in ("V", "disc", "alive", "accL", "accR", "accB", "occB",
                     "occA", "exit_disc", "orig", "next_jump"):
            setattr(self, name, getattr(self, name)[keep])
        self.state = self.state[keep]

    @property
    def n(self) -> int:
        return self.V.shape[0]


def _b_arrays(B: IntervalSet | None):
    if B is not None and not B.is_empty():
        return (
            np.array([lo for lo, _ in B.intervals]),
            np.array([hi for _, hi in B.intervals]),
        )
    return np.empty(0), np.empty(0)


def _split_horizon(horizon: float, dt: float) -> tuple[int, float]:
    n_full = int(math.floor(horizon / dt + 1e-9))
    dt_last = horizon - n_full * dt
    if dt_last < 1e-12:
        dt_last = 0.0
    return n_full, dt_last


def _run_block_exit(
    model: ValidatedModel,
    geometry: Geometry,
    x0: float,
    config: SimConfig,
    block_index: int,
    n: int,
    B: IntervalSet | None,
) -> list[_BlockResult]:
    """One block of a run with upper target a; one result per sign."""
    b, delta, q, a = geometry.b, geometry.delta, geometry.q, geometry.a
    c0, sigma, kappa = model.c_Y, model.sigma, model.kappa
    dt, horizon = config.dt, config.horizon
    rates, Ccum, acum = _embedded_chain(model.jump)
    B_lo, B_hi = _b_arrays(B)

    signs = (1.0, -1.0) if config.antithetic else (1.0,)
    results = [_BlockResult(n) for _ in signs]
    if x0 < 0:
        for res in results:
            res.disc_R += -x0
    if x0 > a:
        for res in results:
            res.exit_disc[:] = 1.0
        return results

    n_full, dt_last = _split_horizon(horizon, dt)

    def kh_of(h):
        return h if q == 0.0 else (1.0 - math.exp(-q * h)) / q

    for sgn, res in zip(signs, results):
        st = _PathState(n, x0, config.seed, block_index * BLOCK, kappa)
        done = 0
        t = 0.0
        while done < n_full and st.n and np.any(st.alive > 0):
            k = min(CHUNK, n_full - done)
            _advance_exit(
                st.V, st.disc, st.alive, st.accL, st.accR, st.accB, st.occB,
                st.occA, st.next_jump, st.exit_disc, st.state,
                t, k, dt, c0, delta, sigma, b, q,
                kh_of(dt), math.exp(-q * dt), sigma * math.sqrt(dt), a,
                B_lo, B_hi, rates, Ccum, acum, kappa, sgn,
            )
            done += k
            t += k * dt
            if (st.alive > 0).sum() < 0.9 * st.n:
                st.compact(res)
        if dt_last > 0.0 and st.n and np.any(st.alive > 0):
            _advance_exit(
                st.V, st.disc, st.alive, st.accL, st.accR, st.accB, st.occB,
                st.occA, st.next_jump, st.exit_disc, st.state,
                t, 1, dt_last, c0, delta, sigma, b, q,
                kh_of(dt_last), math.exp(-q * dt_last),
                sigma * math.sqrt(dt_last), a,
                B_lo, B_hi, rates, Ccum, acum, kappa, sgn,
            )
        if st.n:
            st.flush(res, np.arange(st.n))
    return results


def _run_block_levels(
    model: ValidatedModel,
    geometry: Geometry,
    levels: np.ndarray,
    config: SimConfig,
    block_index: int,
    n: int,
    B: IntervalSet | None,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """One block of a no-upper-target run; (L_disc, R_disc, B_disc) per sign,
    each of shape (n, n_levels)."""
    b, delta, q = geometry.b, geometry.delta, geometry.q
    c0, sigma, kappa = model.c_Y, model.sigma, model.kappa
    dt, horizon = config.dt, config.horizon
    rates, Ccum, acum = _embedded_chain(model.jump)
    B_lo, B_hi = _b_arrays(B)
    n_full, dt_last = _split_horizon(horizon, dt)
    kh = dt if q == 0.0 else (1.0 - math.exp(-q * dt)) / q

    signs = (1.0, -1.0) if config.antithetic else (1.0,)
    out = []
    for sgn in signs:
        state0 = np.empty((n, 4), dtype=np.uint64)
        _seed_states(config.seed, block_index * BLOCK, state0)
        outL = np.empty((n, levels.size))
        outR = np.empty((n, levels.size))
        outB = np.empty((n, levels.size))
        _advance_levels(
            levels, outL, outR, outB, state0,
            n_full, dt, dt_last, c0, delta, sigma, b, q, kh,
            math.exp(-q * dt), sigma * math.sqrt(dt),
            B_lo, B_hi, rates, Ccum, acum, kappa, sgn,
        )
        out.append((outL, outR, outB))
    return out


# --------------------------------------------------------------------------
# estimation API
# --------------------------------------------------------------------------


def _blocks(n_paths: int, antithetic: bool):
    n_base = n_paths // 2 if antithetic else n_paths
    start, idx = 0, 0
    while start < n_base:
        n = min(BLOCK, n_base - start)
        yield idx, n
        start += n
        idx += 1


def _estimate(values: np.ndarray, antithetic: bool, bias_bound: float = 0.0) -> EstimateWithCI:
    n = values.size
    if antithetic:
        # pair averages are the iid samples
        values = 0.5 * (values[0::2] + values[1::2])
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return EstimateWithCI(
        mean=mean, stderr=sd / math.sqrt(values.size), n_paths=n, bias_bound=bias_bound
    )


def _interleave(parts: list[np.ndarray], antithetic: bool) -> np.ndarray:
    if not antithetic:
        return np.concatenate(parts)
    cols = []
    for i in range(0, len(parts), 2):
        va, vb = parts[i], parts[i + 1]
        inter = np.empty(va.size * 2)
        inter[0::2], inter[1::2] = va, vb
        cols.append(inter)
    return np.concatenate(cols)


def run_levels(
    model: ValidatedModel,
    geometry: Geometry,
    levels,
    config: SimConfig,
    B: IntervalSet | None = None,
) -> dict[str, np.ndarray]:
    """Per-path discounted dividends / injections / time-in-B for several
    starting levels on shared noise (no upper target).

    Returns arrays of shape (n_paths, len(levels)); levels must be >= 0
    (a negative start only adds the deterministic lump |x| to injections).
    """
    if geometry.a is not None:
        raise ValueError("run_levels is for runs without an upper target")
    set_num_threads(worker_count())
    levels = np.asarray(sorted(levels, reverse=True), dtype=float)
    if np.any(levels < 0):
        raise ValueError("levels must be >= 0; handle x < 0 via the |x| shift")
    partsL, partsR, partsB = [], [], []
    for idx, n in _blocks(config.n_paths, config.antithetic):
        for outL, outR, outB in _run_block_levels(
            model, geometry, levels, config, idx, n, B
        ):
            partsL.append(outL)
            partsR.append(outR)
            partsB.append(outB)
    anti = config.antithetic

    # concatenate per level, preserving block order (and pair interleave)
    def gather(parts):
        per_level = []
        for l in range(levels.size):
            per_level.append(_interleave([p[:, l] for p in parts], anti))
        return np.stack(per_level, axis=1)

    return {
        "levels": levels,
        "dividends": gather(partsL),
        "injection": gather(partsR),
        "resolvent": gather(partsB),
    }


def _run_exit_paths(
    model: ValidatedModel,
    geometry: Geometry,
    x: float,
    config: SimConfig,
    B: IntervalSet | None,
) -> list[tuple[_BlockResult, float]]:
    set_num_threads(worker_count())
    signs = (1.0, -1.0) if config.antithetic else (1.0,)
    out: list[tuple[_BlockResult, float]] = []
    for idx, n in _blocks(config.n_paths, config.antithetic):
        results = _run_block_exit(model, geometry, x, config, idx, n, B)
        out.extend(zip(results, signs))
    return out


def estimate_functional(
    model: ValidatedModel,
    geometry: Geometry,
    x: float,
    functional: str,
    horizon: str,
    config: SimConfig,
    B: IntervalSet | None = None,
    side: str = "below",
) -> EstimateWithCI:
    """Monte Carlo estimate of one discounted functional of V started at x.

    functional: 'dividends' | 'injection' | 'exit' | 'resolvent' | 'occupation'
    horizon:    'to_a' (stop at T_a^+; geometry.a required) or 'infinite'
                (truncate at config.horizon; dividends carry the bias bound
                delta * e^{-q horizon} / q).  'resolvent' works under both.

    Deterministic for fixed (seed, n_paths) independently of the worker count.
    """
    if functional not in _FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    if functional in ("exit", "occupation") and horizon != "to_a":
        raise ValueError(f"{functional} is defined up to T_a^+; use horizon='to_a'")
    if functional == "resolvent" and B is None:
        raise ValueError("resolvent needs the interval set B")
    q = geometry.q
    if horizon == "to_a":
        geometry.require_a()
    elif q > 0 and math.exp(-q * config.horizon) > 1.0001e-3:
        raise ValueError("horizon too short: e^{-q*horizon} must be below 1e-3")
    anti = config.antithetic
    shift = max(0.0, -x)

    if horizon == "infinite":
        geom_free = geometry if geometry.a is None else Geometry(
            b=geometry.b, delta=geometry.delta, q=geometry.q, p=geometry.p
        )
        data = run_levels(model, geom_free, [max(x, 0.0)], config, B=B)
        if functional == "dividends":
            bias = geometry.delta * math.exp(-q * config.horizon) / q if q > 0 else 0.0
            return _estimate(data["dividends"][:, 0], anti, bias_bound=bias)
        if functional == "injection":
            return _estimate(data["injection"][:, 0] + shift, anti)
        if functional == "resolvent":
            return _estimate(data["resolvent"][:, 0], anti)
        raise ValueError(f"{functional} is not an infinite-horizon functional")

    results = _run_exit_paths(model, geometry, max(x, 0.0), config, B)

    def collect(extract):
        return _interleave([extract(r) for r, _ in results], anti)

    if functional == "exit":
        return _estimate(collect(lambda r: r.exit_disc), anti)
    if functional == "resolvent":
        return _estimate(collect(lambda r: r.disc_B), anti)
    if functional == "occupation":
        p = geometry.p
        if p is None:
            raise ValueError("occupation needs geometry.p")
        occ = "occ_below" if side == "below" else "occ_above"
        return _estimate(
            collect(lambda r: r.exit_disc * np.exp(-p * getattr(r, occ))), anti
        )
    if functional == "dividends":
        return _estimate(collect(lambda r: r.disc_L), anti)
    return _estimate(collect(lambda r: r.disc_R) + shift, anti)


def estimate_exit_bundle(
    model: ValidatedModel,
    geometry: Geometry,
    x: float,
    config: SimConfig,
    B: IntervalSet | None = None,
) -> dict[str, EstimateWithCI]:
    """All first-passage functionals from one shared simulation run.

    Returns estimates for 'exit', 'dividends', 'injection', and, when
    applicable, 'resolvent' (needs B) and 'occupation_below'/'occupation_above'
    (needs geometry.p).
    """
    geometry.require_a()
    results = _run_exit_paths(model, geometry, max(x, 0.0), config, B)
    anti = config.antithetic
    shift = max(0.0, -x)

    def collect(extract):
        return _interleave([extract(r) for r, _ in results], anti)

    out = {
        "exit": _estimate(collect(lambda r: r.exit_disc), anti),
        "dividends": _estimate(collect(lambda r: r.disc_L), anti),
        "injection": _estimate(collect(lambda r: r.disc_R) + shift, anti),
    }
    if B is not None:
        out["resolvent"] = _estimate(collect(lambda r: r.disc_B), anti)
    if geometry.p is not None:
        p = geometry.p
        out["occupation_below"] = _estimate(
            collect(lambda r: r.exit_disc * np.exp(-p * r.occ_below)), anti
        )
        out["occupation_above"] = _estimate(
            collect(lambda r: r.exit_disc * np.exp(-p * r.occ_above)), anti
        )
    return out


def estimate_value(
    model: ValidatedModel,
    geometry: Geometry,
    beta: float,
    x: float,
    config: SimConfig,
) -> EstimateWithCI:
    """Dividends minus beta * injections on shared paths (variance reduction)."""
    geom_free = geometry if geometry.a is None else Geometry(
        b=geometry.b, delta=geometry.delta, q=geometry.q
    )
    data = run_levels(model, geom_free, [max(x, 0.0)], config)
    shift = max(0.0, -x)
    vals = data["dividends"][:, 0] - beta * (data["injection"][:, 0] + shift)
    bias = 0.0
    if geometry.q > 0:
        bias = geometry.delta * math.exp(-geometry.q * config.horizon) / geometry.q
    return _estimate(vals, config.antithetic, bias_bound=bias)
