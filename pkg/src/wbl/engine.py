"""Matrix-free application of the Walsh-quantized baker map.

The Hilbert space is (C^D)^(tensor k) and one step of the dynamics is a
cyclic rotation of the tensor slots with an inverse DFT applied to the
factor that wraps around.  Powers of the propagator therefore cost
O(N D) per step and the operator is never materialized, except in a
small-N debug path used to cross-check the slot arithmetic against the
position-basis block form.

Matrix entries in the coherent bases factor into k single-digit inner
products, which gives O(k) evaluation of any entry, O(N k) diagonal
sums, and exact sparsity information.  Everything here is pure and
single threaded; einsum contractions are run with optimize=False so
the reduction order, and hence the output bits, never depend on the
environment.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .classical import (
    SymbolicRectangle,
    h_intersects,
    h_map,
    period,
    tent_exponent,
)
from .observables import Observable, lipschitz_bound, mean, rectangle_average

_DEFAULT_MEM_CAP = 1 << 22
_DENSE_LIMIT = 4096
_PAIR_LIMIT = 1 << 14
_TABLE_MEM = 1 << 29
_DEBUG_DENSE_LIMIT = 1024
_STATE_MAGIC = 0x31534257  # the bytes "WBS1" little-endian


def _memory_cap() -> int:
    raw = os.environ.get("WBL_MEM_CAP", "")
    return int(raw) if raw else _DEFAULT_MEM_CAP


@dataclass(frozen=True)
class EngineConfig:
    """Dimensions of one quantization: N = D^k states, l position digits.

    l defaults to the balanced split floor(k/2).  The asymptotic scale
    condition min(l, k-l) >= 3 log_D k is reported, not enforced, since
    no small k can satisfy it.
    """

    D: int
    k: int
    ell: int = -1

    def __post_init__(self):
        if self.ell < 0:
            object.__setattr__(self, "ell", self.k // 2)
        if self.D < 2:
            raise ValueError("D must be at least 2")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 <= self.ell <= self.k:
            raise ValueError("l must lie in [0, k]")
        cap = _memory_cap()
        if self.D**self.k > cap:
            raise ValueError(
                f"N = {self.D**self.k} exceeds the memory cap {cap}; "
                "raise WBL_MEM_CAP to override"
            )

    @property
    def N(self) -> int:
        return self.D**self.k

    @property
    def q(self) -> int:
        return period(self.D, self.k)

    @property
    def scale_condition_met(self) -> bool:
        return min(self.ell, self.k - self.ell) >= 3 * math.log(self.k, self.D)


@dataclass
class QuditState:
    """Amplitude vector tagged with the configuration it lives in."""

    amplitudes: np.ndarray
    config: EngineConfig

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class CoherentIndex:
    """Integer label of a coherent basis vector.

    Digit eps_j occupies base-D place j-1, so the l position digits are
    the low-order part of the label and the k-l momentum digits the
    high-order part.
    """

    value: int
    config: EngineConfig

    def __post_init__(self):
        if not 0 <= self.value < self.config.N:
            raise ValueError(f"index {self.value} out of range for N = {self.config.N}")

    def digit(self, j: int) -> int:
        """eps_j for j in [1, k]."""
        if not 1 <= j <= self.config.k:
            raise IndexError(j)
        return (self.value // self.config.D ** (j - 1)) % self.config.D

    def decode(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Digit strings (eps_k..eps_{l+1}, eps_l..eps_1), both descending."""
        cfg = self.config
        mom = tuple(self.digit(j) for j in range(cfg.k, cfg.ell, -1))
        pos = tuple(self.digit(j) for j in range(cfg.ell, 0, -1))
        return mom, pos

    @classmethod
    def encode(
        cls,
        config: EngineConfig,
        mom_digits: tuple[int, ...],
        pos_digits: tuple[int, ...],
    ) -> "CoherentIndex":
        if len(pos_digits) != config.ell or len(mom_digits) != config.k - config.ell:
            raise ValueError("digit string lengths must match (k, l)")
        value = 0
        for d in mom_digits + pos_digits:  # descending eps_k .. eps_1
            value = value * config.D + d
        return cls(value, config)

    def rectangle(self) -> SymbolicRectangle:
        mom, pos = self.decode()
        return SymbolicRectangle(self.config.D, pos, mom)


@dataclass(frozen=True)
class QuantizedObservable:
    """Diagonal of an observable in the coherent basis: one rectangle
    average per label."""

    averages: np.ndarray
    obs: Observable
    config: EngineConfig


@dataclass(frozen=True)
class Square:
    """Axis-aligned D^-r x D^-r square with corner (i, j) on the D^-r grid."""

    r: int
    i: int
    j: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("resolution exponent r must be nonnegative")
        if self.i < 0 or self.j < 0:
            raise ValueError("grid coordinates must be nonnegative")


@dataclass(frozen=True)
class PatternReport:
    """Sparsity census of one propagator power in the coherent basis."""

    t: int
    eta: int
    diag_count: int
    total_count: int
    pairs: np.ndarray  # (row, col) indices of entries above threshold
    moduli: np.ndarray  # |entry| over those pairs


@dataclass(frozen=True)
class PatternMatchReport:
    """Quantum nonzero pattern versus the symbolic classical image."""

    t: int
    matches: bool
    checked: int
    discrepancies: tuple


@dataclass(frozen=True)
class BoundCheck:
    kind: str
    t1: int
    t2: int | None
    value: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class BoundReport:
    checks: tuple[BoundCheck, ...]

    @property
    def violations(self) -> tuple[BoundCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)

    @property
    def ok(self) -> bool:
        return not self.violations


def dft_row(D: int, m: int, n: int) -> complex:
    """Entry <m|F_D^dagger|n> = e^{2 pi i mn/D} / sqrt(D)."""
    if not (0 <= m < D and 0 <= n < D):
        raise ValueError("indices must lie in [0, D)")
    return complex(_unit_phases(D)[(m * n) % D]) / math.sqrt(D)


@lru_cache(maxsize=None)
def _unit_phases(D: int) -> np.ndarray:
    table = np.exp(2j * np.pi * np.arange(D) / D)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _dft_matrix(D: int) -> np.ndarray:
    m, n = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    mat = _unit_phases(D)[(m * n) % D] / math.sqrt(D)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _dft_power(D: int, p: int) -> np.ndarray:
    """F_D^dagger to the power p mod 4; p=2 is the mod-D reflection."""
    p %= 4
    if p == 0:
        mat = np.eye(D, dtype=np.complex128)
    elif p == 1:
        return _dft_matrix(D)
    elif p == 2:
        m, n = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
        mat = ((m + n) % D == 0).astype(np.complex128)
    else:
        mat = np.conj(_dft_matrix(D))
    mat.setflags(write=False)
    return mat


def eta(t: int, k: int) -> int:
    """Tent-shaped sparsity exponent of the propagator power, mod 2k."""
    return tent_exponent(t, k)


class BakerEngine:
    """Operator toolkit for one (D, k, l) configuration.

    Heavy operations act on amplitude arrays of shape (..., N), so a
    batch of states is just a 2-d array.  QuditState wrappers are
    accepted and returned in kind.
    """

    def __init__(self, config: EngineConfig):
        self.config = config
        self._fd = _dft_matrix(config.D)

    # -- array plumbing ------------------------------------------------

    def _unwrap(self, state):
        if isinstance(state, QuditState):
            return state.amplitudes, lambda arr: QuditState(arr, self.config)
        return state, lambda arr: arr

    def _tensor(self, amps) -> tuple[np.ndarray, tuple]:
        cfg = self.config
        arr = np.asarray(amps, dtype=np.complex128)
        if arr.shape[-1] != cfg.N:
            raise ValueError(f"last axis must have length N = {cfg.N}")
        lead = arr.shape[:-1]
        return arr.reshape((-1,) + (cfg.D,) * cfg.k), lead

    def _apply_axis(self, arr: np.ndarray, axis: int, mat: np.ndarray) -> np.ndarray:
        cfg = self.config
        batch = arr.shape[0]
        left = cfg.D**axis
        right = cfg.D ** (cfg.k - 1 - axis)
        view = arr.reshape(batch, left, cfg.D, right)
        out = np.einsum("ca,zxay->zxcy", mat, view, optimize=False)
        return out.reshape(arr.shape)

    # -- the propagator ------------------------------------------------

    def apply_baker(self, state, t: int):
        """B^t applied matrix free.

        t is reduced to the centered window [-q/2, q/2) and split as
        whole*k + r with r in [0, k); the r unit rotations run first and
        the whole-multiples of k collapse to one factor-wise Fourier
        power, which commutes with the rotations.
        """
        cfg = self.config
        amps, rewrap = self._unwrap(state)
        arr, lead = self._tensor(amps)
        tc = (t + cfg.q // 2) % cfg.q - cfg.q // 2
        whole, r = divmod(tc, cfg.k)
        for _ in range(r):
            arr = np.einsum("za...,ca->z...c", arr, self._fd, optimize=False)
        p = whole % 4
        if p:
            mat = _dft_power(cfg.D, p)
            for axis in range(cfg.k):
                arr = self._apply_axis(arr, axis, mat)
        return rewrap(arr.reshape(lead + (cfg.N,)))

    # -- coherent bases ------------------------------------------------

    def coherent_state(self, index) -> np.ndarray:
        """Product state: position digits as basis vectors, momentum
        digits Fourier transformed."""
        cfg = self.config
        ci = index if isinstance(index, CoherentIndex) else CoherentIndex(int(index), cfg)
        vec = np.ones(1, dtype=np.complex128)
        for i in range(1, cfg.k + 1):
            if i <= cfg.ell:
                factor = np.zeros(cfg.D, dtype=np.complex128)
                factor[ci.digit(cfg.ell + 1 - i)] = 1.0
            else:
                factor = np.ascontiguousarray(self._fd[:, ci.digit(cfg.k + 1 - (i - cfg.ell))])
            vec = np.kron(vec, factor)
        return vec

    def from_coherent(self, coeffs):
        """Coherent-basis coefficients to computational amplitudes."""
        cfg = self.config
        amps, rewrap = self._unwrap(coeffs)
        arr, lead = self._tensor(amps)  # axes eps_k .. eps_1
        for axis in range(cfg.k - cfg.ell):
            arr = self._apply_axis(arr, axis, self._fd)
        rot = list(range(cfg.k - cfg.ell, cfg.k)) + list(range(cfg.k - cfg.ell))
        arr = np.transpose(arr, (0,) + tuple(a + 1 for a in rot))
        return rewrap(arr.reshape(lead + (cfg.N,)))

    def to_coherent(self, state):
        """Computational amplitudes to coherent-basis coefficients."""
        cfg = self.config
        amps, rewrap = self._unwrap(state)
        arr, lead = self._tensor(amps)  # axes x_1 .. x_k
        rot = list(range(cfg.ell, cfg.k)) + list(range(cfg.ell))
        arr = np.transpose(arr, (0,) + tuple(a + 1 for a in rot))
        inv = np.conj(self._fd)
        for axis in range(cfg.k - cfg.ell):
            arr = self._apply_axis(arr, axis, inv)
        return rewrap(arr.reshape(lead + (cfg.N,)))

    # -- quantized observables ------------------------------------------

    def quantize(self, obs: Observable) -> QuantizedObservable:
        """Diagonal operator of rectangle averages, one per coherent label."""
        cfg = self.config
        avg = np.empty(cfg.N, dtype=np.float64)
        for idx in range(cfg.N):
            avg[idx] = rectangle_average(obs, CoherentIndex(idx, cfg).rectangle())
        avg.setflags(write=False)
        return QuantizedObservable(avg, obs, cfg)

    def apply_quantized(self, qobs: QuantizedObservable, state):
        amps, rewrap = self._unwrap(state)
        coeffs = self.to_coherent(np.asarray(amps, dtype=np.complex128))
        coeffs *= qobs.averages
        return rewrap(self.from_coherent(coeffs))

    # -- analytic matrix entries ----------------------------------------

    def _slot_plan(self, t: int) -> tuple[tuple[int, int, int], ...]:
        """Per slot i: (row digit place, col digit place, Fourier power).

        After t steps slot i carries the factor that started in slot
        s = ((i-1+t) mod k) + 1, which wrapped once for every step
        m in [1, t] with m = s mod k.  Momentum slots contribute one
        extra power on the ket side and remove one on the bra side.
        """
        cfg = self.config
        tq = t % cfg.q
        plan = []
        for i in range(1, cfg.k + 1):
            s = (i - 1 + tq) % cfg.k + 1
            wraps = (tq - s) // cfg.k + 1 if tq >= s else 0
            g_row = 1 if i > cfg.ell else 0
            g_col = 1 if s > cfg.ell else 0
            p = (wraps + g_col - g_row) % 4
            row_place = cfg.ell - i if i <= cfg.ell else cfg.k - (i - cfg.ell)
            col_place = cfg.ell - s if s <= cfg.ell else cfg.k - (s - cfg.ell)
            plan.append((row_place, col_place, p))
        return tuple(plan)

    def entry(self, t: int, row, col) -> complex:
        """<row|B^t|col> as a product of k single-digit inner products."""
        cfg = self.config
        r = row.value if isinstance(row, CoherentIndex) else int(row)
        c = col.value if isinstance(col, CoherentIndex) else int(col)
        phases = _unit_phases(cfg.D)
        out = 1.0 + 0.0j
        roots = 0
        for row_place, col_place, p in self._slot_plan(t):
            rho = (r // cfg.D**row_place) % cfg.D
            gam = (c // cfg.D**col_place) % cfg.D
            if p == 0:
                if rho != gam:
                    return 0.0j
            elif p == 2:
                if (rho + gam) % cfg.D:
                    return 0.0j
            else:
                ph = phases[(rho * gam) % cfg.D]
                out *= ph if p == 1 else ph.conjugate()
                roots += 1
        return out * cfg.D ** (-roots / 2)

    def _diag_sum(self, t: int, weights=None, mask=None) -> complex:
        """Sum of diagonal entries of B^t, optionally weighted or masked."""
        cfg = self.config
        idx = np.arange(cfg.N)
        acc = np.ones(cfg.N, dtype=np.complex128)
        roots = 0
        phases = _unit_phases(cfg.D)
        for row_place, col_place, p in self._slot_plan(t):
            rho = (idx // cfg.D**row_place) % cfg.D
            gam = (idx // cfg.D**col_place) % cfg.D
            if p == 0:
                acc *= rho == gam
            elif p == 2:
                acc *= (rho + gam) % cfg.D == 0
            else:
                ph = phases[(rho * gam) % cfg.D]
                acc *= ph if p == 1 else np.conj(ph)
                roots += 1
        if weights is not None:
            acc *= weights
        if mask is not None:
            acc *= mask
        return complex(acc.sum()) * cfg.D ** (-roots / 2)

    def _entry_matrix(self, t: int) -> np.ndarray:
        """Dense B^t in the coherent bases; guarded to small N."""
        cfg = self.config
        if cfg.N > _DENSE_LIMIT:
            raise ValueError(f"dense entry matrix guarded to N <= {_DENSE_LIMIT}")
        rows = np.arange(cfg.N)[:, None]
        cols = np.arange(cfg.N)[None, :]
        acc = np.ones((cfg.N, cfg.N), dtype=np.complex128)
        roots = 0
        phases = _unit_phases(cfg.D)
        for row_place, col_place, p in self._slot_plan(t):
            rho = (rows // cfg.D**row_place) % cfg.D
            gam = (cols // cfg.D**col_place) % cfg.D
            if p == 0:
                acc *= rho == gam
            elif p == 2:
                acc *= (rho + gam) % cfg.D == 0
            else:
                ph = phases[(rho * gam) % cfg.D]
                acc *= ph if p == 1 else np.conj(ph)
                roots += 1
        acc *= cfg.D ** (-roots / 2)
        return acc

    # -- sparsity patterns ----------------------------------------------

    def nonzero_pattern(self, t: int, threshold: float = 1e-10) -> PatternReport:
        """Census of entries above threshold in modulus."""
        cfg = self.config
        mat = self._entry_matrix(t)
        mask = np.abs(mat) > threshold
        pairs = np.argwhere(mask)
        return PatternReport(
            t=t,
            eta=eta(t, cfg.k),
            diag_count=int(np.count_nonzero(np.diagonal(mask))),
            total_count=int(np.count_nonzero(mask)),
            pairs=pairs,
            moduli=np.abs(mat[mask]),
        )

    def pattern_matches_classical(self, t: int) -> PatternMatchReport:
        """Nonzero entries of B^t versus symbolic rectangle intersections.

        Column eps is the source rectangle, row delta the target; the
        classical side asks whether the evolved source meets the target,
        with the digit alignment done exactly by the classical module.
        """
        cfg = self.config
        if cfg.N > _DENSE_LIMIT:
            raise ValueError(f"pattern comparison guarded to N <= {_DENSE_LIMIT}")
        quantum = np.abs(self._entry_matrix(t)) > 1e-10
        desc = h_map(t, cfg.k, cfg.D)
        rects = [CoherentIndex(i, cfg).rectangle() for i in range(cfg.N)]
        discrepancies = []
        for col in range(cfg.N):
            src = rects[col]
            for row in range(cfg.N):
                classical = h_intersects(desc, src, rects[row])
                if classical != bool(quantum[row, col]):
                    discrepancies.append((row, col, bool(quantum[row, col]), classical))
        return PatternMatchReport(
            t=t,
            matches=not discrepancies,
            checked=cfg.N * cfg.N,
            discrepancies=tuple(discrepancies),
        )

    # -- traces ----------------------------------------------------------

    def trace_power(self, t: int) -> complex:
        """Tr B^t from the analytic diagonal, O(N k)."""
        return self._diag_sum(t)

    def trace_bound(self, t: int) -> float:
        """The gcd bound D^{gcd([t]_k, k)} on |Tr B^t|."""
        cfg = self.config
        return float(cfg.D ** math.gcd(t % cfg.k, cfg.k))

    def trace_obs(self, qobs: QuantizedObservable, t: int) -> complex:
        """Tr(Op B^t) = sum over labels of avg * diagonal entry."""
        self._check_qobs(qobs)
        return self._diag_sum(t, weights=qobs.averages)

    def trace_obs_pair(self, qobs: QuantizedObservable, t1: int, t2: int) -> complex:
        """Tr(Op B^t1 Op B^t2); O(N^2 k) dense, column sweep above 4096."""
        cfg = self.config
        self._check_qobs(qobs)
        if cfg.N <= _DENSE_LIMIT:
            m1 = self._entry_matrix(t1)
            m2 = self._entry_matrix(t2)
            return complex(
                np.einsum("i,ij,j,ji->", qobs.averages, m1, qobs.averages, m2, optimize=False)
            )
        if cfg.N > _PAIR_LIMIT:
            raise ValueError(
                f"pair trace needs N^2 work; N = {cfg.N} exceeds the 2^14 guard "
                "(restrict to smaller k or use single traces)"
            )
        return self._pair_column_sweep(qobs, t1, t2)

    def _pair_column_sweep(self, qobs: QuantizedObservable, t1: int, t2: int) -> complex:
        cfg = self.config
        avg = qobs.averages
        total = 0.0j
        batch = 256
        for start in range(0, cfg.N, batch):
            stop = min(start + batch, cfg.N)
            span = np.arange(start, stop)
            coeffs = np.zeros((stop - start, cfg.N), dtype=np.complex128)
            coeffs[np.arange(stop - start), span] = 1.0
            mid = self.to_coherent(self.apply_baker(self.from_coherent(coeffs), t1))
            mid *= avg
            out = self.to_coherent(self.apply_baker(self.from_coherent(mid), t2))
            diag = out[np.arange(stop - start), span]
            total += complex(np.sum(avg[span] * diag))
        return total

    def pair_trace_table(self, qobs: QuantizedObservable, times=None) -> np.ndarray:
        """trace_obs_pair over all ordered pairs of times as a symmetric
        table.

        One diagonal-scaled entry matrix per time is enough for the whole
        table, so when those fit under the cache budget each is built
        once instead of once per pair; otherwise the per-pair path runs
        with its usual size guards.
        """
        cfg = self.config
        self._check_qobs(qobs)
        if times is None:
            times = range(-cfg.q // 2, cfg.q // 2)
        times = list(times)
        n = len(times)
        table = np.empty((n, n), dtype=np.complex128)
        cached = cfg.N <= _DENSE_LIMIT and 16 * n * cfg.N**2 <= _TABLE_MEM
        if cached:
            scaled = [qobs.averages[:, None] * self._entry_matrix(t) for t in times]
        for i1 in range(n):
            for i2 in range(i1, n):
                if cached:
                    val = complex(np.einsum("ij,ji->", scaled[i1], scaled[i2],
                                            optimize=False))
                else:
                    val = self.trace_obs_pair(qobs, times[i1], times[i2])
                table[i1, i2] = val
                table[i2, i1] = val
        return table

    def _check_qobs(self, qobs: QuantizedObservable) -> None:
        if qobs.config != self.config:
            raise ValueError("quantized observable belongs to a different configuration")

    # -- partial traces over squares --------------------------------------

    def _square_mask(self, square: Square) -> np.ndarray:
        cfg = self.config
        if square.r > min(cfg.ell, cfg.k - cfg.ell):
            raise ValueError("square resolution r must not exceed min(l, k-l)")
        if square.i >= cfg.D**square.r or square.j >= cfg.D**square.r:
            raise ValueError("square coordinates out of range for resolution r")
        idx = np.arange(cfg.N)
        mask = np.ones(cfg.N, dtype=bool)
        for a in range(1, square.r + 1):
            want_q = (square.i // cfg.D ** (square.r - a)) % cfg.D
            mask &= (idx // cfg.D ** (cfg.ell - a)) % cfg.D == want_q
            want_p = (square.j // cfg.D ** (square.r - a)) % cfg.D
            mask &= (idx // cfg.D ** (cfg.ell + a - 1)) % cfg.D == want_p
        return mask

    def partial_trace_square(self, t: int, square: Square) -> complex:
        """Diagonal sum restricted to rectangles inside one square."""
        return self._diag_sum(t, mask=self._square_mask(square))

    def partial_pair_square(self, t1: int, t2: int, sq1: Square, sq2: Square) -> complex:
        """Pair sum with each label confined to its own square."""
        cfg = self.config
        if cfg.N > _DENSE_LIMIT:
            raise ValueError(f"partial pair sums guarded to N <= {_DENSE_LIMIT}")
        m1 = self._square_mask(sq1).astype(np.float64)
        m2 = self._square_mask(sq2).astype(np.float64)
        a1 = self._entry_matrix(t1)
        a2 = self._entry_matrix(t2)
        return complex(np.einsum("i,ij,j,ji->", m1, a1, m2, a2, optimize=False))

    # -- bound verification ------------------------------------------------

    def _g_single(self, t: int) -> float:
        """G(t) for the single-trace bound, with the t = +-k refinement."""
        cfg = self.config
        tc = (t + cfg.q // 2) % cfg.q - cfg.q // 2
        if abs(tc) == cfg.k:
            return float(cfg.D) ** (cfg.k / 4)
        return float(cfg.D ** math.gcd(t % cfg.k, cfg.k))

    def _g_pair(self, s: int) -> float:
        """G(t1+t2) for the pair bound, refined when k | t1+t2 but q does not."""
        cfg = self.config
        if s % cfg.q == 0:
            return float(cfg.D**cfg.k)
        if s % cfg.k == 0:
            if cfg.D == 2 or cfg.D % 2 == 1:
                return 1.0
            return float(2**cfg.k)
        return float(cfg.D ** math.gcd(s % cfg.k, cfg.k))

    def verify_trace_bounds(
        self, qobs: QuantizedObservable, r: int, pair_samples: int = 32, seed: int = 0
    ) -> BoundReport:
        """Sweep single traces over a period and sampled pairs against the
        phase-cancellation bounds."""
        cfg = self.config
        if r > min(cfg.ell, cfg.k - cfg.ell):
            raise ValueError("r must not exceed min(l, k-l)")
        obs = qobs.obs
        sup = obs.sup_bound()
        lip = lipschitz_bound(obs)
        slack = 1e-8
        checks = []
        for t1 in range(-cfg.q // 2, cfg.q // 2):
            val = abs(self.trace_obs(qobs, t1))
            if t1 % cfg.q == 0:
                bound = cfg.N * abs(mean(obs))
            else:
                bound = sup * cfg.D ** (2 * r) * self._g_single(t1) + lip * math.sqrt(
                    2
                ) * cfg.D ** (cfg.k / 2 - r)
            checks.append(BoundCheck("single", t1, None, val, bound, val <= bound + slack))
        rng = np.random.default_rng(seed)
        pairs = [(t, -t) for t in range(0, cfg.q, max(1, cfg.q // 8))]
        while len(pairs) < pair_samples:
            pairs.append(tuple(rng.integers(-cfg.q // 2, cfg.q // 2, size=2)))
        for t1, t2 in pairs:
            val = abs(self.trace_obs_pair(qobs, int(t1), int(t2)))
            bound = sup**2 * cfg.D ** (4 * r) * self._g_pair(int(t1 + t2)) + 2 * math.sqrt(
                2
            ) * lip * sup * cfg.D ** (cfg.k - r)
            checks.append(
                BoundCheck("pair", int(t1), int(t2), val, bound, val <= bound + slack)
            )
        return BoundReport(tuple(checks))

    # -- dense debug cross-check ---------------------------------------------

    def dense_matrix(self) -> np.ndarray:
        """One-step propagator in the position basis, assembled from the
        block form: a DFT stack on the low k-1 digits with digit reversal,
        then a digit-reversed inverse DFT of the full index.

        Debug only; exists to cross-check the slot arithmetic.
        """
        cfg = self.config
        if cfg.N > _DEBUG_DENSE_LIMIT:
            raise ValueError(f"dense assembly guarded to N <= {_DEBUG_DENSE_LIMIT}")

        def rev_perm(n: int) -> np.ndarray:
            idx = np.arange(cfg.D**n)
            out = np.zeros_like(idx)
            for a in range(n):
                out += ((idx // cfg.D**a) % cfg.D) * cfg.D ** (n - 1 - a)
            return out

        def kron_power(mat: np.ndarray, n: int) -> np.ndarray:
            out = np.ones((1, 1), dtype=np.complex128)
            for _ in range(n):
                out = np.kron(out, mat)
            return out

        fwd = np.conj(self._fd)
        top = kron_power(fwd, cfg.k - 1)[rev_perm(cfg.k - 1), :]
        w1 = np.kron(np.eye(cfg.D, dtype=np.complex128), top)
        w2 = kron_power(self._fd, cfg.k)[:, rev_perm(cfg.k)]
        return w2 @ w1


# -- state serialization -------------------------------------------------


def dump_state(state: QuditState, path) -> None:
    """Binary dump: 16-byte header (magic, D, k, l) then interleaved
    re/im little-endian doubles."""
    cfg = state.config
    amps = np.asarray(state.amplitudes, dtype=np.complex128).ravel()
    if amps.size != cfg.N:
        raise ValueError("amplitude count does not match the configuration")
    inter = np.empty(2 * amps.size, dtype="<f8")
    inter[0::2] = amps.real
    inter[1::2] = amps.imag
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", _STATE_MAGIC, cfg.D, cfg.k, cfg.ell))
        fh.write(inter.tobytes())


def load_state(path) -> QuditState:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError("truncated state file")
        magic, D, k, ell = struct.unpack("<IIII", header)
        if magic != _STATE_MAGIC:
            raise ValueError("not a state file (bad magic)")
        cfg = EngineConfig(D, k, ell)
        inter = np.frombuffer(fh.read(16 * cfg.N), dtype="<f8")
    if inter.size != 2 * cfg.N:
        raise ValueError("truncated state file")
    amps = inter[0::2] + 1j * inter[1::2]
    return QuditState(amps, cfg)


def write_trace_csv(engine: BakerEngine, path, times=None) -> None:
    """Trace diagnostics, one row per time: t, re(Tr), im(Tr), the gcd
    bound, the gcd itself, and the tent exponent."""
    cfg = engine.config
    if times is None:
        times = range(-cfg.q // 2, cfg.q // 2)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "re_tr", "im_tr", "bound", "gcd", "eta"])
        for t in times:
            tr = engine.trace_power(t)
            writer.writerow(
                [
                    t,
                    f"{tr.real:.12g}",
                    f"{tr.imag:.12g}",
                    f"{engine.trace_bound(t):.12g}",
                    math.gcd(t % cfg.k, cfg.k),
                    eta(t, cfg.k),
                ]
            )
