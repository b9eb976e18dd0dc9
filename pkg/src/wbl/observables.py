"""Real trigonometric polynomials on the torus.

Observables are finite Hermitian-symmetric Fourier sums

    a(q, p) = sum_{(m,n)} c_{mn} e^{2 pi i (m q + n p)},   conj(c_{mn}) = c_{-m,-n},

so every value is real and every average we need (over an axis-aligned
D-adic rectangle, or over the base-4 digit fractal) has a closed form.
Keeping the family closed under these operations is what makes the rest of
the laboratory's oracles exact instead of quadrature-limited.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

__all__ = [
    "FourierMode",
    "Observable",
    "FractalAverage",
    "eval_obs",
    "mean",
    "centered",
    "lipschitz_bound",
    "rectangle_average",
    "fractal_average",
    "load_observable",
    "observable_from_json",
]

_REAL_TOL = 1e-12


@dataclass(frozen=True)
class FourierMode:
    """One Fourier mode: frequency (m, n) with complex amplitude."""

    m: int
    n: int
    coeff: complex


class Observable:
    """Finite Hermitian mode set; values are real.

    Parameters
    ----------
    modes : iterable of (m, n, coeff) or FourierMode
        Duplicate (m, n) pairs are rejected. The set must be closed under
        (m, n, c) -> (-m, -n, conj(c)); use ``hermitian=True`` (default) to
        have missing partners filled in automatically.
    """

    def __init__(self, modes=(), hermitian: bool = True):
        table: dict[tuple[int, int], complex] = {}
        for mode in modes:
            if isinstance(mode, FourierMode):
                m, n, c = mode.m, mode.n, mode.coeff
            else:
                m, n, c = mode
            key = (int(m), int(n))
            if key in table:
                raise ValueError(f"duplicate mode {key}")
            table[key] = complex(c)
        if hermitian:
            for (m, n), c in list(table.items()):
                partner = (-m, -n)
                if partner not in table:
                    table[partner] = c.conjugate()
        # drop exact zeros so max_freq and support tests see the true set
        table = {k: c for k, c in table.items() if c != 0}
        for (m, n), c in table.items():
            mate = table.get((-m, -n))
            if mate is None or abs(mate - c.conjugate()) > _REAL_TOL:
                raise ValueError(
                    f"mode ({m},{n}) has no Hermitian partner; values would not be real"
                )
        self._table = dict(sorted(table.items()))

    # ------------------------------------------------------------------
    @property
    def modes(self) -> tuple[FourierMode, ...]:
        return tuple(FourierMode(m, n, c) for (m, n), c in self._table.items())

    @property
    def coeffs(self) -> dict[tuple[int, int], complex]:
        return dict(self._table)

    @property
    def max_freq(self) -> int:
        return max((max(abs(m), abs(n)) for (m, n) in self._table), default=0)

    def coeff(self, m: int, n: int) -> complex:
        return self._table.get((m, n), 0j)

    def is_pure_axis(self) -> bool:
        """True if all non-constant modes live on one axis (all n=0 or all m=0)."""
        pure_q = all(n == 0 for (m, n) in self._table)
        pure_p = all(m == 0 for (m, n) in self._table)
        return pure_q or pure_p

    def scaled(self, factor: float) -> "Observable":
        return Observable(
            [(m, n, factor * c) for (m, n), c in self._table.items()], hermitian=False
        )

    def reflected(self) -> "Observable":
        """The composition a(1-q, 1-p): mode indices negate, coefficients stay."""
        return Observable(
            [(-m, -n, c) for (m, n), c in self._table.items()], hermitian=False
        )

    def sup_bound(self) -> float:
        """sum |c_{mn}|, an upper bound for ||a||_inf."""
        return float(sum(abs(c) for c in self._table.values()))

    def __len__(self) -> int:
        return len(self._table)

    def __repr__(self) -> str:
        return f"Observable({len(self._table)} modes, max_freq={self.max_freq})"


@dataclass(frozen=True)
class FractalAverage:
    """Converged digit-fractal average with the depth that achieved it."""

    value: float
    k_used: int
    tol: float


# ----------------------------------------------------------------------
# point evaluation and linear functionals


def _coords(point) -> tuple[float, float]:
    if hasattr(point, "q"):
        return float(point.q), float(point.p)
    q, p = point
    return float(q), float(p)


def eval_obs(obs: Observable, point) -> float:
    """Evaluate the observable at a torus point (anything with .q/.p or a pair)."""
    q, p = _coords(point)
    total = 0j
    for (m, n), c in obs.coeffs.items():
        total += c * cmath.exp(2j * math.pi * (m * q + n * p))
    if abs(total.imag) > _REAL_TOL * max(1.0, abs(total.real)):
        raise ValueError(f"non-real evaluation {total}; mode set not Hermitian?")
    return total.real


def mean(obs: Observable) -> float:
    """The torus integral: coefficient of the (0,0) mode."""
    c = obs.coeff(0, 0)
    return c.real


def centered(obs: Observable) -> Observable:
    """Remove the constant term, so the integral of the result is zero."""
    return Observable(
        [(m, n, c) for (m, n), c in obs.coeffs.items() if (m, n) != (0, 0)],
        hermitian=False,
    )


def lipschitz_bound(obs: Observable) -> float:
    """Upper bound for the Lipschitz norm ||a||_inf + sup |grad a|.

    Per mode: |c| for the sup part and 2 pi |c| ||(m,n)||_2 for the gradient,
    so the bound is sum |c_{mn}| (1 + 2 pi sqrt(m^2 + n^2)). Always >= the
    true norm; exact for single cosines up to the triangle inequality.
    """
    return float(
        sum(
            abs(c) * (1.0 + 2.0 * math.pi * math.hypot(m, n))
            for (m, n), c in obs.coeffs.items()
        )
    )


def gradient_bound(obs: Observable) -> float:
    """Just the gradient part of :func:`lipschitz_bound` (tail certificates)."""
    return float(
        sum(2.0 * math.pi * abs(c) * math.hypot(m, n) for (m, n), c in obs.coeffs.items())
    )


# ----------------------------------------------------------------------
# exact averages


def interval_factor(freq: int, den: int) -> complex:
    """Average of e^{2 pi i freq x} over an interval of width 1/den.

    This is psi(freq/den) with psi(v) = (e^{2 pi i v} - 1)/(2 pi i v) and
    psi(0) = 1; the resonant case den | freq is decided in exact integer
    arithmetic (zero unless freq == 0).
    """
    if freq % den == 0:
        return 1.0 + 0j if freq == 0 else 0j
    nu = freq / den
    # psi(nu) = e^{i pi nu} sinc(pi nu); stable for nu arbitrarily small
    return cmath.exp(1j * math.pi * nu) * (math.sin(math.pi * nu) / (math.pi * nu))


def _corner_phase(freq: int, num: int, den: int) -> complex:
    # e^{2 pi i freq num/den} with the exponent reduced mod den first,
    # so large corners do not lose precision to phase wrapping
    return cmath.exp(2j * math.pi * ((freq * num) % den) / den)


def rectangle_average(obs: Observable, rect) -> float:
    """Exact average of the observable over a symbolic rectangle.

    ``rect`` carries a base D, position digits (most significant first) and
    momentum digits; it is the phase-space cell
    q in [pos/D^l, +D^-l), p in [mom/D^(k-l), +D^-(k-l)). Each mode
    integrates to corner phase times two interval factors, all exact.
    """
    D = rect.D
    ell = len(rect.pos_digits)
    cod = len(rect.mom_digits)
    q_den = D**ell
    p_den = D**cod
    q_num = 0
    for d in rect.pos_digits:  # stored most significant first
        q_num = q_num * D + int(d)
    p_num = 0
    for d in reversed(rect.mom_digits):  # stored eps_k..eps_{l+1}; p wants eps_{l+1} first
        p_num = p_num * D + int(d)
    total = 0j
    for (m, n), c in obs.coeffs.items():
        fq = interval_factor(m, q_den)
        if fq == 0:
            continue
        fp = interval_factor(n, p_den)
        if fp == 0:
            continue
        total += c * _corner_phase(m, q_num, q_den) * _corner_phase(n, p_num, p_den) * fq * fp
    if abs(total.imag) > 1e-11:
        raise ValueError(f"non-real rectangle average {total}")
    return total.real


def _axis_fractal_factor(freq: int, depth: int) -> complex:
    """Average of e^{2 pi i freq x} over depth base-4 digits drawn from {0, 2},
    the remaining mass spread uniformly over the residual 4^-depth interval."""
    out = interval_factor(freq, 4**depth)
    for j in range(1, depth + 1):
        out *= 0.5 * (1.0 + cmath.exp(2j * math.pi * (2 * freq % 4**j) / 4**j))
    return out


def fractal_sum(obs: Observable, k: int) -> float:
    """s_k: average of the observable over the 2^k base-4 rectangles whose
    digits all lie in {0, 2}, at the balanced split ell = floor(k/2).

    Factorizes exactly per mode and per axis, so the cost is O(k * modes)
    rather than 2^k.
    """
    ell = k // 2
    total = 0j
    for (m, n), c in obs.coeffs.items():
        total += c * _axis_fractal_factor(m, ell) * _axis_fractal_factor(n, k - ell)
    if abs(total.imag) > 1e-10:
        raise ValueError(f"non-real fractal sum {total}")
    return total.real


def fractal_limit_factor(freq: int, depth: int = 60) -> complex:
    """Truncated infinite product for the one-axis fractal average of a mode."""
    out = 1.0 + 0j
    for j in range(1, depth + 1):
        out *= 0.5 * (1.0 + cmath.exp(2j * math.pi * (2 * freq % 4**j) / 4**j))
    return out


def fractal_average(obs_centered: Observable, tol: float = 1e-10) -> FractalAverage:
    """Limit of s_k for the base-4 digit fractal, via the Cauchy stopping rule.

    Parameters
    ----------
    obs_centered : Observable
        Must have zero mean (the constant term would dominate trivially).
    tol : float
        Stop once |s_k - s_{k-1}| <= tol and the certified remaining change
        is also <= tol.

    Notes
    -----
    A small successive difference alone is not convergence: sin(4*pi*q) has
    s_2 = s_3 = s_4 = s_5 = 2/pi exactly (a trig identity of the depth-1 and
    depth-2 factors), 0.037 away from the limit.  The per-axis factor at
    depth d is E[exp(2*pi*i*m*(X_d + U/4^d))] with X_d the truncated digit
    sum and U uniform; the limit replaces U/4^d by the digit tail, both in
    [0, 4^-d], so each axis factor is within 2*pi*|freq|*4^-d of its limit.
    Stopping additionally requires that certified bound to be <= tol.
    """
    if abs(mean(obs_centered)) > _REAL_TOL:
        raise ValueError("fractal average expects a centered observable")
    if len(obs_centered) == 0:
        return FractalAverage(0.0, 0, tol)
    prev = fractal_sum(obs_centered, 1)
    for k in range(2, 65):
        cur = fractal_sum(obs_centered, k)
        if abs(cur - prev) <= tol and _fractal_tail_bound(obs_centered, k) <= tol:
            return FractalAverage(cur, k, tol)
        prev = cur
    raise ArithmeticError("fractal average failed to converge by depth 64")


def _fractal_tail_bound(obs: Observable, k: int) -> float:
    """Certified |s_k - lim s| bound from the per-axis phase increments."""
    dq = k // 2
    dp = k - dq
    tot = 0.0
    for (m, n), c in obs.coeffs.items():
        tot += abs(c) * 2.0 * math.pi * (abs(m) * 4.0**-dq + abs(n) * 4.0**-dp)
    return tot


# ----------------------------------------------------------------------
# JSON interchange


def observable_from_json(text: str) -> Observable:
    """Parse ``{"modes": [{"m":..,"n":..,"re":..,"im":..}, ...]}``.

    Missing Hermitian partners are completed automatically; an explicit
    partner that contradicts conjugate symmetry is rejected.
    """
    doc = json.loads(text)
    if not isinstance(doc, dict) or "modes" not in doc:
        raise ValueError('observable JSON must be an object with a "modes" list')
    raw = []
    for entry in doc["modes"]:
        m = int(entry["m"])
        n = int(entry["n"])
        c = complex(float(entry.get("re", 0.0)), float(entry.get("im", 0.0)))
        raw.append((m, n, c))
    seen: dict[tuple[int, int], complex] = {}
    for m, n, c in raw:
        if (m, n) in seen:
            raise ValueError(f"duplicate mode ({m},{n}) in observable JSON")
        seen[(m, n)] = c
    for (m, n), c in seen.items():
        mate = seen.get((-m, -n))
        if mate is not None and abs(mate - c.conjugate()) > _REAL_TOL:
            raise ValueError(
                f"modes ({m},{n}) and ({-m},{-n}) contradict Hermitian symmetry"
            )
    return Observable(raw, hermitian=True)


def load_observable(path) -> Observable:
    with open(path, "r", encoding="utf-8") as fh:
        return observable_from_json(fh.read())


# convenience constructors used throughout the tests and CLI defaults


def cosine(m: int = 1, n: int = 0, amplitude: float = 1.0) -> Observable:
    """amplitude * cos(2 pi (m q + n p))."""
    half = amplitude / 2.0
    return Observable([(m, n, half), (-m, -n, half)], hermitian=False)


def sine(m: int = 1, n: int = 0, amplitude: float = 1.0) -> Observable:
    """amplitude * sin(2 pi (m q + n p))."""
    half = amplitude / 2j
    return Observable([(m, n, half), (-m, -n, -half)], hermitian=False)


def combine(*parts: Observable) -> Observable:
    table: dict[tuple[int, int], complex] = {}
    for part in parts:
        for (m, n), c in part.coeffs.items():
            table[(m, n)] = table.get((m, n), 0j) + c
    return Observable([(m, n, c) for (m, n), c in table.items()], hermitian=False)
