"""Classical D-baker dynamics and exact correlation quantities.

The baker map B(q,p) = (Dq mod 1, (p + floor(Dq))/D) is the two-sided
Bernoulli shift on base-D digit strings; compositions of B with the point
reflection R(q,p) = (1-q, 1-p) drive both the time-evolution map H(t) and
the correlation sums

    C_B(t)  = int a0(x) a0(B^t x) dx,
    C_BR(t) = int a0(x) a0(B^t R x) dx,

whose two-sided sums give the variance V(a) and its phase-twisted variant.
For trigonometric polynomials every correlation has a closed form: writing
q = (a + u)/D^t over the D^t branches of B^t turns each mode pair into two
interval factors and a product of t one-digit geometric sums, all evaluated
in exact rational arithmetic so true zeros come out exactly zero.

Two distinct reflections coexist for D >= 3.  The point reflection R above
negates Fourier mode indices; the half-period power of the quantized map
instead permutes coherent indices by digitwise negation nu: every base-D
digit eps of both coordinates maps to (D - eps) mod D.  On the torus nu is
a measure-preserving involution commuting with B, different from R at every
digit (R complements, eps -> D-1-eps, once expansions are infinite), and it
is nu-based correlations that finite-N trace measurements converge to.  The
``digitwise`` switches on the variance functions select that convention:
the plain sums swap C_BR for C_Bnu, and the phase-twisted sum additionally
carries the factor (-1)^(alpha-beta) the half-period residue produces.  At
D = 2 negation is the identity and nothing changes.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from fractions import Fraction

from .observables import Observable, gradient_bound, interval_factor

__all__ = [
    "TorusPoint",
    "SymbolicRectangle",
    "CorrelationSeries",
    "HMapDescriptor",
    "baker_step",
    "reflect",
    "tent_exponent",
    "h_map",
    "h_apply",
    "h_intersects",
    "correlation",
    "negation_correlation",
    "correlation_tail_bound",
    "classical_variance",
    "tilde_variance",
    "f_a",
    "period",
]


def period(D: int, k: int) -> int:
    """Exact period q(k) of the quantized map: 4k for D >= 3, 2k for D = 2."""
    return 4 * k if D >= 3 else 2 * k


def tent_exponent(t: int, k: int) -> int:
    """Tent function eta_k(t), reduced mod 2k: t on [0,k], 2k-t on (k,2k)."""
    t = t % (2 * k)
    return t if t <= k else 2 * k - t


# ----------------------------------------------------------------------
# points and elementary maps


@dataclass(frozen=True)
class TorusPoint:
    """A point of the unit torus; coordinates may be float or Fraction."""

    q: object
    p: object

    def __post_init__(self):
        object.__setattr__(self, "q", _mod1(self.q))
        object.__setattr__(self, "p", _mod1(self.p))

    def as_floats(self) -> tuple[float, float]:
        return float(self.q), float(self.p)


def _mod1(x):
    return x - math.floor(x)


def baker_step(point: TorusPoint, D: int, t: int = 1) -> TorusPoint:
    """t-fold baker map (negative t = inverse). Exact on Fraction coordinates."""
    q, p = point.q, point.p
    if t >= 0:
        for _ in range(t):
            a = math.floor(D * q)
            q = D * q - a
            p = (p + a) / (Fraction(D) if isinstance(p, Fraction) else D)
    else:
        for _ in range(-t):
            b = math.floor(D * p)
            p = D * p - b
            q = (q + b) / (Fraction(D) if isinstance(q, Fraction) else D)
    return TorusPoint(q, p)


def reflect(point: TorusPoint) -> TorusPoint:
    """R(q,p) = (1-q mod 1, 1-p mod 1); an involution."""
    return TorusPoint(_mod1(1 - point.q), _mod1(1 - point.p))


# ----------------------------------------------------------------------
# symbolic rectangles


def _snap_digits(x, D: int, count: int) -> tuple[int, ...]:
    """Leading base-D digits of x in [0,1), with a 1e-12 snap to the grid so
    values meant to be exact do not pick up trailing D-1 digits."""
    den = D**count
    if isinstance(x, Fraction):
        scaled = int(x * den) if (x * den).denominator == 1 else math.floor(x * den)
    else:
        scaled = x * den
        nearest = round(scaled)
        scaled = nearest if abs(x - nearest / den) < 1e-12 else math.floor(scaled)
    scaled %= den
    digits = []
    for _ in range(count):
        scaled, d = divmod(scaled, D)
        digits.append(d)
    return tuple(reversed(digits))  # most significant first


@dataclass(frozen=True)
class SymbolicRectangle:
    """A (k,l)-rectangle named by its digit string.

    ``pos_digits`` stores (eps_l, ..., eps_1) and ``mom_digits`` stores
    (eps_k, ..., eps_{l+1}), both descending in the subscript, matching the
    corner expansions q0 = 0.eps_l...eps_1 and p0 = 0.eps_{l+1}...eps_k.
    """

    D: int
    pos_digits: tuple[int, ...]
    mom_digits: tuple[int, ...]

    def __post_init__(self):
        for d in self.pos_digits + self.mom_digits:
            if not 0 <= d < self.D:
                raise ValueError(f"digit {d} out of range for base {self.D}")

    @property
    def ell(self) -> int:
        return len(self.pos_digits)

    @property
    def k(self) -> int:
        return len(self.pos_digits) + len(self.mom_digits)

    @property
    def area(self) -> Fraction:
        return Fraction(1, self.D**self.k)

    def digit(self, j: int) -> int:
        """eps_j for j in [1, k]: j <= l are position digits, the rest momentum."""
        if not 1 <= j <= self.k:
            raise IndexError(j)
        if j <= self.ell:
            return self.pos_digits[self.ell - j]
        return self.mom_digits[self.k - j]

    def corner(self) -> TorusPoint:
        q = Fraction(_digits_to_int(self.pos_digits, self.D), self.D**self.ell)
        p = Fraction(
            _digits_to_int(tuple(reversed(self.mom_digits)), self.D),
            self.D ** len(self.mom_digits),
        )
        return TorusPoint(q, p)

    def negated(self) -> "SymbolicRectangle":
        """Digitwise negation eps -> (D - eps) mod D: the symbolic reflection."""
        return SymbolicRectangle(
            self.D,
            tuple((self.D - d) % self.D for d in self.pos_digits),
            tuple((self.D - d) % self.D for d in self.mom_digits),
        )

    def window(self) -> dict[int, int]:
        """Digit constraints on the two-sided shift coordinates: position i
        carries x_i = eps_{l+1-i} for i in [l+1-k, l] (i >= 1 are q digits)."""
        ell = self.ell
        return {ell + 1 - j: self.digit(j) for j in range(1, self.k + 1)}

    @classmethod
    def from_point(cls, point: TorusPoint, D: int, k: int, ell: int) -> "SymbolicRectangle":
        pos = _snap_digits(point.q, D, ell)
        mom_msb = _snap_digits(point.p, D, k - ell)  # (eps_{l+1}, ..., eps_k)
        return cls(D, pos, tuple(reversed(mom_msb)))


def _digits_to_int(digits_msb_first: tuple[int, ...], D: int) -> int:
    out = 0
    for d in digits_msb_first:
        out = out * D + d
    return out


# ----------------------------------------------------------------------
# the time-evolution map H(t)


@dataclass(frozen=True)
class HMapDescriptor:
    """Which composition of baker powers and reflection B^t collapses to.

    ``shift`` is the signed baker power s and ``reflect`` says whether R is
    applied first, so the map is x -> B^s (R^e x). |shift| always equals the
    tent value eta_k(t).
    """

    D: int
    k: int
    t: int  # reduced mod the period
    regime: str
    shift: int
    reflect: bool


def h_map(t: int, k: int, D: int) -> HMapDescriptor:
    q = period(D, k)
    t = t % q
    r = t % k
    if D == 2:
        if t < k:
            return HMapDescriptor(D, k, t, f"B^{t}", t, False)
        return HMapDescriptor(D, k, t, f"B^-{k - r}", -(k - r), False)
    if t < k:
        return HMapDescriptor(D, k, t, f"B^{t}", t, False)
    if t < 2 * k:
        return HMapDescriptor(D, k, t, f"B^-{k - r} R", -(k - r), True)
    if t < 3 * k:
        return HMapDescriptor(D, k, t, f"B^{r} R", r, True)
    return HMapDescriptor(D, k, t, f"B^-{k - r}", -(k - r), False)


def h_apply(desc: HMapDescriptor, point: TorusPoint) -> TorusPoint:
    """Apply H(t) to a torus point, using the point reflection R.

    This continuum form is exact for D = 2, where negation fixes every
    digit.  For D >= 3 the symbolic dynamics negates digits instead of
    complementing them, so the exact reflected-regime integrals come from
    negation_correlation and the symbolic path in h_intersects; this
    pointwise map is the smooth stand-in.
    """
    if desc.reflect:
        point = reflect(point)
    return baker_step(point, desc.D, desc.shift)


def h_intersects(
    desc: HMapDescriptor, source: SymbolicRectangle, target: SymbolicRectangle
) -> bool:
    """Symbolic test of H(t)[source] meeting [target].

    Both rectangles constrain windows of the two-sided digit string; the
    image under B^s shifts the source window by s and R negates its digits
    in place, so the two sets meet exactly when the constraints agree on the
    overlap of the windows (empty overlap means they always meet).
    """
    if (source.D, source.k, source.ell) != (target.D, target.k, target.ell):
        raise ValueError("rectangles must share (D, k, l)")
    src = source.negated() if desc.reflect else source
    shifted = {i - desc.shift: d for i, d in src.window().items()}
    for i, d in target.window().items():
        if i in shifted and shifted[i] != d:
            return False
    return True


def baker_intersection_area(
    target: SymbolicRectangle, source: SymbolicRectangle, t: int
) -> Fraction:
    """Exact area of [target] intersected with B^t [source].

    The baker map is the two-sided digit shift, so B^t moves the source
    window by t positions; the intersection is the set constrained by both
    windows at once.  Conflicting constraints give area 0, otherwise the
    area is D^-(number of constrained positions).
    """
    if (source.D, source.k, source.ell) != (target.D, target.k, target.ell):
        raise ValueError("rectangles must share (D, k, l)")
    shifted = {i - t: d for i, d in source.window().items()}
    combined = dict(target.window())
    for i, d in shifted.items():
        if combined.setdefault(i, d) != d:
            return Fraction(0)
    return Fraction(1, target.D ** len(combined))


# ----------------------------------------------------------------------
# exact correlations


def _psi_rational(num: int, den: int) -> complex:
    """psi(num/den) with the integer-root case decided exactly."""
    return interval_factor(num, den)


def _digit_sum(e: int, den: int, D: int) -> complex:
    """S = sum_{alpha < D} e^{2 pi i alpha e / den}, with exact zero/full cases."""
    e %= den
    if e == 0:
        return complex(D)
    if (D * e) % den == 0:
        return 0j  # all D-th roots of unity
    return sum(cmath.exp(2j * math.pi * ((alpha * e) % den) / den) for alpha in range(D))


def _pair_integral(coeffs_a, coeffs_b, D: int, t: int) -> float:
    """int A(x) B(B^t x) dx for t >= 1, summed over all mode pairs."""
    Dt = D**t
    total = 0j
    for (m1, n1), c1 in coeffs_a.items():
        for (m2, n2), c2 in coeffs_b.items():
            fp = _psi_rational(n1 * Dt + n2, Dt)
            if fp == 0:
                continue
            fq = _psi_rational(m2 * Dt + m1, Dt)
            if fq == 0:
                continue
            prod = 1.0 + 0j
            for i in range(1, t + 1):
                s = _digit_sum(m1 * D ** (t - i) + n2 * D ** (i - 1), Dt, D)
                if s == 0:
                    prod = 0j
                    break
                prod *= s
            if prod == 0:
                continue
            total += c1 * c2 * fp * fq * prod / Dt
    if abs(total.imag) > 1e-10:
        raise ValueError(f"non-real correlation {total}")
    return total.real


def _static_overlap(coeffs_a, coeffs_b) -> float:
    total = 0j
    for (m, n), c in coeffs_a.items():
        mate = coeffs_b.get((-m, -n))
        if mate is not None:
            total += c * mate
    return total.real


def _negation_factor(w: Fraction, v: Fraction, D: int) -> complex:
    """Average over one digit of e^{2 pi i (eps w + ((-eps) mod D) v)}.

    When either weight is integral the sum is a plain geometric digit sum
    (negation permutes the alphabet), so its exact zero and full cases
    apply; only genuinely mixed weights fall through to a float sum.
    """
    w %= 1
    v %= 1
    if w == 0 and v == 0:
        return 1.0 + 0j
    if v == 0:
        return _digit_sum(w.numerator, w.denominator, D) / D
    if w == 0:
        return _digit_sum(v.numerator, v.denominator, D) / D
    total = 1.0 + 0j  # eps = 0 term
    for eps in range(1, D):
        phase = float(eps * w) + float((D - eps) * v)
        total += cmath.exp(2j * math.pi * phase)
    return total / D


def _negation_weights(m: int, n: int, t: int, D: int, i: int) -> Fraction:
    """Weight a mode (m, n) evaluated at B^t-shifted coordinates puts on
    two-sided digit i (position digits i >= 1, momentum i <= 0 before the
    shift)."""
    j = i - t
    if j >= 1:
        return Fraction(m, D**j)
    return Fraction(n, D ** (1 - j))


def _negation_pair_integral(coeffs_a, coeffs_b, D: int, t: int) -> float:
    """int A(x) B(B^t nu(x)) dx summed over all mode pairs.

    nu commutes with the shift, so digit independence factorizes each mode
    pair into one averaged phase per two-sided digit position.  Factors
    approach 1 geometrically in both directions; the window is sized so the
    discarded tail is certified below 5e-16 per side.
    """
    total = 0j
    for (m1, n1), c1 in coeffs_a.items():
        for (m2, n2), c2 in coeffs_b.items():
            scale = max(abs(m1), abs(n1), abs(m2), abs(n2), 1)
            pad = 2 + math.ceil((math.log(scale) + 40.0) / math.log(D))
            lo = min(0, t) - pad
            hi = max(1, t + 1) + pad
            prod = 1.0 + 0j
            for i in range(lo, hi + 1):
                g = _negation_factor(
                    _negation_weights(m1, n1, 0, D, i),
                    _negation_weights(m2, n2, t, D, i),
                    D,
                )
                if g == 0:
                    prod = 0j
                    break
                prod *= g
            total += c1 * c2 * prod
    if abs(total.imag) > 1e-10:
        raise ValueError(f"non-real correlation {total}")
    return total.real


def correlation(obs_centered: Observable, D: int, t: int, reflected: bool = False) -> float:
    """Exact C_B(t) (or C_BR(t) with ``reflected``) for a centered observable.

    Composition with B^t pairs each mode against the branch structure of the
    t-step map; reflection negates the second factor's mode indices. Pure-q
    and pure-p mode sets vanish exactly once D^|t| outruns every frequency's
    D-adic part; mixed sets decay geometrically instead (see
    :func:`correlation_tail_bound`).
    """
    a = obs_centered.coeffs
    b = obs_centered.reflected().coeffs if reflected else dict(a)
    if t == 0:
        return _static_overlap(a, b)
    if t > 0:
        return _pair_integral(a, b, D, t)
    # int a(x) b(B^-s x) dx = int b(y) a(B^s y) dy
    return _pair_integral(b, a, D, -t)


def negation_correlation(obs_centered: Observable, D: int, t: int) -> float:
    """C_Bnu(t) = int a0(x) a0(B^t nu(x)) dx, nu the digitwise negation.

    This is the reflected correlation the quantized system realizes: the
    half-period power of the quantized map permutes coherent indices by nu,
    so finite-N reflected trace terms converge to these integrals rather
    than to the point-reflection ones.  Evaluated by the per-digit product;
    exact zeros surface through the geometric digit-sum cases (for a pure
    position or momentum mode set the leading factor vanishes exactly
    whenever it does for C_B).  At D = 2 this equals C_B(t) identically.
    """
    a = obs_centered.coeffs
    return _negation_pair_integral(a, dict(a), D, t)


def correlation_tail_bound(obs_centered: Observable, D: int, t: int) -> float:
    """Certified bound on |C_B(t)|, |C_BR(t)| and |C_Bnu(t)| for |t| >= 1.

    Replace each factor by its average over depth-m cylinders (m = |t|//2);
    the two digit windows are then disjoint, hence exactly independent, and
    the centered factor integrates to zero. What remains is the replacement
    error, at most sqrt(2) L D^-m per factor for gradient constant L.
    """
    m = abs(t) // 2
    sup = obs_centered.sup_bound()
    grad = gradient_bound(obs_centered)
    return 2.0 * math.sqrt(2.0) * sup * grad * float(D) ** (-m)


def _support_cutoff(obs_centered: Observable, D: int) -> int | None:
    """Exact support cutoff for pure-axis mode sets, else None."""
    if len(obs_centered) == 0:
        return 0
    if not obs_centered.is_pure_axis():
        return None
    return max(0, math.ceil(math.log(obs_centered.max_freq) / math.log(D)))


def _truncation_point(obs_centered: Observable, D: int, tol: float) -> int:
    """Smallest T past which the summed certified tail stays below tol.

    Each depth m = floor(s/2) occurs at most twice in the tail, so
    sum_{s > T} bound(s) <= 2 K D/(D-1) * D^(-floor((T+1)/2)).
    """
    K = 2.0 * math.sqrt(2.0) * obs_centered.sup_bound() * gradient_bound(obs_centered)
    if K == 0.0:
        return 1
    for T in range(1, 4000):
        if 2.0 * K * (D / (D - 1.0)) * float(D) ** (-((T + 1) // 2)) < tol:
            return T
    raise ArithmeticError("correlation tail failed to certify; observable too rough")


@dataclass
class CorrelationSeries:
    """C_B, C_BR and C_Bnu on their (possibly certified-truncated) support.

    ``t_star`` is the exact support cutoff when one exists (pure-q or pure-p
    mode sets); otherwise None and ``t_max`` marks where the certified tail
    bound drops below ``tol``.
    """

    D: int
    t_star: int | None
    t_max: int
    tol: float
    cb: dict[int, float]
    cbr: dict[int, float]
    cbn: dict[int, float]

    @classmethod
    def compute(cls, obs_centered: Observable, D: int, tol: float = 1e-12) -> "CorrelationSeries":
        t_star = _support_cutoff(obs_centered, D)
        t_max = t_star if t_star is not None else _truncation_point(obs_centered, D, tol)
        cb = {}
        cbr = {}
        cbn = {}
        for t in range(0, t_max + 1):
            cb[t] = correlation(obs_centered, D, t, reflected=False)
            cb[-t] = cb[t]
            # C_BR and C_Bnu are well-defined integrals for every D; the
            # D >= 3 indicator belongs to the variance sums, not the series
            cbr[t] = correlation(obs_centered, D, t, reflected=True)
            cbr[-t] = cbr[t]
            cbn[t] = negation_correlation(obs_centered, D, t)
            cbn[-t] = cbn[t]
        return cls(D, t_star, t_max, tol, cb, cbr, cbn)

    def value(self, t: int, reflected: bool = False) -> float:
        table = self.cbr if reflected else self.cb
        return table.get(t, table.get(-t, 0.0))

    def value_negated(self, t: int) -> float:
        return self.cbn.get(t, self.cbn.get(-t, 0.0))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "C_B", "C_BR"])
            for t in range(-self.t_max, self.t_max + 1):
                writer.writerow([t, f"{self.value(t):.12g}", f"{self.value(t, True):.12g}"])


def classical_variance(obs: Observable, D: int, tol: float = 1e-12, *,
                       digitwise: bool = False) -> float:
    """V(a) = sum_t [C_B(t) + (D>=3) C_BR(t)], exact up to a < tol tail.

    ``digitwise`` swaps the reflected summand for C_Bnu(t), the convention
    the quantized traces converge to (see the module docstring); the default
    keeps the point-reflection form.
    """
    from .observables import centered as _centered

    a0 = _centered(obs)
    series = CorrelationSeries.compute(a0, D, tol)
    refl = series.cbn if digitwise else series.cbr
    total = series.cb[0] + (refl[0] if D >= 3 else 0.0)
    for t in range(1, series.t_max + 1):
        total += 2.0 * series.cb[t]
        if D >= 3:
            total += 2.0 * refl[t]
    return total


def tilde_variance(obs: Observable, D: int, k: int, alpha: int, beta: int,
                   tol: float = 1e-12, *, digitwise: bool = False) -> float:
    """Phase-twisted variance sum_t e^{2 pi i t (alpha-beta)/q(k)} [C_B + C_BR].

    The phase uses the /q(k) normalization (the alternative, undivided phase
    would collapse the twist to full turns and make the off-diagonal profile
    trivial). Even symmetry in t makes the sum real; a value below -1e-9
    signals an oracle bug and raises.

    With ``digitwise`` the reflected summand is C_Bnu(t) and carries the
    extra factor (-1)^(alpha-beta): the reflected trace terms sit at the
    half-period residues t = +-2k + s, whose phase e^{2 pi i t(alpha-beta)/q}
    splits off exactly that sign.  For alpha = beta both forms reduce to
    their V(a) counterparts.
    """
    from .observables import centered as _centered

    a0 = _centered(obs)
    series = CorrelationSeries.compute(a0, D, tol)
    q = period(D, k)
    refl = series.cbn if digitwise else series.cbr
    parity = -1.0 if digitwise and (alpha - beta) % 2 else 1.0
    total = series.cb[0] + (parity * refl[0] if D >= 3 else 0.0)
    for t in range(1, series.t_max + 1):
        w = 2.0 * math.cos(2.0 * math.pi * t * (alpha - beta) / q)
        total += w * series.cb[t]
        if D >= 3:
            total += parity * w * refl[t]
    if total < -1e-9:
        raise ArithmeticError(f"tilde variance {total} < 0 beyond tolerance")
    return max(total, 0.0)


def f_a(obs: Observable, D: int, k: int, alpha: int, beta: int, *,
        digitwise: bool = False) -> float:
    """Off-diagonal scaling profile sqrt(V~(a,alpha,beta) / V(a))."""
    v = classical_variance(obs, D, digitwise=digitwise)
    if v <= 0.0:
        raise ZeroDivisionError("V(a) = 0: scaling profile undefined")
    return math.sqrt(tilde_variance(obs, D, k, alpha, beta, digitwise=digitwise) / v)
