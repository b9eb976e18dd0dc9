"""Spectral projectors and Haar sampling inside eigenspaces.

The propagator has exact period q, so the projector onto the eigenspace
of e^{2 pi i alpha/q} is a finite Fourier sum of propagator powers and
nothing ever needs diagonalizing.  Random eigenvectors come from
projecting Gaussian draws; eigenbases from orthonormalizing projected
probes.  Expected fluctuation moments are exact at finite eigenspace
dimension, evaluated either from trace sums against the projector
phases or from the eigenvalues of the compressed observable.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .engine import BakerEngine, EngineConfig, QuantizedObservable, QuditState

_REJECT_LIMIT = 8
_NULL_DRAW = 1e-6      # projected norm below this fraction of the draw: reject
_REORTH = 1e-8         # residual overlap that triggers the second pass
_DIM_TOL = 1e-6


def draw_stream(master_seed: int, alpha: int, index: int) -> np.random.Generator:
    """Independent generator for one (eigenspace, draw) pair.

    Streams are keyed by value, not by call order, so parallel sampling
    schedules cannot change what any draw produces.
    """
    return np.random.default_rng(np.random.SeedSequence([master_seed, alpha, index]))


@dataclass(frozen=True)
class ProjectorSpec:
    """Eigenspace label alpha together with its phase table."""

    alpha: int
    config: EngineConfig

    def __post_init__(self):
        if not 0 <= self.alpha < self.config.q:
            raise ValueError(f"alpha {self.alpha} outside [0, {self.config.q})")

    def times(self) -> range:
        q = self.config.q
        return range(-q // 2, q // 2)

    def phases(self) -> np.ndarray:
        """e^{-2 pi i alpha t / q} over the centered window.

        The conjugate phase is what makes the sum project onto the
        eigenvalue e^{+2 pi i alpha / q}.
        """
        q = self.config.q
        t = np.arange(-q // 2, q // 2)
        return np.exp(-2j * np.pi * self.alpha * t / q)


@dataclass(frozen=True)
class EigenDraw:
    """Orthonormal vectors sampled inside one eigenspace."""

    vectors: tuple
    alpha: int
    seed: int | None
    draw_indices: tuple

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Vectors as rows, shape (n, N)."""
        return np.stack([v.amplitudes for v in self.vectors])


class EigenspaceSampler:
    """Projection, dimension counting, and Haar sampling for one engine."""

    def __init__(self, engine: BakerEngine):
        self.engine = engine
        self.config = engine.config
        self._dims: dict[int, int] = {}
        self._phase_cache: dict[int, np.ndarray] = {}
        self._trace_profile: np.ndarray | None = None

    # -- projector application ------------------------------------------

    def _phases(self, alpha: int) -> np.ndarray:
        if alpha not in self._phase_cache:
            self._phase_cache[alpha] = ProjectorSpec(alpha, self.config).phases()
        return self._phase_cache[alpha]

    def project(self, alpha: int, state):
        """Component of the state in the eigenspace of e^{2 pi i alpha/q}.

        One propagator power reaches the left end of the time window,
        then unit steps walk across it, so the cost is q unit
        applications regardless of alpha.  Batched over leading axes.
        """
        phases = self._phases(alpha)
        wrapped = isinstance(state, QuditState)
        amps = state.amplitudes if wrapped else state
        q = self.config.q
        x = self.engine.apply_baker(amps, -q // 2)
        acc = phases[0] * x
        for step in range(1, q):
            x = self.engine.apply_baker(x, 1)
            acc = acc + phases[step] * x
        acc = acc / q
        return QuditState(acc, self.config) if wrapped else acc

    # -- dimensions ------------------------------------------------------

    def eigenspace_dim(self, alpha: int) -> int:
        """d_alpha from the phase sum of propagator traces.

        The sum must land on an integer; drifting further than 1e-6
        from one means the trace table is wrong, so that raises.
        """
        if alpha not in self._dims:
            if self._trace_profile is None:
                self._trace_profile = np.array(
                    [self.engine.trace_power(t)
                     for t in ProjectorSpec(0, self.config).times()])
            val = (self._phases(alpha) * self._trace_profile).sum() / self.config.q
            nearest = round(val.real)
            if abs(val.real - nearest) > _DIM_TOL or abs(val.imag) > _DIM_TOL:
                raise ArithmeticError(
                    f"projector trace {val} is not an integer (alpha={alpha})")
            if nearest < 0:
                raise ArithmeticError(f"negative dimension {nearest} (alpha={alpha})")
            self._dims[alpha] = int(nearest)
        return self._dims[alpha]

    def dimensions(self) -> tuple[int, ...]:
        return tuple(self.eigenspace_dim(a) for a in range(self.config.q))

    # -- Haar sampling ----------------------------------------------------

    def _gaussian(self, rng: np.random.Generator) -> np.ndarray:
        N = self.config.N
        return rng.standard_normal(N) + 1j * rng.standard_normal(N)

    def _draw_in_eigenspace(self, alpha: int, rng, existing) -> np.ndarray:
        """Project a fresh Gaussian draw and orthogonalize against the
        accepted vectors; reject draws that the projector annihilates."""
        for _ in range(_REJECT_LIMIT):
            z = self._gaussian(rng)
            w = self.project(alpha, z)
            if existing:
                basis = np.stack(existing)
                w = w - basis.T @ (basis.conj() @ w)
                resid = basis.conj() @ w
                if np.abs(resid).max() > _REORTH:
                    w = w - basis.T @ resid
            nw = np.linalg.norm(w)
            if nw >= _NULL_DRAW * np.linalg.norm(z):
                return w / nw
        raise RuntimeError(
            f"{_REJECT_LIMIT} consecutive draws projected to ~0 in eigenspace "
            f"{alpha}; its dimension is likely 0")

    def sample_haar_vector(self, alpha: int, rng: np.random.Generator) -> QuditState:
        """One Haar-distributed unit vector in the eigenspace."""
        return QuditState(self._draw_in_eigenspace(alpha, rng, []), self.config)

    def sample_orthonormal_set(self, alpha: int, n: int, rng=None, *,
                               seed: int | None = None,
                               first_index: int = 0) -> EigenDraw:
        """n orthonormal Haar vectors, the first n columns of a random
        unitary on the eigenspace.

        Pass a generator for sequential draws, or a seed to give every
        (alpha, draw index) its own stream; with a seed the j-th vector
        is reproducible in isolation.
        """
        if (rng is None) == (seed is None):
            raise ValueError("pass exactly one of rng and seed")
        d = self.eigenspace_dim(alpha)
        if n > d:
            raise ValueError(f"requested {n} vectors from a {d}-dimensional eigenspace")
        accepted: list[np.ndarray] = []
        indices = tuple(range(first_index, first_index + n))
        for j in indices:
            gen = rng if rng is not None else draw_stream(seed, alpha, j)
            accepted.append(self._draw_in_eigenspace(alpha, gen, accepted))
        vectors = tuple(QuditState(v, self.config) for v in accepted)
        return EigenDraw(vectors, alpha, seed, indices)

    def projected_eigenbasis(self, alpha: int, rng: np.random.Generator) -> np.ndarray:
        """Explicit orthonormal basis of the eigenspace, rows of shape
        (d_alpha, N), from the SVD of projected Gaussian probes."""
        d = self.eigenspace_dim(alpha)
        N = self.config.N
        if d == 0:
            return np.zeros((0, N), dtype=np.complex128)
        probes = np.empty((0, N), dtype=np.complex128)
        for _ in range(4):
            fresh = rng.standard_normal((d, N)) + 1j * rng.standard_normal((d, N))
            probes = np.vstack([probes, self.project(alpha, fresh)])
            _, sv, vh = np.linalg.svd(probes, full_matrices=False)
            if (sv > _REORTH * sv[0]).sum() >= d:
                return np.ascontiguousarray(vh[:d])
        raise RuntimeError(
            f"projected probes never reached rank {d} in eigenspace {alpha}")

    # -- exact moment predictions ----------------------------------------

    def op_projector_profile(self, qobs: QuantizedObservable) -> np.ndarray:
        """Tr of (quantized observable x projector) for every alpha at
        once; the single-time traces are alpha independent, so they are
        evaluated once and phase-weighted q ways."""
        q = self.config.q
        vals = np.array([self.engine.trace_obs(qobs, t)
                         for t in ProjectorSpec(0, self.config).times()])
        phases = np.stack([self._phases(a) for a in range(q)])
        return phases @ vals / q

    def op_projector_trace(self, alpha: int, qobs: QuantizedObservable) -> complex:
        phases = self._phases(alpha)
        vals = np.array([self.engine.trace_obs(qobs, t)
                         for t in ProjectorSpec(alpha, self.config).times()])
        return complex((phases * vals).sum() / self.config.q)

    def _pair_table(self, qobs: QuantizedObservable) -> np.ndarray:
        return self.engine.pair_trace_table(
            qobs, ProjectorSpec(0, self.config).times())

    def pair_projector_profile(self, qobs: QuantizedObservable) -> np.ndarray:
        """Tr of (observable x projector)^2 for every alpha; the pair
        table carries the whole cost and is built once."""
        q = self.config.q
        table = self._pair_table(qobs)
        out = np.empty(q, dtype=np.complex128)
        for alpha in range(q):
            ph = self._phases(alpha)
            out[alpha] = ph @ table @ ph / q**2
        return out

    def pair_projector_trace(self, alpha: int, qobs: QuantizedObservable) -> complex:
        ph = self._phases(alpha)
        return complex(ph @ self._pair_table(qobs) @ ph / self.config.q**2)

    def expected_mean(self, alpha: int, qobs: QuantizedObservable) -> float:
        """Haar average of sqrt(N) <v|Op|v> over the eigenspace, for a
        centered observable."""
        d = self.eigenspace_dim(alpha)
        if d == 0:
            raise ValueError(f"eigenspace {alpha} is empty")
        return math.sqrt(self.config.N) / d * self.op_projector_trace(alpha, qobs).real

    def expected_second_moment(self, alpha: int, qobs: QuantizedObservable) -> float:
        """Haar average of N <v|Op|v>^2, exact at finite dimension.

        The 1/(d(d+1)) weight is the exact two-point unitary integral;
        the large-d limit replaces it by 1/d^2.
        """
        d = self.eigenspace_dim(alpha)
        if d == 0:
            raise ValueError(f"eigenspace {alpha} is empty")
        single = self.op_projector_trace(alpha, qobs).real
        pair = self.pair_projector_trace(alpha, qobs).real
        return self.config.N / (d * (d + 1)) * (single**2 + pair)

    def compressed_operator(self, qobs: QuantizedObservable,
                            basis: np.ndarray) -> np.ndarray:
        """Observable restricted to the span of the basis rows: entries
        <b_i|Op|b_j>, Hermitian for real rectangle averages."""
        if basis.ndim != 2 or basis.shape[1] != self.config.N:
            raise ValueError("basis must have shape (d, N)")
        coeffs = self.engine.to_coherent(basis)
        mat = (coeffs.conj() * qobs.averages) @ coeffs.T
        return (mat + mat.conj().T) / 2

    def expected_fluctuation_moments(self, alpha: int, qobs: QuantizedObservable,
                                     obs_mean: float = 0.0, p_max: int = 4, *,
                                     basis: np.ndarray | None = None,
                                     rng: np.random.Generator | None = None):
        """Exact Haar moments of sqrt(N)(<v|Op|v> - mean), p = 1..p_max.

        Needs an explicit eigenbasis; pass one, or a generator to build
        it from projected probes.
        """
        if basis is None:
            if rng is None:
                raise ValueError("pass a basis or a generator to build one")
            basis = self.projected_eigenbasis(alpha, rng)
        d = basis.shape[0]
        if d == 0:
            raise ValueError(f"eigenspace {alpha} is empty")
        mat = self.compressed_operator(qobs, basis)
        mu = math.sqrt(self.config.N) * (np.linalg.eigvalsh(mat) - obs_mean)
        return haar_moments(mu, d, p_max)


def haar_moments(mu: np.ndarray, d: int, p_max: int) -> tuple[float, ...]:
    """E <u|A|u>^p for Haar unit u in C^d and Hermitian A with
    eigenvalues mu: p!/(d(d+1)...(d+p-1)) times the complete homogeneous
    polynomial h_p(mu), built from power sums by Newton's recurrence."""
    mu = np.asarray(mu, dtype=float)
    power = [0.0] + [float((mu**i).sum()) for i in range(1, p_max + 1)]
    h = [1.0]
    for p in range(1, p_max + 1):
        h.append(sum(power[i] * h[p - i] for i in range(1, p + 1)) / p)
    out = []
    weight = 1.0
    for p in range(1, p_max + 1):
        weight *= d + p - 1
        out.append(math.factorial(p) / weight * h[p])
    return tuple(out)


# -- persistence ----------------------------------------------------------


def _vector_path(prefix: str, i: int) -> str:
    return f"{prefix}-{i:04d}.state"


def save_eigen_draw(draw: EigenDraw, prefix) -> str:
    """One state file per vector plus a manifest; returns the manifest
    path."""
    from .engine import dump_state

    prefix = os.fspath(prefix)
    files = []
    for i, vec in enumerate(draw.vectors):
        path = _vector_path(prefix, i)
        dump_state(vec, path)
        files.append(os.path.basename(path))
    cfg = draw.vectors[0].config if draw.vectors else None
    manifest = {
        "seed": draw.seed,
        "alpha": draw.alpha,
        "n": len(draw.vectors),
        "indices": list(draw.draw_indices),
        "D": cfg.D if cfg else None,
        "k": cfg.k if cfg else None,
        "ell": cfg.ell if cfg else None,
        "files": files,
    }
    path = prefix + ".json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def load_eigen_draw(prefix) -> EigenDraw:
    from .engine import load_state

    prefix = os.fspath(prefix)
    with open(prefix + ".json") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(prefix)
    vectors = []
    for name in manifest["files"]:
        state = load_state(os.path.join(base, name) if base else name)
        cfg = state.config
        if (cfg.D, cfg.k, cfg.ell) != (manifest["D"], manifest["k"], manifest["ell"]):
            raise ValueError(f"state file {name} disagrees with the manifest")
        vectors.append(state)
    return EigenDraw(tuple(vectors), manifest["alpha"], manifest["seed"],
                     tuple(manifest["indices"]))
