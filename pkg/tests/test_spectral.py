"""Unit tests for spectral projectors, eigenspace dimensions, and Haar
sampling with exact finite-dimension moment predictions."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbl import observables as ob
from wbl import spectral as sp
from wbl.engine import BakerEngine, EngineConfig, QuditState

COS = ob.centered(ob.cosine(1, 0))


def engine(D, k, ell=None):
    return BakerEngine(EngineConfig(D, k, k // 2 if ell is None else ell))


def dense_projector(eng, alpha):
    """Fourier sum of dense propagator powers, the oracle for project()."""
    cfg = eng.config
    U = eng.dense_matrix()
    spec = sp.ProjectorSpec(alpha, cfg)
    P = np.zeros((cfg.N, cfg.N), dtype=np.complex128)
    for t, ph in zip(spec.times(), spec.phases()):
        P += ph * np.linalg.matrix_power(U, t % cfg.q)
    return P / cfg.q


def bracket(eng, qobs, amps):
    """<u|Op|u> from coherent overlaps."""
    c = eng.to_coherent(amps)
    return float(np.real(np.sum(qobs.averages * np.abs(c) ** 2)))


class TestProjectorSpec:
    def test_alpha_range(self):
        cfg = EngineConfig(3, 4, 2)
        with pytest.raises(ValueError, match="outside"):
            sp.ProjectorSpec(-1, cfg)
        with pytest.raises(ValueError, match="outside"):
            sp.ProjectorSpec(cfg.q, cfg)

    def test_window_and_phases(self):
        cfg = EngineConfig(3, 4, 2)
        spec = sp.ProjectorSpec(3, cfg)
        times = list(spec.times())
        assert len(times) == cfg.q
        assert times[0] == -cfg.q // 2 and times[-1] == cfg.q // 2 - 1
        ph = spec.phases()
        idx0 = times.index(0)
        assert ph[idx0] == pytest.approx(1.0)
        # conjugate phase: unit step multiplies by e^{-2 pi i alpha/q}
        assert ph[idx0 + 1] == pytest.approx(np.exp(-2j * np.pi * 3 / cfg.q))


class TestProjection:
    def test_matches_dense(self):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        eye = np.eye(eng.config.N, dtype=np.complex128)
        for alpha in range(eng.config.q):
            dense = dense_projector(eng, alpha)
            got = samp.project(alpha, eye).T
            assert np.allclose(got, dense, atol=1e-12)

    @pytest.mark.parametrize("D,k", [(2, 8), (3, 6)])
    def test_idempotent_and_resolution(self, D, k):
        eng = engine(D, k)
        samp = sp.EigenspaceSampler(eng)
        rng = np.random.default_rng(41)
        v = rng.standard_normal((3, eng.config.N)) + 1j * rng.standard_normal(
            (3, eng.config.N)
        )
        total = np.zeros_like(v)
        for alpha in range(eng.config.q):
            pv = samp.project(alpha, v)
            ppv = samp.project(alpha, pv)
            assert np.abs(ppv - pv).max() < 1e-10
            total += pv
        assert np.abs(total - v).max() < 1e-10

    def test_eigenrelation(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        rng = np.random.default_rng(5)
        v = rng.standard_normal(eng.config.N) + 1j * rng.standard_normal(eng.config.N)
        q = eng.config.q
        for alpha in (0, 1, 7, q - 1):
            pv = samp.project(alpha, v)
            rotated = eng.apply_baker(pv, 1)
            assert np.abs(rotated - np.exp(2j * np.pi * alpha / q) * pv).max() < 1e-9

    def test_batched_rows_match_loop(self):
        eng = engine(2, 6, 3)
        samp = sp.EigenspaceSampler(eng)
        rng = np.random.default_rng(17)
        batch = rng.standard_normal((4, eng.config.N)) + 1j * rng.standard_normal(
            (4, eng.config.N)
        )
        got = samp.project(2, batch)
        for i in range(4):
            assert np.allclose(got[i], samp.project(2, batch[i]), atol=1e-13)

    def test_wrapped_state_round_trip(self):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        state = QuditState(np.ones(27, dtype=np.complex128) / math.sqrt(27.0), eng.config)
        out = samp.project(4, state)
        assert isinstance(out, QuditState)
        assert out.config == eng.config


class TestDimensions:
    def test_binary_flat_profile(self):
        samp = sp.EigenspaceSampler(engine(2, 4))
        assert samp.dimensions() == (2,) * 8

    def test_quaternary_profile(self):
        samp = sp.EigenspaceSampler(engine(4, 3))
        dims = samp.dimensions()
        assert dims == (7, 5, 6, 5, 5, 5, 7, 4, 5, 5, 6, 4)
        assert sum(dims) == 64

    def test_ternary_k6_profile(self):
        samp = sp.EigenspaceSampler(engine(3, 6))
        dims = samp.dimensions()
        assert dims == (
            31, 30, 30, 31, 30, 30, 32, 30, 30, 31, 30, 30,
            31, 30, 30, 31, 30, 30, 31, 30, 30, 31, 30, 30,
        )
        assert sum(dims) == 3**6

    def test_equidistribution_window_k8(self):
        samp = sp.EigenspaceSampler(engine(3, 8))
        dims = samp.dimensions()
        N, q = 3**8, 32
        assert sum(dims) == N
        assert set(dims) == {205, 206}
        for d in dims:
            assert 0.8 * N / q <= d <= 1.2 * N / q

    def test_guard_on_non_integer_trace(self, monkeypatch):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        monkeypatch.setattr(eng, "trace_power", lambda t: 0.37 + 0.0j)
        with pytest.raises(ArithmeticError, match="not an integer"):
            samp.eigenspace_dim(0)

    def test_guard_on_negative_dimension(self, monkeypatch):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        q = eng.config.q
        monkeypatch.setattr(eng, "trace_power", lambda t: -float(q) if t == 0 else 0.0j)
        with pytest.raises(ArithmeticError, match="negative dimension"):
            samp.eigenspace_dim(0)

    def test_projected_eigenbasis_orthonormal_and_invariant(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        rng = np.random.default_rng(23)
        q = eng.config.q
        for alpha in range(q):
            basis = samp.projected_eigenbasis(alpha, rng)
            d = samp.eigenspace_dim(alpha)
            assert basis.shape == (d, eng.config.N)
            gram = basis @ basis.conj().T
            assert np.abs(gram - np.eye(d)).max() < 1e-8
            rotated = eng.apply_baker(basis, 1)
            assert np.abs(rotated - np.exp(2j * np.pi * alpha / q) * basis).max() < 1e-8


class TestSampling:
    def test_unit_norm_and_eigenrelation(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        rng = np.random.default_rng(11)
        v = samp.sample_haar_vector(2, rng)
        amps = v.amplitudes
        assert np.linalg.norm(amps) == pytest.approx(1.0, abs=1e-12)
        rotated = eng.apply_baker(amps, 1)
        assert np.abs(rotated - np.exp(2j * np.pi * 2 / eng.config.q) * amps).max() < 1e-9

    def test_orthonormal_set_gram(self):
        eng = engine(3, 5, 2)
        samp = sp.EigenspaceSampler(eng)
        draw = samp.sample_orthonormal_set(3, 5, seed=77)
        mat = draw.matrix()
        gram = mat @ mat.conj().T
        assert np.abs(gram - np.eye(5)).max() < 1e-10

    def test_single_draw_matches_haar_vector(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        a = samp.sample_orthonormal_set(1, 1, rng=np.random.default_rng(9))
        b = samp.sample_haar_vector(1, np.random.default_rng(9))
        assert np.array_equal(a.vectors[0].amplitudes, b.amplitudes)

    def test_rng_seed_exclusivity(self):
        samp = sp.EigenspaceSampler(engine(2, 4, 2))
        with pytest.raises(ValueError, match="exactly one"):
            samp.sample_orthonormal_set(0, 1)
        with pytest.raises(ValueError, match="exactly one"):
            samp.sample_orthonormal_set(0, 1, rng=np.random.default_rng(0), seed=1)

    def test_refuses_more_than_dimension(self):
        eng = engine(2, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        d = samp.eigenspace_dim(1)
        with pytest.raises(ValueError, match="dimensional"):
            samp.sample_orthonormal_set(1, d + 1, seed=4)

    def test_rejection_guard(self, monkeypatch):
        eng = engine(2, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        monkeypatch.setattr(
            samp, "project", lambda alpha, state: np.zeros_like(state)
        )
        with pytest.raises(RuntimeError, match="consecutive draws"):
            samp.sample_haar_vector(1, np.random.default_rng(0))

    def test_seeded_draws_are_prefix_stable(self):
        # keyed streams: extending a draw never changes its earlier vectors
        samp = sp.EigenspaceSampler(engine(3, 4, 2))
        short = samp.sample_orthonormal_set(2, 2, seed=13)
        long = samp.sample_orthonormal_set(2, 4, seed=13)
        for a, b in zip(short.vectors, long.vectors):
            assert np.array_equal(a.amplitudes, b.amplitudes)

    def test_pair_overlap_scales_inverse_dim(self):
        eng = engine(3, 5, 2)
        samp = sp.EigenspaceSampler(eng)
        d = samp.eigenspace_dim(3)
        rng = np.random.default_rng(29)
        vals = []
        for _ in range(200):
            u = samp.sample_haar_vector(3, rng).amplitudes
            v = samp.sample_haar_vector(3, rng).amplitudes
            vals.append(abs(np.vdot(u, v)) ** 2)
        vals = np.array(vals)
        se = vals.std() / math.sqrt(len(vals))
        assert vals.mean() == pytest.approx(1.0 / d, abs=4 * se)

    def test_component_phase_averages_out(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        w = samp.projected_eigenbasis(5, np.random.default_rng(3))[0]
        d = samp.eigenspace_dim(5)
        rng = np.random.default_rng(31)
        n = 300
        overlaps = np.array(
            [np.vdot(w, samp.sample_haar_vector(5, rng).amplitudes) for _ in range(n)]
        )
        assert abs(overlaps.mean()) < 4.0 / math.sqrt(n * d)
        se = np.abs(overlaps) ** 2
        assert se.mean() == pytest.approx(1.0 / d, abs=4 * se.std() / math.sqrt(n))


class TestMomentPredictions:
    def test_profiles_match_per_alpha(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(COS)
        singles = samp.op_projector_profile(qo)
        pairs = samp.pair_projector_profile(qo)
        for alpha in range(eng.config.q):
            assert singles[alpha] == pytest.approx(
                samp.op_projector_trace(alpha, qo), abs=1e-11
            )
            assert pairs[alpha] == pytest.approx(
                samp.pair_projector_trace(alpha, qo), abs=1e-11
            )

    def test_traces_against_dense(self):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(COS)
        basis = eng.from_coherent(np.eye(27, dtype=np.complex128))
        op = (basis.T * qo.averages) @ basis.conj()
        for alpha in (0, 2, 5, 11):
            P = dense_projector(eng, alpha)
            want_single = np.trace(op @ P)
            want_pair = np.trace(op @ P @ op @ P)
            assert samp.op_projector_trace(alpha, qo) == pytest.approx(
                complex(want_single), abs=1e-9
            )
            assert samp.pair_projector_trace(alpha, qo) == pytest.approx(
                complex(want_pair), abs=1e-9
            )

    def test_zero_observable(self):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(ob.Observable([]))
        assert samp.expected_mean(1, qo) == 0.0
        assert samp.expected_second_moment(1, qo) == 0.0

    def test_frozen_second_moment_and_sampled_agreement(self):
        eng = engine(3, 6, 3)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(COS)
        pred = samp.expected_second_moment(5, qo)
        assert pred == pytest.approx(0.289081608097072, rel=1e-9)
        assert samp.expected_mean(5, qo) == pytest.approx(
            -0.006475705879092, rel=1e-9
        )
        rng = np.random.default_rng(2026)
        N = eng.config.N
        vals = np.array(
            [
                N * bracket(eng, qo, samp.sample_haar_vector(5, rng).amplitudes) ** 2
                for _ in range(500)
            ]
        )
        se = vals.std() / math.sqrt(len(vals))
        assert abs(vals.mean() - pred) < 3 * se

    def test_eigenvalue_route_matches_trace_route(self):
        eng = engine(3, 4, 2)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(COS)
        rng = np.random.default_rng(8)
        for alpha in (0, 3, 9):
            m = samp.expected_fluctuation_moments(alpha, qo, p_max=2, rng=rng)
            assert m[0] == pytest.approx(samp.expected_mean(alpha, qo), abs=1e-8)
            assert m[1] == pytest.approx(
                samp.expected_second_moment(alpha, qo), abs=1e-8
            )

    def test_higher_moments_against_sampling(self):
        eng = engine(3, 3, 1)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(COS)
        alpha = 1
        exact = samp.expected_fluctuation_moments(
            alpha, qo, p_max=4, rng=np.random.default_rng(14)
        )
        rng = np.random.default_rng(15)
        rootN = math.sqrt(eng.config.N)
        f = np.array(
            [
                rootN * bracket(eng, qo, samp.sample_haar_vector(alpha, rng).amplitudes)
                for _ in range(4000)
            ]
        )
        for p in (3, 4):
            vals = f**p
            se = vals.std() / math.sqrt(len(vals))
            assert vals.mean() == pytest.approx(exact[p - 1], abs=4 * se), p

    def test_mean_profile_decays(self):
        # (q/sqrt(N)) max_alpha |Tr(Op P_alpha)| for the centered cosine
        got = []
        for k in (4, 6, 8):
            eng = engine(3, k)
            samp = sp.EigenspaceSampler(eng)
            qo = eng.quantize(COS)
            prof = samp.op_projector_profile(qo)
            got.append(
                float(np.abs(prof).max() * eng.config.q / math.sqrt(eng.config.N))
            )
        assert got[0] == pytest.approx(0.718147976811, rel=1e-9)
        assert got[1] == pytest.approx(0.429998741559, rel=1e-9)
        assert got[2] == pytest.approx(0.132246561499, rel=1e-9)
        assert got[0] > got[1] > got[2]

    def test_quaternary_parity_alternation(self):
        eng = engine(4, 3)
        samp = sp.EigenspaceSampler(eng)
        qo = eng.quantize(ob.centered(ob.sine(2, 0)))
        prof = samp.op_projector_profile(qo)
        dims = np.array(samp.dimensions(), dtype=float)
        means = np.sqrt(eng.config.N) / dims * prof.real
        for alpha, mean in enumerate(means):
            assert mean * (-1.0) ** alpha > 0.0

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_quaternary_parity_sum_identity(self, k):
        # sum_a (-1)^a Tr(Op P_a)/sqrt(N) collapses to the digit-fractal sum
        eng = engine(4, k)
        samp = sp.EigenspaceSampler(eng)
        a0 = ob.centered(ob.sine(2, 0))
        qo = eng.quantize(a0)
        prof = samp.op_projector_profile(qo)
        signs = (-1.0) ** np.arange(eng.config.q)
        lhs = float((signs * prof.real).sum() / math.sqrt(eng.config.N))
        assert lhs == pytest.approx(ob.fractal_sum(a0, k), abs=1e-10)


class TestHaarMoments:
    def test_two_level_anchors(self):
        got = sp.haar_moments(np.array([1.0, -1.0]), 2, 4)
        assert got[0] == pytest.approx(0.0, abs=1e-15)
        assert got[1] == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert got[2] == pytest.approx(0.0, abs=1e-15)
        assert got[3] == pytest.approx(1.0 / 5.0, rel=1e-12)

    def test_one_dimensional_space_is_deterministic(self):
        got = sp.haar_moments(np.array([0.7]), 1, 4)
        for p, val in enumerate(got, start=1):
            assert val == pytest.approx(0.7**p, rel=1e-12)

    @given(
        st.lists(st.floats(-2, 2), min_size=2, max_size=5),
        st.floats(-1.5, 1.5),
    )
    @settings(max_examples=60, deadline=None)
    def test_scaling_equivariance(self, mu, s):
        mu = np.array(mu)
        base = sp.haar_moments(mu, len(mu), 4)
        scaled = sp.haar_moments(s * mu, len(mu), 4)
        for p in range(1, 5):
            assert scaled[p - 1] == pytest.approx(s**p * base[p - 1], abs=1e-9)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=4), st.floats(-1, 1))
    @settings(max_examples=60, deadline=None)
    def test_shift_binomial_identity(self, mu, c):
        # <u|(A + c)|u> = <u|A|u> + c, so moments obey the binomial chain
        mu = np.array(mu)
        d = len(mu)
        base = (1.0,) + sp.haar_moments(mu, d, 4)
        shifted = sp.haar_moments(mu + c, d, 4)
        for p in range(1, 5):
            want = sum(
                math.comb(p, j) * c ** (p - j) * base[j] for j in range(p + 1)
            )
            assert shifted[p - 1] == pytest.approx(want, abs=1e-9)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        samp = sp.EigenspaceSampler(engine(3, 4, 2))
        draw = samp.sample_orthonormal_set(6, 3, seed=55, first_index=2)
        manifest = sp.save_eigen_draw(draw, tmp_path / "draw")
        loaded = sp.load_eigen_draw(tmp_path / "draw")
        assert manifest.endswith(".json")
        assert loaded.alpha == 6
        assert loaded.seed == 55
        assert loaded.draw_indices == (2, 3, 4)
        for a, b in zip(draw.vectors, loaded.vectors):
            assert np.array_equal(a.amplitudes, b.amplitudes)
            assert a.config == b.config

    def test_manifest_mismatch_rejected(self, tmp_path):
        samp = sp.EigenspaceSampler(engine(2, 5, 2))
        draw = samp.sample_orthonormal_set(1, 2, seed=3)
        path = sp.save_eigen_draw(draw, tmp_path / "draw")
        manifest = json.loads(open(path).read())
        manifest["k"] = 6
        with open(path, "w") as fh:
            json.dump(manifest, fh)
        with pytest.raises(ValueError, match="disagrees"):
            sp.load_eigen_draw(tmp_path / "draw")
