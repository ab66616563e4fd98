import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopc.errors import ConfigError
from hopc.geom import Frame, PointCloudSequence, SupportVolume, spherical_support
from hopc.stkp import (DetectorParams, Keypoint, LocalityParams, align_support, adaptive_spatial_scale,
                       adaptive_temporal_scale, candidate_filter, detect_stkp, describe_keypoints,
                       first_local_min, keypoint_support, quality, suppress, surface_descriptor)
from hopc.synth import SynthScenario, rotation_matrix, synth_generate

from oracles import jacobi_eigh

seeds = st.integers(0, 2**32 - 1)


def _ellipsoid(rng, n, radii):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None] * radii


def _static(pts, n_f=5):
    return PointCloudSequence(tuple(Frame(i + 1, pts) for i in range(n_f)))


def _kp(p, t, eta, basis=None, r=1.0, tau=1):
    z = np.zeros(60)
    return Keypoint(np.asarray(p, dtype=float), t, r, tau, eta, z, z, basis)


def _ratios_oracle(pts):
    lam, _ = jacobi_eigh(np.cov(np.asarray(pts).T, bias=True))
    return lam[0] / lam[1], lam[1] / max(lam[2], 1e-300)


class TestCandidates:
    def test_static_square_plane_rejected(self):
        g = np.arange(-5, 6) * 0.1
        xx, yy = np.meshgrid(g, g)
        plane = np.c_[xx.ravel(), yy.ravel(), np.zeros(xx.size)]
        d12, _ = _ratios_oracle(plane)
        assert d12 < 1.12
        assert candidate_filter(np.zeros(3), 3, _static(plane), 1.0, 1) is None

    def test_moving_ellipsoid_accepted(self):
        rng = np.random.default_rng(0)
        frames = tuple(Frame(i + 1, _ellipsoid(rng, 400, (3, 2, 1)) * 0.3 + [0.05 * i, 0, 0])
                       for i in range(5))
        seq = PointCloudSequence(frames)
        sup = spherical_support(np.concatenate([f.points for f in frames[1:4]]), np.zeros(3), 2.0)
        d12, d23 = _ratios_oracle(sup.points)
        assert d12 > 1.12 and d23 > 1.12
        out = candidate_filter(np.zeros(3), 3, seq, 2.0, 1)
        assert out is not None
        spatial, st_ = out
        np.testing.assert_allclose(st_.lambdas, jacobi_eigh(np.cov(sup.points.T, bias=True))[0], atol=1e-9)

    def test_single_point_rejected(self):
        seq = _static(np.array([[0.0, 0, 0], [5.0, 5, 5]]))
        assert candidate_filter(np.zeros(3), 2, seq, 1.0, 1) is None


class TestQuality:
    def test_equal_is_zero(self):
        h = np.random.default_rng(0).uniform(size=60)
        assert quality(h, h) == 0.0

    def test_hand_value(self):
        a, b = np.zeros(60), np.zeros(60)
        a[0], b[1] = 1.0, 1.0
        assert quality(a, b) == 1.0

    def test_both_zero(self):
        assert quality(np.zeros(60), np.zeros(60)) == 0.0

    def test_rows(self):
        a = np.eye(3)
        assert quality(a, a[::-1]).tolist() == [1.0, 0.0, 1.0]

    @given(seeds)
    def test_non_negative_and_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=60) * (rng.uniform(size=60) > 0.5)
        b = rng.uniform(size=60) * (rng.uniform(size=60) > 0.5)
        assert quality(a, b) >= 0
        assert (quality(a, b) == 0) == bool(np.all(a == b))


class TestSuppression:
    def test_pair_in_same_frame(self):
        loc = LocalityParams(0.25, 2)
        kept = suppress([_kp((0, 0, 0), 1, 2.0), _kp((0.125, 0, 0), 1, 1.0)], loc)
        assert [k.eta for k in kept] == [2.0]

    def test_far_in_time_kept(self):
        loc = LocalityParams(0.25, 2)
        kept = suppress([_kp((0, 0, 0), 1, 2.0), _kp((0.1, 0, 0), 4, 1.0)], loc)
        assert len(kept) == 2

    @settings(max_examples=50)
    @given(seeds)
    def test_exclusivity(self, seed):
        rng = np.random.default_rng(seed)
        kps = [_kp(rng.uniform(-1, 1, 3), int(rng.integers(1, 6)), float(e))
               for e in sorted(rng.uniform(size=60), reverse=True)]
        loc = LocalityParams(0.4, 1)
        kept = suppress(kps, loc)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                near = np.linalg.norm(a.p - b.p) <= 0.4 and abs(a.t - b.t) <= 1
                assert not near
        # greedy: every dropped candidate is near an earlier kept one
        ids = {id(k) for k in kept}
        for k in kps:
            if id(k) not in ids:
                assert any(np.linalg.norm(o.p - k.p) <= 0.4 and abs(o.t - k.t) <= 1 and o.eta >= k.eta
                           for o in kept)

    def test_locality_validation(self):
        with pytest.raises(ConfigError):
            LocalityParams(0.0, 1)


class TestDetector:
    def test_static_sequence_has_no_keypoints(self):
        rng = np.random.default_rng(1)
        seq = _static(_ellipsoid(rng, 500, (3, 2, 1)) * 0.4, 6)
        assert detect_stkp(seq, DetectorParams(r=0.8, tau=1)) == []

    def test_keypoints_on_moving_limbs(self):
        sc = SynthScenario("two-limb-articulation", duration=12, seed=1, action=2)
        seq, truth = synth_generate(sc, with_truth=True)
        kps = detect_stkp(seq)
        assert len(kps) > 10
        moving = np.concatenate([f.points[m] for f, m in zip(seq.frames, truth)])
        lo, hi = moving.min(axis=0), moving.max(axis=0)
        inside = [np.all(k.p >= lo - 1e-9) and np.all(k.p <= hi + 1e-9) for k in kps]
        assert np.mean(inside) >= 0.9

    def test_sorted_and_deterministic(self):
        seq = synth_generate(SynthScenario("two-limb-articulation", duration=8, seed=2, action=1))
        a = detect_stkp(seq)
        b = detect_stkp(seq)
        assert [(k.t, k.eta, *k.p) for k in a] == [(k.t, k.eta, *k.p) for k in b]
        etas = [k.eta for k in a]
        assert etas == sorted(etas, reverse=True)
        assert all(k.eta >= 0.05 for k in a)

    def test_top_n(self):
        seq = synth_generate(SynthScenario("two-limb-articulation", duration=8, seed=2, action=1))
        assert len(detect_stkp(seq, DetectorParams(top_n=5))) == 5


class TestAlignment:
    def _support(self, seed=0):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(200, 3)) * [0.6, 0.35, 0.15] + [0.2, -0.1, 0.05]
        return SupportVolume(np.zeros(3), pts, np.zeros(200, dtype=np.int64), 1.0, 0)

    def test_identity(self):
        sup = self._support()
        al = align_support(_kp(np.zeros(3), 0, 1.0, np.eye(3)), sup)
        np.testing.assert_array_equal(al.points, sup.points)

    def test_round_trip(self):
        sup = self._support()
        R = rotation_matrix((1, 2, 3), 40)
        p = np.array([0.3, 0.1, -0.2])
        al = align_support(_kp(p, 0, 1.0, R), sup)
        np.testing.assert_allclose(al.reconstruct(), sup.points, atol=1e-9)

    def test_needs_basis(self):
        with pytest.raises(ConfigError):
            align_support(_kp(np.zeros(3), 0, 1.0), self._support())

    @settings(max_examples=30)
    @given(seeds, st.floats(0, 360))
    def test_rotation_harness(self, seed, angle):
        from hopc.eigen import disambiguate_signs, eig3, scatter
        sup = self._support(seed % 1000)
        R = rotation_matrix(np.random.default_rng(seed).normal(size=3), angle)
        e1 = disambiguate_signs(eig3(scatter(sup)), sup, np.zeros(3))
        if np.min(np.abs(e1.scores)) < 1e-3:
            return
        rot = SupportVolume(np.zeros(3), sup.points @ R.T, sup.frames, 1.0, 0)
        e2 = disambiguate_signs(eig3(scatter(rot)), rot, np.zeros(3))
        a = align_support(_kp(np.zeros(3), 0, 1.0, e1.vectors), sup).points
        b = align_support(_kp(np.zeros(3), 0, 1.0, e2.vectors), rot).points
        np.testing.assert_allclose(a, b, atol=1e-6)


def _aligned(fn, n=4000, seed=0, r=1.0, tau=1):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-r, r, size=(n, 2))
    frames = rng.integers(-tau, tau + 1, size=n)
    pts = np.c_[xy, fn(xy[:, 0], xy[:, 1])]
    from hopc.stkp import AlignedSupport
    return AlignedSupport(pts, frames, np.zeros(3), np.eye(3))


class TestSurface:
    def test_default_length(self):
        d = surface_descriptor(_aligned(lambda x, y: 0 * x), tau=1)
        assert d.g.shape == (1200,) and d.shape == (3, 20, 20)

    def test_flat_plane(self):
        d = surface_descriptor(_aligned(lambda x, y: 0 * x), tau=1)
        assert np.all(d.occupied)
        np.testing.assert_allclose(d.g, 0.0, atol=1e-15)

    def test_tilted_plane(self):
        d = surface_descriptor(_aligned(lambda x, y: 0.5 * x), tau=1)
        xs = -1 + (np.arange(20) + 0.5) * 0.1
        expect = np.tile(0.5 * xs, 20 * 3)
        occ = d.occupied
        assert np.max(np.abs(d.g[occ] - expect[occ])) <= 0.05

    def test_empty_nodes_zero(self):
        al = _aligned(lambda x, y: 1.0 + 0 * x)
        keep = al.points[:, 0] < 0
        from hopc.stkp import AlignedSupport
        half = AlignedSupport(al.points[keep], al.frames[keep], al.origin, al.basis)
        d = surface_descriptor(half, tau=1)
        assert not d.occupied.all()
        assert np.all(d.g[~d.occupied] == 0)
        np.testing.assert_allclose(d.g[d.occupied], 1.0)

    def test_describe_keypoints_shapes(self):
        seq = synth_generate(SynthScenario("two-limb-articulation", duration=8, seed=2, action=1))
        kps = detect_stkp(seq, DetectorParams(top_n=4))
        assert describe_keypoints(seq, kps).shape == (4, 1200)
        assert describe_keypoints(seq, kps, "hopc").shape == (4, 60)
        assert describe_keypoints(seq, [], "hopc").shape == (0, 60)
        with pytest.raises(ConfigError):
            describe_keypoints(seq, kps, "sift")

    def test_keypoint_support_window(self):
        seq = synth_generate(SynthScenario("two-limb-articulation", duration=8, seed=2, action=1))
        kp = detect_stkp(seq, DetectorParams(top_n=1))[0]
        sup = keypoint_support(seq, kp)
        assert np.all(np.abs(sup.frames - kp.t) <= kp.tau)
        assert np.all(np.linalg.norm(sup.points - kp.p, axis=1) <= kp.r)


class TestScales:
    def test_first_local_min(self):
        assert first_local_min([0.9, 0.4, 0.7]) == 2
        assert first_local_min([1.0, 1.0, 1.0]) is None
        assert first_local_min([3, 2, 1]) is None

    def test_static_support_has_no_temporal_scale(self):
        rng = np.random.default_rng(3)
        seq = _static(_ellipsoid(rng, 300, (3, 2, 1)) * 0.4, 15)
        assert adaptive_temporal_scale(seq, np.zeros(3), 8, 1.0, 6) is None

    def test_delta_max_validation(self):
        with pytest.raises(ConfigError):
            adaptive_temporal_scale(_static(np.zeros((1, 3))), np.zeros(3), 1, 1.0, 1)

    def test_rod_in_noise(self):
        seq = synth_generate(SynthScenario("rod-sweep", duration=2, seed=0, amplitude=0.0))
        radii = np.arange(0.5, 4.01, 0.25)
        rb = adaptive_spatial_scale(seq.frames[0].points, np.zeros(3), radii)
        # the rod's half-length is 2.0
        assert rb is not None and abs(rb - 2.0) <= 0.25

    def test_plane_has_no_spatial_scale(self):
        g = np.arange(-40, 41) * 0.1
        xx, yy = np.meshgrid(g, g)
        plane = np.c_[xx.ravel(), yy.ravel(), np.zeros(xx.size)]
        assert adaptive_spatial_scale(plane, np.zeros(3), [0.5, 1.0, 1.5, 2.0, 2.5]) is None

    def test_monotone_ratio_has_no_spatial_scale(self):
        # a growing rod seen through growing radii: l1/l2 only increases
        t = np.linspace(-5, 5, 401)
        rod = np.c_[t, 0.05 * np.cos(40 * t), 0.05 * np.sin(40 * t)]
        assert adaptive_spatial_scale(rod, np.zeros(3), [0.5, 1.0, 2.0, 4.0]) is None

    def test_radii_validation(self):
        assert adaptive_spatial_scale(np.zeros((3, 3)), np.zeros(3), [1.0, 2.0]) is None
        with pytest.raises(ConfigError):
            adaptive_spatial_scale(np.zeros((3, 3)), np.zeros(3), [1.0, 3.0, 2.0])


@pytest.mark.parametrize("angle", [25, 50])
def test_repeatable_under_rotation(angle):
    scene = dict(duration=10, action=2, noise_sigma=0.02, seed=3)
    k0 = detect_stkp(synth_generate(SynthScenario("two-limb-articulation", **scene)))
    k1 = detect_stkp(synth_generate(SynthScenario("two-limb-articulation", view_angle=angle, **scene)))
    R = rotation_matrix((0, 1, 0), angle)
    P0 = np.array([k.p for k in k0])
    T0 = np.array([k.t for k in k0])
    r_prime = DetectorParams().locality.r_prime
    found = [np.any((np.linalg.norm(P0 - R.T @ k.p, axis=1) <= r_prime) & (T0 == k.t)) for k in k1]
    assert np.mean(found) >= 0.8
