import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rimlab.core import DistanceMap, Mask3D, Volume3D, distance_to_edge
from rimlab.evaluation import dice
from rimlab.rimseg import (
    DegenerateLesionError,
    LevelSetParams,
    chan_vese,
    rimseg,
    weighted_intensity,
)
from rimlab.simulator import LesionSpec, SimConfig, draw_lesion_spec, generate_lesion

from .oracles import naive_weighted_field


def two_constant_shell(seed=3, sigma=0.0, **kw):
    base = dict(kind="shell", radius=10.0, thickness=2.0, rim_value=30.0,
                core_value=-15.0, noise_sigma=sigma, seed=seed)
    base.update(kw)
    return generate_lesion(LesionSpec(**base))


def constant_patch(value=5.0):
    p = two_constant_shell()
    vol = Volume3D(data=np.full(p.volume.dims, value), spacing=p.volume.spacing)
    return dataclasses.replace(p, volume=vol)


class TestParams:
    def test_defaults(self):
        params = LevelSetParams()
        assert (params.mu, params.v) == (1.0, 0.01)
        assert (params.epsilon, params.dt) == (0.1, 0.5)
        assert (params.max_iters, params.tol) == (200, 1e-4)
        assert params.w == 1.0
        assert params.fidelity_exponent == 2

    @pytest.mark.parametrize("kw", [
        {"mu": -1.0}, {"epsilon": 0.0}, {"dt": 0.0}, {"max_iters": 0},
        {"tol": 0.0}, {"w": -0.1}, {"fidelity_exponent": 3},
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            LevelSetParams(**kw).validate()


class TestWeightedIntensity:
    def test_w0_is_exact_identity(self):
        p = two_constant_shell(sigma=2.0)
        dist = distance_to_edge(p.lesion_mask)
        chi = weighted_intensity(p.volume, p.lesion_mask, dist, 0.0)
        inside = p.lesion_mask.data
        np.testing.assert_array_equal(chi[inside], p.volume.data[inside])
        assert not chi[~inside].any()

    def test_dmax_voxel_scaled_by_e_inv(self):
        p = two_constant_shell()
        dist = distance_to_edge(p.lesion_mask)
        chi = weighted_intensity(p.volume, p.lesion_mask, dist, 1.0)
        at_max = np.unravel_index(np.argmax(dist.d), dist.d.shape)
        expected = p.volume.data[at_max] * np.exp(-1.0)
        assert chi[at_max] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_scalar_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        mask = Mask3D(data=rng.random((8, 8, 4)) < 0.6, spacing=(1, 1, 3))
        vol = Volume3D(data=rng.normal(size=(8, 8, 4)), spacing=(1, 1, 3))
        dist = distance_to_edge(mask)
        if dist.d_max == 0:
            pytest.skip("empty mask draw")
        got = weighted_intensity(vol, mask, dist, 3.0)
        ref = naive_weighted_field(vol.data, mask.data, dist.d, dist.d_max, 3.0)
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_degenerate_distance_map(self):
        p = two_constant_shell()
        empty = DistanceMap(d=np.zeros(p.volume.dims), spacing=p.volume.spacing,
                            d_max=0.0)
        with pytest.raises(DegenerateLesionError):
            weighted_intensity(p.volume, p.lesion_mask, empty, 1.0)


class TestEvolution:
    def test_noise_free_two_constant(self):
        p = two_constant_shell()
        r = rimseg(p, w=0.0)
        assert dice(r.high_mask, p.gt_rim_mask) >= 0.95
        assert r.c1 == pytest.approx(1.0, abs=0.05)
        assert r.c2 == pytest.approx(0.0, abs=0.05)
        assert r.c1_ppb == pytest.approx(30.0, abs=2.0)
        assert r.c2_ppb == pytest.approx(-15.0, abs=2.0)
        assert r.converged

    def test_constant_lesion_high_empties(self):
        p = constant_patch()
        r = rimseg(p, w=0.0)
        assert not r.high_mask.data.any()
        np.testing.assert_array_equal(r.low_mask.data, p.lesion_mask.data)
        assert r.converged
        assert r.c1 == r.c2
        assert r.c1_ppb == pytest.approx(5.0)

    def test_energy_trace_non_increasing(self):
        p = two_constant_shell()
        r = rimseg(p, w=0.0, record_energy=True)
        e = r.energy_trace
        assert e is not None and len(e) == r.iterations
        rel = np.diff(e) / np.maximum(np.abs(e[:-1]), 1e-300)
        assert np.all(rel <= 1e-6)

    def test_canonical_c1_ge_c2(self):
        cfg = SimConfig(seed=8)
        for i in range(12):
            p = generate_lesion(draw_lesion_spec(cfg, "shell", i))
            r = rimseg(p)
            assert r.c1 >= r.c2

    def test_partition_invariant(self):
        cfg = SimConfig(seed=3)
        for i in range(8):
            kind = "shell" if i % 2 else "sphere"
            p = generate_lesion(draw_lesion_spec(cfg, kind, i))
            r = rimseg(p)
            inmask = p.lesion_mask.data
            np.testing.assert_array_equal(
                r.high_mask.data | r.low_mask.data, inmask)
            assert not (r.high_mask.data & r.low_mask.data).any()

    def test_determinism(self):
        p = two_constant_shell(sigma=4.0)
        a, b = rimseg(p), rimseg(p)
        np.testing.assert_array_equal(a.phi, b.phi)
        assert a.c1 == b.c1 and a.iterations == b.iterations

    def test_degenerate_tiny_lesion(self):
        data = np.zeros((8, 8, 4), dtype=bool)
        data[4, 4, 2] = data[4, 5, 2] = True
        p = two_constant_shell()
        patch = dataclasses.replace(
            p,
            lesion_mask=Mask3D(data=data, spacing=p.volume.spacing),
            gt_rim_mask=None,
            volume=Volume3D(data=np.zeros((8, 8, 4)), spacing=p.volume.spacing),
        )
        r = rimseg(patch)
        assert r.degenerate and r.converged
        assert not r.high_mask.data.any()
        np.testing.assert_array_equal(r.low_mask.data, data)

    def test_max_iters_respected(self):
        p = two_constant_shell(sigma=5.0)
        r = rimseg(p, params=LevelSetParams(max_iters=3))
        assert r.iterations <= 3
        assert not r.converged

    def test_fidelity_exponent_one_runs(self):
        p = two_constant_shell()
        r = rimseg(p, w=0.0, params=LevelSetParams(fidelity_exponent=1))
        assert dice(r.high_mask, p.gt_rim_mask) >= 0.9


class TestReductionAndEquivariance:
    @pytest.mark.parametrize("seed", range(6))
    def test_w0_equals_chan_vese(self, seed):
        cfg = SimConfig(seed=seed)
        p = generate_lesion(draw_lesion_spec(cfg, "shell", seed))
        a = rimseg(p, w=0.0)
        b = chan_vese(p)
        np.testing.assert_array_equal(a.high_mask.data, b.high_mask.data)
        np.testing.assert_array_equal(a.phi, b.phi)
        assert a.c1 == b.c1 and a.c2 == b.c2
        assert a.iterations == b.iterations

    def test_affine_intensity_equivariance(self):
        p = two_constant_shell(sigma=3.0)
        scaled = dataclasses.replace(
            p,
            volume=Volume3D(data=2.5 * p.volume.data + 7.0,
                            spacing=p.volume.spacing),
        )
        a, b = chan_vese(p), chan_vese(scaled)
        np.testing.assert_array_equal(a.high_mask.data, b.high_mask.data)
        assert a.c1 == pytest.approx(b.c1, abs=1e-12)

    def test_weight_pull_family_mean_non_increasing(self):
        grid = [0, 0.1, 0.3, 0.5, 1, 3, 5, 10]
        curves = []
        for seed in range(8):
            spec = LesionSpec(kind="shell", radius=9.0 + 0.7 * seed,
                              thickness=1.5 + 0.15 * seed, rim_value=30.0,
                              core_value=-10.0, seed=seed)
            p = generate_lesion(spec)
            dist = distance_to_edge(p.lesion_mask)
            means = []
            for w in grid:
                hm = rimseg(p, w=float(w)).high_mask.data
                means.append(dist.d[hm].mean() if hm.any() else 0.0)
            curves.append(means)
        family = np.asarray(curves).mean(axis=0)
        slack = 1.0  # one voxel spacing
        assert np.all(np.diff(family) <= slack)


@given(st.integers(0, 10_000))
@settings(max_examples=12, deadline=None)
def test_partition_property_random_specs(seed):
    cfg = SimConfig(seed=seed)
    p = generate_lesion(draw_lesion_spec(cfg, "shell", seed % 97))
    r = rimseg(p)
    inmask = p.lesion_mask.data
    assert np.array_equal(r.high_mask.data | r.low_mask.data, inmask)
    assert not (r.high_mask.data & r.low_mask.data).any()
    assert r.c1 >= r.c2
