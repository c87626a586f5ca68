import numpy as np
import pytest

from infodecomp import (
    GmmPriorProvider,
    chain_rule_check,
    component_subset,
    estimate_mi,
    estimate_pid,
    mmse_curves,
    orthogonality_residual,
    prompt,
    unconditional,
)
from infodecomp.errors import DomainError
from infodecomp.estimator import ORTHOGONAL, STANDARD, mmse_curves_csv
from infodecomp.fields import scalar_field
from infodecomp.rng import substream


class _NanDenoiser:
    def predict_eps(self, x_alpha, point, condition):
        return np.full_like(np.asarray(x_alpha, dtype=float), np.nan)


class _ShiftedConditional:
    """Wraps a denoiser and corrupts only the conditional output."""

    def __init__(self, inner, shift):
        self.inner = inner
        self.shift = shift

    def predict_eps(self, x_alpha, point, condition):
        out = self.inner.predict_eps(x_alpha, point, condition)
        if not condition.is_unconditional:
            out = out + self.shift
        return out


class TestEstimateMi:
    def test_identical_conditions_give_exact_zero(self, bench_gmm):
        est = estimate_mi(
            scalar_field(0.7),
            component_subset(0),
            bench_gmm,
            base=component_subset(0),
            seed=1,
            n_alpha=20,
            form=ORTHOGONAL,
        )
        np.testing.assert_array_equal(est.pointwise_map, 0.0)
        assert est.image_level == 0.0

    @pytest.mark.parametrize("x", [1.0, 0.5, -0.5, 1.8])
    def test_standard_form_matches_density_ratio_at_fixed_x(self, bench_gmm, x):
        exact = bench_gmm.log_density_ratio(scalar_field(x), component_subset(0), unconditional())
        est = estimate_mi(
            scalar_field(x),
            component_subset(0),
            bench_gmm,
            seed=11,
            n_alpha=1500,
            form=STANDARD,
        )
        assert abs(est.image_level - exact) <= 3 * est.std_error

    def test_image_level_is_map_mean(self, field_gmm):
        rng = substream(7, 0)
        x = field_gmm.sample(rng, prompt("left"), 1)[0]
        est = estimate_mi(x, prompt("left"), field_gmm, seed=2, n_alpha=40)
        assert est.image_level == pytest.approx(est.pointwise_map.mean(), rel=1e-10)
        assert est.pointwise_map.shape == field_gmm.shape[1:]
        assert est.sample_counts == (40, 1)

    def test_seed_determinism_bit_identical(self, bench_gmm):
        kwargs = dict(seed=5, n_alpha=64, n_eps=2, form=ORTHOGONAL)
        a = estimate_mi(scalar_field(0.8), component_subset(0), bench_gmm, **kwargs)
        b = estimate_mi(scalar_field(0.8), component_subset(0), bench_gmm, **kwargs)
        assert a.image_level == b.image_level
        assert a.std_error == b.std_error
        np.testing.assert_array_equal(a.pointwise_map, b.pointwise_map)

    def test_orthogonal_variance_not_larger_on_shared_draws(self, bench_gmm):
        std = estimate_mi(
            scalar_field(0.9), component_subset(0), bench_gmm, seed=9, n_alpha=400, form=STANDARD
        )
        orth = estimate_mi(
            scalar_field(0.9), component_subset(0), bench_gmm, seed=9, n_alpha=400, form=ORTHOGONAL
        )
        assert orth.std_error <= std.std_error

    def test_uncertainty_shrinks_with_draws(self, bench_gmm):
        # the SE estimate is itself noisy, so compare across a 16x gap
        small = estimate_mi(scalar_field(0.9), component_subset(0), bench_gmm, seed=3, n_alpha=100)
        big = estimate_mi(scalar_field(0.9), component_subset(0), bench_gmm, seed=3, n_alpha=1600)
        assert big.std_error < small.std_error

    def test_non_finite_integrand_names_alpha(self):
        with pytest.raises(DomainError, match="alpha"):
            estimate_mi(
                scalar_field(0.0), prompt("x"), _NanDenoiser(), seed=0, n_alpha=3
            )

    def test_count_validation(self, bench_gmm):
        with pytest.raises(DomainError):
            estimate_mi(scalar_field(0.0), component_subset(0), bench_gmm, n_alpha=0)
        with pytest.raises(DomainError):
            estimate_mi(scalar_field(0.0), component_subset(0), bench_gmm, form="fancy")


class TestEstimatePid:
    def test_synonym_sources_have_zero_uniqueness(self, field_gmm):
        priors = GmmPriorProvider(field_gmm)
        rng = substream(8, 0)
        x = field_gmm.sample(rng, prompt("sun"), 1)[0]
        res = estimate_pid(
            x,
            prompt("sun"),
            prompt("sol"),
            field_gmm,
            priors.lookup("sun"),
            priors.lookup("sol"),
            seed=4,
            n_alpha=30,
        )
        np.testing.assert_allclose(res.u1_map, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.u2_map, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.r_map, res.mi1.pointwise_map, atol=1e-12)
        assert res.atoms.unique1 == pytest.approx(0.0, abs=1e-12)

    def test_xor_construction_is_pure_synergy(self, xor_gmm):
        priors = GmmPriorProvider(xor_gmm)
        x = scalar_field(1.0)
        res = estimate_pid(
            x,
            prompt("p0"),
            prompt("q0"),
            xor_gmm,
            priors.lookup("p0"),
            priors.lookup("q0"),
            seed=6,
            n_alpha=800,
            form=STANDARD,
        )
        # single phrases reweight to a mixture equal to the marginal; the
        # responsibilities group differently, so zero only to float noise
        np.testing.assert_allclose(res.mi1.pointwise_map, 0.0, atol=1e-10)
        np.testing.assert_allclose(res.mi2.pointwise_map, 0.0, atol=1e-10)
        assert res.atoms.redundancy == pytest.approx(0.0, abs=1e-12)
        exact_joint = xor_gmm.log_density_ratio(x, prompt("p0 q0"), unconditional())
        assert abs(res.atoms.synergy - exact_joint) <= 3 * res.mi_joint.std_error

    def test_additivity_per_pixel_and_image_level(self, field_gmm):
        priors = GmmPriorProvider(field_gmm)
        x = field_gmm.sample(substream(10, 0), prompt("left"), 1)[0]
        res = estimate_pid(
            x,
            prompt("left"),
            prompt("bright"),
            field_gmm,
            priors.lookup("left"),
            priors.lookup("bright"),
            seed=12,
            n_alpha=25,
        )
        total = res.r_map + res.u1_map + res.u2_map + res.s_map
        np.testing.assert_allclose(total, res.mi_joint.pointwise_map, rtol=1e-10, atol=1e-12)
        assert res.atoms.total == pytest.approx(res.mi_joint.image_level, rel=1e-10, abs=1e-12)

    def test_empty_context_equals_plain_pid_bitwise(self, xor_gmm):
        priors = GmmPriorProvider(xor_gmm)
        x = scalar_field(0.4)
        kwargs = dict(seed=13, n_alpha=20)
        plain = estimate_pid(
            x, prompt("p0"), prompt("q0"), xor_gmm,
            priors.lookup("p0"), priors.lookup("q0"), **kwargs,
        )
        cond = estimate_pid(
            x, prompt("p0"), prompt("q0"), xor_gmm,
            priors.lookup("p0"), priors.lookup("q0"),
            context=unconditional(), **kwargs,
        )
        np.testing.assert_array_equal(plain.r_map, cond.r_map)
        np.testing.assert_array_equal(plain.s_map, cond.s_map)
        assert plain.atoms == cond.atoms

    def test_all_component_context_matches_plain_pid(self, xor_gmm):
        # conditioning on a context that excludes nothing is the plain run
        priors = GmmPriorProvider(xor_gmm)
        x = scalar_field(-0.3)
        kwargs = dict(seed=14, n_alpha=20)
        plain = estimate_pid(
            x, prompt("p0"), prompt("q0"), xor_gmm,
            priors.lookup("p0"), priors.lookup("q0"), **kwargs,
        )
        cond = estimate_pid(
            x, prompt("p0"), prompt("q0"), xor_gmm,
            priors.lookup("p0", "any"), priors.lookup("q0", "any"),
            context=prompt("any"), **kwargs,
        )
        np.testing.assert_array_equal(plain.r_map, cond.r_map)
        np.testing.assert_array_equal(plain.u1_map, cond.u1_map)
        np.testing.assert_array_equal(plain.s_map, cond.s_map)


class TestMmseCurves:
    def test_extreme_alpha_limits(self, bench_gmm):
        rows = mmse_curves(
            scalar_field(0.8),
            component_subset(0),
            bench_gmm,
            [-8.0, 8.0],
            seed=15,
            n_eps=4096,
        )
        low, high = rows
        dim = 1
        assert abs(high.mmse_uncond - dim) <= 3 * high.mmse_uncond_se + 2e-3
        assert abs(low.mmse_uncond) <= 3 * low.mmse_uncond_se + 2e-3

    def test_conditional_never_worse(self, bench_gmm):
        rows = mmse_curves(
            scalar_field(0.8),
            component_subset(0),
            bench_gmm,
            np.linspace(-6, 6, 7),
            seed=16,
            n_eps=2048,
        )
        for row in rows:
            assert row.mmse_cond <= row.mmse_uncond + 3 * row.mmse_uncond_se

    def test_grid_validation(self, bench_gmm):
        with pytest.raises(DomainError):
            mmse_curves(scalar_field(0.0), component_subset(0), bench_gmm, [])
        with pytest.raises(DomainError):
            mmse_curves(scalar_field(0.0), component_subset(0), bench_gmm, [1.0, 1.0])

    def test_csv_layout(self, bench_gmm):
        rows = mmse_curves(
            scalar_field(0.1), component_subset(0), bench_gmm, [0.0], seed=1, n_eps=8
        )
        text = mmse_curves_csv(rows)
        header = text.splitlines()[0].split(",")
        assert header == [
            "alpha",
            "mmse_uncond",
            "mmse_uncond_se",
            "mmse_cond",
            "mmse_cond_se",
            "standard",
            "standard_se",
            "orthogonal",
            "orthogonal_se",
        ]
        assert len(text.splitlines()) == 2


class TestOrthogonalityResidual:
    ALPHAS = [-4.0, -1.0, 0.0, 1.0, 4.0]

    def test_exact_denoiser_residual_statistically_zero(self, bench_gmm):
        cond = component_subset(0)
        rows = orthogonality_residual(
            lambda rng, n: bench_gmm.sample(rng, cond, n),
            cond,
            bench_gmm,
            self.ALPHAS,
            seed=17,
            n_draws=60_000,
        )
        for row in rows:
            assert abs(row.mean) <= 4 * row.std_error

    def test_unconditional_condition_is_exactly_zero(self, bench_gmm):
        rows = orthogonality_residual(
            scalar_field(0.5),
            unconditional(),
            bench_gmm,
            [0.0],
            seed=18,
            n_draws=100,
        )
        assert rows[0].mean == 0.0
        assert rows[0].std_error == 0.0

    def test_corrupted_denoiser_fails_the_check(self, bench_gmm):
        cond = component_subset(0)
        corrupted = _ShiftedConditional(bench_gmm, 0.5)
        rows = orthogonality_residual(
            lambda rng, n: bench_gmm.sample(rng, cond, n),
            cond,
            corrupted,
            self.ALPHAS,
            seed=19,
            n_draws=20_000,
        )
        assert all(abs(row.mean) > 4 * row.std_error for row in rows)


class TestChainRule:
    def test_gmm_chain_rule_within_pooled_se(self, xor_gmm):
        report = chain_rule_check(
            scalar_field(0.7), prompt("p0"), prompt("q0"), xor_gmm, seed=20, n_alpha=600,
            form=STANDARD,
        )
        assert abs(report.discrepancy) <= 3 * report.pooled_se

    def test_empty_first_phrase(self, bench_gmm):
        report = chain_rule_check(
            scalar_field(0.2), unconditional(), component_subset(0), bench_gmm, seed=21, n_alpha=30
        )
        assert report.cmi_y1_given_y2.image_level == 0.0
        assert report.discrepancy == 0.0

    def test_component_irrelevant_first_phrase(self, field_gmm):
        # "all" names every component, so it adds nothing beyond "left"
        report = chain_rule_check(
            field_gmm.sample(substream(22, 0), prompt("left"), 1)[0],
            prompt("all"),
            prompt("left"),
            field_gmm,
            seed=22,
            n_alpha=40,
        )
        assert report.cmi_y1_given_y2.image_level == 0.0
