import json

import numpy as np
import pytest

from infodecomp import (
    EngineConfig,
    GmmModel,
    GmmPriorProvider,
    PromptCase,
    prompt,
    prompt_intervention,
    run_bias_audit,
    run_case_pid,
)
from infodecomp.errors import DomainError
from infodecomp.experiments import export_pid_maps, load_cases
from infodecomp.heatmaps import read_pfm
from infodecomp.rng import substream


@pytest.fixture(scope="module")
def audit_gmm() -> GmmModel:
    """Occupation/attribute toy: the doctor-male component sits alone while
    every other component shares one location, so 'male' and 'doctor' pin the
    same region (high overlap) and 'female' cases stay ambiguous."""
    return GmmModel(
        shape=(1, 1, 1),
        weights=np.full(4, 0.25),
        means=np.array([[3.0], [-1.0], [-1.0], [-1.0]]),
        variances=np.full(4, 0.25),
        subsets={
            "doctor": (0, 1),
            "janitor": (2, 3),
            "male": (0, 2),
            "female": (1, 3),
        },
    )


def engine_for(model: GmmModel, **overrides) -> EngineConfig:
    defaults = dict(
        denoiser=model,
        priors=GmmPriorProvider(model),
        seed=3,
        n_alpha=60,
        latent_shape=model.shape,
    )
    defaults.update(overrides)
    return EngineConfig(**defaults)


class TestPromptCase:
    def test_rejects_overlapping_selections(self):
        with pytest.raises(DomainError):
            PromptCase(prompt="a b c", phrase1=(0, 1), phrase2=(1, 2))

    def test_rejects_empty_selection(self):
        with pytest.raises(DomainError):
            PromptCase(prompt="a b", phrase1=(), phrase2=(1,))

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            PromptCase(prompt="a b", phrase1=(0,), phrase2=(5,))

    def test_context_must_not_overlap(self):
        with pytest.raises(DomainError):
            PromptCase(prompt="a b c", phrase1=(0,), phrase2=(1,), context=(1, 2))

    def test_json_round_trip(self, tmp_path):
        payload = {
            "cases": [
                {"prompt": "doctor male", "phrase1": [0], "phrase2": [1], "tag": "bias"},
                {"prompt": "a b c", "phrase1": [0], "phrase2": [1], "context": [2]},
            ]
        }
        path = tmp_path / "cases.json"
        path.write_text(json.dumps(payload))
        cases = load_cases(path)
        assert cases[0].phrase1_text() == "doctor"
        assert cases[1].context_condition().phrase_text() == "c"


class TestRunCase:
    def test_synonym_case_all_redundancy(self, field_gmm):
        case = PromptCase(prompt="sun sol", phrase1=(0,), phrase2=(1,), tag="synonym")
        res = run_case_pid(case, engine_for(field_gmm, n_alpha=30))
        np.testing.assert_allclose(res.u1_map, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.u2_map, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.r_map, res.mi1.pointwise_map, atol=1e-12)

    def test_export_writes_maps_and_scalars(self, field_gmm, tmp_path):
        case = PromptCase(prompt="left bright", phrase1=(0,), phrase2=(1,))
        res = run_case_pid(case, engine_for(field_gmm, n_alpha=20))
        scalars = export_pid_maps(res, tmp_path, case)
        for term in ("r", "u1", "u2", "s"):
            assert (tmp_path / f"{term}_left_bright.pfm").exists()
            assert (tmp_path / f"{term}_left_bright.pgm").exists()
        back = read_pfm(tmp_path / "s_left_bright.pfm")
        np.testing.assert_array_equal(back, res.s_map.astype(np.float32))
        atoms = scalars["atoms"]
        total = sum(atoms.values())
        assert total == pytest.approx(res.mi_joint.image_level, rel=1e-6, abs=1e-9)


class TestBiasAudit:
    # the construction's oracle is the exact log-density ratio, which the
    # standard form estimates without pointwise bias; enough draws keep the
    # per-case noise well under the designed 0.4-nat gap
    AUDIT = dict(form="standard", n_alpha=500)

    def cases(self):
        return [
            PromptCase(prompt="doctor male", phrase1=(0,), phrase2=(1,), tag="bias"),
            PromptCase(prompt="doctor female", phrase1=(0,), phrase2=(1,), tag="bias"),
            PromptCase(prompt="janitor male", phrase1=(0,), phrase2=(1,), tag="bias"),
            PromptCase(prompt="janitor female", phrase1=(0,), phrase2=(1,), tag="bias"),
        ]

    def test_overlap_ordering(self, audit_gmm):
        table = run_bias_audit(self.cases(), engine_for(audit_gmm, **self.AUDIT))
        by_key = {(r.occupation, r.attribute): r.normalized for r in table.rows}
        assert by_key[("doctor", "male")] > by_key[("doctor", "female")]
        assert all(v is not None and 0.0 <= v <= 1.0 for v in by_key.values())

    def test_attribute_averages_are_row_means(self, audit_gmm):
        table = run_bias_audit(self.cases(), engine_for(audit_gmm, **self.AUDIT))
        for attr, avg in table.attribute_averages.items():
            vals = [r.normalized for r in table.rows if r.attribute == attr]
            assert avg == pytest.approx(float(np.mean(vals)), abs=1e-12)

    def test_single_case_normalizes_to_zero(self, audit_gmm):
        table = run_bias_audit(self.cases()[:1], engine_for(audit_gmm, **self.AUDIT))
        assert table.rows[0].normalized == 0.0

    def test_failed_row_leaves_gap(self, audit_gmm):
        cases = self.cases()[:2] + [
            PromptCase(prompt="astronaut male", phrase1=(0,), phrase2=(1,))
        ]
        table = run_bias_audit(cases, engine_for(audit_gmm, **self.AUDIT))
        assert table.rows[2].raw_redundancy is None
        assert table.rows[2].normalized is None
        assert "astronaut" in table.rows[2].error
        assert all(r.normalized is not None for r in table.rows[:2])
        csv_text = table.to_csv()
        assert "astronaut,male,,\n" in csv_text

    def test_wide_layout_matches_published_table_structure(self, audit_gmm):
        table = run_bias_audit(self.cases(), engine_for(audit_gmm, **self.AUDIT))
        wide = table.to_wide_csv().splitlines()
        assert wide[0] == "occupation,female,male"
        assert wide[1].startswith("doctor,")
        assert wide[-1].startswith("average,")
        # every data row carries one value per attribute column
        for line in wide[1:]:
            assert len(line.split(",")) == 3

    def test_normalization_preserves_within_attribute_ordering(self, audit_gmm):
        table = run_bias_audit(self.cases(), engine_for(audit_gmm, **self.AUDIT))
        male = [r for r in table.rows if r.attribute == "male"]
        raw_order = np.argsort([r.raw_redundancy for r in male])
        norm_order = np.argsort([r.normalized for r in male])
        np.testing.assert_array_equal(raw_order, norm_order)


class TestIntervention:
    NOISE = -4.0

    def redundant_setup(self, field_gmm):
        x = field_gmm.sample(substream(2, 0), prompt("left sun sol"), 1)[0]
        return x

    def test_identity_edit_on_benchmark(self, field_gmm):
        x = field_gmm.sample(substream(1, 0), prompt("left bright"), 1)[0]
        rep = prompt_intervention(
            x, prompt("left bright"), prompt("left bright"), 4.0, 30, field_gmm, seed=5
        )
        assert rep.correlation >= 0.99

    def test_near_identity_limit(self, field_gmm):
        x = field_gmm.sample(substream(1, 0), prompt("left bright"), 1)[0]
        rep = prompt_intervention(
            x, prompt("left bright"), prompt("left bright"), 12.0, 1, field_gmm, seed=5
        )
        assert rep.mse <= 1e-3

    def test_redundant_removal_beats_unique_removal(self, field_gmm):
        x = self.redundant_setup(field_gmm)
        reds, unqs = [], []
        for seed in range(100):
            reds.append(
                prompt_intervention(
                    x, prompt("left sun sol"), prompt("left sun"), self.NOISE, 10, field_gmm, seed=seed
                ).correlation
            )
            unqs.append(
                prompt_intervention(
                    x, prompt("left sun sol"), prompt("sun sol"), self.NOISE, 10, field_gmm, seed=seed
                ).correlation
            )
        assert float(np.mean(reds)) > float(np.mean(unqs))

    def test_zero_effect_edit_matches_reconstruction_baseline(self, field_gmm):
        x = self.redundant_setup(field_gmm)
        base = prompt_intervention(
            x, prompt("left sun sol"), prompt("left sun sol"), self.NOISE, 10, field_gmm, seed=9
        )
        same_mask = prompt_intervention(
            x, prompt("left sun sol"), prompt("left sun"), self.NOISE, 10, field_gmm, seed=9
        )
        assert same_mask.correlation >= base.correlation - 1e-12

    def test_parameter_validation(self, field_gmm):
        x = self.redundant_setup(field_gmm)
        with pytest.raises(DomainError):
            prompt_intervention(x, prompt("left"), prompt("left"), 0.0, 0, field_gmm)
        with pytest.raises(DomainError):
            prompt_intervention(x, prompt("left"), prompt("left"), 99.0, 5, field_gmm)

    def test_non_finite_trajectory_reports_step(self, field_gmm):
        class Bad:
            def predict_eps(self, x_alpha, point, condition):
                return np.full_like(np.asarray(x_alpha, dtype=float), np.nan)

        x = self.redundant_setup(field_gmm)
        with pytest.raises(DomainError, match="step 0"):
            prompt_intervention(x, prompt("left"), prompt("left"), 0.0, 3, Bad())
