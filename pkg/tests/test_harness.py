"""Corpus generation, metrics, ablation grid, tuning, simulation, and
call-count verification."""

from fractions import Fraction

import pytest

from rtica.corpus import dump_jsonl
from rtica.engine import brute_force_oracle, detect_missing
from rtica.errors import DegenerateCorpus, InvalidCorpusSpec
from rtica.harness import (
    ABLATION_ROWS,
    CorpusSpec,
    EvalMetrics,
    NoiseModel,
    call_count_bound,
    evaluate,
    format_metrics_table,
    generate_corpus,
    induced_gap_variables,
    overall_from_category_rates,
    run_ablation_grid,
    simulate_bounds,
    symbolic_ablation_detectors,
    tune_threshold,
    verify_call_counts,
)
from rtica.problem import Taxonomy


class TestCorpusSpec:
    def test_rejects_unknown_family(self):
        with pytest.raises(InvalidCorpusSpec):
            CorpusSpec(family="ring")

    def test_rejects_empty_corpus(self):
        with pytest.raises(InvalidCorpusSpec):
            CorpusSpec(n_complete=0, n_incomplete=0)

    def test_rejects_bad_gap_count(self):
        with pytest.raises(InvalidCorpusSpec):
            CorpusSpec(n_incomplete=1, max_gaps=4)

    def test_rejects_empty_taxonomy(self):
        with pytest.raises(InvalidCorpusSpec):
            CorpusSpec(taxonomy=())


class TestGeneration:
    def test_deterministic(self):
        spec = CorpusSpec(n_complete=5, n_incomplete=5, max_gaps=2, seed=11)
        assert dump_jsonl(generate_corpus(spec)) == dump_jsonl(generate_corpus(spec))

    def test_seed_changes_output(self):
        a = CorpusSpec(n_complete=3, n_incomplete=3, seed=1)
        b = CorpusSpec(n_complete=3, n_incomplete=3, seed=2)
        assert dump_jsonl(generate_corpus(a)) != dump_jsonl(generate_corpus(b))

    def test_labels_match_oracle(self):
        spec = CorpusSpec(n_complete=10, n_incomplete=10, max_gaps=3, seed=5)
        for p in generate_corpus(spec):
            incomplete, minimal = brute_force_oracle(p)
            assert incomplete == p.label.is_incomplete
            if incomplete:
                assert induced_gap_variables(p.label) in minimal

    def test_mixed_family_respects_variable_cap(self):
        spec = CorpusSpec(n_complete=20, n_incomplete=0, max_vars=12, seed=9)
        assert all(len(p.variables) <= 12 for p in generate_corpus(spec))

    def test_tree_family_shape(self):
        spec = CorpusSpec(family="tree", branching=3, depth=2, n_complete=2, n_incomplete=0, seed=0)
        for p in generate_corpus(spec):
            assert len(p.variables) == 1 + 3 + 9
            assert len(p.known) == 9  # the leaves

    def test_taxonomy_restriction(self):
        spec = CorpusSpec(
            n_complete=0,
            n_incomplete=10,
            taxonomy=(Taxonomy.NUMERICAL_VALUE,),
            seed=4,
        )
        for p in generate_corpus(spec):
            assert p.label.source_taxonomy == frozenset({Taxonomy.NUMERICAL_VALUE})

    def test_relational_gap_records_phantom(self):
        spec = CorpusSpec(
            n_complete=0,
            n_incomplete=5,
            taxonomy=(Taxonomy.RELATIONAL_CONSTRAINT,),
            family="tree",
            branching=2,
            depth=3,
            seed=2,
        )
        for p in generate_corpus(spec):
            assert p.phantoms  # the deleted relation id is recorded


class TestMetrics:
    def test_percentages(self):
        m = EvalMetrics(n_yes=52, n_no=53, correct_yes=47, correct_no=51)
        assert m.overall == pytest.approx(93.33, abs=0.01)
        assert m.yes_accuracy == pytest.approx(90.38, abs=0.01)
        assert m.no_accuracy == pytest.approx(96.23, abs=0.01)

    def test_empty_category_is_zero(self):
        m = EvalMetrics(n_yes=0, n_no=2, correct_yes=0, correct_no=2)
        assert m.yes_accuracy == 0.0

    def test_overall_from_category_rates(self):
        got = overall_from_category_rates(52, 53, 90.38, 96.23)
        assert got == pytest.approx(93.33, abs=0.01)

    def test_evaluate_modes(self):
        corpus = generate_corpus(CorpusSpec(n_complete=5, n_incomplete=5, seed=8))
        binary = evaluate(corpus, detect_missing)
        strict = evaluate(corpus, detect_missing, require_specification=True)
        assert binary.overall == 100.0
        assert strict.overall == 100.0

    def test_evaluate_requires_labels(self):
        corpus = [
            p.with_label(None)
            for p in generate_corpus(CorpusSpec(n_complete=1, n_incomplete=0, seed=0))
        ]
        with pytest.raises(DegenerateCorpus):
            evaluate(corpus, detect_missing)

    def test_jobs_do_not_change_results(self):
        corpus = generate_corpus(CorpusSpec(n_complete=8, n_incomplete=8, seed=13))
        one = evaluate(corpus, detect_missing, jobs=1)
        four = evaluate(corpus, detect_missing, jobs=4)
        assert one == four


class TestAblationGrid:
    def test_row_order_and_na(self):
        corpus = generate_corpus(CorpusSpec(n_complete=5, n_incomplete=5, seed=8))
        rows = run_ablation_grid(corpus, require_specification=True)
        assert tuple(name for name, _ in rows) == ABLATION_ROWS
        by_name = dict(rows)
        assert by_name["wo_target_recognition"] is None
        assert by_name["wo_problem_restructuring"] is None
        assert by_name["full"].overall == 100.0

    def test_ablations_degrade_specification(self):
        corpus = generate_corpus(
            CorpusSpec(n_complete=20, n_incomplete=20, max_gaps=2, seed=21)
        )
        rows = dict(run_ablation_grid(corpus, require_specification=True))
        full = rows["full"].yes_accuracy
        assert rows["forward_only"].yes_accuracy < full
        assert rows["binary_only"].yes_accuracy < full

    def test_table_rendering(self):
        corpus = generate_corpus(CorpusSpec(n_complete=2, n_incomplete=2, seed=8))
        text = format_metrics_table(run_ablation_grid(corpus))
        assert "n/a" in text
        assert "full" in text and "Overall" in text


class TestTuning:
    def test_needs_both_labels(self):
        corpus = generate_corpus(CorpusSpec(n_complete=3, n_incomplete=0, seed=0))
        with pytest.raises(DegenerateCorpus):
            tune_threshold(corpus)

    def test_alpha_bounds(self):
        corpus = generate_corpus(CorpusSpec(n_complete=2, n_incomplete=2, seed=0))
        with pytest.raises(InvalidCorpusSpec):
            tune_threshold(corpus, alpha_cost=1.5)

    def test_degenerate_alphas(self):
        corpus = generate_corpus(CorpusSpec(n_complete=5, n_incomplete=5, seed=3))
        theta0, _ = tune_threshold(corpus, alpha_cost=0.0)
        theta1, _ = tune_threshold(corpus, alpha_cost=1.0)
        assert theta0 == 0
        assert theta1 == 1

    def test_zero_objective_on_separable_corpus(self):
        corpus = generate_corpus(CorpusSpec(n_complete=10, n_incomplete=10, seed=3))
        theta, objective = tune_threshold(corpus)
        assert objective == 0
        assert Fraction(0) < theta < Fraction(1)


class TestSimulation:
    def test_noise_model_validation(self):
        with pytest.raises(InvalidCorpusSpec):
            NoiseModel(alpha=1.2, beta=0.5)
        with pytest.raises(InvalidCorpusSpec):
            NoiseModel(alpha=0.5, beta=0.5, trials=0)

    def test_perfect_noise_is_exact(self):
        corpus = generate_corpus(CorpusSpec(n_complete=3, n_incomplete=3, seed=6))
        rep = simulate_bounds(NoiseModel(alpha=1.0, beta=1.0, trials=10), corpus)
        assert rep["mean_recall"] == 1.0
        assert rep["fp_rate"] == 0.0

    def test_report_is_deterministic(self):
        corpus = generate_corpus(CorpusSpec(n_complete=3, n_incomplete=3, seed=6))
        nm = NoiseModel(alpha=0.8, beta=0.9, trials=100, seed=42)
        assert simulate_bounds(nm, corpus) == simulate_bounds(nm, corpus)

    def test_recall_tracks_bound(self):
        corpus = generate_corpus(CorpusSpec(n_complete=5, n_incomplete=10, seed=6))
        rep = simulate_bounds(NoiseModel(alpha=0.8, beta=0.8, trials=500), corpus)
        assert rep["recall_bound"] == pytest.approx(0.64)
        assert rep["recall_bound_satisfied"]


class TestCallCounts:
    def test_bound_formula(self):
        assert call_count_bound(1, 3) == 4
        assert call_count_bound(2, 2) == 7
        assert call_count_bound(3, 2) == 13

    def test_full_trees_hit_the_bound_exactly(self):
        # equality requires empty K: strip the known leaf values
        spec = CorpusSpec(family="tree", branching=2, depth=2, n_complete=2, n_incomplete=0, seed=0)
        corpus = [
            p.with_label(None)
            for p in generate_corpus(spec)
        ]
        stripped = [
            type(p)(
                id=p.id,
                variables=p.variables,
                relations=p.relations,
                known={},
                goal=p.goal,
            )
            for p in corpus
        ]
        for row in verify_call_counts(stripped, 2, 2):
            assert row["ok"] and row["oracle_calls"] == row["bound"] == 7
