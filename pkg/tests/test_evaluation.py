import numpy as np
import pytest

from fadernets.corpus import record_from_segment
from fadernets.errors import EmptyCorpus, InsufficientSamples, InvalidSweep
from fadernets.evaluation import (
    consistency_score,
    evaluate,
    fader_sweep,
    linearity_score,
    project_latents,
    restrictiveness_score,
    slide_values,
)
from fadernets.tokens import NoteEvent, Segment


class IdentityStubModel:
    """Sweep stub: decoding returns the encoded record's own segment.

    The record index rides along in latent dimension 1, so altering the
    fader dimension (0) cannot change the output.
    """

    features = ("rhythm", "note")
    reg_dim = 0

    def __init__(self, records):
        self.records = list(records)

    def zd_range(self, feature):
        return (-1.0, 1.0)

    def encode_latents_batch(self, records):
        z = np.zeros((len(records), 2))
        for i, r in enumerate(records):
            z[i, 1] = self.records.index(r)
        return {f: z.copy() for f in self.features}

    def decode_segments(self, latents, key_onehot):
        indices = latents["rhythm"][:, 1].round().astype(int)
        return [self.records[i].segment for i in indices]


@pytest.fixture(scope="module")
def stub_records():
    segment = Segment.from_notes(
        [NoteEvent(60, 0, 4), NoteEvent(64, 0, 4), NoteEvent(67, 8, 4)]
    )
    return [record_from_segment(segment) for _ in range(12)]


class TestSlideValues:
    def test_unit_range(self):
        np.testing.assert_allclose(
            slide_values(0.0, 1.0, 8),
            [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0],
        )

    def test_degenerate_range(self):
        np.testing.assert_allclose(slide_values(5.0, 5.0, 8), np.full(8, 5.0))

    def test_four_steps(self):
        np.testing.assert_allclose(slide_values(-1.0, 1.0, 4), [-0.5, 0.0, 0.5, 1.0])

    def test_excludes_min_includes_max(self):
        values = slide_values(2.0, 3.0, 5)
        assert values[0] > 2.0
        assert values[-1] == 3.0

    def test_strictly_increasing(self):
        values = slide_values(-0.3, 2.7, 8)
        assert np.all(np.diff(values) > 0)

    def test_too_few_steps(self):
        with pytest.raises(InvalidSweep):
            slide_values(0.0, 1.0, 1)

    def test_inverted_range(self):
        with pytest.raises(InvalidSweep):
            slide_values(1.0, 0.0, 8)


class TestConsistencyScore:
    def test_constant_matrix_is_one(self):
        assert consistency_score(np.full((5, 4), 0.3)) == pytest.approx(1.0)

    def test_half_and_half_columns(self):
        values = np.zeros((4, 3))
        values[:2] = 1.0  # each column: two 0s, two 1s -> std 0.5
        assert consistency_score(values) == pytest.approx(0.5)

    def test_hand_matrix(self):
        values = np.array([[0.0, 1.0], [0.5, 1.0], [1.0, 1.0]])
        expected = 1.0 - np.mean([np.std([0.0, 0.5, 1.0]), 0.0])
        assert consistency_score(values) == pytest.approx(expected, abs=1e-12)

    def test_sample_permutation_invariance(self, rng):
        values = rng.uniform(size=(6, 4))
        shuffled = values[rng.permutation(6)]
        assert consistency_score(shuffled) == pytest.approx(consistency_score(values))

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientSamples):
            consistency_score(np.ones((1, 4)))


class TestRestrictivenessScore:
    def test_constant_rows_is_one(self):
        values = np.tile(np.array([[0.2], [0.9]]), (1, 6))
        assert restrictiveness_score(values) == pytest.approx(1.0)

    def test_alternating_row_contributes_half(self):
        values = np.vstack([np.tile([0.0, 1.0], 3), np.full(6, 0.5)])
        assert restrictiveness_score(values) == pytest.approx(1.0 - 0.25)

    def test_hand_matrix(self):
        values = np.array([[0.0, 1.0, 0.0, 1.0], [0.3, 0.3, 0.3, 0.3]])
        expected = 1.0 - np.mean([0.5, 0.0])
        assert restrictiveness_score(values) == pytest.approx(expected, abs=1e-12)

    def test_sample_permutation_invariance(self, rng):
        values = rng.uniform(size=(6, 4))
        shuffled = values[rng.permutation(6)]
        assert restrictiveness_score(shuffled) == pytest.approx(
            restrictiveness_score(values)
        )

    def test_needs_two_steps(self):
        with pytest.raises(InsufficientSamples):
            restrictiveness_score(np.ones((4, 1)))


class TestLinearityScore:
    def test_exact_line(self):
        pairs = [(x, 2.0 * x - 1.0) for x in np.linspace(0, 1, 9)]
        assert linearity_score(pairs) == pytest.approx(1.0)

    def test_constant_targets(self):
        pairs = [(x, 3.0) for x in np.linspace(0, 1, 5)]
        assert linearity_score(pairs) == 0.0

    def test_four_point_closed_form(self):
        # Normal-equations oracle computed independently
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0.0, 0.9, 2.2, 2.8])
        coeffs = np.polyfit(x, y, 1)
        residuals = y - np.polyval(coeffs, x)
        expected = 1.0 - (residuals**2).sum() / ((y - y.mean()) ** 2).sum()
        assert linearity_score(list(zip(x, y))) == pytest.approx(expected, abs=1e-12)

    def test_affine_x_invariance(self, rng):
        x = rng.uniform(size=20)
        y = 1.5 * x + rng.normal(0, 0.05, size=20)
        base = linearity_score(list(zip(x, y)))
        moved = linearity_score(list(zip(4.0 * x - 7.0, y)))
        assert moved == pytest.approx(base, abs=1e-9)

    def test_needs_three_pairs(self):
        with pytest.raises(InsufficientSamples):
            linearity_score([(0.0, 1.0), (1.0, 2.0)])


class TestFaderSweep:
    def test_identity_stub_shapes_and_constancy(self, stub_records):
        stub = IdentityStubModel(stub_records)
        result = fader_sweep(stub, stub_records, "rhythm", t_steps=8, m_samples=5, seed=0)
        assert result.rhythm_density.shape == (5, 8)
        assert result.note_density.shape == (5, 8)
        # stub output ignores z: every row is constant
        for row in result.rhythm_density:
            assert np.ptp(row) == 0.0

    def test_deterministic_given_seed(self, stub_records):
        stub = IdentityStubModel(stub_records)
        a = fader_sweep(stub, stub_records, "rhythm", m_samples=6, seed=3)
        b = fader_sweep(stub, stub_records, "rhythm", m_samples=6, seed=3)
        assert a.sample_indices == b.sample_indices
        np.testing.assert_array_equal(a.rhythm_density, b.rhythm_density)

    def test_m_capped_at_test_size(self, stub_records):
        stub = IdentityStubModel(stub_records)
        result = fader_sweep(stub, stub_records, "note", m_samples=500, seed=0)
        assert result.rhythm_density.shape[0] == len(stub_records)

    def test_empty_test_set(self, stub_records):
        with pytest.raises(EmptyCorpus):
            fader_sweep(IdentityStubModel(stub_records), [], "rhythm")


class TestEvaluate:
    def test_identity_stub_perfect_scores(self, stub_records):
        stub = IdentityStubModel(stub_records)
        report = evaluate(stub, stub_records, m_samples=8, seed=1, checkpoint_id="stub")
        for f in ("rhythm", "note"):
            assert report.scores[f].consistency == pytest.approx(1.0)
            assert report.scores[f].restrictiveness == pytest.approx(1.0)
            # z never reaches the stub output, so there is nothing linear
            assert report.scores[f].linearity == 0.0

    def test_report_deterministic(self, stub_records):
        stub = IdentityStubModel(stub_records)
        a = evaluate(stub, stub_records, m_samples=8, seed=5)
        b = evaluate(stub, stub_records, m_samples=8, seed=5)
        assert a.to_dict() == b.to_dict()

    def test_csv_rows(self, stub_records):
        stub = IdentityStubModel(stub_records)
        report = evaluate(stub, stub_records, m_samples=8, seed=5, checkpoint_id="abc")
        rows = report.csv_rows()
        assert len(rows) == 2
        assert rows[0][0] == "abc" and rows[0][1] == "rhythm"


class TestProjectLatents:
    def test_two_dim_input_preserves_distances(self, rng):
        z = rng.standard_normal((20, 2))
        projected = project_latents(z, labels=list(range(20)))
        points = np.array([[x, y] for x, y, _ in projected])
        centered = z - z.mean(axis=0)
        original = np.linalg.norm(centered[3] - centered[11])
        rotated = np.linalg.norm(points[3] - points[11])
        assert rotated == pytest.approx(original, abs=1e-9)

    def test_duplicates_project_identically(self, rng):
        base = rng.standard_normal((5, 4))
        z = np.vstack([base, base])
        projected = project_latents(z, labels=[0] * 10)
        points = np.array([[x, y] for x, y, _ in projected])
        np.testing.assert_allclose(points[:5], points[5:], atol=1e-12)

    def test_known_principal_axis(self):
        # Three points on the x-axis: first component must be x itself
        z = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        projected = project_latents(z, labels=["a", "b", "c"])
        xs = [x for x, _, _ in projected]
        np.testing.assert_allclose(xs, [-1.0, 0.0, 1.0], atol=1e-12)
        assert projected[0][2] == "a"

    def test_needs_two_vectors(self):
        with pytest.raises(InsufficientSamples):
            project_latents(np.zeros((1, 3)), labels=[0])

    def test_deterministic(self, rng):
        z = rng.standard_normal((15, 6))
        a = project_latents(z, labels=list(range(15)))
        b = project_latents(z, labels=list(range(15)))
        assert a == b
