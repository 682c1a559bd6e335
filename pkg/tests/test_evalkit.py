import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyot.errors import MissingPredictionError, SampleParseError, ShapeError
from polyot.evalkit import (
    MetricsReport,
    SampleRecord,
    attach_predictions,
    compute_miou,
    compute_precision_at,
    evaluate_dataset,
    load_predictions,
    load_samples,
    save_samples,
)
from polyot.fit import random_convex_polygon
from polyot.polygon import Polygon
from polyot.raster import PixelMask

SQUARE = [[0.1, 0.1], [0.6, 0.1], [0.6, 0.6], [0.1, 0.6]]


def _block(c0, c1, r0, r1, size=10):
    bits = np.zeros((size, size), dtype=np.uint8)
    bits[r0 : r1 + 1, c0 : c1 + 1] = 1
    return PixelMask(size, size, bits)


def _line(**overrides):
    obj = {"id": "a", "width": 64, "height": 48, "instruction": "pick up the mug", "reference_polygon": SQUARE}
    obj.update(overrides)
    return json.dumps(obj)


def _dataset(seed, n, size=(40, 30)):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        ref = random_convex_polygon(rng, 6)
        pred = Polygon(np.clip(ref.vertices + rng.normal(0, 0.08, ref.vertices.shape), 0, 1))
        out.append(SampleRecord(f"{seed}-{i}", size[0], size[1], "", ref, pred))
    return out


class TestLoad:
    def test_three_lines(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text("\n".join(_line(id=str(i)) for i in range(3)) + "\n")
        recs = load_samples(path)
        assert [r.id for r in recs] == ["0", "1", "2"]
        assert recs[0].instruction == "pick up the mug"
        assert recs[0].predicted_polygon is None

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text("")
        assert load_samples(path) == []

    def test_two_vertex_polygon_names_line(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(_line() + "\n" + _line(reference_polygon=[[0, 0], [1, 1]]) + "\n")
        with pytest.raises(SampleParseError) as exc:
            load_samples(path)
        assert [lineno for lineno, _ in exc.value.errors] == [2]
        assert "line 2" in str(exc.value)

    def test_every_bad_line_reported(self, tmp_path):
        path = tmp_path / "s.jsonl"
        lines = [
            _line(),
            "{not json",
            json.dumps({"id": "x", "width": 3}),
            _line(width=0),
            _line(reference_polygon=[[0, 0], [1, "a"], [1, 1]]),
            '{"id": "n", "width": 4, "height": 4, "reference_polygon": [[0, 0], [NaN, 1], [1, 1]]}',
            _line(width=True),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SampleParseError) as exc:
            load_samples(path)
        assert [lineno for lineno, _ in exc.value.errors] == [2, 3, 4, 5, 6, 7]

    def test_round_trip(self, tmp_path):
        recs = _dataset(1, 5)
        path = tmp_path / "s.jsonl"
        save_samples(recs, path)
        back = load_samples(path)
        assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]
        save_samples(back, tmp_path / "t.jsonl")
        assert (tmp_path / "t.jsonl").read_bytes() == path.read_bytes()

    def test_predictions_file(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text(json.dumps({"id": "a", "predicted_polygon": SQUARE}) + "\n")
        assert load_predictions(path) == {"a": Polygon(SQUARE)}


class TestMetrics:
    def test_identical_pairs(self):
        m = _block(1, 3, 1, 3)
        assert compute_miou([(m, m), (m, m)]) == 1.0
        assert compute_precision_at([(m, m)], 0.99) == 1.0

    def test_mean_of_one_and_zero(self):
        m, other = _block(0, 1, 0, 1), _block(5, 6, 5, 6)
        assert compute_miou([(m, m), (m, other)]) == 0.5

    def test_disjoint_precision(self):
        assert compute_precision_at([(_block(0, 1, 0, 1), _block(5, 6, 5, 6))], 0.5) == 0.0

    def test_hand_counted_rectangles(self):
        pairs = [
            (_block(0, 3, 0, 3), _block(2, 5, 0, 3)),  # 8/24
            (_block(0, 4, 0, 4), _block(0, 4, 0, 3)),  # 20/25
            (_block(0, 1, 0, 1), _block(0, 2, 0, 1)),  # 4/6
        ]
        expected = (Fraction(8, 24) + Fraction(20, 25) + Fraction(4, 6)) / 3
        assert abs(compute_miou(pairs) - float(expected)) <= 1e-12

    def test_precision_from_ious(self):
        # IoUs 0.6, 0.8, 0.4 built from 10-pixel references
        ref = _block(0, 9, 0, 0)
        pairs = [(ref, _block(0, 5, 0, 0)), (ref, _block(0, 7, 0, 0)), (ref, _block(0, 3, 0, 0))]
        assert compute_precision_at(pairs, 0.5) == pytest.approx(2 / 3, abs=1e-15)
        assert compute_precision_at(pairs, 0.7) == pytest.approx(1 / 3, abs=1e-15)

    def test_threshold_is_strict(self):
        ref = _block(0, 9, 0, 0)
        assert compute_precision_at([(ref, _block(0, 4, 0, 0))], 0.5) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            compute_miou([])
        with pytest.raises(ValueError):
            compute_precision_at([], 0.5)
        with pytest.raises(ValueError):
            compute_precision_at([(_block(0, 1, 0, 1), _block(0, 1, 0, 1))], 1.0)
        with pytest.raises(ShapeError):
            compute_miou([(PixelMask(4, 4), PixelMask(5, 4))])


class TestEvaluateDataset:
    def test_identity(self):
        recs = [SampleRecord(r.id, r.width, r.height, "", r.reference_polygon, r.reference_polygon) for r in _dataset(2, 6)]
        rep = evaluate_dataset(recs)
        assert rep.miou == 1.0 and rep.p_at == {0.5: 1.0, 0.7: 1.0}

    def test_disjoint(self):
        ref = Polygon([[0.1, 0.1], [0.3, 0.1], [0.3, 0.3], [0.1, 0.3]])
        far = ref.translated(0.6, 0.6)
        rep = evaluate_dataset([SampleRecord("x", 50, 50, "", ref, far)])
        assert rep.miou == 0.0

    def test_missing_prediction(self):
        recs = _dataset(3, 3)
        with pytest.raises(MissingPredictionError) as exc:
            evaluate_dataset(recs, predictions={recs[0].id: recs[0].reference_polygon})
        assert exc.value.ids == [recs[1].id, recs[2].id]

    def test_record_without_prediction(self):
        r = _dataset(3, 1)[0]
        with pytest.raises(MissingPredictionError):
            evaluate_dataset([SampleRecord(r.id, 10, 10, "", r.reference_polygon)])

    def test_predictions_override(self):
        recs = _dataset(4, 3)
        preds = {r.id: r.reference_polygon for r in recs}
        assert evaluate_dataset(recs, predictions=preds).miou == 1.0
        assert attach_predictions(recs, preds)[0].predicted_polygon == recs[0].reference_polygon

    def test_resolution_override(self):
        recs = _dataset(5, 4)
        rep = evaluate_dataset(recs, resolution_override=(16, 16))
        assert rep.miou != evaluate_dataset(recs).miou
        with pytest.raises(ShapeError):
            evaluate_dataset(recs, resolution_override=(0, 16))

    def test_degenerate_prediction_scores_zero(self):
        r = _dataset(6, 1)[0]
        rep = evaluate_dataset([SampleRecord("d", 20, 20, "", r.reference_polygon, Polygon([[0.5, 0.5], [0.6, 0.6]]))])
        assert rep.per_sample_iou == [("d", 0.0)]

    def test_report_json_schema(self):
        rep = evaluate_dataset(_dataset(7, 3))
        doc = json.loads(rep.to_json())
        assert set(doc) == {"n_samples", "miou", "p_at", "per_sample_iou"}
        assert set(doc["p_at"]) == {"0.5", "0.7"}
        assert doc["per_sample_iou"][0][0] == "7-0"
        assert isinstance(rep, MetricsReport)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            evaluate_dataset([])

    @given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 8))
    def test_concatenation_weighted_mean(self, seed, n1, n2):
        a, b = _dataset(seed, n1), _dataset(seed + 1, n2)
        ra, rb, rab = evaluate_dataset(a), evaluate_dataset(b), evaluate_dataset(a + b)
        assert abs(rab.miou - (n1 * ra.miou + n2 * rb.miou) / (n1 + n2)) <= 1e-12

    @given(st.integers(0, 10_000), st.randoms(use_true_random=False))
    def test_order_independent(self, seed, rnd):
        recs = _dataset(seed, 7)
        shuffled = list(recs)
        rnd.shuffle(shuffled)
        r1, r2 = evaluate_dataset(recs), evaluate_dataset(shuffled)
        assert r1.miou == r2.miou and r1.p_at == r2.p_at
        assert sorted(r1.per_sample_iou) == sorted(r2.per_sample_iou)

    @given(st.integers(0, 10_000), st.integers(1, 10))
    def test_precision_monotone_and_bounded(self, seed, n):
        rep = evaluate_dataset(_dataset(seed, n))
        assert 0.0 <= rep.p_at[0.7] <= rep.p_at[0.5] <= 1.0
        assert 0.0 <= rep.miou <= 1.0
