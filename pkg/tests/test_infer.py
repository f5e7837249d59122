import csv
import math

import numpy as np
import pytest

from mvseg3d.infer import (
    EvalCase,
    truth_oracle,
    MetricsReport,
    WindowPlan,
    coverage_counts,
    dice,
    evaluate,
    hausdorff,
    multiview_predict,
    oracle_predictor,
    sliding_window,
    window_origins,
)
from mvseg3d.voldata import (
    LABEL,
    ViewSpec,
    Volume,
    apply_view,
    apply_view_array,
    invert_view_field,
)

from conftest import random_intensity, random_label
from oracles import coverage_oracle, dice_oracle, hausdorff_oracle


def constant_predictor(probs):
    probs = np.asarray(probs, dtype=np.float64)

    def predict(window, origin=(0, 0, 0)):
        c = probs.shape[0]
        out = np.empty((c, *window.shape))
        out[:] = probs.reshape(c, 1, 1, 1)
        return out

    return predict


# --- plans and coverage ------------------------------------------------------


def test_plan_stride_formula():
    plan = WindowPlan(window=(32, 32, 32), overlap=0.70)
    assert plan.stride == (10, 10, 10)  # ceil(32 * 0.3)
    assert WindowPlan(window=(4, 4, 4), overlap=0.9).stride == (1, 1, 1)
    with pytest.raises(ValueError):
        WindowPlan(overlap=1.0)
    with pytest.raises(ValueError):
        WindowPlan(blend="cubic")


def test_window_origins_cover_and_clamp():
    origins = window_origins(10, 4, 3)
    assert origins == [0, 3, 6]
    assert window_origins(11, 4, 3) == [0, 3, 6, 7]
    covered = np.zeros(11, dtype=bool)
    for o in window_origins(11, 4, 3):
        covered[o: o + 4] = True
    assert covered.all()


@pytest.mark.parametrize("overlap", [0.0, 0.5, 0.7])
def test_coverage_counts_match_enumeration_oracle(overlap):
    plan = WindowPlan(window=(4, 4, 4), overlap=overlap, blend="uniform")
    shape = (9, 10, 11)
    got = coverage_counts(shape, plan)
    expected = coverage_oracle(shape, plan.window, plan.stride)
    assert np.array_equal(got, expected)
    assert got.min() >= 1


def test_coverage_monotone_in_overlap():
    # pointwise monotonicity holds on this grid because the origin sets nest;
    # boundary clamping breaks it for arbitrary overlap pairs
    shape = (10, 10, 10)
    prev = None
    for overlap in (0.0, 0.5, 0.7):
        counts = coverage_counts(shape, WindowPlan(window=(4, 4, 4), overlap=overlap))
        if prev is not None:
            assert (counts >= prev).all()
        prev = counts


# --- sliding window ----------------------------------------------------------


def test_volume_equal_to_window_is_single_forward():
    rng = np.random.default_rng(0)
    data = rng.random((6, 6, 6))
    probs = rng.random((3, 6, 6, 6))
    probs /= probs.sum(axis=0, keepdims=True)
    calls = []

    def predict(window, origin=(0, 0, 0)):
        calls.append(origin)
        return probs

    for blend in ("uniform", "gaussian"):
        out = sliding_window(data, predict, WindowPlan(window=(6, 6, 6), blend=blend), 3)
        assert np.allclose(out, probs, atol=1e-12)
    assert calls == [(0, 0, 0), (0, 0, 0)]


@pytest.mark.parametrize("overlap", [0.0, 0.5, 0.7])
@pytest.mark.parametrize("blend", ["uniform", "gaussian"])
def test_constant_model_gives_constant_field(overlap, blend):
    data = np.zeros((10, 10, 10))
    plan = WindowPlan(window=(4, 4, 4), overlap=overlap, blend=blend)
    out = sliding_window(data, constant_predictor([0.2, 0.3, 0.5]), plan, 3)
    assert np.allclose(out[0], 0.2, atol=1e-12)
    assert np.allclose(out[1], 0.3, atol=1e-12)
    assert np.allclose(out[2], 0.5, atol=1e-12)


def test_probability_field_is_simplex():
    rng = np.random.default_rng(1)
    data = rng.random((9, 9, 9))

    def predict(window, origin=(0, 0, 0)):
        logits = rng.normal(size=(4, *window.shape))
        e = np.exp(logits)
        return e / e.sum(axis=0, keepdims=True)

    out = sliding_window(data, predict, WindowPlan(window=(4, 4, 4), overlap=0.5), 4)
    assert np.allclose(out.sum(axis=0), 1.0, atol=1e-6)


def test_small_volume_padded_then_cropped():
    data = np.random.default_rng(2).random((3, 8, 8))
    out = sliding_window(data, constant_predictor([1.0, 0.0]), WindowPlan(window=(4, 4, 4)), 2)
    assert out.shape == (2, 3, 8, 8)


def test_equivariance_bookkeeping_shapes():
    v = random_intensity((6, 8, 10), seed=3)
    plan = WindowPlan(window=(4, 4, 4), overlap=0.5)
    for spec in (ViewSpec("coronal", 1), ViewSpec("sagittal", 2)):
        arr = apply_view_array(v.data, spec)
        probs = sliding_window(arr, constant_predictor([0.5, 0.5]), plan, 2)
        canon = invert_view_field(probs, spec)
        assert canon.shape == (2, *v.shape)


# --- multi-view fusion -------------------------------------------------------


def label_volume(data, classes):
    return Volume(np.asarray(data, dtype=np.int64), kind=LABEL, classes=classes)


def test_single_identity_view_equals_plain_argmax():
    rng = np.random.default_rng(4)
    lab = random_label((8, 8, 8), classes=3, seed=9)
    predict = oracle_predictor(lab)
    image = random_intensity((8, 8, 8), seed=4)
    plan = WindowPlan(window=(4, 4, 4), overlap=0.5, blend="uniform")
    pred, fused = multiview_predict(image, predict, plan, [ViewSpec("axial", 0)], 3)
    direct = sliding_window(image.data, predict, plan, 3)
    assert np.array_equal(pred.data, direct.argmax(axis=0))
    assert np.allclose(fused, direct)


def test_constant_model_fusion_invariant_to_views():
    image = random_intensity((8, 8, 8), seed=5)
    plan = WindowPlan(window=(8, 8, 8))
    views_sets = [
        [ViewSpec("axial", 0)],
        [ViewSpec("axial", 0), ViewSpec("coronal", 1), ViewSpec("sagittal", 2)],
    ]
    outs = [
        multiview_predict(image, constant_predictor([0.1, 0.6, 0.3]), plan, views, 3)[1]
        for views in views_sets
    ]
    assert np.allclose(outs[0], outs[1], atol=1e-12)


def test_fusion_invariant_to_view_order():
    lab = random_label((8, 8, 8), classes=3, seed=11)
    image = random_intensity((8, 8, 8), seed=6)
    plan = WindowPlan(window=(8, 8, 8))

    def per_view_predict(spec):
        return oracle_predictor(apply_view(lab, spec))

    views_a = [ViewSpec("axial", 0), ViewSpec("coronal", 2), ViewSpec("sagittal", 1)]
    views_b = list(reversed(views_a))

    def runner(views):
        fused = None
        for spec in views:
            arr = apply_view_array(image.data, spec)
            probs = sliding_window(arr, per_view_predict(spec), plan, 3)
            canon = invert_view_field(probs, spec)
            fused = canon if fused is None else fused + canon
        return fused / len(views)

    assert np.allclose(runner(views_a), runner(views_b), atol=1e-12)


def test_multiview_duplicated_view_equals_single():
    lab = random_label((8, 8, 8), classes=3, seed=12)
    image = random_intensity((8, 8, 8), seed=7)
    plan = WindowPlan(window=(8, 8, 8))
    predict = oracle_predictor(lab)
    single, _ = multiview_predict(image, predict, plan, [ViewSpec("axial", 0)], 3)
    triple, _ = multiview_predict(
        image, predict, plan, [ViewSpec("axial", 0)] * 3, 3
    )
    assert np.array_equal(single.data, triple.data)


def test_multiview_empty_views_error():
    image = random_intensity((8, 8, 8))
    with pytest.raises(ValueError):
        multiview_predict(image, constant_predictor([1.0]), WindowPlan(window=(8, 8, 8)), [], 1)


def test_argmax_ties_break_to_lowest_class():
    image = random_intensity((8, 8, 8), seed=8)
    plan = WindowPlan(window=(8, 8, 8))
    pred, _ = multiview_predict(
        image, constant_predictor([0.25, 0.25, 0.5, 0.0][:3]), plan, [ViewSpec("axial", 0)], 3
    )
    assert np.all(pred.data == 2)
    pred, _ = multiview_predict(
        image, constant_predictor([0.4, 0.4, 0.2]), plan, [ViewSpec("axial", 0)], 3
    )
    assert np.all(pred.data == 0)


# --- dice --------------------------------------------------------------------


def test_dice_trivial_values():
    a = label_volume(np.ones((4, 4, 4)), 2)
    assert dice(a, a, 1) == 1.0
    left = np.zeros((4, 4, 4)); left[:2] = 1
    right = np.zeros((4, 4, 4)); right[2:] = 1
    assert dice(label_volume(left, 2), label_volume(right, 2), 1) == 0.0


def test_dice_hand_fraction():
    # |P| = |T| = 4, |P.T| = 2 -> 0.5
    p = np.zeros((4, 4, 4)); p[0, 0, :4] = 1
    t = np.zeros((4, 4, 4)); t[0, 0, 2:4] = 1; t[0, 1, :2] = 1
    assert dice(label_volume(p, 2), label_volume(t, 2), 1) == 0.5


def test_dice_conventions():
    empty = label_volume(np.zeros((3, 3, 3)), 2)
    full = label_volume(np.ones((3, 3, 3)), 2)
    assert dice(empty, empty, 1) == 1.0
    assert dice(empty, full, 1) == 0.0


def test_dice_symmetric():
    a = random_label((6, 6, 6), classes=3, seed=13)
    b = random_label((6, 6, 6), classes=3, seed=14)
    for c in range(3):
        assert dice(a, b, c) == dice(b, a, c)


def test_dice_matches_brute_force_exactly():
    rng = np.random.default_rng(15)
    for _ in range(25):
        shape = tuple(rng.integers(2, 8, size=3))
        a = random_label(shape, classes=3, seed=int(rng.integers(1e6)))
        b = random_label(shape, classes=3, seed=int(rng.integers(1e6)))
        c = int(rng.integers(0, 3))
        assert dice(a, b, c) == dice_oracle(a, b, c)


# --- hausdorff ---------------------------------------------------------------


def test_hausdorff_trivial_values():
    a = random_label((5, 5, 5), classes=2, seed=16)
    assert hausdorff(a, a, 1) == 0.0


def test_hausdorff_three_four_five():
    p = np.zeros((6, 6, 6)); p[0, 0, 0] = 1
    t = np.zeros((6, 6, 6)); t[0, 3, 4] = 1
    assert hausdorff(label_volume(p, 2), label_volume(t, 2), 1) == 5.0


def test_hausdorff_sentinel_and_both_empty():
    empty = label_volume(np.zeros((4, 4, 4)), 2)
    one = label_volume(np.eye(4)[None].repeat(4, 0).astype(int), 2)
    assert hausdorff(empty, empty, 1) == 0.0
    assert math.isnan(hausdorff(one, empty, 1))


def test_hausdorff_spacing_scales():
    p = np.zeros((4, 4, 4)); p[0, 0, 0] = 1
    t = np.zeros((4, 4, 4)); t[0, 0, 1] = 1
    a = Volume(p.astype(np.int64), kind=LABEL, classes=2, spacing=(1, 1, 2.5))
    b = Volume(t.astype(np.int64), kind=LABEL, classes=2, spacing=(1, 1, 2.5))
    assert hausdorff(a, b, 1) == 2.5


def test_hausdorff_matches_brute_force_exactly():
    rng = np.random.default_rng(17)
    for _ in range(15):
        shape = tuple(rng.integers(2, 7, size=3))
        a = random_label(shape, classes=2, seed=int(rng.integers(1e6)))
        b = random_label(shape, classes=2, seed=int(rng.integers(1e6)))
        for mode in ("max", "p95"):
            got = hausdorff(a, b, 1, mode=mode)
            expected = hausdorff_oracle(a, b, 1, mode=mode)
            if math.isnan(expected):
                assert math.isnan(got)
            else:
                assert got == expected, mode


# --- evaluate ----------------------------------------------------------------


def make_cases(n, classes=3, shape=(8, 8, 8)):
    cases = []
    for i in range(n):
        image = random_intensity(shape, seed=100 + i)
        label = random_label(shape, classes=classes, seed=200 + i)
        cases.append(EvalCase(case_id=f"case{i:02d}", image=image, label=label))
    return cases


def test_evaluate_oracle_model_is_perfect(tmp_path):
    cases = make_cases(3)
    plan = WindowPlan(window=(8, 8, 8), blend="uniform")
    report = evaluate(
        cases,
        lambda case: truth_oracle(case.label),
        plan,
        [ViewSpec("axial", 0), ViewSpec("coronal", 0), ViewSpec("sagittal", 0)],
        num_classes=3,
        csv_path=tmp_path / "metrics.csv",
    )
    assert all(r.dice == 1.0 and r.hd == 0.0 for r in report.rows)
    assert report.mean_dice() == 1.0


def test_evaluate_empty_dataset():
    report = evaluate([], lambda c: None, WindowPlan(window=(8, 8, 8)),
                      [ViewSpec("axial", 0)], num_classes=3)
    assert report.rows == []
    assert report.aggregate_rows() == []


def test_evaluate_regeneration_bit_identical(tmp_path):
    cases = make_cases(2)
    plan = WindowPlan(window=(8, 8, 8))
    views = [ViewSpec("axial", 0), ViewSpec("coronal", 1)]
    for name in ("a.csv", "b.csv"):
        evaluate(cases, lambda case: truth_oracle(case.label), plan, views,
                 num_classes=3, csv_path=tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_metrics_csv_is_strict_rfc4180(tmp_path):
    cases = make_cases(2)
    path = tmp_path / "metrics.csv"
    evaluate(cases, lambda case: truth_oracle(case.label),
             WindowPlan(window=(8, 8, 8)), [ViewSpec("axial", 0)], 3, csv_path=path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, strict=True))
    assert rows[0] == ["case_id", "class_id", "dice", "hd", "hd_mode"]
    # 2 cases x 2 classes + 2 class aggregates + 1 overall
    assert len(rows) == 1 + 4 + 3
    agg = [r for r in rows if r[0] == "AGG"]
    assert {r[1] for r in agg} == {"1", "2", "ALL"}


def test_hd_nan_excluded_from_aggregates():
    report = MetricsReport(hd_mode="max")
    report.add("c0", 1, 0.5, float("nan"))
    report.add("c1", 1, 1.0, 2.0)
    assert report.mean_dice() == 0.75
    assert report.mean_hd() == 2.0


def test_vote_fusion_majority():
    lab_a = label_volume(np.zeros((4, 4, 4)), 3)
    lab_b = label_volume(np.ones((4, 4, 4)), 3)
    image = random_intensity((4, 4, 4), seed=20)
    plan = WindowPlan(window=(4, 4, 4))

    views = [ViewSpec("axial", 0), ViewSpec("axial", 1), ViewSpec("axial", 2)]
    # two views agree on class 1, one says class 0 -> majority picks 1
    per_view = {0: lab_b, 1: lab_b, 2: lab_a}

    from mvseg3d.infer import ViewAwarePredictor

    predict = ViewAwarePredictor(
        lambda spec: oracle_predictor(apply_view(per_view[spec.k], spec))
    )
    pred, _ = multiview_predict(image, predict, plan, views, 3, fusion="vote")
    assert np.all(pred.data == 1)
