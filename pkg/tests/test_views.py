import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvseg3d.voldata import (
    ALL_VIEW_SPECS,
    ViewSpec,
    apply_view,
    apply_view_array,
    apply_view_field,
    invert_view,
    invert_view_array,
    invert_view_field,
)

from conftest import random_intensity


def test_identity_spec_is_noop():
    v = random_intensity((4, 5, 6))
    out = apply_view(v, ViewSpec("axial", 0))
    assert np.array_equal(out.data, v.data)
    assert out.spacing == v.spacing


def test_quarter_turn_convention_2x2():
    # out[i][j] = in[j][n-1-i] forces [[1,2],[3,4]] -> [[2,4],[1,3]]
    slab = np.array([[[0.1, 0.2], [0.3, 0.4]]], dtype=np.float32)
    out = apply_view_array(slab, ViewSpec("axial", 1))
    expected = np.array([[[0.2, 0.4], [0.1, 0.3]]], dtype=np.float32)
    assert np.array_equal(out, expected)


def test_four_quarter_turns_identity():
    v = random_intensity((6, 6, 6), seed=3)
    out = v
    for _ in range(4):
        out = apply_view(out, ViewSpec("axial", 1))
    assert np.array_equal(out.data, v.data)


def test_four_quarter_turns_identity_in_every_view_frame():
    # the 4-cycle holds about the viewing axis of any observed frame
    v = random_intensity((4, 4, 4), seed=7)
    for spec in ALL_VIEW_SPECS:
        w = apply_view(v, spec)
        out = w
        for _ in range(4):
            out = apply_view(out, ViewSpec("axial", 1))
        assert np.array_equal(out.data, w.data), spec


def test_quarter_turn_additivity_within_view():
    v = random_intensity((4, 6, 8), seed=11)
    for view in ("axial", "coronal", "sagittal"):
        base = apply_view(v, ViewSpec(view, 0))
        rotated = base
        for k in range(1, 4):
            rotated = apply_view(rotated, ViewSpec("axial", 1))
            direct = apply_view(v, ViewSpec(view, k))
            assert np.array_equal(rotated.data, direct.data), (view, k)


def test_round_trip_all_specs():
    v = random_intensity((4, 6, 8), seed=5)
    for spec in ALL_VIEW_SPECS:
        back = invert_view(apply_view(v, spec), spec)
        assert np.array_equal(back.data, v.data), spec
        assert back.spacing == v.spacing, spec


def test_inverse_of_one_turn_equals_three_turns():
    v = random_intensity((5, 5, 5), seed=9)
    a = invert_view_array(v.data, ViewSpec("axial", 1))
    b = apply_view_array(v.data, ViewSpec("axial", 3))
    assert np.array_equal(a, b)


def test_value_multiset_preserved():
    v = random_intensity((3, 4, 5), seed=13)
    ref = np.sort(v.data.ravel())
    for spec in ALL_VIEW_SPECS:
        out = apply_view(v, spec)
        assert np.array_equal(np.sort(out.data.ravel()), ref), spec


def test_non_cubic_shapes_permute():
    v = random_intensity((2, 3, 4))
    assert apply_view(v, ViewSpec("coronal", 0)).shape == (3, 2, 4)
    assert apply_view(v, ViewSpec("sagittal", 0)).shape == (4, 3, 2)
    # an odd quarter-turn swaps the in-plane extents
    assert apply_view(v, ViewSpec("coronal", 1)).shape == (3, 4, 2)


def test_spacing_follows_axes():
    from mvseg3d.voldata import Volume

    v = Volume(random_intensity((2, 3, 4)).data, spacing=(1.0, 2.0, 3.0))
    out = apply_view(v, ViewSpec("sagittal", 1))
    # sagittal: (W,H,D) -> spacing (3,2,1); odd turn swaps in-plane -> (3,1,2)
    assert out.spacing == (3.0, 1.0, 2.0)
    back = invert_view(out, ViewSpec("sagittal", 1))
    assert back.spacing == (1.0, 2.0, 3.0)


def test_field_transform_moves_spatial_axes_only():
    rng = np.random.default_rng(2)
    field = rng.random((3, 4, 5, 6))
    for spec in ALL_VIEW_SPECS:
        out = apply_view_field(field, spec)
        assert out.shape[0] == 3
        back = invert_view_field(out, spec)
        assert np.array_equal(back, field), spec
        for c in range(3):
            assert np.array_equal(out[c], apply_view_array(field[c], spec))


def test_torch_tensors_round_trip_and_match_numpy():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(4)
    a = rng.random((4, 5, 6))
    t = torch.from_numpy(a.copy())
    for spec in ALL_VIEW_SPECS:
        out_t = apply_view_array(t, spec)
        assert np.array_equal(out_t.numpy(), apply_view_array(a, spec)), spec
        assert np.array_equal(invert_view_array(out_t, spec).numpy(), a), spec


def test_bad_specs_rejected():
    with pytest.raises(ValueError):
        ViewSpec("diagonal", 0)
    with pytest.raises(ValueError):
        ViewSpec("axial", 4)


def test_spec_parse_round_trip():
    assert ViewSpec.parse("coronal:2") == ViewSpec("coronal", 2)
    assert ViewSpec.parse("axial") == ViewSpec("axial", 0)
    assert ViewSpec.parse(str(ViewSpec("sagittal", 3))) == ViewSpec("sagittal", 3)


@settings(max_examples=40, deadline=None)
@given(
    shape=st.tuples(*(st.integers(1, 6),) * 3),
    view=st.sampled_from(("axial", "coronal", "sagittal")),
    k=st.integers(0, 3),
    seed=st.integers(0, 10_000),
)
def test_property_round_trip_and_multiset(shape, view, k, seed):
    rng = np.random.default_rng(seed)
    data = rng.random(shape, dtype=np.float32)
    spec = ViewSpec(view, k)
    out = apply_view_array(data, spec)
    assert np.array_equal(np.sort(out.ravel()), np.sort(data.ravel()))
    assert np.array_equal(invert_view_array(out, spec), data)
