import math

import numpy as np
import pytest

from mvseg3d.voldata import (
    INTENSITY,
    LABEL,
    Phantom,
    Primitive,
    default_family,
    gen_phantom,
    sample_phantom,
)


def test_empty_recipe_no_noise_is_blank():
    img, lab = gen_phantom(Phantom(shape=(8, 8, 8)))
    assert np.all(img.data == 0.0)
    assert np.all(lab.data == 0)
    assert img.kind == INTENSITY and lab.kind == LABEL


def brute_force_sphere_count(shape, center, r):
    count = 0
    for d in range(shape[0]):
        for h in range(shape[1]):
            for w in range(shape[2]):
                dd, hh, ww = d - center[0], h - center[1], w - center[2]
                if math.sqrt(dd * dd + hh * hh + ww * ww) <= r:
                    count += 1
    return count


def test_sphere_label_count_matches_lattice_enumeration():
    shape = (16, 16, 16)
    center = (8.0, 8.0, 8.0)
    for r in (2.5, 4.0, 5.5):
        ph = Phantom(
            shape=shape,
            primitives=(Primitive("sphere", center, (r,), class_id=1, intensity=(0.5, 0.5)),),
        )
        _, lab = gen_phantom(ph)
        assert int((lab.data == 1).sum()) == brute_force_sphere_count(shape, center, r), r


def test_box_and_ellipsoid_membership():
    shape = (10, 10, 10)
    box = Primitive("box", (5, 5, 5), (4, 2, 6), class_id=1, intensity=(0.4, 0.4))
    _, lab = gen_phantom(Phantom(shape=shape, primitives=(box,)))
    # inclusive |x - c| <= s/2: extents 5, 3, 7 voxels
    assert int((lab.data == 1).sum()) == 5 * 3 * 7

    ell = Primitive("ellipsoid", (5, 5, 5), (3, 3, 3), class_id=2, intensity=(0.4, 0.4))
    _, lab = gen_phantom(Phantom(shape=shape, primitives=(ell,)))
    assert int((lab.data == 2).sum()) == brute_force_sphere_count(shape, (5, 5, 5), 3.0)


def test_later_primitives_overwrite():
    shape = (8, 8, 8)
    big = Primitive("sphere", (4, 4, 4), (3.0,), class_id=1, intensity=(0.3, 0.3))
    small = Primitive("sphere", (4, 4, 4), (1.5,), class_id=2, intensity=(0.8, 0.8))
    _, lab = gen_phantom(Phantom(shape=shape, primitives=(big, small)))
    assert lab.data[4, 4, 4] == 2
    assert (lab.data == 1).sum() > 0


def test_out_of_bounds_primitive_clipped_not_error():
    ph = Phantom(
        shape=(6, 6, 6),
        primitives=(Primitive("sphere", (0, 0, 0), (4.0,), class_id=1, intensity=(0.5, 0.5)),),
    )
    _, lab = gen_phantom(ph)
    assert 0 < (lab.data == 1).sum() < brute_force_sphere_count((9, 9, 9), (4, 4, 4), 4.0)


def test_same_seed_bit_identical():
    ph = Phantom(
        shape=(12, 12, 12),
        primitives=(Primitive("sphere", (6, 6, 6), (4.0,), class_id=1, intensity=(0.2, 0.8)),),
        noise_sigma=0.05,
        seed=77,
    )
    a_img, a_lab = gen_phantom(ph)
    b_img, b_lab = gen_phantom(ph)
    assert np.array_equal(a_img.data, b_img.data)
    assert np.array_equal(a_lab.data, b_lab.data)


def test_intensity_stays_in_unit_range_under_noise():
    ph = Phantom(
        shape=(10, 10, 10),
        primitives=(Primitive("box", (5, 5, 5), (8, 8, 8), class_id=1, intensity=(0.9, 1.0)),),
        noise_sigma=0.5,
        seed=3,
    )
    img, _ = gen_phantom(ph)
    assert img.data.min() >= 0.0 and img.data.max() <= 1.0


def test_family_sampling_deterministic_and_valid():
    fam = default_family(shape=(16, 16, 16), classes=4)
    a = sample_phantom(fam, seed=5)
    b = sample_phantom(fam, seed=5)
    assert a == b
    img, lab = gen_phantom(a)
    assert img.shape == (16, 16, 16)
    assert lab.classes == 4
    assert set(np.unique(lab.data)) <= {0, 1, 2, 3}
    c = sample_phantom(fam, seed=6)
    assert c != a


def test_recipe_validation():
    with pytest.raises(ValueError):
        Primitive("cone", (1, 1, 1), (1.0,), class_id=1, intensity=(0.2, 0.4))
    with pytest.raises(ValueError):
        Primitive("sphere", (1, 1, 1), (1.0,), class_id=1, intensity=(0.5, 0.2))
    with pytest.raises(ValueError):
        Phantom(shape=(4, 4, 4), noise_sigma=-1.0)
