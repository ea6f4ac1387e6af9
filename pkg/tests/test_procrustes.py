import numpy as np
import pytest

from morphodig.procrustes import (
    DegenerateShapeError,
    centroid_size,
    gpa,
    opa_align,
    procrustes_distance,
    reflect_relabel,
)
from morphodig.schema import default_sliders, pair_map
from morphodig.synth import template


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_centroid_size_hand_value():
    # unit square about its center: four corners at distance sqrt(0.5)
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert centroid_size(square) == pytest.approx(np.sqrt(2.0))


def test_centroid_size_scales_linearly():
    c = template()
    assert centroid_size(3.0 * c) == pytest.approx(3.0 * centroid_size(c))


def test_centroid_size_translation_invariant():
    c = template()
    assert centroid_size(c + [17.0, -4.0]) == pytest.approx(centroid_size(c))


def test_degenerate_shape_raises():
    with pytest.raises(DegenerateShapeError):
        centroid_size(np.ones((72, 2)))


def test_opa_recovers_similarity_transform():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(10, 2))
    b = 2.5 * a @ _rot(0.7).T + [3.0, -1.0]
    aligned, d = opa_align(b, a)
    # sqrt(2 - 2*cos) turns ~1e-16 rounding in cos into ~1e-8 near zero
    assert d < 1e-7
    ref = a - a.mean(axis=0)
    ref /= np.sqrt((ref ** 2).sum())
    np.testing.assert_allclose(aligned, ref, atol=1e-12)


def test_opa_no_reflection():
    # target is a mirror image; a proper rotation cannot reach distance 0
    rng = np.random.default_rng(2)
    a = rng.normal(size=(10, 2))
    b = a.copy()
    b[:, 0] = -b[:, 0]
    _, d = opa_align(b, a)
    assert d > 0.1


def test_distance_symmetric_bitwise():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.normal(size=(12, 2))
        b = rng.normal(size=(12, 2))
        assert procrustes_distance(a, b) == procrustes_distance(b, a)


def test_distance_similarity_invariant():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(72, 2))
    b = rng.normal(size=(72, 2))
    d0 = procrustes_distance(a, b)
    for theta, scale, shift in [(0.3, 2.0, (5, -2)), (-1.2, 0.1, (0, 9))]:
        d1 = procrustes_distance(scale * a @ _rot(theta).T + shift, b)
        assert abs(d1 - d0) < 1e-9


def test_distance_range():
    # [DERIVED] the partial Procrustes distance sqrt(2 - 2*cos) lies in [0, sqrt(2)]
    rng = np.random.default_rng(5)
    for _ in range(200):
        d = procrustes_distance(rng.normal(size=(8, 2)), rng.normal(size=(8, 2)))
        assert 0.0 <= d <= np.sqrt(2.0) + 1e-12


def test_reflect_relabel_involution_bitwise():
    pm = pair_map()
    rng = np.random.default_rng(6)
    c = rng.uniform(0, 256, size=(72, 2))
    back = reflect_relabel(reflect_relabel(c, pm), pm)
    assert (back == c).all()


def test_reflect_relabel_fixes_symmetric_template():
    pm = pair_map()
    c = template()
    c -= c.mean(axis=0)
    np.testing.assert_allclose(reflect_relabel(c, pm), c, atol=1e-12)


def test_gpa_two_identical_shapes():
    c = template()
    out = gpa([c, c.copy()])
    assert out.converged
    assert procrustes_distance(out.configs[0], out.configs[1]) < 1e-12
    assert centroid_size(out.mean) == pytest.approx(1.0)


def test_gpa_similarity_invariance():
    rng = np.random.default_rng(7)
    base = [template() + rng.normal(scale=3.0, size=(72, 2)) for _ in range(6)]
    ref = gpa(base)
    moved = [1.7 * c @ _rot(0.4).T + [11.0, -8.0] for c in base]
    out = gpa(moved)
    # consensus agrees up to rotation
    assert procrustes_distance(out.mean, ref.mean) < 1e-9


def test_gpa_mean_is_centered_unit_size():
    rng = np.random.default_rng(8)
    out = gpa([template() + rng.normal(scale=2.0, size=(72, 2)) for _ in range(5)])
    np.testing.assert_allclose(out.mean.mean(axis=0), 0.0, atol=1e-12)
    assert centroid_size(out.mean) == pytest.approx(1.0)


def test_gpa_rejects_bad_input():
    with pytest.raises(ValueError):
        gpa([template()])
    bad = template()
    bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        gpa([bad, template()])


def test_sliding_reduces_sum_of_squares():
    rng = np.random.default_rng(9)
    sliders = default_sliders(False)
    slide_rows = np.array([t.slide - 1 for t in sliders])
    configs = []
    for _ in range(8):
        c = template() + rng.normal(scale=1.0, size=(72, 2))
        # extra tangential noise on the slider points, which sliding can remove
        c[slide_rows] += rng.normal(scale=3.0, size=(len(slide_rows), 2))
        configs.append(c)
    plain = gpa(configs)
    slid = gpa(configs, sliders=sliders)
    ss_plain = sum(procrustes_distance(c, plain.mean) ** 2 for c in plain.configs)
    ss_slid = sum(procrustes_distance(c, slid.mean) ** 2 for c in slid.configs)
    assert slid.slid and not plain.slid
    assert ss_slid < ss_plain
