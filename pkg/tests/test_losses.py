import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svgdistill import losses
from svgdistill.geometry import BLACK, Color, PathKind, Scene, VectorPath, circle_path, flatten_segment, polygon_path
from svgdistill.rasterizer import RenderConfig


def fd_check(fn, x, grad, h=1e-6, n=20, seed=0):
    rng = np.random.default_rng(seed)
    flat = x.ravel()
    for i in rng.choice(flat.size, size=min(n, flat.size), replace=False):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += h
        xm[i] -= h
        num = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * h)
        assert grad.ravel()[i] == pytest.approx(num, rel=1e-5, abs=1e-9)


def test_l2_values_and_grad():
    rng = np.random.default_rng(0)
    a, b = rng.random((5, 4, 3)), rng.random((5, 4, 3))
    assert losses.l2(a, a).value == 0
    assert losses.l2(np.zeros((2, 2, 3)), np.ones((2, 2, 3))).value == 1.0
    fd_check(lambda x: losses.l2(x, b).value, a, losses.l2(a, b).d_pixels)


def test_l1_values_and_grad():
    rng = np.random.default_rng(1)
    a, b = rng.random((5, 4, 3)), rng.random((5, 4, 3))
    assert losses.l1(a, a).value == 0
    assert losses.l1(np.zeros((2, 2, 3)), np.ones((2, 2, 3))).value == 1.0
    assert np.all(losses.l1(a, a).d_pixels == 0)
    fd_check(lambda x: losses.l1(x, b).value, a, losses.l1(a, b).d_pixels)


def test_l1_optimal_constant_is_median():
    rng = np.random.default_rng(2)
    vals = rng.random(9)
    grid = np.linspace(0, 1, 20001)
    cost = np.abs(grid[:, None] - vals[None]).sum(axis=1)
    assert grid[np.argmin(cost)] == pytest.approx(np.median(vals), abs=1e-4)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        losses.l2(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


def test_udf_uniform_error_unit_weights():
    w, h, c = 7, 5, 0.3
    img = np.zeros((h, w, 3))
    v = losses.udf_weighted_l2(img + c, img, weights=np.ones((h, w)))
    assert v.value == pytest.approx(w * h * c * c)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_udf_relation_to_l2(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((6, 5, 3)), rng.random((6, 5, 3))
    v = losses.udf_weighted_l2(a, b, weights=np.ones((6, 5)))
    assert v.value == pytest.approx(6 * 5 * 3 * losses.l2(a, b).value / 3, rel=1e-12)
    assert losses.udf_weighted_l2(a, a, weights=rng.random((6, 5))).value == 0


def test_udf_gradient_treats_weights_constant():
    rng = np.random.default_rng(3)
    a, b, wts = rng.random((4, 4, 3)), rng.random((4, 4, 3)), rng.random((4, 4))
    v = losses.udf_weighted_l2(a, b, weights=wts)
    fd_check(lambda x: losses.udf_weighted_l2(x, b, weights=wts).value, a, v.d_pixels)


def test_udf_weights_match_brute_distance_transform():
    path = circle_path((16, 16), 9, BLACK)
    scene = Scene(32, 32, Color(1, 1, 1), [path])
    n = 16
    d = losses.udf_weights(scene, RenderConfig(subdivision=n))
    dense = np.concatenate([flatten_segment(s, 4000) for s in path.segments()])
    ys, xs = np.mgrid[0:32, 0:32] + 0.5
    q = np.c_[xs.ravel(), ys.ravel()]
    brute = np.sqrt(((q[:, None, :] - dense[None, ::4]) ** 2).sum(-1)).min(axis=1).reshape(32, 32)
    assert np.max(np.abs(d - brute)) <= 2 / n


def test_udf_empty_scene_errors():
    with pytest.raises(ValueError):
        losses.udf_weighted_l2(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), scene=Scene(4, 4))


def seg_scene(ctrl):
    return Scene(10, 10, Color(1, 1, 1), [VectorPath(PathKind.OPEN_STROKED, ctrl, stroke_width=1.0)])


def test_xing_collinear_is_zero():
    assert losses.xing(seg_scene([(0, 0), (1, 0), (2, 0), (3, 0)])).value == 0


def test_xing_consistent_turns_zero():
    # left turn at both corners: D1 = 1, D2 > 0
    assert losses.xing(seg_scene([(0, 0), (1, 0), (1, 1), (0, 1)])).value == 0


def test_xing_zigzag_is_one():
    # left then right with unit edges at right angles: D1 = 1, D2 = -1
    v = losses.xing(seg_scene([(0, 0), (1, 0), (1, 1), (2, 1)]))
    assert v.value == pytest.approx(1.0)


def test_xing_zero_length_edge():
    v = losses.xing(seg_scene([(0, 0), (1, 0), (1, 0), (2, 1)]))
    assert v.value == 0 and np.all(v.d_geometry[0] == 0)


def test_xing_gradient_fd():
    rng = np.random.default_rng(4)
    ctrl = rng.normal(size=(12, 2)) * 5
    scene = Scene(10, 10, Color(1, 1, 1), [VectorPath(PathKind.CLOSED_FILLED, ctrl)])
    g = losses.xing(scene).d_geometry[0]

    def f(c):
        return losses.xing(Scene(10, 10, Color(1, 1, 1), [VectorPath(PathKind.CLOSED_FILLED, c)])).value

    fd_check(f, ctrl, g, h=1e-6, n=24)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(-50, 50))
def test_xing_similarity_invariant(seed, scale, shift):
    rng = np.random.default_rng(seed)
    ctrl = rng.normal(size=(12, 2))
    base = losses.xing(Scene(10, 10, Color(1, 1, 1), [VectorPath(PathKind.CLOSED_FILLED, ctrl)])).value
    moved = losses.xing(Scene(10, 10, Color(1, 1, 1),
                              [VectorPath(PathKind.CLOSED_FILLED, ctrl * scale + shift)])).value
    assert moved == pytest.approx(base, abs=1e-9)


def test_xing_skips_fixed_squares():
    from svgdistill.geometry import square_path

    s = Scene(10, 10, Color(1, 1, 1), [square_path(0, 0, 2, BLACK), polygon_path([(0, 0), (3, 0), (0, 3)], BLACK)])
    v = losses.xing(s)
    assert v.d_geometry[0] is None and v.d_geometry[1] is not None


def test_saturation_penalty():
    gray = np.full((3, 3, 3), 0.5)
    white = np.ones((3, 3, 3))
    assert losses.saturation_penalty(gray).value == 0
    assert losses.saturation_penalty(white).value == 1.0
    rng = np.random.default_rng(5)
    x = rng.random((4, 4, 3))
    # hand computation on the [-1, 1] image
    s = 2 * x - 1
    assert losses.saturation_penalty(x).value == pytest.approx(np.mean(s[..., 0] ** 2 + s[..., 1] ** 2 + s[..., 2] ** 2) / 3)
    fd_check(lambda y: losses.saturation_penalty(y).value, x, losses.saturation_penalty(x).d_pixels)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_losses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((3, 3, 3)), rng.random((3, 3, 3))
    assert losses.l1(a, b).value >= 0 and losses.l2(a, b).value >= 0
    assert losses.udf_weighted_l2(a, b, weights=rng.random((3, 3))).value >= 0
