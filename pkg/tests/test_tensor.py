import numpy as np
import pytest

from twister.tensor import ShapeError, conv2d, layer_norm, matmul, softmax, softplus, upsample2x


def loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def loop_conv(x, kernel):
    h, w, ci = x.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros((h, w, kernel.shape[3]))
    for y in range(h):
        for xx in range(w):
            for dy in range(k):
                for dx in range(k):
                    sy, sx = y + dy - r, xx + dx - r
                    if 0 <= sy < h and 0 <= sx < w:
                        out[y, xx] += x[sy, sx] @ kernel[dy, dx]
    return out


def loop_upsample(x):
    h, w, c = x.shape
    out = np.zeros((2 * h, 2 * w, c))

    def src(o, n):
        s = max((o + 0.5) / 2 - 0.5, 0.0)
        i0 = min(int(np.floor(s)), n - 1)
        i1 = min(i0 + 1, n - 1)
        return i0, i1, s - i0

    for oy in range(2 * h):
        y0, y1, fy = src(oy, h)
        for ox in range(2 * w):
            x0, x1, fx = src(ox, w)
            out[oy, ox] = (
                (1 - fy) * (1 - fx) * x[y0, x0]
                + (1 - fy) * fx * x[y0, x1]
                + fy * (1 - fx) * x[y1, x0]
                + fy * fx * x[y1, x1]
            )
    return out


def test_matmul_examples():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), x), x)
    assert np.array_equal(matmul(x, np.array([[0.0], [1.0]])), np.array([[2.0], [4.0]]))
    assert np.array_equal(matmul(np.zeros((2, 2)), x), np.zeros((2, 2)))


def test_matmul_matches_loop(rng):
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    np.testing.assert_allclose(matmul(a, b), loop_matmul(a, b), rtol=0, atol=1e-13)


def test_matmul_identity_associativity_bitwise(rng):
    a = rng.standard_normal((4, 6))
    b = rng.standard_normal((6, 5))
    eye = np.eye(6)
    ab = matmul(a, b)
    assert np.array_equal(matmul(matmul(a, eye), b), ab)
    assert np.array_equal(matmul(a, matmul(eye, b)), ab)


def test_matmul_rejects_mismatch():
    with pytest.raises(ShapeError, match="dimension mismatch"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_conv_identity_and_zero(rng):
    x = rng.standard_normal((4, 5, 3))
    assert np.array_equal(conv2d(x, np.eye(3)[None, None]), x)
    assert np.array_equal(conv2d(x, np.zeros((3, 3, 3, 2))), np.zeros((4, 5, 2)))


def test_conv_impulse_plateau():
    x = np.zeros((5, 5, 1))
    x[2, 2, 0] = 1.0
    out = conv2d(x, np.ones((3, 3, 1, 1)))[..., 0]
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1.0
    assert np.array_equal(out, expected)


def test_conv_matches_loop_oracle(rng):
    x = rng.standard_normal((4, 6, 3))
    kernel = rng.standard_normal((3, 3, 3, 2))
    np.testing.assert_allclose(conv2d(x, kernel), loop_conv(x, kernel), atol=1e-13)


def test_conv_k1_equals_channel_matmul(rng):
    x = rng.standard_normal((6, 5, 4))
    w = rng.standard_normal((4, 3))
    assert np.abs(conv2d(x, w[None, None]) - matmul(x, w)).max() < 1e-14


@pytest.mark.parametrize("shape", [(2, 2, 1, 1), (3, 3, 2, 1)])
def test_conv_rejects_bad_kernels(shape):
    with pytest.raises(ShapeError):
        conv2d(np.zeros((4, 4, 1)), np.zeros(shape))


def test_conv_is_deterministic(rng):
    x = rng.standard_normal((8, 8, 4))
    k = rng.standard_normal((3, 3, 4, 4))
    assert conv2d(x, k).tobytes() == conv2d(x, k).tobytes()


def test_layer_norm_cases(rng):
    assert np.array_equal(layer_norm(np.full((3, 4), 2.5)), np.zeros((3, 4)))
    eps = 1e-5
    a = 1 / np.sqrt(1 + eps)
    np.testing.assert_allclose(layer_norm(np.array([1.0, -1.0]), eps), [a, -a], rtol=1e-15)
    out = layer_norm(rng.standard_normal((10, 16)) * 3 + 7)
    assert np.abs(out.mean(-1)).max() < 1e-12
    np.testing.assert_allclose(out.var(-1), 1.0, rtol=1e-4)


def test_layer_norm_rejects_empty():
    with pytest.raises(ShapeError):
        layer_norm(np.zeros((3, 0)))


def test_softmax_cases(rng):
    np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    s = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(s)) and s[0] == pytest.approx(1.0) and s[1] < 1e-300
    x = rng.standard_normal((50, 9)) * 1e3
    sums = softmax(x).sum(-1)
    assert np.all(np.abs(sums - 1) <= 1e-12)


def test_softplus_positive_and_stable():
    out = softplus(np.array([-800.0, 0.0, 800.0]))
    assert out[0] >= 0 and out[1] == pytest.approx(np.log(2)) and out[2] == 800.0


def test_upsample_constant_and_single_pixel():
    assert np.array_equal(upsample2x(np.full((3, 2, 2), 4.0)), np.full((6, 4, 2), 4.0))
    assert np.array_equal(upsample2x(np.full((1, 1, 1), -3.0)), np.full((2, 2, 1), -3.0))


def test_upsample_matches_scalar_oracle(rng):
    x = rng.standard_normal((3, 5, 2))
    np.testing.assert_allclose(upsample2x(x), loop_upsample(x), atol=1e-14)


def test_upsample_preserves_mean_for_periodic_input():
    yy, xx = np.mgrid[0:8, 0:8]
    x = (np.sin(2 * np.pi * yy / 8) + np.cos(2 * np.pi * xx / 4))[..., None]
    assert abs(upsample2x(x).mean() - loop_upsample(x).mean()) < 1e-12
    assert abs(upsample2x(x).mean() - x.mean()) < 1e-12
