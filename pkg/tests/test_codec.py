import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nestquant import bounds, codec, voronoi
from nestquant.codec import FIRST_BETA, OPT_BETA, QuantizedMatrix, QuantizerConfig

CFG = QuantizerConfig.from_grid(14, (3.25, 4.25, 5.25, 7.5))


def test_config_validation():
    with pytest.raises(ValueError):
        QuantizerConfig(1, (1.0,))
    with pytest.raises(ValueError):
        QuantizerConfig(8, ())
    with pytest.raises(ValueError):
        QuantizerConfig(8, (0.5, 0.5))
    with pytest.raises(ValueError):
        QuantizerConfig(8, (-1.0,))
    with pytest.raises(ValueError):
        QuantizerConfig(8, (1.0,), strategy="best")
    cfg = QuantizerConfig.from_grid(16, [4, 8])
    assert cfg.betas == (0.25, 0.5) and cfg.k == 2 and cfg.d == 8


def test_single_beta_is_plain_voronoi_code(rng):
    cfg = QuantizerConfig(10, (0.3,))
    a = rng.standard_normal(64)
    qv = codec.quantize_row(a, cfg)
    normed = a * 8 / np.linalg.norm(a)
    assert np.array_equal(qv.codes, voronoi.encode(normed.reshape(-1, 8) / 0.3, 10).ravel())
    assert np.all(qv.beta_idx == 0)


def test_exact_codebook_row(rng):
    q = 6
    book = voronoi.codebook(3)  # points of 3V lie inside 6V as well
    lam = book[rng.choice(len(book), size=4)]
    n = 32
    beta = math.sqrt(n) / np.linalg.norm(lam)
    cfg = QuantizerConfig(q, (beta / 3, beta, 2 * beta))
    row = (beta * lam).ravel() * 2.5
    qv = codec.quantize_row(row, cfg)
    rec = codec.dequantize_row(qv, cfg)
    assert np.allclose(rec, row, rtol=0, atol=1e-12)
    assert np.isclose(qv.scale, np.linalg.norm(row))


def test_zero_row_and_threads(rng):
    a = rng.standard_normal((600, 32))
    a[7] = 0
    one = codec.quantize_matrix(a, CFG, threads=1)
    four = codec.quantize_matrix(a, CFG, threads=4)
    for f in ("codes", "beta_idx", "scales"):
        assert np.array_equal(getattr(one, f), getattr(four, f))
    assert one.scales[7] == 0 and not one.codes[7].any() and not one.beta_idx[7].any()
    assert not codec.dequantize_matrix(one)[7].any()


def test_rejects_bad_rows():
    with pytest.raises(ValueError):
        codec.quantize_row(np.ones(12), CFG)
    with pytest.raises(ValueError):
        codec.quantize_matrix(np.full((2, 8), np.inf), CFG)


def test_gaussian_reconstruction_error(rng):
    # four scales evenly spaced on (0, 10]/q at q = 16
    x = rng.standard_normal((200_000, 8))
    for strategy, target in ((OPT_BETA, 0.0795), (FIRST_BETA, 0.0798)):
        cfg = QuantizerConfig.from_grid(16, (2.5, 5.0, 7.5, 10.0), strategy)
        _, _, rec = codec.quantize_blocks(x, cfg)
        assert abs(math.sqrt(np.mean((x - rec) ** 2)) - target) < 0.002


def test_requantize_fixed_point_opt_beta(rng):
    a = rng.standard_normal((1000, 64))
    qm = codec.quantize_matrix(a, CFG)
    again = codec.quantize_matrix(codec.dequantize_matrix(qm), CFG)
    assert np.array_equal(again.codes, qm.codes)
    assert np.array_equal(again.beta_idx, qm.beta_idx)


def test_dot_products(rng):
    a = codec.quantize_matrix(rng.standard_normal((20, 64)), CFG)
    da = codec.dequantize_matrix(a)
    for i in range(20):
        assert math.isclose(codec.quantized_dot(a.row(i), a.row(i), CFG), da[i] @ da[i], rel_tol=1e-12)
        j = (i + 1) % 20
        ref = da[i] @ da[j]
        assert abs(codec.quantized_dot(a.row(i), a.row(j), CFG) - ref) <= 1e-9 * max(abs(ref), 1e-300)
    prod = codec.quantized_matmul(a, a)
    assert np.allclose(np.diag(prod), np.sum(da**2, axis=1), rtol=1e-12)
    assert np.allclose(prod, da @ da.T, rtol=1e-9, atol=1e-12)


def test_dot_error_near_lower_bound(rng):
    n, pairs = 4096, 1000
    x = rng.standard_normal((pairs, n))
    y = rng.standard_normal((pairs, n))
    qx, qy = codec.quantize_matrix(x, CFG), codec.quantize_matrix(y, CFG)
    est = np.array([codec.quantized_dot(qx.row(i), qy.row(i), CFG) for i in range(pairs)])
    rmse = math.sqrt(np.mean((np.sum(x * y, axis=1) - est) ** 2))
    counts = np.bincount(np.concatenate([qx.beta_idx.ravel(), qy.beta_idx.ravel()]), minlength=CFG.k)
    _, rate = codec.effective_rate(CFG, counts / counts.sum())
    floor = math.sqrt(n * bounds.gamma_lower_bound(rate))
    assert floor <= rmse <= 1.3 * floor


def test_matmul_mismatches(rng):
    a = codec.quantize_matrix(rng.standard_normal((3, 16)), CFG)
    b = codec.quantize_matrix(rng.standard_normal((3, 24)), CFG)
    c = codec.quantize_matrix(rng.standard_normal((3, 16)), QuantizerConfig(14, (0.3,)))
    with pytest.raises(ValueError):
        codec.quantized_matmul(a, b)
    with pytest.raises(ValueError):
        codec.quantized_matmul(a, c)
    with pytest.raises(ValueError):
        codec.quantized_dot(a.row(0), b.row(0), CFG)


def test_matmul_beats_uniform_at_lower_rate(rng):
    cfg = QuantizerConfig.from_grid(13, (3.25, 4.25, 5.25, 7.5))
    assert codec.effective_rate(cfg, np.full(4, 0.25))[0] < 4
    a, b = rng.standard_normal((256, 256)), rng.standard_normal((256, 256))
    exact = a @ b.T
    nq = codec.quantized_matmul(codec.quantize_matrix(a, cfg), codec.quantize_matrix(b, cfg))
    uni = codec.uniform_quantize(a, 4) @ codec.uniform_quantize(b, 4).T
    assert np.sqrt(np.mean((exact - nq) ** 2)) < np.sqrt(np.mean((exact - uni) ** 2))


def test_effective_rate():
    fixed, _ = codec.effective_rate(QuantizerConfig(14, (1, 2, 3, 4)), np.full(4, 0.25))
    assert math.isclose(fixed, math.log2(14) + 0.25, rel_tol=1e-15)
    assert f"{fixed:.2f}" == "4.06"
    fixed, entropy = codec.effective_rate(QuantizerConfig(12, (1, 2, 3, 4)), np.full(4, 0.25))
    assert round(fixed, 3) == 3.835 and math.isclose(fixed, entropy)
    fixed, entropy = codec.effective_rate(QuantizerConfig(12, (1, 2, 3, 4)), [1, 0, 0, 0])
    assert entropy == math.log2(12)
    with pytest.raises(ValueError):
        codec.effective_rate(CFG, [])
    with pytest.raises(ValueError):
        codec.effective_rate(CFG, [0.5, 0.5, 0.5, 0.5])


def test_uniform_quantizer_cases(rng):
    steps = 2**3 - 1
    grid = (2 * rng.integers(0, steps + 1, size=16) - steps) / steps
    grid[0] = 1.0
    assert np.allclose(codec.uniform_quantize_row(grid * 3.5, 3), grid * 3.5)
    for bits in (1, 2, 5):
        assert np.allclose(codec.uniform_quantize_row(np.full(8, -2.0), bits), -2.0)
    assert not codec.uniform_quantize_row(np.zeros(8), 4).any()
    with pytest.raises(ValueError):
        codec.uniform_quantize_row(np.ones(8), 0)


def test_uniform_worse_than_nestquant(rng):
    cfg = QuantizerConfig.from_grid(13, (3.25, 4.25, 5.25, 7.5))
    a = rng.standard_normal((64, 4096))
    nq = codec.dequantize_matrix(codec.quantize_matrix(a, cfg))
    assert np.mean((a - codec.uniform_quantize(a, 4)) ** 2) > np.mean((a - nq) ** 2)


@given(
    arrays(np.float64, 16, elements=st.floats(-5, 5)).filter(lambda a: np.linalg.norm(a) > 1e-3),
    st.lists(st.integers(2, 60), min_size=1, max_size=4, unique=True),
    st.integers(2, 60),
)
def test_extra_beta_never_hurts_opt(a, grid, extra):
    small = QuantizerConfig.from_grid(10, sorted(grid))
    big = QuantizerConfig.from_grid(10, sorted(set(grid) | {extra}))
    err_small = np.sum((a - codec.dequantize_row(codec.quantize_row(a, small), small)) ** 2)
    err_big = np.sum((a - codec.dequantize_row(codec.quantize_row(a, big), big)) ** 2)
    assert err_big <= err_small * (1 + 1e-12) + 1e-300


def test_finer_q_lowers_granular_error(rng):
    x = rng.standard_normal((10**6, 8))
    errs = []
    for q in (4, 8, 16):
        _, rec, over = voronoi.roundtrip(x / (24.0 / q), q)
        assert not over.any()
        errs.append(np.mean((x - rec * 24.0 / q) ** 2, axis=1))
    for coarse, fine in zip(errs, errs[1:]):
        diff = coarse - fine
        assert diff.mean() > 10 * diff.std() / math.sqrt(diff.size)


def test_opt_never_worse_than_first(rng):
    x = rng.standard_normal((50000, 8))
    opt = QuantizerConfig.from_grid(16, (2.5, 5.0, 7.5, 10.0), OPT_BETA)
    first = QuantizerConfig.from_grid(16, (2.5, 5.0, 7.5, 10.0), FIRST_BETA)
    e_opt = np.sum((x - codec.quantize_blocks(x, opt)[2]) ** 2, axis=1)
    e_first = np.sum((x - codec.quantize_blocks(x, first)[2]) ** 2, axis=1)
    assert np.all(e_opt <= e_first)


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_scale_covariance(c, seed):
    a = np.random.default_rng(seed).standard_normal(32)
    base = codec.quantize_row(a, CFG)
    scaled = codec.quantize_row(c * a, CFG)
    assert np.array_equal(base.codes, scaled.codes)
    assert np.array_equal(base.beta_idx, scaled.beta_idx)
    assert math.isclose(scaled.scale, c * base.scale, rel_tol=1e-12)


def test_from_rows_roundtrip(rng):
    qm = codec.quantize_matrix(rng.standard_normal((5, 16)), CFG)
    back = QuantizedMatrix.from_rows(qm.rows, CFG)
    assert np.array_equal(back.codes, qm.codes) and np.array_equal(back.scales, qm.scales)
    assert np.allclose(codec.beta_usage(qm).sum(), 1.0)
