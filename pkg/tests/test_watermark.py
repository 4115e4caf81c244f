import numpy as np
import pytest

from framemark import (BitString, EmbedParams, bit_accuracy, corpus_frames,
                       embed_frame, extract_frame, psnr, synth_frame)
from framemark.watermark import (MIDBAND, correlation_scores,
                                 modulation_field)


def _payload(seed=0):
    return BitString.random(48, np.random.default_rng(seed))


def test_clean_roundtrip_512(corpus8, embed_params):
    payload = _payload(1)
    for frame in corpus8[:4]:
        marked = embed_frame(frame, payload, embed_params)
        assert extract_frame(marked, embed_params) == payload


def test_clean_roundtrip_256(embed_params):
    payload = _payload(2)
    for i in range(4):
        frame = synth_frame(100 + i, size=256)
        marked = embed_frame(frame, payload, embed_params)
        assert extract_frame(marked, embed_params) == payload


def test_roundtrip_nonsquare_and_ragged(embed_params):
    # dimensions that are not multiples of the block size leave a margin
    payload = _payload(3)
    frame = synth_frame(7, size=256)[:250, :260]
    marked = embed_frame(frame, payload, embed_params)
    assert marked.shape == frame.shape
    assert extract_frame(marked, embed_params) == payload


def test_alpha_zero_is_identity(embed_params):
    frame = synth_frame(11, size=128)
    params = EmbedParams(alpha=0.0, pattern_seed=embed_params.pattern_seed)
    marked = embed_frame(frame, _payload(4), params)
    assert np.array_equal(marked, frame)
    assert marked is not frame


def test_embed_does_not_mutate_input(embed_params):
    frame = synth_frame(12, size=128)
    before = frame.copy()
    embed_frame(frame, _payload(5), embed_params)
    assert np.array_equal(frame, before)


def test_embed_deterministic(embed_params):
    frame = synth_frame(13, size=128)
    payload = _payload(6)
    a = embed_frame(frame, payload, embed_params)
    b = embed_frame(frame, payload, embed_params)
    assert np.array_equal(a, b)


def test_psnr_above_40(corpus8, embed_params):
    payload = _payload(7)
    for frame in corpus8[:4]:
        marked = embed_frame(frame, payload, embed_params)
        assert psnr(frame, marked) >= 40.0


def test_psnr_identical_is_inf():
    frame = synth_frame(14, size=64)
    assert psnr(frame, frame) == float("inf")
    with pytest.raises(ValueError):
        psnr(frame, frame[:32])


def test_wrong_seed_reads_noise(embed_params):
    payload = _payload(8)
    frame = synth_frame(15, size=256)
    marked = embed_frame(frame, payload, embed_params)
    other = EmbedParams(pattern_seed=embed_params.pattern_seed + 1)
    got = extract_frame(marked, other)
    acc = bit_accuracy(np.asarray(payload.bits), np.asarray(got.bits))
    assert acc < 0.8  # far from the perfect read the right seed gives


def test_unwatermarked_frames_read_chance():
    rng = np.random.default_rng(16)
    params = EmbedParams(pattern_seed=9)
    payload = _payload(9)
    hits = 0
    total = 0
    for i in range(250):
        frame = synth_frame(3000 + i, size=128)
        got = extract_frame(frame, params)
        hits += int(np.count_nonzero(got.bits == payload.bits))
        total += 48
    acc = hits / total
    assert 0.48 <= acc <= 0.52


def test_modulation_field_energy(embed_params):
    nb = 256
    field = modulation_field(embed_params, nb, _payload(10))
    assert field.shape == (nb, len(MIDBAND))
    per_block = (field ** 2).sum(axis=1)
    want = embed_params.alpha ** 2 * len(MIDBAND)
    assert np.allclose(per_block, want)
    assert np.all(np.abs(field) == embed_params.alpha)


def test_correlation_scores_sign_and_magnitude(embed_params):
    payload = _payload(11)
    frame = synth_frame(17, size=256)
    marked = embed_frame(frame, payload, embed_params)
    base = correlation_scores(frame, embed_params)
    scored = correlation_scores(marked, embed_params)
    signs = np.asarray(payload.bits, dtype=np.float64) * 2 - 1
    shift = scored - base
    # every bit group moved in its payload direction
    assert np.all(np.sign(shift) == signs)
    # 1024 blocks, 64 blocks per bit at 256x256, 12 coefficients each;
    # quantization erodes a bit of the ideal alpha * 12 * 64 shift
    want = embed_params.alpha * len(MIDBAND) * (1024 // 48 + 1)
    assert np.all(np.abs(shift) > 0.5 * want)


def test_min_frame_size_errors(embed_params):
    tiny = np.zeros((32, 128, 3), dtype=np.uint8)
    with pytest.raises(ValueError, match="minimum side"):
        embed_frame(tiny, _payload(12), embed_params)
    grey = np.zeros((128, 128), dtype=np.uint8)
    with pytest.raises(ValueError, match="uint8"):
        embed_frame(grey, _payload(12), embed_params)
    # 64x64 has 64 blocks, enough for 48 bits; 64x48 would not even pass
    ok = np.zeros((64, 64, 3), dtype=np.uint8)
    embed_frame(ok, _payload(12), embed_params)


def test_grid_capacity_error():
    params = EmbedParams(payload_bits=100, pattern_seed=0)
    frame = np.zeros((64, 64, 3), dtype=np.uint8)
    with pytest.raises(ValueError, match="blocks available"):
        embed_frame(frame, BitString.random(100, np.random.default_rng(0)),
                    params)


def test_payload_length_checked(embed_params):
    frame = synth_frame(18, size=128)
    with pytest.raises(ValueError, match="48 bits"):
        embed_frame(frame, BitString.from01("1010"), embed_params)


def test_embed_params_roundtrip_and_validation():
    p = EmbedParams(alpha=2.5, pattern_seed=4)
    assert EmbedParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        EmbedParams(alpha=-1.0)
    with pytest.raises(ValueError):
        EmbedParams(block_size=2)
    with pytest.raises(ValueError):
        EmbedParams(payload_bits=0)


def test_corpus_frames_deterministic():
    a = corpus_frames(3, 128, seed=5)
    b = corpus_frames(3, 128, seed=5)
    c = corpus_frames(3, 128, seed=6)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert not np.array_equal(a[0], c[0])
    assert a[0].shape == (128, 128, 3)
    assert a[0].dtype == np.uint8
    assert not np.array_equal(a[0], a[1])
