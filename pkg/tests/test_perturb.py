import itertools

import numpy as np
import pytest

from sdtwreg.core import read_sequence
from sdtwreg.perturb import (
    DegenerateLength,
    PerturbConfig,
    SyntheticCorpusSpec,
    class_prototypes,
    feature_transform,
    generate_corpus,
    make_pair,
    perturb_sequence,
    read_manifest,
    resample_labels,
    resampled_length,
    synth_corpus,
    time_resample,
)


def test_resample_identity(rng):
    x = rng.standard_normal((7, 3))
    np.testing.assert_array_equal(time_resample(x, 1.0).frames, x)


def test_resample_stretch():
    out = time_resample([[0.0], [1.0]], 0.5).frames
    np.testing.assert_allclose(out[:, 0], [0.0, 1 / 3, 2 / 3, 1.0], rtol=0, atol=1e-15)


def test_resample_compress():
    x = np.array([[1.0, 0.0], [2.0, 5.0], [3.0, -1.0], [4.0, 2.0]])
    out = time_resample(x, 2.0).frames
    assert out.shape == (2, 2)
    np.testing.assert_array_equal(out, x[[0, -1]])


def test_resample_endpoints_and_convexity(rng):
    for _ in range(50):
        t = int(rng.integers(2, 40))
        f = float(rng.uniform(0.3, 3.0))
        if resampled_length(t, f) < 2:
            continue
        x = rng.standard_normal((t, 2))
        out = time_resample(x, f).frames
        assert out.shape[0] == resampled_length(t, f)
        np.testing.assert_array_equal(out[0], x[0])
        np.testing.assert_allclose(out[-1], x[-1], rtol=1e-14, atol=1e-14)
        assert np.all(out.min(0) >= x.min(0) - 1e-12) and np.all(out.max(0) <= x.max(0) + 1e-12)


def test_resampled_length_rounds_half_up():
    assert resampled_length(9, 2.0) == 5
    assert resampled_length(11, 1.1) == 10
    assert resampled_length(20, 0.9) == 22


def test_resample_degenerate():
    with pytest.raises(DegenerateLength):
        time_resample([[1.0]], 1.0)
    with pytest.raises(DegenerateLength):
        time_resample([[0.0], [1.0], [2.0]], 10.0)
    with pytest.raises(ValueError):
        time_resample([[0.0], [1.0]], 0.0)


def test_transform_identity(rng):
    x = rng.standard_normal((5, 4))
    np.testing.assert_array_equal(feature_transform(x, 0.0, 3).frames, x)


def test_transform_determinism(rng):
    x = rng.standard_normal((5, 4))
    a = feature_transform(x, 0.3, 11, 0.05).frames
    b = feature_transform(x, 0.3, 11, 0.05).frames
    c = feature_transform(x, 0.3, 12, 0.05).frames
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_transform_preserves_gram(rng):
    for d in (2, 3, 16):
        x = rng.standard_normal((9, d))
        y = feature_transform(x, 0.7, int(rng.integers(1000))).frames
        np.testing.assert_allclose(y @ y.T, x @ x.T, rtol=0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), np.linalg.norm(x, axis=1), atol=1e-9)


def test_transform_rotates_by_strength(rng):
    x = rng.standard_normal((40, 3))
    y = feature_transform(x, 0.25, 5).frames
    # the largest angle between a frame and its image is the rotation angle
    cos = np.sum(x * y, 1) / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))
    assert np.min(cos) >= np.cos(0.25) - 1e-12


def test_transform_one_dim():
    np.testing.assert_allclose(feature_transform([[2.0], [-1.0]], 0.5, 0).frames, [[3.0], [-1.5]])


def test_make_pair_trivial(rng):
    x = rng.standard_normal((6, 3))
    a, b = make_pair(x, PerturbConfig(speed_factors=(1.0,), transform_strength=0.0, noise_std=0.0))
    np.testing.assert_array_equal(a.frames, x)
    np.testing.assert_array_equal(b.frames, x)


def test_make_pair_deterministic_and_length(rng):
    x = rng.standard_normal((31, 3))
    seen = set()
    for seed in range(30):
        cfg = PerturbConfig(seed=seed)
        xp, f = perturb_sequence(x, cfg)
        assert xp.T == resampled_length(31, f)
        np.testing.assert_array_equal(make_pair(x, cfg)[1].frames, xp.frames)
        seen.add(f)
    assert seen == {0.9, 1.0, 1.1}


def test_config_validation():
    with pytest.raises(ValueError):
        PerturbConfig(speed_factors=())
    with pytest.raises(ValueError):
        PerturbConfig(speed_factors=(0.0,))
    with pytest.raises(ValueError):
        PerturbConfig(noise_std=-1.0)
    with pytest.raises(ValueError):
        SyntheticCorpusSpec(len_range=(1, 5))


def test_corpus_single_item(tmp_path):
    spec = SyntheticCorpusSpec(n_items=1, len_range=(5, 5), dim=3)
    entries = generate_corpus(spec, tmp_path)
    assert len(entries) == 1 and entries[0]["t"] == 5
    seq = read_sequence(tmp_path / entries[0]["path"])
    assert (seq.T, seq.D) == (5, 3)
    assert read_manifest(tmp_path / "manifest.jsonl") == entries


def test_corpus_byte_identical(tmp_path):
    spec = SyntheticCorpusSpec(n_items=12, seed=4)
    generate_corpus(spec, tmp_path / "a")
    generate_corpus(spec, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 13
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_corpus_matches_in_memory(tmp_path):
    spec = SyntheticCorpusSpec(n_items=5, seed=2)
    entries = generate_corpus(spec, tmp_path)
    mem = synth_corpus(spec)
    for e, s in zip(entries, mem):
        np.testing.assert_array_equal(read_sequence(tmp_path / e["path"]).frames, s.frames)


def test_manifest_segments_match_frames(tmp_path):
    spec = SyntheticCorpusSpec(n_items=20, seed=9)
    protos = class_prototypes(spec)
    for e in generate_corpus(spec, tmp_path):
        frames = read_sequence(tmp_path / e["path"]).frames
        assert len(e["classes"]) == e["t"] == len(frames)
        # each frame is nearest to the prototype of its labelled class
        nearest = np.argmin(((frames[:, None, :] - protos[None]) ** 2).sum(-1), axis=1)
        assert np.mean(nearest == np.array(e["classes"])) >= 0.95
        # residuals have the jitter scale
        resid = frames - protos[e["classes"]]
        assert np.std(resid) == pytest.approx(spec.jitter_std, rel=0.25)


def test_labels_keep_content_order(rng):
    for _ in range(50):
        t = int(rng.integers(4, 50))
        labels = np.repeat(rng.integers(0, 5, size=t // 2 + 1), 2)[:t].tolist()
        f = float(rng.choice([0.9, 1.0, 1.1]))
        out = resample_labels(labels, f)
        assert len(out) == resampled_length(t, f)
        # run-length class order is unchanged (segments are at least 2 frames)
        order = lambda seq: [k for k, _ in itertools.groupby(seq)]
        assert order(out) == order(labels)
