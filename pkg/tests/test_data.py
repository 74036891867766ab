import json

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from cocoanet import CLASS_NAMES
from cocoanet.data import (AugmentationPolicy, DatasetLayoutError, DatasetManifest, Entry,
                           ManifestDataset, NormalizationStats, augment_train, batch_indices,
                           compute_channel_means, decode_label, encode_label, load_batch,
                           preprocess_eval, resize_bilinear, sample_augmentation, scan_dataset,
                           split_sizes, stratified_split)
from cocoanet.data.transforms import shorter_side_size
from cocoanet.synthetic import write_image_tree

ZERO = NormalizationStats(np.zeros(3))


def _png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


def synthetic_manifest(counts, names=CLASS_NAMES):
    entries = [Entry(f"{c}/{i:05d}.jpg", c) for c, n in zip(names, counts) for i in range(n)]
    return DatasetManifest(list(names), entries)


# labels

def test_encode_label():
    npt.assert_array_equal(encode_label("Anthracnose"), [1, 0, 0])
    npt.assert_array_equal(encode_label("CSSVD"), [0, 1, 0])
    npt.assert_array_equal(encode_label("Healthy"), [0, 0, 1])
    for c in CLASS_NAMES:
        assert decode_label(encode_label(c)) == c
    with pytest.raises(ValueError, match="unknown class"):
        encode_label("Blight")


# scanning

def test_scan_lexicographic(tmp_path):
    for c in ("Healthy", "Anthracnose", "CSSVD"):
        for name in ("b.png", "a.png"):
            _png(tmp_path / c / name, np.zeros((4, 4, 3)))
    m = scan_dataset(tmp_path)
    assert m.class_names == ["Anthracnose", "CSSVD", "Healthy"]
    expected = sorted(p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("*.png"))
    assert [e.path for e in m.entries] == expected
    assert len(m.entries) == 6
    assert all(e.label == e.path.split("/")[0] for e in m.entries)


def test_scan_skips_corrupt_and_logs(tmp_path, caplog):
    _png(tmp_path / "A" / "ok.png", np.zeros((4, 4, 3)))
    (tmp_path / "A" / "bad.jpg").write_bytes(b"not an image")
    _png(tmp_path / "B" / "ok.png", np.zeros((4, 4, 3)))
    m = scan_dataset(tmp_path)
    assert [e.path for e in m.entries] == ["A/ok.png", "B/ok.png"]
    assert "bad.jpg" in caplog.text


def test_scan_empty_root(tmp_path):
    with pytest.raises(DatasetLayoutError, match="expected layout"):
        scan_dataset(tmp_path)


def test_scan_empty_class_dir(tmp_path):
    _png(tmp_path / "A" / "x.png", np.zeros((2, 2, 3)))
    (tmp_path / "B").mkdir()
    with pytest.raises(DatasetLayoutError, match="B"):
        scan_dataset(tmp_path)


# splitting

def test_split_class_of_ten():
    for seed in range(20):
        m = stratified_split(synthetic_manifest([10, 10, 10]), seed=seed)
        for row in m.counts().values():
            assert (row["train"], row["val"], row["test"]) == (8, 1, 1)


def test_split_cssvd_rounding_rule():
    assert split_sizes(7292, (0.8, 0.1, 0.1)) == (5834, 729, 729)
    assert split_sizes(5162, (0.8, 0.1, 0.1)) == (4130, 516, 516)


def test_split_is_partition_and_reproducible():
    base = synthetic_manifest([37, 52, 41])
    a = stratified_split(base, seed=5)
    b = stratified_split(base, seed=5)
    c = stratified_split(base, seed=6)
    assert a.to_json() == b.to_json()
    assert [e.split for e in a.entries] != [e.split for e in c.entries]
    assert a.counts() == c.counts()
    assert all(e.split in ("train", "val", "test") for e in a.entries)
    assert [e.path for e in a.entries] == [e.path for e in base.entries]


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(10, 300), min_size=2, max_size=4), seed=st.integers(0, 2**31))
def test_split_counts_satisfy_rule(counts, seed):
    names = [f"c{i}" for i in range(len(counts))]
    m = stratified_split(synthetic_manifest(counts, names), seed=seed)
    for n, row in zip(counts, m.counts().values()):
        assert row["val"] == round(0.1 * n) and row["test"] == round(0.1 * n)
        assert row["train"] + row["val"] + row["test"] == n


def test_split_too_small_class_named():
    with pytest.raises(ValueError, match="'CSSVD'"):
        stratified_split(synthetic_manifest([10, 2, 10]))


def test_manifest_json_roundtrip(tmp_path):
    m = stratified_split(synthetic_manifest([10, 10, 10]), seed=1)
    m.channel_means = [0.1, 0.2, 0.3]
    m.save(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text(encoding="utf-8"))
    assert set(doc) >= {"class_names", "seed", "channel_means", "entries"}
    assert DatasetManifest.load(tmp_path / "m.json").to_json() == m.to_json()


def test_manifest_rejects_undeclared_label():
    doc = {"class_names": ["A"], "seed": 0, "channel_means": None,
           "entries": [{"path": "x.png", "label": "B", "split": "train"}]}
    with pytest.raises(ValueError, match="undeclared"):
        DatasetManifest.from_json(json.dumps(doc))


# normalization statistics

def test_channel_means_constant_images():
    black = [np.zeros((300, 260, 3))] * 2
    gray = [np.full((256, 256, 3), 0.5)] * 3
    npt.assert_allclose(compute_channel_means(black, loader=lambda a: a).mean_rgb, 0)
    npt.assert_allclose(compute_channel_means(gray, loader=lambda a: a).mean_rgb, 0.5, atol=1e-6)


def test_channel_means_black_and_white():
    imgs = [np.zeros((256, 256, 3)), np.ones((256, 256, 3))]
    npt.assert_allclose(compute_channel_means(imgs, loader=lambda a: a).mean_rgb, 0.5, atol=1e-6)


def test_normalization_reads_only_training_images(tmp_path, monkeypatch):
    from cocoanet import cli
    from cocoanet.data import transforms

    write_image_tree(tmp_path, n_per_class=10)
    m = stratified_split(scan_dataset(tmp_path), seed=0)
    opened = []
    real_open = transforms.Image.open

    def logging_open(path, *a, **k):
        opened.append(tmp_path.joinpath(path).relative_to(tmp_path).as_posix())
        return real_open(path, *a, **k)

    monkeypatch.setattr(transforms.Image, "open", logging_open)
    cli._normalization(m, tmp_path)
    assert sorted(opened) == sorted(e.path for e in m.split("train"))


def test_preprocessed_training_set_is_zero_mean(tmp_path):
    write_image_tree(tmp_path, n_per_class=4, size=300)
    m = stratified_split(scan_dataset(tmp_path), ratios=(0.5, 0.25, 0.25), seed=0)
    paths = [tmp_path / e.path for e in m.split("train")]
    stats = compute_channel_means(paths)
    out = np.stack([preprocess_eval(p, stats) for p in paths])
    assert np.all(np.abs(out.mean(axis=(0, 2, 3))) < 0.01)


# geometry

def test_shorter_side_geometry():
    assert shorter_side_size(448, 640, 256) == (256, 365)
    assert shorter_side_size(640, 448, 256) == (365, 256)
    assert shorter_side_size(256, 256, 256) == (256, 256)


def test_preprocess_256_is_center_crop(rng):
    img = rng.random((256, 256, 3)).astype(np.float32)
    out = preprocess_eval(img, ZERO)
    npt.assert_array_equal(out, img[16:240, 16:240].transpose(2, 0, 1))


def test_preprocess_448x640(rng):
    img = rng.random((448, 640, 3)).astype(np.float32)
    resized = resize_bilinear(img, 256, 365)
    out = preprocess_eval(img, ZERO)
    assert out.shape == (3, 224, 224)
    npt.assert_array_equal(out, resized[16:240, 70:294].transpose(2, 0, 1))


def test_preprocess_grayscale_and_path(tmp_path):
    _png(tmp_path / "g.png", np.full((300, 280), 128))
    Image.open(tmp_path / "g.png").convert("L").save(tmp_path / "g.png")
    out = preprocess_eval(tmp_path / "g.png", ZERO)
    assert out.shape == (3, 224, 224) and np.all(np.isfinite(out))
    with pytest.raises(OSError, match="missing.png"):
        preprocess_eval(tmp_path / "missing.png", ZERO)


def _bilinear_oracle(img, oh, ow):
    """Scalar half-pixel-centre bilinear interpolation with edge clamping."""
    h, w = img.shape[:2]
    out = np.zeros((oh, ow) + img.shape[2:])
    for i in range(oh):
        sy = min(max((i + 0.5) * h / oh - 0.5, 0.0), h - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(ow):
            sx = min(max((j + 0.5) * w / ow - 0.5, 0.0), w - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[i, j] = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
                         + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
    return out


@pytest.mark.parametrize("shape,out", [((5, 7), (9, 4)), ((4, 4), (8, 8)), ((10, 6), (3, 5))])
def test_resize_matches_scalar_oracle(rng, shape, out):
    img = rng.random(shape + (3,)).astype(np.float32)
    npt.assert_allclose(resize_bilinear(img, *out), _bilinear_oracle(img.astype(np.float64), *out), atol=1e-6)


def test_resize_constant_image_stays_constant():
    out = resize_bilinear(np.full((13, 17, 3), 0.25, np.float32), 256, 301)
    npt.assert_allclose(out, 0.25, atol=1e-7)


# augmentation

def test_degenerate_policy_equals_eval(rng):
    img = rng.random((300, 420, 3)).astype(np.float32)
    stats = NormalizationStats([0.4, 0.5, 0.6])
    policy = AugmentationPolicy((256, 256), 224, 0.0, "none", center_crop=True)
    npt.assert_array_equal(augment_train(img, policy, stats, np.random.default_rng(0)), preprocess_eval(img, stats))


def test_augment_shape_and_determinism(rng):
    img = rng.random((300, 400, 3)).astype(np.float32)
    stats = compute_channel_means([img], loader=lambda a: a)
    policy = AugmentationPolicy((256, 480), 224, 0.5, "pca_lighting")
    for seed in range(5):
        a = augment_train(img, policy, stats, np.random.default_rng(seed))
        b = augment_train(img, policy, stats, np.random.default_rng(seed))
        assert a.shape == (3, 224, 224) and np.all(np.isfinite(a))
        npt.assert_array_equal(a, b)


def test_scale_draws_cover_range():
    policy = AugmentationPolicy((256, 480))
    rng = np.random.default_rng(0)
    scales = [sample_augmentation(policy, 500, 600, rng).scale for _ in range(3000)]
    assert min(scales) == 256 and max(scales) == 480


def test_flip_frequency():
    policy = AugmentationPolicy()
    rng = np.random.default_rng(123)
    flips = sum(sample_augmentation(policy, 256, 256, rng).flip for _ in range(10_000))
    assert abs(flips / 10_000 - 0.5) < 0.02


def test_flip_really_mirrors(rng):
    img = rng.random((256, 256, 3)).astype(np.float32)
    base = AugmentationPolicy((256, 256), 224, 0.0, center_crop=True)
    flip = AugmentationPolicy((256, 256), 224, 1.0, center_crop=True)
    a = augment_train(img, base, ZERO, np.random.default_rng(0))
    b = augment_train(img, flip, ZERO, np.random.default_rng(0))
    npt.assert_array_equal(a[:, :, ::-1], b)


def test_pca_lighting_shift_along_eigenvectors(rng):
    img = np.full((256, 256, 3), 0.5, np.float32)
    stats = NormalizationStats(np.zeros(3), np.array([0.01, 0.02, 0.3]), np.eye(3))
    policy = AugmentationPolicy((256, 256), 224, 0.0, "pca_lighting", center_crop=True)
    g = np.random.default_rng(9)
    draw = sample_augmentation(policy, 256, 256, np.random.default_rng(9))
    out = augment_train(img, policy, stats, g)
    npt.assert_allclose(out[:, 0, 0], 0.5 + draw.alpha * stats.eigval, atol=1e-6)


@pytest.mark.parametrize("kwargs", [{"scale_jitter_range": (200, 300)}, {"hflip_prob": 1.5},
                                    {"color_aug": "jitter"}, {"scale_jitter_range": (480, 256)}])
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        AugmentationPolicy(**kwargs)


# datasets and batching

def test_manifest_dataset_sample_determinism(tmp_path):
    write_image_tree(tmp_path, n_per_class=4, size=260)
    m = stratified_split(scan_dataset(tmp_path), ratios=(0.5, 0.25, 0.25), seed=0)
    stats = compute_channel_means([tmp_path / e.path for e in m.split("train")])
    policy = AugmentationPolicy((256, 300), 224, 0.5, "pca_lighting")
    ds = ManifestDataset(m, tmp_path, "train", stats, policy, seed=3)
    ds2 = ManifestDataset(m, tmp_path, "train", stats, policy, seed=3)
    x1, y1 = load_batch(ds, [0, 1, 2], epoch=2)
    x2, y2 = load_batch(ds2, [0, 1, 2], epoch=2)
    npt.assert_array_equal(x1, x2)
    npt.assert_array_equal(y1, y2)
    assert not np.array_equal(load_batch(ds, [0], epoch=3)[0], x1[:1])
    # per-sample randomness ignores batch composition
    npt.assert_array_equal(load_batch(ds, [2], epoch=2)[0][0], x1[2])
    val = ManifestDataset(m, tmp_path, "val", stats, policy)
    assert not val.augment
    npt.assert_array_equal(val.get(0, 0), val.get(0, 7))


def test_empty_split_rejected():
    with pytest.raises(ValueError, match="no 'val' entries"):
        ManifestDataset(synthetic_manifest([3, 3, 3]), ".", "val", ZERO)


def test_batch_indices_222_batches():
    batches = batch_indices(14_176, 64)
    assert len(batches) == 222
    assert sum(len(b) == 64 for b in batches) == 221 and len(batches[-1]) == 32
    shuffled = batch_indices(100, 16, np.random.default_rng(0))
    assert sorted(np.concatenate(shuffled).tolist()) == list(range(100))
