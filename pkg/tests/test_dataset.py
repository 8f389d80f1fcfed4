from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from busnet.dataset import (
    DatasetError,
    DatasetManifest,
    FoldPlan,
    LabeledImage,
    ManifestEntry,
    decode,
    ingest,
    load_split,
    make_folds,
    merge,
    resize,
    split_images,
    summary_table,
)
from busnet.labels import ClassLabel


def write_pngs(root, counts, size=8, masks=False):
    rng = np.random.default_rng(0)
    for name, n in counts.items():
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            Image.fromarray(rng.integers(0, 256, (size, size), dtype=np.uint8)).save(d / f"{name} ({i}).png")
            if masks:
                Image.fromarray(np.zeros((size, size), np.uint8)).save(d / f"{name} ({i})_mask.png")
    return root


def fake_manifest(counts, origin="x"):
    entries = []
    for label, n in counts.items():
        for i in range(n):
            entries.append(ManifestEntry(f"{origin}:{label.title}/{i}", f"/nowhere/{i}.png", label, origin))
    return DatasetManifest(tuple(entries))


def test_ingest_counts(tmp_path):
    write_pngs(tmp_path, {"benign": 100, "malignant": 150}, size=4)
    m = ingest(tmp_path, "d1")
    assert m.class_counts == {ClassLabel.NORMAL: 0, ClassLabel.BENIGN: 100, ClassLabel.MALIGNANT: 150}
    assert all(e.sample_id.startswith("d1:") for e in m.entries)


def test_ingest_empty_root(tmp_path):
    with pytest.raises(DatasetError, match="no samples"):
        ingest(tmp_path, "empty")


def test_ingest_one_per_class(tmp_path):
    write_pngs(tmp_path, {"normal": 1, "benign": 1, "malignant": 1})
    m = ingest(tmp_path, "t")
    assert len(m) == 3
    assert set(m.class_counts.values()) == {1}


def test_ingest_skips_masks_and_unreadable(tmp_path):
    write_pngs(tmp_path, {"benign": 3}, masks=True)
    (tmp_path / "benign" / "broken.png").write_bytes(b"not a png")
    m = ingest(tmp_path, "t")
    assert len(m) == 3
    assert len(m.skipped) == 1 and m.skipped[0].endswith("broken.png")


def test_ingest_unknown_class_dir(tmp_path):
    write_pngs(tmp_path, {"benign": 1, "tumour": 1})
    with pytest.raises(DatasetError, match="tumour"):
        ingest(tmp_path, "t")


def test_ingest_is_deterministic(tmp_path):
    write_pngs(tmp_path, {"benign": 5, "normal": 4})
    assert ingest(tmp_path, "t").to_csv() == ingest(tmp_path, "t", workers=1).to_csv()


def test_merge_table_totals():
    d1 = fake_manifest({ClassLabel.BENIGN: 100, ClassLabel.MALIGNANT: 150}, "d1")
    d2 = fake_manifest({ClassLabel.NORMAL: 133, ClassLabel.BENIGN: 437, ClassLabel.MALIGNANT: 210}, "d2")
    m = merge(d1, d2)
    assert len(m) == 1030
    assert m.class_counts == {ClassLabel.NORMAL: 133, ClassLabel.BENIGN: 537, ClassLabel.MALIGNANT: 360}
    rows = summary_table(m)
    assert rows[-1] == ["Total", "133", "537", "360", "1030"]
    assert rows[1] == ["d1", "-", "100", "150", "250"]


def test_merge_identity_and_small():
    m = fake_manifest({ClassLabel.BENIGN: 3})
    assert merge(m, DatasetManifest(())).entries == m.entries
    a = fake_manifest({ClassLabel.BENIGN: 1}, "a")
    b = fake_manifest({ClassLabel.BENIGN: 1}, "b")
    assert len(merge(a, b)) == 2
    with pytest.raises(DatasetError):
        merge(a, a)


def test_manifest_csv_roundtrip(tmp_path):
    m = fake_manifest({ClassLabel.NORMAL: 2, ClassLabel.MALIGNANT: 3})
    m.save(tmp_path / "m.csv")
    assert DatasetManifest.load(tmp_path / "m.csv").entries == m.entries


def test_folds_n10_k5():
    m = fake_manifest({ClassLabel.BENIGN: 10})
    plan = make_folds(m, 5, seed=1)
    assert plan.fold_sizes() == [2] * 5
    assert sorted(sum((plan.test_ids(f) for f in range(5)), [])) == sorted(e.sample_id for e in m.entries)


def test_folds_table_total():
    m = fake_manifest({ClassLabel.NORMAL: 133, ClassLabel.BENIGN: 537, ClassLabel.MALIGNANT: 360})
    assert make_folds(m, 5, 0).fold_sizes() == [206] * 5


def test_folds_deterministic_and_json(tmp_path):
    m = fake_manifest({ClassLabel.NORMAL: 7, ClassLabel.BENIGN: 9})
    a, b = make_folds(m, 3, 42), make_folds(m, 3, 42)
    assert a.to_json() == b.to_json()
    a.save(tmp_path / "f.json")
    assert FoldPlan.load(tmp_path / "f.json") == a
    assert make_folds(m, 3, 43).assignment != a.assignment


def test_folds_small_class_error():
    m = fake_manifest({ClassLabel.NORMAL: 10, ClassLabel.MALIGNANT: 2})
    with pytest.raises(DatasetError, match="malignant"):
        make_folds(m, 5, 0)


@settings(max_examples=60)
@given(
    st.integers(0, 40), st.integers(0, 40), st.integers(0, 40),
    st.integers(2, 10), st.integers(0, 2**32 - 1), st.booleans(),
)
def test_partition_and_balance(n0, n1, n2, k, seed, stratified):
    counts = {ClassLabel.NORMAL: n0, ClassLabel.BENIGN: n1, ClassLabel.MALIGNANT: n2}
    m = fake_manifest(counts)
    if len(m) < k or (stratified and any(0 < n < k for n in counts.values())):
        with pytest.raises(DatasetError):
            make_folds(m, k, seed, stratified)
        return
    plan = make_folds(m, k, seed, stratified)
    assert set(plan.assignment) == {e.sample_id for e in m.entries}
    assert all(0 <= f < k for f in plan.assignment.values())
    sizes = plan.fold_sizes()
    assert max(sizes) - min(sizes) <= 1
    if stratified:
        for c in ClassLabel:
            per = Counter(plan.assignment[e.sample_id] for e in m.entries if e.label == c)
            cnt = [per.get(f, 0) for f in range(k)]
            assert max(cnt) - min(cnt) <= 1


def _images(n):
    return [LabeledImage(np.full((2, 2, 1), i / n), ClassLabel.BENIGN, f"x:{i}") for i in range(n)]


def test_split_sizes_and_disjoint():
    imgs = _images(10)
    m = DatasetManifest(tuple(ManifestEntry(im.sample_id, "", im.label, "x") for im in imgs))
    plan = make_folds(m, 5, 0)
    for f in range(5):
        train, test = split_images(imgs, plan, f)
        assert (len(train), len(test)) == (8, 2)
        assert not {i.sample_id for i in train} & {i.sample_id for i in test}


def test_load_split_from_disk(tmp_path):
    write_pngs(tmp_path, {"normal": 5, "benign": 5}, size=6)
    m = ingest(tmp_path, "t")
    plan = make_folds(m, 5, 0)
    train, test = load_split(m, plan, 0, size=(4, 4), channels=3)
    assert (len(train), len(test)) == (8, 2)
    assert train[0].shape == (4, 4, 3)


def test_decode_pgm_value(tmp_path):
    px = np.zeros((3, 3), np.uint8)
    px[1, 2] = 128
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n3 3\n255\n" + px.tobytes())
    img = decode(path)
    assert img.shape == (3, 3, 1)
    assert img.pixels[1, 2, 0] == 128 / 255


def test_decode_16bit_png(tmp_path):
    px = np.array([[0, 65535], [1000, 30000]], dtype=np.uint16)
    Image.fromarray(px).save(tmp_path / "w.png")
    img = decode(tmp_path / "w.png")
    assert img.pixels[0, 1, 0] == 1.0
    assert img.pixels[1, 0, 0] == pytest.approx(1000 / 65535)


def test_decode_failure(tmp_path):
    (tmp_path / "x.png").write_bytes(b"junk")
    with pytest.raises(DatasetError):
        decode(tmp_path / "x.png")


def test_resize_identity_and_average():
    img = LabeledImage(np.random.default_rng(0).random((5, 7, 1)), ClassLabel.NORMAL, "a")
    assert np.array_equal(resize(img, 5, 7).pixels, img.pixels)
    two = LabeledImage(np.array([[0.0, 1.0], [0.0, 1.0]])[:, :, None], ClassLabel.NORMAL, "b")
    assert resize(two, 1, 1).pixels[0, 0, 0] == 0.5


def test_resize_channel_rules():
    img = LabeledImage(np.random.default_rng(1).random((4, 4, 1)), ClassLabel.NORMAL, "a")
    rgb = resize(img, 4, 4, 3).pixels
    assert rgb.shape == (4, 4, 3)
    assert np.array_equal(rgb[:, :, 0], rgb[:, :, 2])
    back = resize(LabeledImage(rgb, ClassLabel.NORMAL, "a"), 4, 4, 1).pixels
    assert np.allclose(back, img.pixels)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 20), st.integers(1, 20), st.integers(0, 1000))
def test_resize_range(h, w, th, tw, seed):
    px = np.random.default_rng(seed).random((h, w, 1))
    out = resize(LabeledImage(px, ClassLabel.NORMAL, "r"), th, tw).pixels
    assert out.shape == (th, tw, 1)
    assert np.isfinite(out).all() and out.min() >= 0.0 and out.max() <= 1.0
