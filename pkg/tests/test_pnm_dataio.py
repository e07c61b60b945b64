"""PNM reader/writer contracts and a corpus of malformed files, plus the
dataset synthesis round trip."""

import json
import struct

import numpy as np
import pytest

from codedlens import dataio, pnm
from codedlens.errors import ConfigError, ParseError


# ---------------------------------------------------------------------------
# well-formed round trips


def test_write_read_round_trip_16bit(tmp_path):
    rng = np.random.default_rng(41)
    x = rng.random((9, 13))
    path = tmp_path / "a.pgm"
    pnm.write_pnm(path, x)
    y = pnm.read_pnm(path)
    assert y.shape == x.shape
    assert np.max(np.abs(x - y)) <= 1.0 / 65535 + 1e-12


def test_write_read_round_trip_8bit(tmp_path):
    rng = np.random.default_rng(42)
    x = rng.random((5, 7))
    path = tmp_path / "b.pgm"
    pnm.write_pnm(path, x, maxval=255)
    y = pnm.read_pnm(path)
    assert np.max(np.abs(x - y)) <= 1.0 / 255 + 1e-12


def test_color_round_trip(tmp_path):
    rng = np.random.default_rng(43)
    x = rng.random((4, 6, 3))
    path = tmp_path / "c.ppm"
    pnm.write_pnm(path, x)
    y = pnm.read_pnm(path)
    assert y.shape == (4, 6, 3)
    assert np.max(np.abs(x - y)) <= 1.0 / 65535 + 1e-12


def test_rounding_is_half_up(tmp_path):
    # 0.5/255 scales to exactly 0.5 levels -> rounds to 1, not 0
    path = tmp_path / "r.pgm"
    pnm.write_pnm(path, np.array([[0.5 / 255]]), maxval=255)
    with open(path, "rb") as fh:
        assert fh.read()[-1] == 1


def test_values_clip_to_unit_interval(tmp_path):
    path = tmp_path / "clip.pgm"
    pnm.write_pnm(path, np.array([[-0.5, 1.7]]), maxval=255)
    y = pnm.read_pnm(path)
    np.testing.assert_array_equal(y, [[0.0, 1.0]])


def test_comments_in_header(tmp_path):
    path = tmp_path / "comment.pgm"
    payload = bytes([0, 128, 255, 64])
    path.write_bytes(b"P5\n# a comment line\n2 2\n# another\n255\n" + payload)
    y = pnm.read_pnm(path)
    np.testing.assert_allclose(y, np.array(list(payload)).reshape(2, 2) / 255.0)


def test_sixteen_bit_is_big_endian(tmp_path):
    path = tmp_path / "be.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n" + struct.pack(">H", 65535))
    assert pnm.read_pnm(path)[0, 0] == 1.0


def test_write_rejects_bad_inputs(tmp_path):
    with pytest.raises(ParseError):
        pnm.write_pnm(tmp_path / "x.pgm", np.zeros((4, 4)), maxval=1023)
    with pytest.raises(ParseError):
        pnm.write_pnm(tmp_path / "x.pgm", np.zeros((4, 4, 2)))
    with pytest.raises(ParseError):
        pnm.write_pnm(tmp_path / "x.pgm", np.zeros(4))


# ---------------------------------------------------------------------------
# malformed-file corpus: each case is (name, bytes, offset the error must name)

GOOD_PAYLOAD = bytes(range(4))

MALFORMED = [
    ("empty", b"", 0),
    ("truncated-magic", b"P", 0),
    ("wrong-magic", b"P3\n2 2\n255\n" + GOOD_PAYLOAD, 0),
    ("not-pnm", b"GIF89a....", 0),
    ("header-eof", b"P5\n2 2", None),
    ("non-numeric-width", b"P5\nab 2\n255\n" + GOOD_PAYLOAD, 3),
    ("non-numeric-maxval", b"P5\n2 2\nmax\n" + GOOD_PAYLOAD, 7),
    ("negative-width", b"P5\n-2 2\n255\n" + GOOD_PAYLOAD, 3),
    ("zero-height", b"P5\n2 0\n255\n", 3),
    ("bad-maxval", b"P5\n2 2\n1024\n" + GOOD_PAYLOAD, 7),
    ("payload-short", b"P5\n2 2\n255\n" + GOOD_PAYLOAD[:3], 11),
    ("payload-long", b"P5\n2 2\n255\n" + GOOD_PAYLOAD + b"x", 11),
    ("missing-payload", b"P5\n2 2\n255", None),
    ("comment-swallows-header", b"P5\n# 2 2 255", None),
]


@pytest.mark.parametrize("name,blob,offset", MALFORMED, ids=[m[0] for m in MALFORMED])
def test_malformed_corpus(tmp_path, name, blob, offset):
    path = tmp_path / f"{name}.pgm"
    path.write_bytes(blob)
    with pytest.raises(ParseError) as exc:
        pnm.read_pnm(path)
    if offset is not None:
        assert exc.value.offset == offset, f"{name}: got offset {exc.value.offset}"
    else:
        assert exc.value.offset is not None


# ---------------------------------------------------------------------------
# dataset synthesis


def _small_manifest(root):
    return dataio.DatasetManifest(root=str(root), extents=(16, 16),
                                  counts={"train": 3, "val": 2, "test": 2})


def test_phantoms_are_bounded_and_deterministic():
    rng1 = np.random.default_rng(50)
    rng2 = np.random.default_rng(50)
    a = dataio.make_phantom(rng1, (32, 32))
    b = dataio.make_phantom(rng2, (32, 32))
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_piecewise_constant_phantom():
    x = dataio.piecewise_constant_phantom((32, 32), seed=1)
    assert x.shape == (32, 32)
    assert len(np.unique(x)) < 20  # genuinely piecewise constant


def test_generate_pairs_deterministic_and_split_disjoint():
    m = _small_manifest("/nonexistent-unused")
    a = dataio.generate_pairs(m, "train")
    b = dataio.generate_pairs(m, "train")
    assert len(a) == 3
    for (m1, o1), (m2, o2) in zip(a, b):
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(o1, o2)
    val = dataio.generate_pairs(m, "val")
    assert not np.array_equal(a[0][1], val[0][1])


def test_synthesize_and_load_round_trip(tmp_path):
    m = _small_manifest(tmp_path / "ds")
    dataio.synthesize_dataset(m)
    loaded = dataio.load_manifest(str(tmp_path / "ds"))
    assert loaded.extents == (16, 16)
    assert loaded.counts == {"train": 3, "val": 2, "test": 2}
    pairs = dataio.load_split(str(tmp_path / "ds"), "train")
    fresh = dataio.generate_pairs(m, "train")
    assert len(pairs) == 3
    for (pm, po), (fm, fo) in zip(pairs, fresh):
        # stored files quantize to 16-bit and clip measurements to [0,1]
        assert np.max(np.abs(po - fo)) <= 1.0 / 65535 + 1e-12
        assert np.max(np.abs(pm - np.clip(fm, 0, 1))) <= 1.0 / 65535 + 1e-12


def test_load_manifest_errors(tmp_path):
    with pytest.raises(ConfigError):
        dataio.load_manifest(str(tmp_path))
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps({"version": 99}))
    with pytest.raises(ConfigError):
        dataio.load_manifest(str(bad))
    with pytest.raises(ConfigError):
        dataio.load_split(str(tmp_path), "train")


def test_load_paired_directory(tmp_path):
    m = _small_manifest(tmp_path / "ds")
    dataio.synthesize_dataset(m)
    pairs = dataio.load_paired_directory(str(tmp_path / "ds" / "val"))
    assert len(pairs) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigError):
        dataio.load_paired_directory(str(empty))


def test_manifest_dict_round_trip():
    m = _small_manifest("/x")
    m2 = dataio.DatasetManifest.from_dict(m.to_dict())
    assert m2 == m
