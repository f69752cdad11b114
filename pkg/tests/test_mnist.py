import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfinet.layers import init_network, parse_geometry
from rbfinet.mnist import (
    Dataset,
    IDXFormatError,
    batches,
    load_idx,
    load_mnist,
    write_idx_images,
    write_idx_labels,
)


def _write_pair(tmp_path, pixels, labels):
    ip, lp = tmp_path / "img", tmp_path / "lbl"
    write_idx_images(ip, pixels)
    write_idx_labels(lp, labels)
    return ip, lp


def test_round_trip(tmp_path, rng):
    pixels = rng.integers(0, 256, (17, 784), dtype=np.uint8)
    labels = rng.integers(0, 10, 17, dtype=np.uint8)
    ds = load_idx(*_write_pair(tmp_path, pixels, labels))
    assert np.array_equal(ds.images, pixels / 255.0)
    assert np.array_equal(ds.labels, labels)
    assert ds.images.dtype == np.float64


def test_all_255_is_one(tmp_path):
    ds = load_idx(*_write_pair(tmp_path, np.full((1, 784), 255, np.uint8), [7]))
    assert ds.images.shape == (1, 784) and np.all(ds.images == 1.0)


def test_header_layout_is_big_endian(tmp_path):
    ip, _ = _write_pair(tmp_path, np.zeros((3, 784), np.uint8), [0, 1, 2])
    assert ip.read_bytes()[:16] == struct.pack(">IIII", 0x803, 3, 28, 28)


@pytest.mark.parametrize("cut, field", [(7, "header"), (20, "pixels")])
def test_truncated_images(tmp_path, cut, field):
    ip, lp = _write_pair(tmp_path, np.zeros((2, 784), np.uint8), [0, 1])
    ip.write_bytes(ip.read_bytes()[:cut])
    with pytest.raises(IDXFormatError) as info:
        load_idx(ip, lp)
    assert info.value.field == field


def test_wrong_magic_and_count_mismatch(tmp_path):
    ip, lp = _write_pair(tmp_path, np.zeros((2, 784), np.uint8), [0, 1])
    with pytest.raises(IDXFormatError) as info:
        load_idx(lp, ip)
    assert info.value.field == "magic"
    write_idx_labels(lp, [0, 1, 2])
    with pytest.raises(IDXFormatError) as info:
        load_idx(ip, lp)
    assert info.value.field == "count"


def test_truncated_labels(tmp_path):
    ip, lp = _write_pair(tmp_path, np.zeros((2, 784), np.uint8), [0, 1])
    lp.write_bytes(lp.read_bytes()[:-1])
    with pytest.raises(IDXFormatError) as info:
        load_idx(ip, lp)
    assert info.value.field == "labels"


def test_out_of_range_label(tmp_path):
    ip, lp = _write_pair(tmp_path, np.zeros((1, 784), np.uint8), [11])
    with pytest.raises(IDXFormatError):
        load_idx(ip, lp)


def test_official_files(mnist_dir):
    train, test = load_mnist(mnist_dir, "train"), load_mnist(mnist_dir, "test")
    assert len(train) == 60000 and len(test) == 10000
    assert train.images.shape == (60000, 784)
    assert train.images.min() == 0.0 and train.images.max() == 1.0
    assert set(np.unique(test.labels)) == set(range(10))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 120), st.integers(1, 150), st.integers(0, 1000), st.integers(0, 50))
def test_batches_partition(n, batch_size, seed, epoch):
    data = Dataset(np.arange(n, dtype=float)[:, None].repeat(3, 1), np.arange(n) % 10)
    out = list(batches(data, batch_size, seed, epoch))
    idx = np.concatenate([x[:, 0] for x, _ in out]).astype(int)
    assert sorted(idx.tolist()) == list(range(n))
    assert all(len(y) == batch_size for _, y in out[:-1]) and 1 <= len(out[-1][1]) <= batch_size
    again = np.concatenate([x[:, 0] for x, _ in batches(data, batch_size, seed, epoch)])
    assert np.array_equal(idx, again)
    if batch_size >= n:
        assert len(out) == 1


def test_batches_change_with_epoch():
    data = Dataset(np.arange(50, dtype=float)[:, None], np.zeros(50, np.int64))
    a = next(batches(data, 50, 0, 0))[0]
    b = next(batches(data, 50, 0, 1))[0]
    assert not np.array_equal(a, b)
    with pytest.raises(ValueError):
        next(batches(data, 0, 0, 0))


def test_feature_permutation_harness(rng):
    data = Dataset(rng.uniform(0, 1, (6, 784)), rng.integers(0, 10, 6))
    perm = rng.permutation(784)
    net = init_network(parse_geometry("R(12,10|mixed,or)"), 0)
    ref = net.predict(data.images)
    first = net.layers[0]
    first.u.node.value[:] = first.u.value[perm]
    first.w.node.value[:] = first.w.value[perm]
    assert np.array_equal(net.predict(data.permute_features(perm).images), ref)
