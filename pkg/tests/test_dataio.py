"""Tests for image decoding, splitting, synthetic data and batching."""

from collections import Counter

import numpy as np
import pytest

from app.errors import ConfigError, InvalidArgumentError, InvalidDataError
from app.services.dataio import (
    ImageRecord,
    batches,
    load_dataset,
    load_directory,
    parse_dataset_spec,
    read_pgm,
    read_ppm,
    read_tensor,
    resize_bilinear,
    split,
    synth_generate,
    write_directory,
    write_tensor,
)


def ppm_bytes(pixels: np.ndarray, maxval: int = 255) -> bytes:
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n{maxval}\n".encode() + pixels.astype(np.uint8).tobytes()


def make_class_dirs(root, files_per_class=2):
    for label in ("0", "1"):
        (root / label).mkdir(parents=True)
        for i in range(files_per_class):
            (root / label / f"{i}.ppm").write_bytes(ppm_bytes(np.full((2, 2, 3), 255)))


def records(n):
    return [ImageRecord(pixels=np.zeros((2, 2, 3), dtype=np.float32), label=i % 2, source=str(i)) for i in range(n)]


class TestDecoders:
    """Test suite for the PPM, PGM and raw tensor decoders."""

    def test_ppm(self):
        """Test an 8-bit colour image with a header comment."""
        data = b"P6\n# made by hand\n2 1\n255\n" + bytes([255, 0, 0, 0, 51, 255])
        pixels = read_ppm(data)

        assert pixels.shape == (1, 2, 3)
        np.testing.assert_allclose(pixels[0, 1], [0.0, 0.2, 1.0])

    def test_pgm_16_bit(self):
        """Test that 16-bit grey promotes to three channels scaled by maxval."""
        data = b"P5 2 1 1000\n" + np.array([1000, 250], dtype=">u2").tobytes()
        pixels = read_pgm(data)

        assert pixels.shape == (1, 2, 3)
        np.testing.assert_allclose(pixels[0, :, 0], [1.0, 0.25])
        np.testing.assert_array_equal(pixels[..., 0], pixels[..., 2])

    def test_tensor(self, tmp_path):
        """Test the raw tensor format through its writer."""
        pixels = np.random.default_rng(0).random((3, 4, 3)).astype(np.float32)
        write_tensor(tmp_path / "x.tensor", pixels)

        np.testing.assert_array_equal(read_tensor((tmp_path / "x.tensor").read_bytes()), pixels)

    def test_truncated_raster(self):
        """Test that a short raster is invalid data."""
        with pytest.raises(InvalidDataError):
            read_ppm(b"P6\n4 4\n255\n" + bytes(10))

    def test_wrong_magic(self):
        """Test that a PGM is not accepted as a PPM."""
        with pytest.raises(InvalidDataError):
            read_ppm(b"P5\n1 1\n255\n\x00")

    def test_tensor_out_of_range(self):
        """Test that tensor values above 1 are rejected."""
        data = b"1 1 1\n" + np.array([2.0], dtype="<f4").tobytes()

        with pytest.raises(InvalidDataError):
            read_tensor(data)


class TestResize:
    """Test suite for bilinear resizing."""

    def test_constant_image_exact(self):
        """Test that a constant image stays constant at any size."""
        out = resize_bilinear(np.full((3, 5, 3), 0.37, dtype=np.float32), (7, 2))

        assert out.shape == (7, 2, 3)
        np.testing.assert_array_equal(out, np.float32(0.37))

    def test_values_stay_in_range(self):
        """Test that interpolation never leaves [0, 1]."""
        pixels = np.random.default_rng(1).random((5, 5, 3)).astype(np.float32)
        out = resize_bilinear(pixels, (13, 9))

        assert out.min() >= 0.0 and out.max() <= 1.0


class TestLoadDirectory:
    """Test suite for directory loading."""

    def test_white_ppm_resized(self, tmp_path):
        """Test that a white 2x2 PPM resized to 4x4 is all ones."""
        make_class_dirs(tmp_path)
        loaded = load_directory(tmp_path, (4, 4))

        assert len(loaded) == 4
        assert [r.label for r in loaded] == [0, 0, 1, 1]
        for record in loaded:
            assert record.pixels.shape == (4, 4, 3)
            np.testing.assert_array_equal(record.pixels, 1.0)

    def test_load_twice_identical(self, tmp_path):
        """Test sorted, deterministic ordering."""
        write_directory(synth_generate(12, (8, 8), seed=4), tmp_path)
        first = load_directory(tmp_path, (8, 8))
        second = load_directory(tmp_path, (8, 8))

        assert [r.source for r in first] == [r.source for r in second]
        assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(first, second))

    def test_corrupt_file_reported(self, tmp_path):
        """Test that a corrupt file fails the load and is named."""
        make_class_dirs(tmp_path)
        (tmp_path / "1" / "bad.ppm").write_bytes(b"P6\n9 9\n255\n\x00")

        with pytest.raises(InvalidDataError, match="bad.ppm"):
            load_directory(tmp_path, (4, 4))

    def test_empty_class(self, tmp_path):
        """Test that a class directory without images is invalid data."""
        make_class_dirs(tmp_path)
        for file in (tmp_path / "1").iterdir():
            file.unlink()

        with pytest.raises(InvalidDataError):
            load_directory(tmp_path, (4, 4))

    def test_write_directory_roundtrip(self, tmp_path):
        """Test that generated data reloads with its labels and 8-bit pixels."""
        generated = synth_generate(10, (16, 16), seed=5)
        write_directory(generated, tmp_path)
        loaded = load_directory(tmp_path, (16, 16))

        assert Counter(r.label for r in loaded) == Counter(r.label for r in generated)
        originals = [r for r in generated if r.label == 0] + [r for r in generated if r.label == 1]
        for a, b in zip(originals, loaded):
            np.testing.assert_allclose(a.pixels, b.pixels, atol=0.5 / 255 + 1e-6)


class TestSplit:
    """Test suite for the seeded train/validation split."""

    def test_loader_sizes(self):
        """Test that 487 records split to 390/97."""
        dataset = split(records(487), 0.8, seed=0)

        assert (len(dataset.train), len(dataset.val)) == (390, 97)

    def test_size_independent_of_seed(self):
        """Test that seeds change membership but not sizes."""
        a = split(records(10), 0.8, seed=1)
        b = split(records(10), 0.8, seed=2)

        assert (len(a.train), len(a.val)) == (len(b.train), len(b.val)) == (8, 2)
        assert [r.source for r in a.train] != [r.source for r in b.train]

    def test_same_seed_same_membership(self):
        """Test determinism of the shuffle."""
        assert [r.source for r in split(records(30), 0.8, 3).val] == [r.source for r in split(records(30), 0.8, 3).val]

    def test_partition(self):
        """Test that train and val cover the input exactly once."""
        dataset = split(records(57), 0.8, seed=4)
        sources = [r.source for r in dataset.train + dataset.val]

        assert sorted(sources) == sorted(r.source for r in records(57))

    def test_too_few_records(self):
        """Test that a single record cannot be split."""
        with pytest.raises(InvalidDataError):
            split(records(1), 0.8, seed=0)


class TestSynthGenerate:
    """Test suite for the synthetic blob dataset."""

    def test_balanced(self):
        """Test the ceil/floor class balance."""
        assert Counter(r.label for r in synth_generate(200, (16, 16), seed=0)) == {0: 100, 1: 100}
        assert Counter(r.label for r in synth_generate(7, (8, 8), seed=0)) == {0: 4, 1: 3}

    def test_blob_brighter(self):
        """Test that class 1 has the higher mean intensity."""
        generated = synth_generate(100, (32, 32), seed=1)
        mean = {c: np.mean([r.pixels.mean() for r in generated if r.label == c]) for c in (0, 1)}

        assert mean[1] > mean[0]

    def test_deterministic(self):
        """Test that one seed gives one dataset."""
        a = synth_generate(10, (8, 8), seed=2)
        b = synth_generate(10, (8, 8), seed=2)

        assert all(np.array_equal(x.pixels, y.pixels) and x.label == y.label for x, y in zip(a, b))

    def test_pixels_in_range(self):
        """Test that every pixel lies in [0, 1]."""
        for record in synth_generate(20, (16, 16), seed=3):
            assert record.pixels.min() >= 0.0 and record.pixels.max() <= 1.0

    def test_too_small(self):
        """Test that images below 8x8 are refused."""
        with pytest.raises(InvalidArgumentError):
            synth_generate(4, (4, 4), seed=0)


class TestBatches:
    """Test suite for epoch batching."""

    def test_loader_batches(self):
        """Test that 390 records at 16 give 24 full batches and one of 6."""
        sizes = [len(y) for _, y in batches(records(390), 16, epoch_seed=0)]

        assert sizes == [16] * 24 + [6]

    def test_single_batch(self):
        """Test that a batch size above n yields one batch."""
        out = list(batches(records(5), 16, epoch_seed=0))

        assert len(out) == 1 and out[0][0].shape == (5, 3, 2, 2)

    def test_epoch_is_permutation(self):
        """Test that one epoch visits every record exactly once."""
        data = [ImageRecord(pixels=np.full((1, 1, 3), i / 100, dtype=np.float32), label=0) for i in range(37)]
        seen = np.concatenate([x[:, 0, 0, 0] for x, _ in batches(data, 8, epoch_seed=9)])

        np.testing.assert_allclose(np.sort(seen), np.arange(37, dtype=np.float32) / 100)


class TestDatasetSpec:
    """Test suite for --data values."""

    def test_synthetic(self):
        """Test the synthetic:<n>:<size> form."""
        assert parse_dataset_spec("synthetic:250:32") == (250, 32)

    def test_directory(self):
        """Test that a path is not a synthetic spec."""
        assert parse_dataset_spec("data/xrays") is None

    def test_malformed(self):
        """Test that a broken synthetic spec is an invalid argument."""
        with pytest.raises(InvalidArgumentError):
            parse_dataset_spec("synthetic:abc")

    def test_load_synthetic(self):
        """Test that a synthetic spec loads and splits."""
        dataset = load_dataset("synthetic:50:16", 16, 0.8, 0)

        assert (len(dataset.train), len(dataset.val)) == (40, 10)
        assert dataset.train[0].pixels.shape == (16, 16, 3)

    def test_synthetic_below_network_minimum(self):
        """Test that 8x8 synthetic images cannot feed the network."""
        with pytest.raises(ConfigError):
            load_dataset("synthetic:20:8", 16, 0.8, 0)

    def test_target_size_below_network_minimum(self, tmp_path):
        """Test that a directory resized below 16x16 is refused before loading."""
        with pytest.raises(ConfigError):
            load_dataset(str(tmp_path), 8, 0.8, 0)
