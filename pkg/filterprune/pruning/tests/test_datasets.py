import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from ..datasets import (Dataset, balanced_subset, load_cifar10, load_dataset, load_mnist, parse_dataset_spec,
                        read_idx, split_validation)
from ..exceptions import FormatError, InsufficientDataError, ShapeError
from .factories import idx_bytes, synthetic_mnist, toy_dataset, write_cifar, write_mnist


class IdxTestCase(SimpleTestCase):
    """
    TestCase for MNIST IDX parsing.

    Checks plain and gzip files, pixel scaling and the header checks.
    """

    def setUp(self):
        tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(tmpdir.cleanup)
        self.directory = Path(tmpdir.name)
        self.images = np.zeros((3, 4, 5), dtype=np.uint8)
        self.images[0, 0, 0] = 0xFF
        self.images[1, 2, 3] = 51
        self.labels = np.array([5, 0, 9], dtype=np.uint8)

    def test_read_idx(self):
        path = self.directory / 'labels'
        path.write_bytes(idx_bytes(0x00000801, self.labels))
        magic, data = read_idx(path)
        self.assertEqual(magic, 0x801)
        np.testing.assert_array_equal(data, self.labels)

    def test_load_mnist(self):
        for compress in (False, True):
            with self.subTest(compress=compress):
                images_path, labels_path = write_mnist(self.directory / str(compress), self.images, self.labels,
                                                       compress=compress)
                dataset = load_mnist(images_path, labels_path)
                self.assertEqual(dataset.images.shape, (3, 4, 5, 1))
                self.assertEqual(dataset.images[0, 0, 0, 0], 1.0)
                self.assertEqual(dataset.images[0, 1, 1, 0], 0.0)
                self.assertAlmostEqual(float(dataset.images[1, 2, 3, 0]), 0.2, places=6)
                np.testing.assert_array_equal(dataset.labels, [5, 0, 9])
                self.assertEqual(dataset.class_count, 10)

    def test_loading_is_pure(self):
        paths = write_mnist(self.directory, self.images, self.labels)
        first, second = load_mnist(*paths), load_mnist(*paths)
        np.testing.assert_array_equal(first.images, second.images)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_wrong_magic(self):
        images_path, labels_path = write_mnist(self.directory, self.images, self.labels)
        with self.assertRaises(FormatError):
            load_mnist(labels_path, labels_path)
        images_path.write_bytes(b'\x00\x00\x0b\x03' + images_path.read_bytes()[4:])
        with self.assertRaises(FormatError):
            load_mnist(images_path, labels_path)

    def test_count_mismatch(self):
        images_path, labels_path = write_mnist(self.directory, self.images, self.labels[:2])
        with self.assertRaisesMessage(FormatError, '3 images'):
            load_mnist(images_path, labels_path)

    def test_truncated_payload(self):
        path = self.directory / 'images'
        path.write_bytes(idx_bytes(0x00000803, self.images)[:-1])
        with self.assertRaises(FormatError):
            read_idx(path)


class CifarTestCase(SimpleTestCase):

    def setUp(self):
        tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(tmpdir.cleanup)
        self.directory = Path(tmpdir.name)

    def test_channels_last_layout(self):
        """
        Test Case:
            byte 1 + c * 1024 + r * 32 + w of a record is pixel (r, w) of channel c
        """

        path, records = write_cifar(self.directory / 'data_batch_1.bin', [3, 7])
        dataset = load_cifar10([path])
        self.assertEqual(dataset.images.shape, (2, 32, 32, 3))
        np.testing.assert_array_equal(dataset.labels, [3, 7])
        for channel, row, col in ((0, 0, 0), (1, 5, 17), (2, 31, 31)):
            expected = records[1, 1 + channel * 1024 + row * 32 + col] / 255
            self.assertAlmostEqual(float(dataset.images[1, row, col, channel]), expected, places=6)

    def test_bad_length(self):
        path = self.directory / 'data_batch_1.bin'
        path.write_bytes(b'\x00' * 3072)
        with self.assertRaises(FormatError):
            load_cifar10([path])

    def test_label_out_of_range(self):
        path, _ = write_cifar(self.directory / 'data_batch_1.bin', [10])
        with self.assertRaises(FormatError):
            load_cifar10([path])

    def test_load_dataset_splits(self):
        write_cifar(self.directory / 'data_batch_1.bin', [0, 1, 2])
        write_cifar(self.directory / 'data_batch_2.bin', [3, 4], seed=1)
        write_cifar(self.directory / 'test_batch.bin', [5], seed=2)
        self.assertEqual(len(load_dataset(f"cifar10:{self.directory}", 'train')), 5)
        self.assertEqual(len(load_dataset(f"cifar10:{self.directory}", 'test')), 1)


class SubsetTestCase(SimpleTestCase):
    """Class-balanced subsets and validation splits."""

    def test_one_per_class(self):
        dataset = toy_dataset(count=30, classes=3)
        subset = balanced_subset(dataset, 1, seed=4)
        self.assertEqual(len(subset), 3)
        np.testing.assert_array_equal(np.sort(subset.labels), [0, 1, 2])

    def test_full_class_is_a_permutation(self):
        dataset = toy_dataset(count=30, classes=3)
        subset = balanced_subset(dataset, 10)
        np.testing.assert_array_equal(subset.labels, dataset.labels)
        np.testing.assert_array_equal(subset.images, dataset.images)

    def test_same_seed_same_selection(self):
        dataset = toy_dataset(count=60, classes=3)
        first, second = balanced_subset(dataset, 5, seed=9), balanced_subset(dataset, 5, seed=9)
        np.testing.assert_array_equal(first.images, second.images)
        np.testing.assert_array_equal(first.label_histogram(), [5, 5, 5])
        other = balanced_subset(dataset, 5, seed=10)
        self.assertFalse(np.array_equal(first.images, other.images))

    def test_starved_class(self):
        dataset = Dataset(images=np.zeros((5, 2, 2, 1)), labels=[0, 0, 0, 1, 1], class_count=3)
        with self.assertRaisesMessage(InsufficientDataError, 'class 1'):
            balanced_subset(dataset, 3)
        with self.assertRaisesMessage(InsufficientDataError, 'class 2'):
            balanced_subset(dataset, 1)

    def test_split_validation(self):
        dataset = toy_dataset(count=50)
        train, validation = split_validation(dataset, 0.2, seed=3)
        self.assertEqual((len(train), len(validation)), (40, 10))
        combined = np.concatenate([train.images, validation.images]).reshape(50, -1)
        self.assertEqual(len({row.tobytes() for row in combined}), 50)
        again = split_validation(dataset, 0.2, seed=3)[1]
        np.testing.assert_array_equal(again.labels, validation.labels)
        with self.assertRaises(ValueError):
            split_validation(dataset, 1.0)

    def test_dataset_checks(self):
        with self.assertRaises(ShapeError):
            Dataset(images=np.zeros((2, 3, 3)), labels=[0, 1])
        with self.assertRaises(ShapeError):
            Dataset(images=np.zeros((2, 3, 3, 1)), labels=[0])
        with self.assertRaises(ShapeError):
            Dataset(images=np.zeros((1, 3, 3, 1)), labels=[4], class_count=3)

    def test_batches(self):
        dataset = toy_dataset(count=10)
        sizes = [len(batch) for batch in dataset.batches(4)]
        self.assertEqual(sizes, [4, 4, 2])
        order = np.arange(10)[::-1]
        first = next(dataset.batches(3, order))
        np.testing.assert_array_equal(first.labels, dataset.labels[[9, 8, 7]])


class DatasetSpecTestCase(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(parse_dataset_spec('mnist:/data/x'), ('mnist', Path('/data/x')))
        with self.assertRaises(ValueError):
            parse_dataset_spec('imagenet:/data')

    @override_settings(PRUNING={'DATA_ROOT': '/srv/datasets'})
    def test_default_directory(self):
        name, directory = parse_dataset_spec('CIFAR10')
        self.assertEqual(name, 'cifar10')
        self.assertTrue(str(directory).endswith('cifar10'))

    def test_load_mnist_splits(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            synthetic_mnist(tmpdir, per_class=6, side=8)
            train = load_dataset(f"mnist:{tmpdir}", 'train')
            default = load_dataset(f"mnist:{tmpdir}")
            self.assertEqual(train.images.shape, (60, 8, 8, 1))
            self.assertEqual(len(default), 60)
            self.assertEqual(len(load_dataset(f"mnist:{tmpdir}", 'test')), 20)
            with self.assertRaises(ValueError):
                load_dataset(f"mnist:{tmpdir}", 'validation')

    def test_missing_files(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            with self.assertRaises(FileNotFoundError):
                load_dataset(f"mnist:{tmpdir}")
            with self.assertRaises(FileNotFoundError):
                load_dataset(f"cifar10:{tmpdir}", 'test')
