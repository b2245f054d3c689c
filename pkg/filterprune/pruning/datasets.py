"""
Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches, deterministic
splits and class-balanced subsets.

Images are channels-last float tensors scaled by 1/255 to [0, 1].
"""

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conf import data_root, float_dtype
from .engine import Batch
from .exceptions import FormatError, InsufficientDataError, ShapeError

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_SIDE = 32
CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE

MNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}
CIFAR_TRAIN_FILES = tuple(f"data_batch_{number}.bin" for number in range(1, 6))
CIFAR_TEST_FILE = 'test_batch.bin'


@dataclass(eq=False)
class Dataset:
    """
    Labelled images.

    Attributes:
    - images: tensor (N, rows, cols, channels) with values in [0, 1]
    - labels: int64 array (N,)
    - class_count: number of classes (labels are below it)
    - name: free-form origin, used in log messages
    """

    images: np.ndarray
    labels: np.ndarray
    class_count: int = 10
    name: str = ''

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N, rows, cols, channels), got {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels must be in [0, {self.class_count})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(images=self.images[indices], labels=self.labels[indices],
                       class_count=self.class_count, name=name or self.name)

    def take(self, count):
        """The first ``count`` samples."""
        return self.subset(np.arange(min(count, len(self))))

    def batches(self, batch_size=256, order=None):
        """
        Iterate over ``Batch`` objects.

        Args:
            batch_size: samples per batch (the last batch may be smaller)
            order: optional sample permutation
        """

        if order is None:
            order = np.arange(len(self))
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            yield Batch(inputs=self.images[chunk], labels=self.labels[chunk])

    def label_histogram(self):
        return np.bincount(self.labels, minlength=self.class_count)


def _open(path):
    path = Path(path)
    if path.suffix == '.gz':
        return gzip.open(path, 'rb')
    return path.open('rb')


def read_idx(path):
    """
    Read an unsigned-byte IDX file.

    Returns:
        tuple: (magic, np.ndarray of uint8 with the header's dimensions)

    Raises:
        FormatError: not an unsigned-byte IDX file or wrong payload length
    """

    with _open(path) as stream:
        payload = stream.read()
    if len(payload) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack_from('>I', payload, 0)
    if magic >> 8 != 0x08:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = struct.Struct('>' + 'I' * (ndim + 1))
    if len(payload) < header.size:
        raise FormatError(f"{path}: IDX header truncated")
    dims = header.unpack_from(payload, 0)[1:]
    data = np.frombuffer(payload, dtype=np.uint8, offset=header.size)
    if data.size != int(np.prod(dims)):
        raise FormatError(f"{path}: header declares {dims} but holds {data.size} bytes")
    return magic, data.reshape(dims)


def _scale(pixels):
    dtype = float_dtype()
    return pixels.astype(dtype) / dtype.type(255)


def load_mnist(images_path, labels_path):
    """
    Load an MNIST image/label file pair (plain or gzip-compressed).

    Raises:
        FormatError: wrong magic numbers or differing sample counts
    """

    image_magic, images = read_idx(images_path)
    if image_magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{images_path}: expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{image_magic:08x}")
    label_magic, labels = read_idx(labels_path)
    if label_magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{labels_path}: expected label magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{label_magic:08x}")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images_path} holds {images.shape[0]} images but {labels_path} "
                          f"holds {labels.shape[0]} labels")
    class_count = max(10, int(labels.max()) + 1) if labels.size else 10
    dataset = Dataset(images=_scale(images)[..., None], labels=labels, class_count=class_count,
                      name=f"mnist:{Path(images_path).name}")
    logger.info("Loaded %d MNIST images from %s", len(dataset), images_path)
    return dataset


def load_cifar10(batch_paths):
    """
    Load CIFAR-10 binary batch files into one channels-last dataset.

    Raises:
        FormatError: a file length that is not a whole number of records
    """

    images, labels = [], []
    for path in batch_paths:
        payload = Path(path).read_bytes()
        if not payload or len(payload) % CIFAR_RECORD:
            raise FormatError(f"{path}: length {len(payload)} is not a multiple of {CIFAR_RECORD}")
        records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(records[:, 0])
        # planes are stored R, G, B, each 32x32 row-major
        images.append(records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1))
    if not images:
        raise FormatError("no CIFAR-10 batch files given")
    labels = np.concatenate(labels)
    if labels.max() >= 10:
        raise FormatError(f"CIFAR-10 label {int(labels.max())} out of range")
    dataset = Dataset(images=_scale(np.concatenate(images)), labels=labels, class_count=10,
                      name=f"cifar10:{Path(batch_paths[0]).parent}")
    logger.info("Loaded %d CIFAR-10 images from %d files", len(dataset), len(batch_paths))
    return dataset


def balanced_subset(dataset, per_class, seed=0):
    """
    Exactly ``per_class`` samples of every class, drawn with a seeded PCG64
    generator. Samples keep their original relative order.

    Raises:
        InsufficientDataError: a class has fewer than ``per_class`` samples
    """

    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = []
    for label in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == label)
        if members.size < per_class:
            raise InsufficientDataError(
                f"class {label} has {members.size} samples, {per_class} requested"
            )
        chosen.append(rng.permutation(members)[:per_class])
    indices = np.sort(np.concatenate(chosen))
    return dataset.subset(indices, name=f"{dataset.name}[{per_class}/class]")


def split_validation(dataset, fraction=0.1, seed=0):
    """
    Deterministic (train, validation) split.

    Args:
        dataset: data to split
        fraction: share of samples going to validation, in (0, 1)
        seed: PCG64 seed of the permutation

    Returns:
        tuple: (train Dataset, validation Dataset)
    """

    if not 0.0 < fraction < 1.0:
        raise ValueError(f"validation fraction must be in (0, 1), got {fraction}")
    if len(dataset) < 2:
        raise InsufficientDataError(f"cannot split {len(dataset)} samples")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(dataset))
    count = min(len(dataset) - 1, max(1, int(round(len(dataset) * fraction))))
    return (dataset.subset(np.sort(order[count:]), name=f"{dataset.name}[train]"),
            dataset.subset(np.sort(order[:count]), name=f"{dataset.name}[validation]"))


def _existing(directory, name):
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{directory / name} (or .gz) not found")


def parse_dataset_spec(spec):
    """
    Split ``"<name>[:<directory>]"`` into (name, directory Path).

    Without a directory the dataset lives under ``data_root()/<name>``.
    """

    name, _, directory = str(spec).partition(':')
    name = name.strip().lower()
    if name not in ('mnist', 'cifar10'):
        raise ValueError(f"unknown dataset {name!r}; use mnist:<dir> or cifar10:<dir>")
    return name, Path(directory) if directory else data_root() / name


def load_dataset(spec, split='train'):
    """
    Load the ``split`` ('train' or 'test') of a dataset spec such as
    ``mnist:/data/mnist`` or ``cifar10``.
    """

    if split not in ('train', 'test'):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    name, directory = parse_dataset_spec(spec)
    if name == 'mnist':
        images_name, labels_name = MNIST_FILES[split]
        return load_mnist(_existing(directory, images_name), _existing(directory, labels_name))
    if split == 'test':
        paths = [directory / CIFAR_TEST_FILE]
    else:
        paths = [directory / file_name for file_name in CIFAR_TRAIN_FILES if (directory / file_name).exists()]
    if not paths or not paths[0].exists():
        raise FileNotFoundError(f"no CIFAR-10 {split} batches in {directory}")
    return load_cifar10(paths)
