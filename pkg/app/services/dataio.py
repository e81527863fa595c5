"""Image loading, resizing, seeded splitting, synthetic data and mini-batching."""

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from app.errors import ConfigError, InvalidArgumentError, InvalidDataError

logger = logging.getLogger(__name__)

SUPPORTED_SUFFIXES = (".ppm", ".pgm", ".tensor")
CLASS_DIRS = ("0", "1")
# four 2x2 max-pools must still leave a 1x1 map
MIN_NETWORK_SIDE = 16

_HEADER_TOKEN = re.compile(rb"#[^\n]*\n?|\S+")


@dataclass(frozen=True)
class ImageRecord:
    pixels: np.ndarray  # H x W x 3, values in [0, 1]
    label: int
    source: str = ""


@dataclass(frozen=True)
class SplitDataset:
    train: list[ImageRecord] = field(default_factory=list)
    val: list[ImageRecord] = field(default_factory=list)
    split_seed: int = 0


def _read_netpbm(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    """Decode a binary P5/P6 file to H x W x channels floats in [0, 1]."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        match = _HEADER_TOKEN.search(data, pos)
        if match is None:
            raise InvalidDataError("truncated header")
        pos = match.end()
        if not match.group().startswith(b"#"):
            tokens.append(match.group())
    if tokens[0] != magic:
        raise InvalidDataError(f"expected magic {magic.decode()}, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise InvalidDataError("non-numeric header field") from e
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise InvalidDataError(f"invalid header {width}x{height} maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height * channels
    if len(data) - (pos + 1) < count * dtype.itemsize:
        raise InvalidDataError("truncated raster")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos + 1)
    return raster.reshape(height, width, channels).astype(np.float32) / maxval


def read_ppm(data: bytes) -> np.ndarray:
    return _read_netpbm(data, b"P6", 3)


def read_pgm(data: bytes) -> np.ndarray:
    """PGM is promoted to three identical channels."""
    return np.repeat(_read_netpbm(data, b"P5", 1), 3, axis=2)


def read_tensor(data: bytes) -> np.ndarray:
    """Raw tensor: text line `H W C`, then H*W*C little-endian float32 values in [0, 1]."""
    header, sep, payload = data.partition(b"\n")
    if not sep:
        raise InvalidDataError("missing tensor header line")
    try:
        h, w, c = (int(t) for t in header.split())
    except ValueError as e:
        raise InvalidDataError(f"bad tensor header {header!r}") from e
    if c not in (1, 3) or h <= 0 or w <= 0:
        raise InvalidDataError(f"unsupported tensor shape {h}x{w}x{c}")
    if len(payload) != h * w * c * 4:
        raise InvalidDataError("tensor payload size does not match header")
    values = np.frombuffer(payload, dtype="<f4")
    if not np.all((values >= 0) & (values <= 1)):
        raise InvalidDataError("tensor values outside [0, 1]")
    pixels = values.reshape(h, w, c).astype(np.float32)
    return np.repeat(pixels, 3, axis=2) if c == 1 else pixels


def write_ppm(path: Path, pixels: np.ndarray) -> None:
    h, w, _ = pixels.shape
    raster = np.clip(np.rint(pixels * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(raster.tobytes())


def write_tensor(path: Path, pixels: np.ndarray) -> None:
    h, w, c = pixels.shape
    with open(path, "wb") as f:
        f.write(f"{h} {w} {c}\n".encode("ascii"))
        f.write(pixels.astype("<f4").tobytes())


def resize_bilinear(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Half-pixel-centre bilinear resize of an H x W x C image; constant images stay exact."""
    out_h, out_w = size
    in_h, in_w = pixels.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return pixels.astype(np.float32, copy=True)

    def axis(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = np.clip((np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5, 0, in_n - 1)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, in_n - 1)
        return lo, hi, (coords - lo).astype(np.float32)

    y0, y1, ty = axis(out_h, in_h)
    x0, x1, tx = axis(out_w, in_w)
    rows = pixels[y0] + (pixels[y1] - pixels[y0]) * ty[:, None, None]
    out = rows[:, x0] + (rows[:, x1] - rows[:, x0]) * tx[None, :, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


_DECODERS = {".ppm": read_ppm, ".pgm": read_pgm, ".tensor": read_tensor}


def load_directory(path: Path, target_size: tuple[int, int]) -> list[ImageRecord]:
    """
    Load `<path>/0/*` and `<path>/1/*`, resized to target_size, in sorted filename order.

    Every unreadable file is collected; if any fail, one InvalidDataError lists them all.
    """
    path = Path(path)
    records: list[ImageRecord] = []
    failures: list[str] = []
    for label, name in enumerate(CLASS_DIRS):
        class_dir = path / name
        files = sorted(p for p in class_dir.glob("*") if p.suffix.lower() in SUPPORTED_SUFFIXES) if class_dir.is_dir() else []
        if not files:
            raise InvalidDataError(f"class directory {class_dir} is missing or has no supported images")
        for file in files:
            try:
                pixels = _DECODERS[file.suffix.lower()](file.read_bytes())
            except (OSError, InvalidDataError) as e:
                logger.warning(f"could not decode {file}: {e}")
                failures.append(f"{file}: {e}")
                continue
            records.append(ImageRecord(pixels=resize_bilinear(pixels, target_size), label=label, source=str(file)))
    if failures:
        raise InvalidDataError(f"{len(failures)} file(s) failed to load:\n" + "\n".join(failures))
    logger.info(f"loaded {len(records)} images from {path}")
    return records


def split(records: Sequence[ImageRecord], ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    """Seeded shuffle, then the first round(ratio * n) records (half away from zero) train."""
    n = len(records)
    if n < 2:
        raise InvalidDataError(f"need at least 2 records to split, got {n}")
    if not 0 < ratio < 1:
        raise InvalidArgumentError(f"split ratio must be in (0, 1), got {ratio}")
    n_train = min(max(math.floor(ratio * n + 0.5), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return SplitDataset(
        train=[records[i] for i in order[:n_train]],
        val=[records[i] for i in order[n_train:]],
        split_seed=seed,
    )


def synth_generate(n: int, size: tuple[int, int], seed: int) -> list[ImageRecord]:
    """
    Two-class toy radiographs: class 1 carries a bright elliptical blob over the noise
    both classes share. Class 0 gets ceil(n/2) images, class 1 floor(n/2).
    """
    h, w = size
    if n < 2:
        raise InvalidArgumentError("synthetic dataset needs n >= 2")
    if h < 8 or w < 8:
        raise InvalidArgumentError("synthetic images must be at least 8x8")
    rng = np.random.default_rng(seed)
    labels = np.array([0] * math.ceil(n / 2) + [1] * (n // 2))
    rng.shuffle(labels)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)

    records = []
    for i, label in enumerate(labels):
        base = rng.uniform(0.15, 0.3)
        image = base + rng.normal(0.0, 0.04, size=(h, w, 3)).astype(np.float32)
        if label == 1:
            cy, cx = rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w
            ry, rx = rng.uniform(h / 6, h / 3.5), rng.uniform(w / 6, w / 3.5)
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            image = image + rng.uniform(0.45, 0.6) * inside[:, :, None]
        records.append(ImageRecord(pixels=np.clip(image, 0.0, 1.0).astype(np.float32), label=int(label), source=f"synthetic:{i}"))
    return records


def write_directory(records: Sequence[ImageRecord], out_dir: Path) -> None:
    """Write records as PPM files in the `<root>/0`, `<root>/1` layout."""
    out_dir = Path(out_dir)
    for name in CLASS_DIRS:
        (out_dir / name).mkdir(parents=True, exist_ok=True)
    for i, record in enumerate(records):
        write_ppm(out_dir / CLASS_DIRS[record.label] / f"img_{i:05d}.ppm", record.pixels)


def batches(
    records: Sequence[ImageRecord], batch_size: int = 16, epoch_seed: int = 0
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffle by epoch_seed and yield (N x 3 x H x W float32, N labels) chunks."""
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be at least 1")
    order = np.random.default_rng(epoch_seed).permutation(len(records))
    for start in range(0, len(order), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        x = np.stack([r.pixels for r in chunk]).transpose(0, 3, 1, 2)
        y = np.array([r.label for r in chunk], dtype=np.int64)
        yield np.ascontiguousarray(x, dtype=np.float32), y


def parse_dataset_spec(spec: str) -> tuple[int, int] | None:
    """`synthetic:<n>:<size>` -> (n, size); anything else is a directory path."""
    if not spec.startswith("synthetic:"):
        return None
    parts = spec.split(":")
    if len(parts) != 3 or not parts[1].isdigit() or not parts[2].isdigit():
        raise InvalidArgumentError(f"expected synthetic:<n>:<size>, got {spec!r}")
    return int(parts[1]), int(parts[2])


def load_dataset(spec: str, image_size: int, ratio: float, split_seed: int) -> SplitDataset:
    """Resolve a --data value (directory or synthetic spec) to a split dataset."""
    synthetic = parse_dataset_spec(spec)
    side = synthetic[1] if synthetic is not None else image_size
    if side < MIN_NETWORK_SIDE:
        raise ConfigError(f"network input must be at least {MIN_NETWORK_SIDE}x{MIN_NETWORK_SIDE}, got {side}x{side}")
    if synthetic is not None:
        records = synth_generate(synthetic[0], (side, side), seed=split_seed)
    else:
        records = load_directory(Path(spec), (image_size, image_size))
    return split(records, ratio, split_seed)
