"""
데이터셋: MNIST IDX 로더 (28→32 영 패딩, [0,1] 스케일), cosine 회귀 데이터, 배치 반복자
"""

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np

from shared.errors import BadMagic, CountMismatch, DataNotFound, TruncatedFile

IMAGE_MAGIC = 0x00000803  # 2051
LABEL_MAGIC = 0x00000801  # 2049
PAD = 2

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Dataset:
    """
    inputs: (count, C, H, W) 또는 (count, dim)
    targets: 라벨 (count,) int 또는 회귀 값 (count, dim)
    """

    inputs: np.ndarray
    targets: np.ndarray
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise CountMismatch(f"입력 {len(self.inputs)}개 vs 타깃 {len(self.targets)}개")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.inputs.shape[1:])


# ─── IDX ────────────────────────────────────────────────────

def _open(path: PathLike):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path: PathLike, magic: int) -> np.ndarray:
    """
    IDX (big-endian, unsigned byte) 파일 → uint8 배열

    Raises:
        BadMagic: 매직 넘버 불일치
        TruncatedFile: 헤더 또는 payload 가 선언된 길이보다 짧음
    """
    with _open(path) as f:
        raw = f.read()

    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: 매직 넘버를 읽을 수 없습니다 ({len(raw)} bytes)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{path}: 매직 넘버 0x{found:08x} (기대값 0x{magic:08x})")
    if len(raw) < header:
        raise TruncatedFile(f"{path}: 헤더가 잘렸습니다 ({len(raw)} < {header} bytes)")

    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFile(f"{path}: payload {len(raw) - header} bytes < 선언 {size} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path: PathLike, array: np.ndarray) -> None:
    """uint8 배열 → IDX (이미지 3차원 / 라벨 1차원)"""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def load_mnist_idx(images_path: PathLike, labels_path: PathLike, pad: int = PAD) -> Dataset:
    """
    Returns:
        inputs (count, 1, 28+2·pad, 28+2·pad) ∈ [0, 1], targets (count,) int64

    Raises:
        BadMagic, TruncatedFile, CountMismatch
    """
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"이미지 {images.shape[0]}개 vs 라벨 {labels.shape[0]}개")

    x = images.astype(np.float64) / 255.0
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    return Dataset(x[:, None], labels.astype(np.int64), {"scale": "1/255", "pad": str(pad)})


def find_mnist(data_dir: PathLike, split: str) -> Tuple[Path, Path]:
    """
    Raises:
        DataNotFound: data_dir 에 해당 split 의 IDX 파일(.gz 포함)이 없음
    """
    data_dir = Path(data_dir)
    found = []
    for stem in MNIST_FILES[split]:
        candidates = [data_dir / stem, data_dir / f"{stem}.gz",
                      data_dir / stem.replace("-idx", ".idx"), data_dir / f"{stem.replace('-idx', '.idx')}.gz"]
        path = next((p for p in candidates if p.exists()), None)
        if path is None:
            raise DataNotFound(f"{data_dir}에 {stem} 파일이 없습니다")
        found.append(path)
    return found[0], found[1]


def load_mnist(data_dir: PathLike, split: str = "train", limit: Optional[int] = None) -> Dataset:
    ds = load_mnist_idx(*find_mnist(data_dir, split))
    return subset(ds, limit) if limit else ds


# ─── 합성 데이터 ─────────────────────────────────────────────

def cosine_dataset(n: int, seed: int = 0) -> Dataset:
    """x ~ U[−π/2, π/2], y = cos(x), 둘 다 (n, 1)"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-math.pi / 2, math.pi / 2, (max(n, 1), 1))
    return Dataset(x, np.cos(x), {"task": "cosine"})


def cosine_grid(n: int) -> np.ndarray:
    """예측 곡선용 등간격 입력 (n, 1)"""
    return np.linspace(-math.pi / 2, math.pi / 2, n)[:, None]


# ─── 배치 ───────────────────────────────────────────────────

def batches(ds: Dataset, batch_size: int, seed: Optional[int] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    seed 가 주어지면 Fisher–Yates 셔플 순서로, 마지막 부분 배치 포함.
    """
    n = len(ds)
    order = np.arange(n)
    if seed is not None:
        rng = np.random.default_rng(seed)
        for i in range(n - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            order[i], order[j] = order[j], order[i]
    size = max(int(batch_size), 1)
    for start in range(0, n, size):
        idx = order[start:start + size]
        yield ds.inputs[idx], ds.targets[idx]


def subset(ds: Dataset, n: int, seed: Optional[int] = None) -> Dataset:
    """앞에서 n 개 (seed 가 있으면 무작위 n 개)"""
    n = min(int(n), len(ds))
    if seed is None:
        idx = np.arange(n)
    else:
        idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:n])
    return Dataset(ds.inputs[idx], ds.targets[idx], dict(ds.meta))
