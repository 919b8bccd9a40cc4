"""
모델 파일 (.lpkn)

레이아웃:
    b"LPKN" | u32 version | u32 header_len | header (UTF-8 JSON) | payload (f8 little-endian) | u32 CRC32(payload)
모든 정수는 little-endian. 텐서는 header["tensors"] 순서대로 payload 에 연속 배치됩니다.

flavor:
    "phi"    학습 가능한 자유변수 φ (다시 파라미터화 가능)
    "kernel" 내보낸 표준형 네트워크 (추론 전용)
    "metric" (Q, R) 메트릭 Cholesky 인자 하나
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from shared import statespace
from shared.errors import BadMagic, ChecksumMismatch, ShapeMismatch, TruncatedFile, VersionMismatch
from shared.layers import LipNetwork
from shared.nn import Activation, ConvLayer, FcLayer, Flatten, PlainNetwork, PoolLayer, export_plain

MAGIC = b"LPKN"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_CRC = struct.Struct("<I")

PathLike = Union[str, Path]


@dataclass
class ModelFile:
    header: Dict[str, Any]
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def flavor(self) -> str:
        return self.header.get("flavor", "")


# ─── 직렬화 ─────────────────────────────────────────────────

def encode(mf: ModelFile) -> bytes:
    manifest: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name, arr in mf.tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(data)
        offset += len(data)

    header = dict(mf.header)
    header["tensors"] = manifest
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    payload = b"".join(chunks)
    return (_PREFIX.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + payload
            + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF))


def decode(raw: bytes) -> ModelFile:
    """
    Raises:
        BadMagic, VersionMismatch, TruncatedFile, ChecksumMismatch
    """
    if len(raw) < _PREFIX.size:
        raise TruncatedFile(f"모델 파일이 너무 짧습니다 ({len(raw)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"모델 파일 매직 {magic!r} (기대값 {MAGIC!r})")
    if version != VERSION:
        raise VersionMismatch(f"모델 파일 버전 {version} (지원: {VERSION})")

    start = _PREFIX.size + header_len
    if len(raw) < start:
        raise TruncatedFile(f"헤더가 잘렸습니다 ({len(raw)} < {start} bytes)")
    header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    manifest = header.pop("tensors", [])
    size = sum(int(np.prod(t["shape"], dtype=np.int64)) * 8 for t in manifest)
    if len(raw) < start + size + _CRC.size:
        raise TruncatedFile(f"payload가 잘렸습니다 ({len(raw) - start} < {size + _CRC.size} bytes)")

    payload = raw[start:start + size]
    (crc,) = _CRC.unpack_from(raw, start + size)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch(f"CRC32 불일치 (파일 {crc:08x})")

    tensors = {}
    for t in manifest:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=t["offset"])
        tensors[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
    return ModelFile(header, tensors)


def save_model(path: PathLike, mf: ModelFile) -> None:
    Path(path).write_bytes(encode(mf))


def load_model(path: PathLike) -> ModelFile:
    return decode(Path(path).read_bytes())


# ─── φ-형식 ─────────────────────────────────────────────────

def from_lipnet(net: LipNetwork, meta: Optional[Dict[str, Any]] = None) -> ModelFile:
    header = {
        "flavor": "phi",
        "arch": net.arch,
        "input_shape": list(net.input_shape),
        "rho": net.rho,
        "activation": net.activation,
        "padding": net.padding,
        "eps": net.eps,
        "meta": meta or {},
    }
    tensors = {"L0": net.L0, "LQ": net.LQ}
    tensors.update(net.params)
    return ModelFile(header, tensors)


def to_lipnet(mf: ModelFile) -> LipNetwork:
    if mf.flavor != "phi":
        raise ShapeMismatch(f"φ-형식 모델이 아닙니다 (flavor={mf.flavor})")
    h = mf.header
    params = {k: v for k, v in mf.tensors.items() if k not in ("L0", "LQ")}
    return LipNetwork(h["arch"], h["input_shape"], rho=h["rho"], L0=mf.tensors["L0"], LQ=mf.tensors["LQ"],
                      activation=h["activation"], eps=h["eps"], padding=h["padding"], params=params)


# ─── 커널 형식 ───────────────────────────────────────────────

def from_plain(net: PlainNetwork, meta: Optional[Dict[str, Any]] = None) -> ModelFile:
    layers: List[Dict[str, Any]] = []
    tensors: Dict[str, np.ndarray] = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvLayer):
            layers.append({"type": "conv", "stride": list(layer.kernel.stride), "padding": layer.padding})
            tensors[f"layer{i}.taps"] = layer.kernel.taps
            tensors[f"layer{i}.bias"] = layer.kernel.bias_or_zero()
        elif isinstance(layer, FcLayer):
            layers.append({"type": "fc"})
            tensors[f"layer{i}.W"] = layer.W
            tensors[f"layer{i}.b"] = layer.b
        elif isinstance(layer, Activation):
            layers.append({"type": "activation", "kind": layer.kind})
        elif isinstance(layer, PoolLayer):
            layers.append({"type": "pool", "kind": layer.kind,
                           "window": list(layer.window), "stride": list(layer.stride)})
        else:
            layers.append({"type": "flatten"})
    if net.L0 is not None:
        tensors["L0"] = net.L0
    if net.LQ is not None:
        tensors["LQ"] = net.LQ

    header = {
        "flavor": "kernel",
        "arch": net.arch,
        "input_shape": list(net.input_shape),
        "rho": net.rho,
        "layers": layers,
        "meta": meta or {},
    }
    if net.certificate is not None:
        header["certificate"] = dict(line.split("=", 1) for line in net.certificate.key_values().splitlines())
    return ModelFile(header, tensors)


def to_plain(mf: ModelFile) -> PlainNetwork:
    if mf.flavor != "kernel":
        raise ShapeMismatch(f"커널 형식 모델이 아닙니다 (flavor={mf.flavor})")
    h, t = mf.header, mf.tensors
    layers = []
    for i, spec in enumerate(h["layers"]):
        kind = spec["type"]
        if kind == "conv":
            kernel = statespace.Kernel2D(t[f"layer{i}.taps"], tuple(spec["stride"]), t[f"layer{i}.bias"])
            layers.append(ConvLayer(kernel, spec["padding"]))
        elif kind == "fc":
            layers.append(FcLayer(t[f"layer{i}.W"], t[f"layer{i}.b"]))
        elif kind == "activation":
            layers.append(Activation(spec["kind"]))
        elif kind == "pool":
            layers.append(PoolLayer(spec["kind"], tuple(spec["window"]), tuple(spec["stride"])))
        else:
            layers.append(Flatten())
    return PlainNetwork(tuple(layers), tuple(h["input_shape"]), rho=h["rho"],
                        L0=t.get("L0"), LQ=t.get("LQ"), arch=h["arch"])


# ─── 메트릭 인자 ─────────────────────────────────────────────

def save_metric(path: PathLike, L: np.ndarray) -> None:
    save_model(path, ModelFile({"flavor": "metric"}, {"L": np.asarray(L, dtype=float)}))


def load_metric(path: PathLike) -> np.ndarray:
    """
    Raises:
        ShapeMismatch: 정사각 행렬 텐서 L 이 없음
    """
    mf = load_model(path)
    L = mf.tensors.get("L")
    if L is None and mf.tensors:
        L = next(iter(mf.tensors.values()))
    if L is None or L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ShapeMismatch(f"{path}: 메트릭 인자는 정사각 행렬이어야 합니다")
    return L


def load_plain(path: PathLike) -> PlainNetwork:
    """φ-형식이면 내보내기(인증 포함), 커널 형식이면 그대로"""
    mf = load_model(path)
    if mf.flavor == "phi":
        return export_plain(to_lipnet(mf))
    return to_plain(mf)
