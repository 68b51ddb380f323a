"""Dataset ingestion, edge-map output, and checkpoint persistence.

Manifests are tab-separated ``image_path<TAB>gt_path`` lines; relative
paths resolve against the manifest's directory.  Images are 8-bit PNGs
loaded to [0, 1] with no further preprocessing; ground truth is an 8-bit
single-channel PNG or PGM whose raw 0..255 values encode the class bands.

Checkpoints are a flat binary format: magic ``TINCKPT1``, a one-byte
variant tag, then one record per parameter (u32 name length, utf-8 name,
u32 rank, u32 dims, little-endian float32 data) and a trailing CRC32 of
everything before it.  Loading rebuilds the graph from the variant tag and
the serialized names, and verifies the parameter set matches exactly.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .loss import GroundTruth
from .model import EnrichmentSpec, NetworkGraph, build_tin1, build_tin2
from .tensor import Tensor

CHECKPOINT_MAGIC = b"TINCKPT1"
VARIANT_TAGS = {"tin1": 1, "tin2": 2}
TAG_VARIANTS = {v: k for k, v in VARIANT_TAGS.items()}


class DataError(ValueError):
    """Malformed manifest, image, ground truth, or checkpoint."""


@dataclass
class Manifest:
    entries: list[tuple[Path, Path]]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    seen = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise DataError(f"{path}:{lineno}: expected image_path<TAB>gt_path")
        image_path, gt_path = line.split("\t", 1)
        image_path, gt_path = image_path.strip(), gt_path.strip()
        if not image_path or not gt_path:
            raise DataError(f"{path}:{lineno}: empty path")
        if image_path in seen:
            raise DataError(f"{path}:{lineno}: duplicate image path {image_path!r}")
        seen.add(image_path)
        entries.append(((base / image_path), (base / gt_path)))
    return Manifest(entries)


def _open_8bit(path) -> Image.Image:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F", "RGBA", "LA", "P"):
        raise DataError(f"{path}: unsupported format/bit depth (mode {img.mode})")
    return img


def load_image(path) -> Tensor:
    """(1, 3, H, W) tensor scaled by 1/255; grayscale is replicated to RGB."""
    img = _open_8bit(path)
    if img.mode not in ("RGB", "L"):
        raise DataError(f"{path}: expected 8-bit RGB or grayscale, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.stack([arr] * 3)
    else:
        arr = arr.transpose(2, 0, 1)
    return Tensor(arr[None])


def load_gt(path) -> GroundTruth:
    img = _open_8bit(path)
    if img.mode != "L":
        raise DataError(f"{path}: ground truth must be single-channel 8-bit, got mode {img.mode}")
    return GroundTruth(np.asarray(img, dtype=np.int64))


def save_edge_map(edge_map: np.ndarray, path) -> None:
    """8-bit grayscale PNG, value = round(255 * p)."""
    m = np.asarray(edge_map, dtype=np.float64)
    if m.ndim != 2 or m.min() < 0 or m.max() > 1:
        raise ValueError("edge map must be 2-D with values in [0, 1]")
    Image.fromarray(np.rint(255.0 * m).astype(np.uint8), mode="L").save(path, format="PNG")


def save_image(image: np.ndarray, path) -> None:
    """(3, H, W) array in [0, 1] written as 8-bit RGB PNG."""
    arr = np.rint(255.0 * np.asarray(image)).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_gt(gt: GroundTruth, path) -> None:
    Image.fromarray(gt.values.astype(np.uint8), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(graph: NetworkGraph, path) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<B", VARIANT_TAGS[graph.variant])
    for name, tensor in graph.params.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        shape = tensor.data.shape
        blob += struct.pack("<I", len(shape))
        blob += struct.pack(f"<{len(shape)}I", *shape)
        blob += tensor.data.astype("<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(blob))


def _read_exact(view, offset, n, path):
    if offset + n > len(view):
        raise DataError(f"{path}: truncated checkpoint")
    return view[offset:offset + n], offset + n


def _parse_records(view, path):
    offset = 0
    records = []
    while offset < len(view):
        raw, offset = _read_exact(view, offset, 4, path)
        (name_len,) = struct.unpack("<I", raw)
        raw, offset = _read_exact(view, offset, name_len, path)
        name = raw.tobytes().decode("utf-8")
        raw, offset = _read_exact(view, offset, 4, path)
        (rank,) = struct.unpack("<I", raw)
        raw, offset = _read_exact(view, offset, 4 * rank, path)
        dims = struct.unpack(f"<{rank}I", raw)
        count = int(np.prod(dims)) if dims else 1
        raw, offset = _read_exact(view, offset, 4 * count, path)
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
        records.append((name, data))
    return records


def _infer_enrichment(records: dict[str, np.ndarray], idx: int) -> EnrichmentSpec:
    prefix = f"enrich{idx}.d"
    rates = []
    for name in records:
        if name.startswith(prefix) and name.endswith(".weight"):
            rates.append(int(name[len(prefix):-len(".weight")]))
    if not rates:
        raise DataError(f"checkpoint has no enrichment {idx} branches")
    rates.sort()
    sample = records[f"{prefix}{rates[0]}.weight"]
    return EnrichmentSpec(in_channels=int(sample.shape[1]),
                          out_channels=int(sample.shape[0]),
                          dilation_rates=tuple(rates))


def load_checkpoint(path) -> NetworkGraph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) + 1 + 4:
        raise DataError(f"{path}: truncated checkpoint")
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad magic, not a checkpoint")
    body, crc_raw = blob[:-4], blob[-4:]
    (expected_crc,) = struct.unpack("<I", crc_raw)
    if zlib.crc32(body) & 0xFFFFFFFF != expected_crc:
        raise DataError(f"{path}: CRC mismatch, checkpoint corrupt")
    tag = body[len(CHECKPOINT_MAGIC)]
    if tag not in TAG_VARIANTS:
        raise DataError(f"{path}: unknown variant tag {tag}")
    variant = TAG_VARIANTS[tag]
    view = memoryview(body)[len(CHECKPOINT_MAGIC) + 1:]
    records = dict(_parse_records(view, path))

    if variant == "tin1":
        graph = build_tin1(_infer_enrichment(records, 1))
    else:
        graph = build_tin2(_infer_enrichment(records, 1), _infer_enrichment(records, 3))

    missing = sorted(set(graph.params) - set(records))
    extra = sorted(set(records) - set(graph.params))
    if missing or extra:
        raise DataError(f"{path}: parameter names do not match the {variant} layout"
                        f" (missing {missing}, extra {extra})")
    for name, data in records.items():
        tensor = graph.params[name]
        if tensor.data.shape != data.shape:
            raise DataError(f"{path}: tensor {name} has shape {data.shape}, "
                            f"expected {tensor.data.shape}")
        tensor.data[...] = data
    return graph
