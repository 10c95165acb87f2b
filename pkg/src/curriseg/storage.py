"""On-disk formats: 8-bit PGM rasters, JSON dataset manifests, and flat
float32 weight checkpoints.

Raster files are binary PGM (magic ``P5``) with maxval 255. Images map
[0, 1] <-> 0..255 by rounding; masks map {0, 1} <-> {0, 255} exactly.

A dataset directory holds ``images/<id>.pgm``, ``masks/<id>.pgm`` and a
``manifest.json``::

    {"meta": {...}, "items": [{"id": ..., "image": ..., "mask": ...,
                               "crop": {...}?}, ...]}

with file paths relative to the directory and an optional crop record
(``source_shape``, ``box`` as [r0, c0, r1, c1], ``pad`` as [top, bottom,
left, right]) when the item was cut out of a larger source.

A checkpoint is ``b"CKSM"`` + u32 version (little-endian) + u64 value
count (little-endian) + that many little-endian float32 values, plus a
``<name>.json`` sidecar holding the layout id and caller metadata.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadImageDepth,
    BadMagic,
    CorruptManifest,
    CountMismatch,
    MissingFile,
    ValueOutOfRange,
    VersionUnsupported,
)
from .types import BBox, CropRecord, DatasetItem, DatasetPhase, Image, Mask, ParamVector

CHECKPOINT_MAGIC = b"CKSM"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------- PGM


def write_pgm(path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim != 2 or data.dtype != np.uint8:
        raise ValueOutOfRange(f"PGM payload must be 2D uint8, got {data.dtype} {data.shape}")
    h, w = data.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())


def read_pgm(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"no such file: {path}") from None
    if not raw.startswith(b"P5"):
        raise BadMagic(f"{path}: not a binary PGM (expected magic P5)")

    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CountMismatch(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise BadMagic(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise BadImageDepth(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = raw[pos:]
    if len(body) != h * w:
        raise CountMismatch(f"{path}: expected {h * w} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def save_image(path, img: Image) -> None:
    write_pgm(path, np.round(img.pixels * 255.0).astype(np.uint8))


def load_image(path) -> Image:
    return Image(read_pgm(path).astype(np.float64) / 255.0)


def save_mask(path, mask: Mask) -> None:
    write_pgm(path, mask.labels * np.uint8(255))


def load_mask(path) -> Mask:
    data = read_pgm(path)
    bad = (data != 0) & (data != 255)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise BadImageDepth(
            f"{path}: mask pixels must be 0 or 255, found {data[y, x]} at ({y}, {x})"
        )
    return Mask((data == 255).astype(np.uint8))


# ------------------------------------------------------------ dataset


def crop_to_dict(rec: CropRecord) -> dict:
    b = rec.box
    return {
        "source_shape": list(rec.source_shape),
        "box": [b.row_min, b.col_min, b.row_max, b.col_max],
        "pad": list(rec.pad),
    }


def crop_from_dict(d: dict) -> CropRecord:
    try:
        r0, c0, r1, c1 = (int(v) for v in d["box"])
        return CropRecord(
            tuple(int(v) for v in d["source_shape"]),
            BBox(r0, r1, c0, c1),
            tuple(int(v) for v in d["pad"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"bad crop record {d!r}: {exc}") from None


def save_dataset(out_dir, items: list[DatasetItem], meta: dict | None = None) -> Path:
    """Write rasters plus manifest.json; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(items):
        item_id = item.item_id or f"img_{i:05d}"
        img_rel = f"images/{item_id}.pgm"
        msk_rel = f"masks/{item_id}.pgm"
        save_image(out / img_rel, item.image)
        save_mask(out / msk_rel, item.mask)
        entry = {"id": item_id, "image": img_rel, "mask": msk_rel}
        if item.crop is not None:
            entry["crop"] = crop_to_dict(item.crop)
        entries.append(entry)
    manifest = {"meta": meta or {}, "items": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(in_dir) -> tuple[list[DatasetItem], dict]:
    root = Path(in_dir)
    path = root / "manifest.json"
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise MissingFile(f"no manifest.json in {root}") from None
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("items"), list):
        raise CorruptManifest(f"{path}: expected an object with an 'items' list")

    items = []
    for entry in manifest["items"]:
        if not isinstance(entry, dict) or "image" not in entry or "mask" not in entry:
            raise CorruptManifest(f"{path}: bad item entry {entry!r}")
        img = load_image(root / entry["image"])
        msk = load_mask(root / entry["mask"])
        crop = crop_from_dict(entry["crop"]) if "crop" in entry else None
        items.append(DatasetItem(img, msk, crop, entry.get("id")))
    meta = manifest.get("meta", {})
    return items, meta if isinstance(meta, dict) else {}


def save_phase(out_dir, phase: DatasetPhase, meta: dict | None = None) -> Path:
    """Persist a curriculum phase; its id rides along in the manifest meta."""
    merged = dict(meta or {})
    merged["phase_id"] = phase.phase_id
    return save_dataset(out_dir, list(phase.items), merged)


def load_phase(in_dir) -> tuple[DatasetPhase, dict]:
    items, meta = load_dataset(in_dir)
    phase_id = meta.get("phase_id", "D3")
    if phase_id not in ("D1", "D2", "D3"):
        raise CorruptManifest(f"{in_dir}: unknown phase_id {phase_id!r}")
    return DatasetPhase(phase_id, tuple(items)), meta


# --------------------------------------------------------- checkpoints


def save_checkpoint(path, params: ParamVector, meta: dict | None = None) -> None:
    """Write weights as float32 plus a JSON sidecar next to the file."""
    path = Path(path)
    vals = params.values.astype("<f4")
    blob = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", vals.size) + vals.tobytes()
    path.write_bytes(blob)
    sidecar = {"layout_id": params.layout_id, "meta": meta or {}}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(path) -> tuple[ParamVector, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"no such checkpoint: {path}") from None
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: bad checkpoint magic {raw[:4]!r}")
    if len(raw) < 16:
        raise CountMismatch(f"{path}: truncated checkpoint header")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise VersionUnsupported(f"{path}: version {version} (supported: {CHECKPOINT_VERSION})")
    (count,) = struct.unpack("<Q", raw[8:16])
    body = raw[16:]
    if len(body) != 4 * count:
        raise CountMismatch(f"{path}: expected {4 * count} value bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)

    side_path = path.with_suffix(path.suffix + ".json")
    try:
        side = json.loads(side_path.read_text())
    except FileNotFoundError:
        raise MissingFile(f"missing checkpoint sidecar: {side_path}") from None
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"{side_path}: invalid JSON: {exc}") from None
    if not isinstance(side, dict) or not isinstance(side.get("layout_id"), str):
        raise CorruptManifest(f"{side_path}: expected an object with a 'layout_id' string")
    layout_id = side["layout_id"]
    declared = re.search(r"-p(\d+)$", layout_id)
    if declared and int(declared.group(1)) != count:
        raise CountMismatch(
            f"{path}: stores {count} values but layout {layout_id!r} declares {declared.group(1)}"
        )
    meta = side.get("meta", {})
    return ParamVector(values, layout_id), meta if isinstance(meta, dict) else {}
