"""Dataset ingestion into a residual cache.

Walks a ``device/<name>/*.{png,tif,tiff}`` tree, extracts a residual pair
per image, and persists the pair as two binary planes (``.w.bin`` and
``.x.bin``) next to a manifest CSV. Re-running skips files whose checksum
already appears in the manifest, so ingestion is idempotent; unreadable
files are reported and skipped without aborting the run.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .plane import load_image, read_plane, write_plane
from .preprocess import DenoiseParams, ResidualPair, extract_residual

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")
MANIFEST_NAME = "manifest.csv"


@dataclass
class IngestReport:
    entries: list[dict] = field(default_factory=list)
    skipped: int = 0
    errors: list[tuple[str, str]] = field(default_factory=list)


def _checksum(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_manifest(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_manifest(path: Path, rows: list[dict]) -> None:
    rows = sorted(rows, key=lambda r: (r["device"], r["path"]))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["device", "path", "height", "width", "checksum"])
        writer.writeheader()
        writer.writerows(rows)


def ingest(
    dataset_dir,
    cache_dir,
    params: DenoiseParams = DenoiseParams(),
    *,
    clean: bool = True,
) -> IngestReport:
    """Extract and cache residual pairs for every image under dataset_dir."""
    dataset = Path(dataset_dir)
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    manifest_path = cache / MANIFEST_NAME
    existing = {(r["path"], r["checksum"]): r for r in _read_manifest(manifest_path)}
    report = IngestReport()
    rows: list[dict] = []

    for image_path in sorted(dataset.rglob("*")):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES or not image_path.is_file():
            continue
        rel = image_path.relative_to(dataset)
        device = rel.parts[0] if len(rel.parts) > 1 else "unknown"
        try:
            checksum = _checksum(image_path)
            stem = cache / device / image_path.stem
            key = (str(rel), checksum)
            if key in existing and (stem.with_suffix(".w.bin")).exists():
                rows.append(existing[key])
                report.skipped += 1
                continue
            channels = load_image(image_path)
            pair = extract_residual(
                channels[0] if len(channels) == 1 else channels, params, clean=clean
            )
            stem.parent.mkdir(parents=True, exist_ok=True)
            write_plane(stem.with_suffix(".w.bin"), pair.residual)
            write_plane(stem.with_suffix(".x.bin"), pair.denoised)
            row = {
                "device": device,
                "path": str(rel),
                "height": pair.residual.shape[0],
                "width": pair.residual.shape[1],
                "checksum": checksum,
            }
            rows.append(row)
            report.entries.append(row)
        except Exception as exc:  # per-file failures must not kill the run
            report.errors.append((str(rel), str(exc)))
    _write_manifest(manifest_path, rows)
    return report


def load_residual_cache(cache_dir) -> dict[str, list[ResidualPair]]:
    """Load all cached pairs grouped by device, ordered by file name."""
    cache = Path(cache_dir)
    out: dict[str, list[ResidualPair]] = {}
    for wpath in sorted(cache.rglob("*.w.bin")):
        xpath = Path(str(wpath)[: -len(".w.bin")] + ".x.bin")
        if not xpath.exists():
            continue
        device = wpath.relative_to(cache).parts[0]
        pair = ResidualPair(read_plane(wpath), read_plane(xpath), cleaned=True)
        out.setdefault(device, []).append(pair)
    return out
