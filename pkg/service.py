"""service.py - Gallery state and probe identification for the HTTP service.

The identification service keeps one enrolled gallery in memory, built from
the manifest named by ``GAIT_GALLERY_MANIFEST`` with the feature set named
by ``GAIT_GALLERY_FEATURES``.  The gallery is loaded lazily on first use and
can be rebuilt at any time (on request or by the scheduler); readers always
see either the old or the new gallery, never a partial one.
"""

from __future__ import annotations

import io
import logging
import threading
import time
from dataclasses import dataclass
from typing import Any

from _common import ContractError, FeatureKind
from config import load_config
from ensemble import EnsembleConfig, Gallery, identify
from features import build_feature_table, extract_features
from skeleton import load_dataset, parse_sequence

logger = logging.getLogger(__name__)

__all__ = [
    "GalleryUnavailableError",
    "LoadedGallery",
    "clear_gallery",
    "current_gallery",
    "identify_probe",
    "peek_gallery",
    "reload_gallery",
]

_lock = threading.Lock()
_loaded: LoadedGallery | None = None


class GalleryUnavailableError(RuntimeError):
    """No gallery manifest is configured."""


@dataclass(frozen=True, eq=False)
class LoadedGallery:
    """An enrolled gallery and where it came from."""

    gallery: Gallery
    kind: FeatureKind
    manifest: str
    config: EnsembleConfig
    loaded_at: float
    skipped: int

    def describe(self) -> dict[str, Any]:
        per_subject: dict[str, int] = {}
        for label in self.gallery.labels:
            per_subject[label] = per_subject.get(label, 0) + 1
        return {
            "manifest": self.manifest,
            "feature_set": self.kind.value,
            "dimension": self.gallery.dimension,
            "entries": self.gallery.size,
            "subjects": len(per_subject),
            "entries_per_subject": per_subject,
            "skipped": self.skipped,
            "loaded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.loaded_at)),
            "ensemble": {
                "L": self.config.L,
                "N": self.config.N,
                "K": self.config.K,
                "seed": self.config.seed,
            },
        }


def _build() -> LoadedGallery:
    config = load_config()
    manifest = config["gallery_manifest"]
    if not manifest:
        msg = "GAIT_GALLERY_MANIFEST is not set"
        raise GalleryUnavailableError(msg)
    kind = FeatureKind(config["gallery_features"])
    dataset = load_dataset(manifest, workers=config["workers"])
    table = build_feature_table(dataset, kind, workers=config["workers"])
    if not len(table):
        msg = f"no usable sequences in {manifest}"
        raise ContractError(msg)
    ensemble = EnsembleConfig(
        L=config["ensemble"]["L"],
        N=min(config["ensemble"]["N"], len(table.names)),
        K=config["ensemble"]["K"],
        seed=config["seed"],
    )
    return LoadedGallery(
        table.gallery(),
        kind,
        manifest,
        ensemble,
        time.time(),
        len(table.skipped),
    )


def reload_gallery() -> LoadedGallery:
    """Rebuild the gallery from the configured manifest and swap it in.

    Raises:
        GalleryUnavailableError: No manifest is configured.
        GaitError: The manifest or a sequence file is malformed.
        OSError: A file cannot be read.

    """
    global _loaded  # noqa: PLW0603
    loaded = _build()
    with _lock:
        _loaded = loaded
    logger.info(
        "Gallery loaded from %s: %d entries, %d subjects, %s",
        loaded.manifest,
        loaded.gallery.size,
        len(loaded.gallery.classes),
        loaded.kind.value,
    )
    return loaded


def current_gallery() -> LoadedGallery:
    """Return the loaded gallery, loading it on first use."""
    with _lock:
        loaded = _loaded
    if loaded is None:
        loaded = reload_gallery()
    return loaded


def peek_gallery() -> LoadedGallery | None:
    """Return the loaded gallery without triggering a load."""
    with _lock:
        return _loaded


def clear_gallery() -> None:
    global _loaded  # noqa: PLW0603
    with _lock:
        _loaded = None


def identify_probe(text: str, *, max_rank: int = 5, use_rsm: bool = True) -> dict[str, Any]:
    """Identify the sequence CSV *text* against the loaded gallery.

    Returns:
        The predicted label, up to *max_rank* ranked candidates, frame counts
        and the processing time in milliseconds.

    Raises:
        GalleryUnavailableError: No manifest is configured.
        GaitError: The probe cannot be parsed or has too few valid frames.

    """
    if max_rank < 1:
        msg = f"max_rank must be positive, got {max_rank}"
        raise ContractError(msg)
    loaded = current_gallery()
    start = time.perf_counter()
    probe = parse_sequence(io.StringIO(text), "probe", "probe", source="request body")
    vector = extract_features(probe, loaded.kind)
    result = identify(vector, loaded.gallery, loaded.config, use_rsm=use_rsm)
    elapsed_ms = (time.perf_counter() - start) * 1000
    logger.info(
        "Identified probe (%d frames) as %s in %.1f ms",
        len(probe),
        result.label,
        elapsed_ms,
    )
    return {
        "label": result.label,
        "candidates": [
            {"rank": rank, "label": c.label, "score": c.score}
            for rank, c in enumerate(result.ranking[:max_rank], start=1)
        ],
        "frames": len(probe),
        "valid_frames": int(probe.valid_mask.sum()),
        "feature_set": loaded.kind.value,
        "rsm": use_rsm,
        "processing_ms": round(elapsed_ms, 3),
    }
