"""Image-level misalignment verdicts from per-patch votes.

An image is tiled into patches, each patch is classified, and the
nonzero-class votes are aggregated: the ghosted patch fraction is
(#patches predicting class > 0) / n_patches, the image is flagged
misaligned when that fraction reaches the decision threshold, and the
misaligned-segment estimate is the lower median of the nonzero patch
classes (reported only for flagged images).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .classifier import CompatibilityError, Model, predict_proba
from .dataset import DatasetManifest, ManifestRecord
from .netpbm import read_pgm
from .spectral import featurize_image

__all__ = [
    "PatchVote",
    "ImageVerdict",
    "aggregate_votes",
    "classify_image",
    "batch_detect",
    "BatchDetection",
    "write_detection_csv",
]


@dataclass(frozen=True)
class PatchVote:
    row: int  # patch grid coordinates, not pixels
    col: int
    predicted_class: int
    max_probability: float


@dataclass(frozen=True)
class ImageVerdict:
    n_patches: int
    ghosted_patch_fraction: float
    is_misaligned: bool
    estimated_k: int | None
    votes: tuple[PatchVote, ...]


def aggregate_votes(classes, tau: float = 0.5) -> tuple[float, bool, int | None]:
    """Combine per-patch predicted classes into the image-level verdict.

    Returns (ghosted fraction, is_misaligned, estimated_k).  The
    fraction is exactly count/n; the verdict trips at fraction >= tau;
    the k estimate is the lower median of nonzero votes, None when the
    image is not flagged.  Order of votes never matters.
    """
    votes = np.asarray(classes)
    if votes.ndim != 1 or votes.size == 0:
        raise ValueError(f"need a non-empty 1D vote array, got shape {votes.shape}")
    if not np.issubdtype(votes.dtype, np.integer):
        raise ValueError(f"votes must be integers, got dtype {votes.dtype}")
    if votes.min() < 0:
        raise ValueError("votes must be non-negative class indices")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    nonzero = np.sort(votes[votes > 0])
    fraction = nonzero.size / votes.size
    flagged = fraction >= tau
    estimated = int(nonzero[(nonzero.size - 1) // 2]) if flagged and nonzero.size else None
    return fraction, flagged, estimated


def classify_image(model: Model, img, patch_size: int, tau: float = 0.5) -> ImageVerdict:
    """Tile, classify every patch, and aggregate into an ImageVerdict."""
    grid, features, fingerprint = featurize_image(img, patch_size)
    if model.feature_fingerprint and fingerprint != model.feature_fingerprint:
        raise CompatibilityError(
            f"feature fingerprint {fingerprint} (patch size {patch_size}) does "
            f"not match model fingerprint {model.feature_fingerprint}"
        )
    probs = predict_proba(model, features)
    predicted = np.argmax(probs, axis=1)
    fraction, flagged, estimated = aggregate_votes(predicted, tau)
    votes = tuple(
        PatchVote(
            row=i // grid.cols,
            col=i % grid.cols,
            predicted_class=int(predicted[i]),
            max_probability=float(probs[i, predicted[i]]),
        )
        for i in range(grid.n_patches)
    )
    return ImageVerdict(
        n_patches=grid.n_patches,
        ghosted_patch_fraction=fraction,
        is_misaligned=flagged,
        estimated_k=estimated,
        votes=votes,
    )


@dataclass
class BatchDetection:
    """Per-image verdict rows plus corpus-level tallies.

    rows: one dict per readable image with keys path, n_patches,
    ghosted_fraction, is_misaligned, estimated_k, true_k.  failures
    lists (path, error) for unreadable images; they are excluded from
    the accuracy denominators but counted in the summary.
    """

    rows: list[dict]
    n_images: int
    image_accuracy: float
    k_accuracy: float
    failures: list[tuple[str, str]]

    def summary(self) -> dict:
        return {
            "n_images": self.n_images,
            "image_accuracy": self.image_accuracy,
            "k_accuracy": self.k_accuracy,
            "failures": len(self.failures),
        }


def _verdict_row(record: ManifestRecord, verdict: ImageVerdict) -> dict:
    return {
        "path": record.path,
        "n_patches": verdict.n_patches,
        "ghosted_fraction": verdict.ghosted_patch_fraction,
        "is_misaligned": verdict.is_misaligned,
        "estimated_k": verdict.estimated_k,
        "true_k": record.k,
    }


def batch_detect(
    model: Model,
    manifest: DatasetManifest,
    patch_size: int,
    tau: float = 0.5,
) -> BatchDetection:
    """Run classify_image over a manifest and score against its labels.

    Image accuracy scores is_misaligned against (true k > 0); k accuracy
    scores the k estimate (0 when not flagged) against true k.  A
    missing or unreadable image is recorded as a failure and the run
    continues.
    """
    rows: list[dict] = []
    failures: list[tuple[str, str]] = []
    image_hits = 0
    k_hits = 0
    for record in manifest.records:
        path = manifest.image_path(record)
        try:
            img = read_pgm(path)
            verdict = classify_image(model, img, patch_size, tau)
        except (OSError, ValueError) as exc:
            failures.append((record.path, str(exc)))
            continue
        rows.append(_verdict_row(record, verdict))
        truly_misaligned = record.k > 0
        if verdict.is_misaligned == truly_misaligned:
            image_hits += 1
        estimated = verdict.estimated_k if verdict.is_misaligned else 0
        if estimated == record.k:
            k_hits += 1
    scored = len(rows)
    return BatchDetection(
        rows=rows,
        n_images=len(manifest.records),
        image_accuracy=image_hits / scored if scored else 0.0,
        k_accuracy=k_hits / scored if scored else 0.0,
        failures=failures,
    )


def write_detection_csv(detection: BatchDetection, path) -> None:
    """CSV of per-image verdicts in manifest order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["path", "n_patches", "ghosted_fraction", "is_misaligned", "estimated_k", "true_k"]
        )
        for row in detection.rows:
            writer.writerow(
                [
                    row["path"],
                    row["n_patches"],
                    repr(row["ghosted_fraction"]),
                    int(row["is_misaligned"]),
                    "" if row["estimated_k"] is None else row["estimated_k"],
                    row["true_k"],
                ]
            )
