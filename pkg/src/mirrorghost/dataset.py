"""Dataset synthesis and CSV manifests.

Every sample is reproducible in isolation: sample i of a run seeded
with S gets its own 64-bit seed derived by SeedSequence([S, i]), and
all of its randomness flows from Philox counter streams keyed on that
seed (key [s_i, 0] for the ground scene, [s_i, 1] for corruption
parameter draws).  Generation order therefore never matters, and a
manifest row alone is enough to rebuild its image.

Manifest CSV columns:
    path,n_segments,k,intensity,tx,ty,split,corruption,blur_sigma,seed
preceded by '#' comment lines recording the PRNG and master seed.
Paths are stored relative to the manifest file.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .ghost import (
    GhostParams,
    check_segments,
    inject_ghost,
    intensity_for,
    synth_ground_image,
)
from .image import gaussian_blur
from .netpbm import write_pgm

__all__ = [
    "SPLITS",
    "BLUR_SIGMAS",
    "PRNG_NAME",
    "sample_seed",
    "sample_rng",
    "ManifestRecord",
    "DatasetManifest",
    "DatasetSpec",
    "generate_dataset",
]

SPLITS = ("train", "val", "test")
BLUR_SIGMAS = (1.0, 2.0, 3.0, 4.0, 5.0)
PRNG_NAME = "philox4x64"
_CORRUPTIONS = ("ghost", "blur", "none")
_CLASS_SHAPES = ("binary", "intensity")
_COLUMNS = (
    "path",
    "n_segments",
    "k",
    "intensity",
    "tx",
    "ty",
    "split",
    "corruption",
    "blur_sigma",
    "seed",
)


def sample_seed(master_seed: int, index: int) -> int:
    """Order-independent 64-bit seed for sample `index` of a run."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def sample_rng(seed: int, stream: int = 1) -> np.random.Generator:
    """Philox counter stream for one sample; stream 0 is reserved for
    the ground scene, stream 1 for corruption parameter draws."""
    return np.random.Generator(
        np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)])
    )


@dataclass(frozen=True)
class ManifestRecord:
    """One image: its corruption ground truth and provenance."""

    path: str
    n_segments: int
    k: int
    intensity: float
    tx: int
    ty: int
    split: str
    corruption: str
    blur_sigma: float | None
    seed: int

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.corruption not in _CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.corruption!r}")

    def binary_label(self) -> int:
        """1 when corrupted (ghosted or blurred), 0 when pristine."""
        return 0 if self.corruption == "none" else 1

    def intensity_label(self) -> int:
        """Misaligned-segment count k (0 for aligned)."""
        return self.k


def _format_float(x: float) -> str:
    # repr round-trips float64 exactly and is stable across runs
    return repr(float(x))


@dataclass
class DatasetManifest:
    """Ordered manifest records plus the provenance header fields."""

    records: list[ManifestRecord]
    master_seed: int
    prng: str = PRNG_NAME
    base_dir: str = "."

    def __len__(self) -> int:
        return len(self.records)

    def image_path(self, record: ManifestRecord) -> str:
        return os.path.join(self.base_dir, record.path)

    def subset(self, split: str) -> "DatasetManifest":
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
        return replace(
            self, records=[r for r in self.records if r.split == split]
        )

    def class_counts(self, task: str = "binary") -> dict[int, int]:
        counts: dict[int, int] = {}
        for r in self.records:
            label = r.binary_label() if task == "binary" else r.intensity_label()
            counts[label] = counts.get(label, 0) + 1
        return counts

    def save(self, path) -> None:
        buf = io.StringIO()
        buf.write("# mirrorghost dataset manifest\n")
        buf.write(
            f"# prng: {self.prng} (numpy.random.Philox); "
            "per-sample key = SeedSequence([master_seed, index]) -> uint64\n"
        )
        buf.write(f"# master_seed: {self.master_seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for r in self.records:
            writer.writerow(
                [
                    r.path,
                    r.n_segments,
                    r.k,
                    _format_float(r.intensity),
                    r.tx,
                    r.ty,
                    r.split,
                    r.corruption,
                    "" if r.blur_sigma is None else _format_float(r.blur_sigma),
                    r.seed,
                ]
            )
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        master_seed = 0
        prng = PRNG_NAME
        rows: list[ManifestRecord] = []
        with open(path, "r", newline="") as fh:
            header_seen = False
            for line in fh:
                if line.startswith("#"):
                    body = line[1:].strip()
                    if body.startswith("master_seed:"):
                        master_seed = int(body.split(":", 1)[1])
                    elif body.startswith("prng:"):
                        prng = body.split(":", 1)[1].strip().split()[0]
                    continue
                if not line.strip():
                    continue
                cells = next(csv.reader([line]))
                if not header_seen:
                    if tuple(cells) != _COLUMNS:
                        raise ValueError(
                            f"{path}: bad manifest header {cells!r}"
                        )
                    header_seen = True
                    continue
                if len(cells) != len(_COLUMNS):
                    raise ValueError(f"{path}: bad manifest row {cells!r}")
                rows.append(
                    ManifestRecord(
                        path=cells[0],
                        n_segments=int(cells[1]),
                        k=int(cells[2]),
                        intensity=float(cells[3]),
                        tx=int(cells[4]),
                        ty=int(cells[5]),
                        split=cells[6],
                        corruption=cells[7],
                        blur_sigma=None if cells[8] == "" else float(cells[8]),
                        seed=int(cells[9]),
                    )
                )
            if not header_seen:
                raise ValueError(f"{path}: missing manifest header row")
        return cls(
            records=rows,
            master_seed=master_seed,
            prng=prng,
            base_dir=os.path.dirname(os.path.abspath(path)),
        )


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for a synthetic corpus.

    corruption "ghost" pairs an aligned class with ghosted classes,
    "blur" pairs pristine with blurred, "none" is an aligned-only
    corpus.  classes "binary" gives two labels; "intensity" (ghost
    only) gives one label per misalignment count 0..N-1.
    """

    n_images: int
    image_size: int = 532
    n_segments: int = 4
    offset_mode: str = "random"
    corruption: str = "ghost"
    classes: str = "intensity"
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    spectral_exponent: float = 1.5
    seed: int = 0
    translation_mode: str = "circular"
    blur_sigmas: tuple[float, ...] = BLUR_SIGMAS

    def __post_init__(self):
        check_segments(self.n_segments)
        if self.corruption not in _CORRUPTIONS:
            raise ValueError(f"corruption must be one of {_CORRUPTIONS}")
        if self.classes not in _CLASS_SHAPES:
            raise ValueError(f"classes must be one of {_CLASS_SHAPES}")
        if self.corruption != "ghost" and self.classes == "intensity":
            raise ValueError("intensity classes require ghost corruption")
        if len(self.split_fractions) != 3 or any(
            f < 0 for f in self.split_fractions
        ):
            raise ValueError("split fractions must be three non-negatives")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(
                f"split fractions must sum to 1, got {self.split_fractions}"
            )
        if self.image_size <= 15:
            raise ValueError("image size must exceed 15 pixels")
        if self.n_images < 1:
            raise ValueError("need at least one image")
        if not self.blur_sigmas or any(s <= 0 for s in self.blur_sigmas):
            raise ValueError("blur sigmas must be positive")

    @property
    def class_labels(self) -> tuple[int, ...]:
        if self.corruption == "none":
            return (0,)
        if self.classes == "binary":
            return (0, 1)
        return tuple(range(self.n_segments))

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)


def _split_for_rank(rank: int, class_size: int, fractions) -> str:
    """Stratified split by within-class rank, largest-fraction-first cuts."""
    train_end = round(fractions[0] * class_size)
    val_end = round((fractions[0] + fractions[1]) * class_size)
    if rank < train_end:
        return "train"
    if rank < val_end:
        return "val"
    return "test"


def _build_sample(spec: DatasetSpec, index: int) -> tuple[np.ndarray, ManifestRecord]:
    label = spec.class_labels[index % spec.n_classes]
    seed = sample_seed(spec.seed, index)
    rng = sample_rng(seed, stream=1)
    img = synth_ground_image(spec.image_size, spec.spectral_exponent, seed=seed)

    n_seg, k, tx, ty, corruption, sigma = spec.n_segments, 0, 0, 0, "none", None
    if spec.corruption == "ghost" and label > 0:
        if spec.classes == "binary":
            k = int(rng.integers(1, n_seg))  # binary ghosts span all intensities
        else:
            k = label
        params = GhostParams.draw(k, n_seg, spec.offset_mode, rng=rng)
        img = inject_ghost(img, params, translation_mode=spec.translation_mode)
        tx, ty, corruption = params.tx, params.ty, "ghost"
    elif spec.corruption == "blur" and label > 0:
        sigma = float(spec.blur_sigmas[rng.integers(0, len(spec.blur_sigmas))])
        img = gaussian_blur(img, sigma)
        corruption = "blur"

    n_per_class = spec.n_images // spec.n_classes + (
        1 if index % spec.n_classes < spec.n_images % spec.n_classes else 0
    )
    record = ManifestRecord(
        path=f"img_{index:05d}.pgm",
        n_segments=n_seg,
        k=k,
        intensity=intensity_for(k, n_seg),
        tx=tx,
        ty=ty,
        split=_split_for_rank(index // spec.n_classes, n_per_class, spec.split_fractions),
        corruption=corruption,
        blur_sigma=sigma,
        seed=seed,
    )
    return img, record


def generate_dataset(spec: DatasetSpec, out_dir) -> DatasetManifest:
    """Synthesize images into `out_dir` and write manifest.csv there.

    Classes are balanced within one sample and splits are stratified
    per class.  Rerunning with the same spec reproduces every byte.
    """
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for index in range(spec.n_images):
        img, record = _build_sample(spec, index)
        write_pgm(img, os.path.join(out_dir, record.path))
        records.append(record)
    manifest = DatasetManifest(
        records=records,
        master_seed=spec.seed,
        base_dir=os.path.abspath(out_dir),
    )
    manifest.save(os.path.join(out_dir, "manifest.csv"))
    return manifest


def regenerate_image(spec: DatasetSpec, index: int) -> np.ndarray:
    """Rebuild sample `index` without touching disk (round-trip checks)."""
    img, _ = _build_sample(spec, index)
    return img
