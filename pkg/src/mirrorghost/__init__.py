"""mirrorghost: ghost-artifact synthesis and misalignment detection.

A segmented-mirror telescope with k of N misaligned segments overlays
the scene with a translated self-copy ("ghost") of intensity k/N.
This package synthesizes such imagery procedurally, extracts spectral
and Laplacian features from image patches with an exact any-size FFT,
trains a small softmax classifier to detect the ghosts and estimate k,
and aggregates per-patch votes into image-level verdicts.
"""

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # image
    "as_gray", "blend", "extract_patches", "gaussian_blur", "PatchGrid",
    "to_grayscale", "translate",
    # netpbm
    "read_pgm", "read_ppm", "write_pgm", "write_ppm",
    # fourier
    "dft2", "fft", "fft2", "fftshift2", "idft2", "ifft", "ifft2",
    # spectral
    "FeatureVector", "featurize", "featurize_image", "feature_fingerprint",
    "high_freq_energy", "laplacian", "laplacian_variance", "magnitude_spectrum",
    "radial_bins", "threshold_detector",
    # ghost
    "GhostParams", "inject_ghost", "intensity_for", "offset_for",
    "synth_ground_image",
    # dataset
    "DatasetManifest", "DatasetSpec", "ManifestRecord", "generate_dataset",
    "sample_seed",
    # classifier
    "Metrics", "Model", "TrainConfig", "evaluate", "load_model", "predict",
    "predict_proba", "save_model", "train",
    # detector
    "BatchDetection", "ImageVerdict", "PatchVote", "aggregate_votes",
    "batch_detect", "classify_image",
    # report
    "PAPER_REFERENCE", "RunReport", "featurize_manifest", "run_cell",
    "run_matrix", "threshold_sweep", "write_report",
]

from .image import (
    as_gray,
    blend,
    extract_patches,
    gaussian_blur,
    PatchGrid,
    to_grayscale,
    translate,
)
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .fourier import dft2, fft, fft2, fftshift2, idft2, ifft, ifft2
from .spectral import (
    FeatureVector,
    featurize,
    featurize_image,
    feature_fingerprint,
    high_freq_energy,
    laplacian,
    laplacian_variance,
    magnitude_spectrum,
    radial_bins,
    threshold_detector,
)
from .ghost import (
    GhostParams,
    inject_ghost,
    intensity_for,
    offset_for,
    synth_ground_image,
)
from .dataset import (
    DatasetManifest,
    DatasetSpec,
    ManifestRecord,
    generate_dataset,
    sample_seed,
)
from .classifier import (
    Metrics,
    Model,
    TrainConfig,
    evaluate,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .detector import (
    BatchDetection,
    ImageVerdict,
    PatchVote,
    aggregate_votes,
    batch_detect,
    classify_image,
)
from .report import (
    PAPER_REFERENCE,
    RunReport,
    featurize_manifest,
    run_cell,
    run_matrix,
    threshold_sweep,
    write_report,
)
