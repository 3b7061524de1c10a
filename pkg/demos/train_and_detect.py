"""End-to-end miniature: corpus -> features -> classifier -> verdicts.

Uses deliberately tiny images (64 pixels, 32-pixel patches) so the whole
pipeline runs in a few seconds; the full-scale equivalent is the
`mirrorghost report` command.
"""

import tempfile

import numpy as np

from mirrorghost import (
    DatasetSpec,
    TrainConfig,
    aggregate_votes,
    batch_detect,
    classify_image,
    evaluate,
    featurize_manifest,
    generate_dataset,
    predict_proba,
    read_pgm,
    train,
)

with tempfile.TemporaryDirectory() as work:
    spec = DatasetSpec(
        n_images=60,
        image_size=64,
        n_segments=4,
        offset_mode="proportional",
        corruption="ghost",
        classes="intensity",
        seed=9,
    )
    manifest = generate_dataset(spec, work)
    print(f"corpus: {len(manifest)} images, classes {manifest.class_counts('intensity')}")

    mf = featurize_manifest(manifest, patch_size=32)
    tr, va, te = mf.mask("train"), mf.mask("val"), mf.mask("test")
    print(f"patches: {tr.sum()} train / {va.sum()} val / {te.sum()} test")

    config = TrainConfig(hidden_dim=32, epochs=60)
    model = train(
        (mf.features[tr], mf.k_labels[tr]),
        (mf.features[va], mf.k_labels[va]),
        n_classes=4,
        config=config,
        seed=9,
        feature_fingerprint=mf.fingerprint,
    )
    metrics = evaluate(model, mf.features[te], mf.k_labels[te])
    print(f"test patch accuracy: {metrics.accuracy:.4f} over {metrics.n_samples} patches")
    print(f"confusion:\n{metrics.confusion}")

    # single-image verdict on the last test image
    record = next(r for r in reversed(manifest.records) if r.split == "test")
    verdict = classify_image(model, read_pgm(manifest.image_path(record)), 32)
    print(
        f"\n{record.path}: true k={record.k}; "
        f"{verdict.ghosted_patch_fraction:.2f} of {verdict.n_patches} patches ghosted, "
        f"estimated k={verdict.estimated_k}"
    )

    # and the vote math behind it
    votes = np.argmax(predict_proba(model, mf.features[mf.image_index == len(manifest) - 1]), axis=1)
    print(f"raw patch votes {votes.tolist()} -> {aggregate_votes(votes)}")

    detection = batch_detect(model, manifest, patch_size=32)
    print(f"\nwhole corpus: {detection.summary()}")
