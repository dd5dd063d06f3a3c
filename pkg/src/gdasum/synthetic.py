"""Synthetic planted-structure corpora for end-to-end verification.

Each video is a sequence of contiguous runs; every run samples one of a
small set of shared Gaussian cluster centers.  Three clusters are
designated "key": each appears as exactly one short run per video, and
those frames carry keyframe label 1.  Because the key clusters are the
same across videos, a content-based scorer trained on some videos can
recover the planted frames of held-out ones.  Run boundaries are stored
as precomputed change points, so the planted shots are available to the
selection stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    Annotations,
    FrameFeatures,
    SourceDataset,
    VideoRecord,
    write_features,
    write_manifest,
)


@dataclass(frozen=True)
class PlantedSpec:
    """Generation knobs for the planted-keyframe corpus.

    Every run has the same length so the selection stage faces a fair
    choice: under a budget of n_key_clusters * run_length frames any
    combination of that many shots fits, and only the scores decide
    which ones are taken.  (With the key runs shorter than everything
    else they would be the only shots that pack into the budget, and
    even a random scorer would look perfect.)
    """

    n_videos: int = 40
    n_frames: int = 120
    dim: int = 32
    n_clusters: int = 6
    n_key_clusters: int = 3
    run_length: int = 6
    center_scale: float = 2.5
    noise: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters - self.n_key_clusters < 2:
            raise ValueError("need at least two background clusters")
        if self.n_frames % self.run_length != 0:
            raise ValueError("n_frames must be a multiple of run_length")
        if self.n_frames // self.run_length < 2 * self.n_key_clusters + 1:
            raise ValueError("too few runs to separate the key runs")


def _key_slots(n_runs: int, n_keys: int, rng) -> list[int]:
    """Distinct, pairwise non-adjacent run indices for the key runs."""
    while True:
        slots = sorted(int(s) for s in rng.choice(n_runs, size=n_keys, replace=False))
        if all(b - a >= 2 for a, b in zip(slots, slots[1:])):
            return slots


def make_planted_dataset(spec: PlantedSpec = PlantedSpec()) -> list[VideoRecord]:
    """Generate the corpus in memory; deterministic given spec.seed."""
    rng = np.random.default_rng(spec.seed)
    centers = spec.center_scale * rng.standard_normal((spec.n_clusters, spec.dim))
    key_clusters = list(range(spec.n_key_clusters))
    background = list(range(spec.n_key_clusters, spec.n_clusters))

    records = []
    for v in range(spec.n_videos):
        n_runs = spec.n_frames // spec.run_length
        slots = _key_slots(n_runs, spec.n_key_clusters, rng)
        key_order = list(rng.permutation(key_clusters))

        runs = []
        prev_cluster = -1
        for i in range(n_runs):
            if slots and slots[0] == i:
                cluster = key_order.pop(0)
                slots.pop(0)
                is_key = 1
            else:
                choices = [c for c in background if c != prev_cluster]
                cluster = int(rng.choice(choices))
                is_key = 0
            runs.append((cluster, spec.run_length, is_key))
            prev_cluster = cluster

        frames = []
        labels = []
        boundaries = []
        key_intervals = []
        pos = 0
        for cluster, length, is_key in runs:
            frames.append(
                centers[cluster] + spec.noise * rng.standard_normal((length, spec.dim))
            )
            labels.extend([is_key] * length)
            if is_key:
                key_intervals.append((pos, pos + length))
            pos += length
            if pos < spec.n_frames:
                boundaries.append(pos)

        matrix = np.concatenate(frames).astype(np.float32)
        records.append(
            VideoRecord(
                id=f"planted-{v:03d}",
                features=FrameFeatures(matrix=matrix),
                annotations=Annotations(
                    keyframe_labels=np.asarray(labels, dtype=np.int8),
                    user_summaries=(tuple(key_intervals),),
                    change_points=tuple(boundaries),
                ),
                source_dataset=SourceDataset.OTHER,
            )
        )
    return records


def write_planted_corpus(out_dir, spec: PlantedSpec = PlantedSpec()) -> Path:
    """Write the corpus as feature files plus a manifest; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = make_planted_dataset(spec)
    entries = []
    for rec in records:
        fname = f"{rec.id}.f32"
        write_features(out_dir / fname, rec.features.matrix)
        entries.append(
            {
                "id": rec.id,
                "n_frames": rec.features.n_frames,
                "dim": rec.features.dim,
                "features_file": fname,
                "source_dataset": rec.source_dataset.value,
                "annotations": {
                    "keyframe_labels": [int(v) for v in rec.annotations.keyframe_labels],
                    "user_summaries": [
                        [[a, b] for a, b in user]
                        for user in rec.annotations.user_summaries
                    ],
                    "change_points": list(rec.annotations.change_points),
                },
            }
        )
    manifest = out_dir / "manifest.json"
    write_manifest(manifest, entries)
    return manifest
