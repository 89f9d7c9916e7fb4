"""Probe/gallery matching, the cumulative match curve, and mean average precision.

Camera-A sequences are probes, camera-B sequences the gallery. Distances
are Euclidean between sequence embeddings; distance ties break by gallery
index so rankings are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import augment, sample_subsequence

__all__ = [
    "RankingResult",
    "distance_matrix",
    "rank_gallery",
    "cmc",
    "map_score",
    "evaluate_split",
    "write_metrics_csv",
    "METRICS_HEADER",
]

METRICS_HEADER = ("trial", "rank1", "rank5", "rank10", "rank20", "mAP")


@dataclass
class RankingResult:
    distances: np.ndarray  # (p, g)
    probe_labels: np.ndarray
    gallery_labels: np.ndarray
    order: np.ndarray  # (p, g) gallery indices sorted by ascending distance


def distance_matrix(probes, gallery) -> np.ndarray:
    """Pairwise Euclidean distances between embedding lists."""
    p = np.asarray([np.asarray(u, dtype=np.float64) for u in probes])
    g = np.asarray([np.asarray(u, dtype=np.float64) for u in gallery])
    if p.shape[1] != g.shape[1]:
        raise ValueError(f"embedding dimension mismatch: {p.shape[1]} vs {g.shape[1]}")
    sq = (p * p).sum(axis=1)[:, None] + (g * g).sum(axis=1)[None, :] - 2.0 * (p @ g.T)
    return np.sqrt(np.maximum(sq, 0.0))


def rank_gallery(distances, probe_labels, gallery_labels) -> RankingResult:
    """Sort the gallery per probe; stable sort keeps ties in index order."""
    distances = np.asarray(distances, dtype=np.float64)
    order = np.argsort(distances, axis=1, kind="stable")
    return RankingResult(
        distances=distances,
        probe_labels=np.asarray(probe_labels),
        gallery_labels=np.asarray(gallery_labels),
        order=order,
    )


def cmc(result: RankingResult, max_rank: int) -> np.ndarray:
    """Rank-m match rates for m = 1..max_rank.

    Entry m-1 is the fraction of probes whose first true match appears
    within the top m ranked gallery entries. Every probe must have at
    least one gallery match.
    """
    p, g = result.distances.shape
    max_rank = min(max_rank, g)
    curve = np.zeros(max_rank)
    for i in range(p):
        ranked = result.gallery_labels[result.order[i]]
        hits = np.nonzero(ranked == result.probe_labels[i])[0]
        if len(hits) == 0:
            raise ValueError(f"probe identity {result.probe_labels[i]} absent from gallery")
        first = hits[0]
        if first < max_rank:
            curve[first:] += 1.0
    return curve / p


def map_score(result: RankingResult) -> float:
    """Mean over probes of average precision over all true matches."""
    p, g = result.distances.shape
    total = 0.0
    for i in range(p):
        ranked = result.gallery_labels[result.order[i]]
        hits = np.nonzero(ranked == result.probe_labels[i])[0]
        if len(hits) == 0:
            raise ValueError(f"probe identity {result.probe_labels[i]} absent from gallery")
        ap = 0.0
        for k, r in enumerate(hits, start=1):
            ap += k / (r + 1.0)
        total += ap / len(hits)
    return total / p


def evaluate_split(embed_fn, samples, max_rank: int = 20, augmentations: int = 4,
                   sequence_cap: int = 128, rng=None):
    """Metrics for one probe/gallery split.

    ``embed_fn(sample) -> 1-d embedding``. Camera-A samples are probes and
    camera-B samples the gallery; sequences are capped to their leading
    ``sequence_cap`` frames. With ``augmentations`` > 0, each sequence is
    embedded under that many augmentation draws and the distance matrix is
    the mean over paired draws.
    """
    probes = [s for s in samples if s.camera == "A"]
    gallery = [s for s in samples if s.camera == "B"]
    if not probes or not gallery:
        raise ValueError("evaluation needs a non-empty probe set and gallery")
    if rng is None:
        rng = np.random.default_rng(0)

    def capped(s):
        if s.flows is not None:
            s = replace(s, flows=None)  # embeddings never read stored flow
        if len(s) <= sequence_cap:
            return s
        return sample_subsequence(s, sequence_cap, rng=None)  # leading window

    probes = [capped(s) for s in probes]
    gallery = [capped(s) for s in gallery]

    n_draws = max(1, augmentations)
    dist = np.zeros((len(probes), len(gallery)))
    for _ in range(n_draws):
        if augmentations > 0:
            p_emb = [embed_fn(augment(s, rng)) for s in probes]
            g_emb = [embed_fn(augment(s, rng)) for s in gallery]
        else:
            p_emb = [embed_fn(s) for s in probes]
            g_emb = [embed_fn(s) for s in gallery]
        dist += distance_matrix(p_emb, g_emb)
    dist /= n_draws

    result = rank_gallery(dist, [s.identity for s in probes], [s.identity for s in gallery])
    curve = cmc(result, max_rank)
    return {
        "cmc": curve,
        "mAP": map_score(result),
        "rank1": curve[0],
        "result": result,
    }


def _rank_at(curve, m):
    return float(curve[min(m, len(curve)) - 1])


def write_metrics_csv(path, trials):
    """One row per trial plus a mean row; columns per METRICS_HEADER."""
    rows = []
    for i, t in enumerate(trials):
        curve = t["cmc"]
        rows.append([i, _rank_at(curve, 1), _rank_at(curve, 5), _rank_at(curve, 10),
                     _rank_at(curve, 20), t["mAP"]])
    mean = ["mean"] + [float(np.mean([r[j] for r in rows])) for j in range(1, 6)]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        writer.writerows(rows)
        writer.writerow(mean)
