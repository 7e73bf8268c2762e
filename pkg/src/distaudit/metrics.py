"""Operating-point thresholds, verification accuracy and Degree of Bias."""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ScoreSet:
    subgroup: str
    genuine: list = field(default_factory=list)
    impostor: list = field(default_factory=list)


@dataclass(frozen=True)
class SubgroupAccuracy:
    subgroup: str
    accuracy: float


@dataclass(frozen=True)
class BiasSummary:
    accuracies: tuple
    dob: float


def _max_accepted(far, n):
    """Largest k with k / n <= far."""
    k = int(math.floor(far * n))
    while k + 1 <= n and (k + 1) / n <= far:
        k += 1
    while k > 0 and k / n > far:
        k -= 1
    return k


def far_threshold(impostor, far=0.01):
    """Smallest-acceptance-set threshold whose empirical FAR does not exceed ``far``.

    Scores ``>= t`` are accepted. With impostors sorted in descending order and
    ``k`` the largest count allowed by ``far``, the threshold is placed halfway
    between the first rejected score and the next larger distinct score (or
    just above it when none exists), so ties at the boundary are all rejected.
    """
    scores = np.sort(np.asarray(impostor, dtype=np.float64))[::-1]
    n = scores.shape[0]
    if n == 0:
        raise ValueError("far_threshold needs at least one impostor score")
    if not 0.0 < far < 1.0:
        raise ValueError(f"far must lie in (0, 1), got {far}")
    k = _max_accepted(far, n)
    rejected = float(scores[k])  # k < n because far < 1
    above = scores[scores > rejected]
    if above.size == 0:
        return float(np.nextafter(rejected, np.inf))
    upper = float(above.min())
    t = rejected + (upper - rejected) / 2.0
    if not rejected < t <= upper:
        t = upper
    return t


def empirical_far(impostor, threshold):
    scores = np.asarray(impostor, dtype=np.float64)
    return float(np.count_nonzero(scores >= threshold)) / scores.shape[0]


def verification_accuracy(scores, threshold):
    """Percentage of pairs classified correctly at ``threshold`` (accept on >=)."""
    g = np.asarray(scores.genuine, dtype=np.float64)
    i = np.asarray(scores.impostor, dtype=np.float64)
    if g.size == 0 or i.size == 0:
        raise ValueError(f"subgroup {scores.subgroup}: genuine and impostor scores must be non-empty")
    correct = np.count_nonzero(g >= threshold) + np.count_nonzero(i < threshold)
    return 100.0 * correct / (g.size + i.size)


def degree_of_bias(accuracies):
    """Sample standard deviation (n - 1 divisor) of per-subgroup accuracies."""
    acc = [float(a) for a in accuracies]
    if len(acc) < 2:
        raise ValueError("degree of bias needs at least two subgroups")
    return statistics.stdev(acc)


def summarize(score_sets, threshold=None, far=0.01, scope="pooled"):
    """Per-subgroup accuracy and DoB for one operating point.

    ``scope="pooled"`` thresholds every subgroup at the FAR point of the pooled
    impostor scores; ``scope="subgroup"`` gives each subgroup its own threshold.
    Returns the summary and the threshold(s) used.
    """
    if scope == "pooled":
        if threshold is None:
            pooled = np.concatenate([np.asarray(s.impostor, dtype=np.float64) for s in score_sets])
            threshold = far_threshold(pooled, far)
        thresholds = {s.subgroup: threshold for s in score_sets}
    elif scope == "subgroup":
        thresholds = {s.subgroup: far_threshold(s.impostor, far) for s in score_sets}
    else:
        raise ValueError(f"unknown threshold scope {scope!r}")
    accs = tuple(
        SubgroupAccuracy(s.subgroup, verification_accuracy(s, thresholds[s.subgroup])) for s in score_sets
    )
    return BiasSummary(accs, degree_of_bias([a.accuracy for a in accs])), thresholds


@dataclass(frozen=True)
class CurvePoint:
    intensity: str
    subgroup: str
    mean: float
    std: float
    n: int


def similarity_curve(clean, distorted_by_intensity, partition):
    """Mean and spread of clean-vs-distorted cosine similarity per subgroup.

    Args:
        clean: mapping of image key to clean embedding.
        distorted_by_intensity: ordered mapping of intensity label to a mapping
            of image key to distorted embedding.
        partition: mapping of subgroup label to the image keys it contains.

    The spread is the population standard deviation, so a single image gives 0.

    Raises:
        KeyError: listing keys missing from either side.
    """
    from .embed import cosine_similarity

    points = []
    for intensity, distorted in distorted_by_intensity.items():
        for subgroup, keys in partition.items():
            missing = [k for k in keys if k not in clean or k not in distorted]
            if missing:
                raise KeyError(f"intensity {intensity}, subgroup {subgroup}: missing keys {missing}")
            sims = [cosine_similarity(clean[k], distorted[k], zero_policy="basis") for k in keys]
            if not sims:
                raise ValueError(f"subgroup {subgroup} has no images")
            points.append(
                CurvePoint(intensity, subgroup, statistics.fmean(sims), statistics.pstdev(sims), len(sims))
            )
    return points
