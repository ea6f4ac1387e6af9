"""Shape statistics: distinctiveness, asymmetry, repeatability, correlations.

Distinctiveness is a specimen's Procrustes distance from the group
consensus; asymmetry its distance from its own reflected-and-relabeled
copy. Repeatability is an ICC-style ratio of variance components from a
one-way Procrustes ANOVA over matched replicates, computed in a single
joint GPA frame. Correlations come with Fisher-z confidence intervals, and
bivariate log-covariance ellipses summarize replicate agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from morphodig.procrustes import AlignedSample, gpa, procrustes_distance, reflect_relabel
from morphodig.schema import PairMap
from morphodig.tpsio import Specimen


def distinctiveness(sample: AlignedSample) -> list[float]:
    """Per-specimen Procrustes distance from the consensus mean."""
    return [procrustes_distance(c, sample.mean) for c in sample.configs]


def asymmetry(sample: AlignedSample, pair_map: PairMap) -> list[float]:
    """Per-specimen distance between a configuration and its mirror.

    The mirror is reflected about the vertical centroid axis and has its
    bilateral landmark labels exchanged; the Procrustes re-fit inside the
    distance makes the score independent of the reflection axis choice.
    """
    return [procrustes_distance(c, reflect_relabel(c, pair_map))
            for c in sample.configs]


@dataclass
class ReplicatePair:
    rep1: list[Specimen]
    rep2: list[Specimen]

    def __post_init__(self):
        if len(self.rep1) != len(self.rep2):
            raise ValueError(
                f"replicate lengths differ: {len(self.rep1)} vs {len(self.rep2)}")
        if len(self.rep1) < 2:
            raise ValueError("need at least two specimens per replicate")


@dataclass
class AnovaTable:
    n: int
    k: int
    ss_among: float
    ss_within: float
    df_among: int
    df_within: int
    ms_among: float
    ms_within: float
    var_among: float
    var_within: float
    repeatability: float

    def as_dict(self) -> dict:
        return dict(n=self.n, k=self.k, ss_among=self.ss_among,
                    ss_within=self.ss_within, df_among=self.df_among,
                    df_within=self.df_within, ms_among=self.ms_among,
                    ms_within=self.ms_within, var_among=self.var_among,
                    var_within=self.var_within, repeatability=self.repeatability)


def repeatability(pair: ReplicatePair) -> AnovaTable:
    """One-way Procrustes ANOVA over matched replicates.

    All 2n configurations enter one joint GPA; sums of squares are plain
    Euclidean in that common frame (no per-pair re-superimposition).
    The repeatability R is the among-individual variance component over
    itself plus the within-individual (replicate) mean square, clamped so
    R stays in [0, 1].
    """
    n = len(pair.rep1)
    k = 2
    configs = [s.landmarks for s in pair.rep1] + [s.landmarks for s in pair.rep2]
    sample = gpa(configs)
    flat = sample.configs.reshape(k * n, -1)
    x = np.stack([flat[:n], flat[n:]])          # (k, n, dims)
    indiv_means = x.mean(axis=0)                # (n, dims)
    grand = x.reshape(k * n, -1).mean(axis=0)

    ss_among = k * float(((indiv_means - grand) ** 2).sum())
    ss_within = float(((x - indiv_means[None]) ** 2).sum())
    df_among = n - 1
    df_within = n * (k - 1)
    ms_among = ss_among / df_among
    ms_within = ss_within / df_within
    var_among = max(0.0, (ms_among - ms_within) / k)
    var_within = ms_within
    r = var_among / (var_among + ms_within) if (var_among + ms_within) > 0 else 0.0
    return AnovaTable(n=n, k=k, ss_among=ss_among, ss_within=ss_within,
                      df_among=df_among, df_within=df_within,
                      ms_among=ms_among, ms_within=ms_within,
                      var_among=var_among, var_within=var_within,
                      repeatability=r)


_Z95 = 1.959964


def pearson_ci(x: Sequence[float], y: Sequence[float],
               level: float = 0.95) -> tuple[float, float, float, float]:
    """Pearson r with a Fisher-z confidence interval.

    Returns (r, lo, hi, p) where p is the two-sided t-test p-value with
    n - 2 degrees of freedom.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 observations")
    if x.std() == 0 or y.std() == 0:
        raise ValueError("correlation undefined for constant input")
    r = float(np.corrcoef(x, y)[0, 1])
    lo, hi = fisher_interval(r, n, level)
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return r, lo, hi, p


def fisher_interval(r: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Fisher-z interval for a correlation observed on n samples."""
    if n < 4:
        raise ValueError("need n >= 4")
    r_safe = np.clip(r, -1.0 + 1e-12, 1.0 - 1e-12)
    z = np.arctanh(r_safe)
    se = 1.0 / np.sqrt(n - 3)
    zc = _Z95 if level == 0.95 else float(stats.norm.ppf(0.5 + level / 2.0))
    return float(np.tanh(z - zc * se)), float(np.tanh(z + zc * se))


@dataclass
class LogCovEllipses:
    center: np.ndarray          # mean of (ln x, ln y)
    cov: np.ndarray             # 2x2 covariance of the logs
    levels: tuple[float, ...]
    radii: tuple[float, ...]    # Mahalanobis radius per level
    log_r: float                # Pearson r of the logs


def mahalanobis_radius(level: float) -> float:
    """Radius containing ``level`` of a bivariate normal (chi-square, 2 df)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    return float(np.sqrt(-2.0 * np.log(1.0 - level)))


def log_cov_ellipses(x: Sequence[float], y: Sequence[float],
                     levels: tuple[float, ...] = (0.5, 0.9, 0.99)) -> LogCovEllipses:
    """Contour ellipses of the log-transformed joint distribution.

    Both inputs are distances with a meaningful zero, so the contours are
    fit on (ln x, ln y); strictly positive values required.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("log undefined: inputs must be strictly positive")
    logs = np.stack([np.log(x), np.log(y)])
    center = logs.mean(axis=1)
    cov = np.cov(logs)
    log_r = float(np.corrcoef(logs)[0, 1])
    radii = tuple(mahalanobis_radius(p) for p in levels)
    return LogCovEllipses(center=center, cov=cov, levels=tuple(levels),
                          radii=radii, log_r=log_r)
