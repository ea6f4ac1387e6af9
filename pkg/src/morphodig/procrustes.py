"""Procrustes superimposition for 2D landmark configurations.

Ordinary (pairwise) and generalized (sample-wide) alignment, the partial
Procrustes distance used throughout, reflection-relabeling for asymmetry
work, and chord-direction sliding of semilandmarks. Rotations are always
proper (determinant +1): allowing reflections would erase exactly the
asymmetry signal the downstream statistics measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from morphodig.schema import PairMap, SliderTriplet


class DegenerateShapeError(ValueError):
    """All landmarks coincide; the shape has no size to normalize away."""


def centroid_size(config: np.ndarray) -> float:
    """Square root of summed squared distances of points from their centroid."""
    c = np.asarray(config, dtype=float)
    size = float(np.sqrt(((c - c.mean(axis=0)) ** 2).sum()))
    if size == 0.0:
        raise DegenerateShapeError("all landmarks coincide; centroid size is zero")
    return size


def _preshape(config: np.ndarray) -> np.ndarray:
    """Center and scale to unit centroid size."""
    c = np.asarray(config, dtype=float)
    c = c - c.mean(axis=0)
    return c / centroid_size(c)


def _optimal_rotation(moving: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Proper 2D rotation minimizing ||moving @ R.T - reference||^2.

    Both inputs must already be centered. Closed form: the rotation angle
    is atan2 of the cross and dot products summed over landmarks.
    """
    dot = float((moving * reference).sum())
    cross = float((moving[:, 0] * reference[:, 1] - moving[:, 1] * reference[:, 0]).sum())
    theta = np.arctan2(cross, dot)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([[ct, -st], [st, ct]])


def opa_align(moving: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float]:
    """Partial Procrustes fit of ``moving`` onto ``reference``.

    Both are centered and scaled to unit centroid size, then ``moving`` is
    rotated (proper rotation only) to minimize the summed squared
    distance. Returns the aligned copy and that distance's square root.
    """
    m = _preshape(moving)
    r = _preshape(reference)
    if m.shape != r.shape:
        raise ValueError(f"landmark counts differ: {m.shape[0]} vs {r.shape[0]}")
    rot = _optimal_rotation(m, r)
    aligned = m @ rot.T
    # Closed form for unit preshapes: d^2 = 2 - 2*max_R <m R, r>. Exactly
    # symmetric in (m, r), so d(a, b) == d(b, a) bitwise.
    dot = float((m * r).sum())
    cross = float((m[:, 0] * r[:, 1] - m[:, 1] * r[:, 0]).sum())
    distance = float(np.sqrt(max(0.0, 2.0 - 2.0 * np.hypot(dot, cross))))
    return aligned, distance


def procrustes_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Partial Procrustes distance: Euclidean distance after optimal fit."""
    return opa_align(a, b)[1]


def reflect_relabel(config: np.ndarray, pair_map: PairMap) -> np.ndarray:
    """Mirror a configuration and re-home its bilateral landmark labels.

    The x-coordinates are negated (a vertical-axis reflection; any
    downstream Procrustes fit removes the translation difference from
    reflecting about the centroid axis instead), then the rows of each
    bilateral pair are exchanged so anatomical left/right correspond
    again. Negation and permutation are both exact, so applying twice is
    the bitwise identity.
    """
    c = np.asarray(config, dtype=float)
    mirrored = c.copy()
    mirrored[:, 0] = -c[:, 0]
    return mirrored[pair_map.permutation()]


@dataclass
class AlignedSample:
    configs: np.ndarray   # (n, k, 2) aligned, centered, unit centroid size
    mean: np.ndarray      # (k, 2) consensus, unit centroid size
    iterations: int
    converged: bool
    slid: bool


def _gpa_core(preshapes: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray, int, bool]:
    configs = preshapes.copy()
    mean = _preshape(configs[0])
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        for i in range(configs.shape[0]):
            rot = _optimal_rotation(configs[i], mean)
            configs[i] = configs[i] @ rot.T
        new_mean = _preshape(configs.mean(axis=0))
        shift = float(np.sqrt(((new_mean - mean) ** 2).sum()))
        mean = new_mean
        if shift < tol:
            converged = True
            break
    return configs, mean, iterations, converged


def _slide_once(configs: np.ndarray, mean: np.ndarray,
                sliders: Sequence[SliderTriplet]) -> np.ndarray:
    """Move each slider point along its chord toward the consensus.

    The chord direction comes from the configuration's own neighbors
    (after minus before, unit-normalized); the point moves by the
    projection of its residual to the mean onto that direction. Non-slider
    rows are untouched.
    """
    out = configs.copy()
    for t in sliders:
        b, s, a = t.before - 1, t.slide - 1, t.after - 1
        chord = out[:, a, :] - out[:, b, :]
        norm = np.sqrt((chord ** 2).sum(axis=1, keepdims=True))
        norm[norm == 0] = 1.0
        u = chord / norm
        resid = mean[None, s, :] - out[:, s, :]
        amount = (resid * u).sum(axis=1, keepdims=True)
        out[:, s, :] = out[:, s, :] + amount * u
    return out


def gpa(configs: Sequence[np.ndarray],
        sliders: Optional[Sequence[SliderTriplet]] = None,
        tol: float = 1e-8,
        max_iter: int = 100,
        slide_iter: int = 5) -> AlignedSample:
    """Generalized Procrustes analysis, optionally with sliding semilandmarks.

    Iteratively aligns every configuration to the running consensus until
    the consensus moves less than ``tol``. With sliders given, each
    converged fit is followed by one chord-direction sliding pass and a
    re-fit, for ``slide_iter`` rounds. The minimized criterion is summed
    squared Procrustes distance (not bending energy).
    """
    arr = np.stack([np.asarray(c, dtype=float) for c in configs])
    if arr.shape[0] < 2:
        raise ValueError("GPA needs at least two configurations")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite coordinates in input")
    pre = np.stack([_preshape(c) for c in arr])

    aligned, mean, iterations, converged = _gpa_core(pre, tol, max_iter)
    slid = False
    if sliders:
        for _ in range(slide_iter):
            aligned = _slide_once(aligned, mean, sliders)
            aligned = np.stack([_preshape(c) for c in aligned])
            aligned, mean, it2, converged = _gpa_core(aligned, tol, max_iter)
            iterations += it2
        slid = True
    return AlignedSample(configs=aligned, mean=mean, iterations=iterations,
                         converged=converged, slid=slid)
