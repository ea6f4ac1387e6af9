"""The 72-point frontal facial landmark schema.

Static tables: landmark definitions (name, kind, side), the bilateral pair
map used for reflection-relabeling, and the default sliding-semilandmark
triplets for the jaw and eyebrow curves. All tables are immutable and safe
for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

N_LANDMARKS = 72

# Indices of points on the facial midline (1-based).
MIDLINE = frozenset({1, 2, 3, 8, 13, 68})

# Bilateral pairs (first, second); the first index is the point on the
# viewer's left in an enface photo.
PAIRS: tuple[tuple[int, int], ...] = (
    (4, 5), (6, 7), (9, 10), (11, 12), (14, 15), (16, 17), (18, 19),
    (20, 27), (21, 28), (22, 30), (23, 29), (24, 31), (25, 32), (26, 33),
    (34, 36), (35, 37), (38, 44), (39, 45), (40, 46), (41, 47), (42, 48),
    (43, 49), (50, 59), (51, 60), (52, 61), (53, 62), (54, 63), (55, 64),
    (56, 65), (57, 66), (58, 67), (69, 70), (71, 72),
)


class Kind(str, Enum):
    ANATOMICAL = "anatomical"
    CURVE_SEMILANDMARK = "curve_semilandmark"
    CONSTRUCTED_MIDPOINT = "constructed_midpoint"


class Side(str, Enum):
    MIDLINE = "midline"
    FIRST_OF_PAIR = "first_of_pair"
    SECOND_OF_PAIR = "second_of_pair"


@dataclass(frozen=True)
class LandmarkDef:
    index: int  # 1-based
    name: str   # empty for unnamed constructed midpoints
    kind: Kind
    side: Side


@dataclass(frozen=True)
class PairMap:
    pairs: tuple[tuple[int, int], ...]
    midline: frozenset[int]

    def permutation(self) -> np.ndarray:
        """0-based row permutation exchanging each bilateral pair."""
        perm = np.arange(N_LANDMARKS)
        for a, b in self.pairs:
            perm[a - 1], perm[b - 1] = b - 1, a - 1
        return perm


@dataclass(frozen=True)
class SliderTriplet:
    before: int
    slide: int
    after: int

    def __iter__(self):
        return iter((self.before, self.slide, self.after))


_NAMES = {
    1: "TRICHION", 2: "MENTON", 3: "LABIALE INFERIUS",
    6: "CHEILON", 7: "CHEILON",
    8: "LABIALE SUPERIUS", 9: "CHRISTA PHILTRI", 10: "CHRISTA PHILTRI",
    13: "SUBNASALE", 14: "COLUMELLA APEX", 15: "COLUMELLA APEX",
    16: "ALARE", 17: "ALARE", 18: "ALAE ORIGIN", 19: "ALAE ORIGIN",
    20: "ENDOCANTHION", 27: "ENDOCANTHION",
    21: "EXOCANTHION", 28: "EXOCANTHION",
    22: "PALPEBRALE SUPERIUS", 30: "PALPEBRALE SUPERIUS",
    23: "PALPEBRALE INFERIUS", 29: "PALPEBRALE INFERIUS",
    24: "IRIS OUTER BORDER", 31: "IRIS OUTER BORDER",
    25: "IRIS INNER BORDER", 32: "IRIS INNER BORDER",
    34: "SUPERCILIARE LATERALE", 36: "SUPERCILIARE LATERALE",
    35: "SUPERCILIARE MEDIALE", 37: "SUPERCILIARE MEDIALE",
    50: "ZYGION", 59: "ZYGION",
    68: "STOMION", 71: "PUPIL", 72: "PUPIL",
}

_MIDPOINTS = frozenset({4, 5, 11, 12, 26, 33, 69, 70})
_CURVE_POINTS = frozenset(range(38, 50)) | frozenset(range(51, 59)) | frozenset(range(60, 68))


def _kind(i: int) -> Kind:
    if i in _MIDPOINTS:
        return Kind.CONSTRUCTED_MIDPOINT
    if i in _CURVE_POINTS:
        return Kind.CURVE_SEMILANDMARK
    return Kind.ANATOMICAL


def _side(i: int) -> Side:
    if i in MIDLINE:
        return Side.MIDLINE
    for a, b in PAIRS:
        if i == a:
            return Side.FIRST_OF_PAIR
        if i == b:
            return Side.SECOND_OF_PAIR
    raise AssertionError(f"index {i} neither midline nor paired")


LANDMARKS: tuple[LandmarkDef, ...] = tuple(
    LandmarkDef(i, _NAMES.get(i, ""), _kind(i), _side(i))
    for i in range(1, N_LANDMARKS + 1)
)


def pair_map() -> PairMap:
    """The fixed bilateral pair table of the 72-point schema."""
    return PairMap(pairs=PAIRS, midline=MIDLINE)


# Jaw chains: eight evenly spaced points per side between the menton (2)
# and each zygion (50, 59); eyebrow chains: three points per curve between
# the lateral (34, 36) and medial (35, 37) brow endpoints.
_JAW_LEFT = (2, 51, 52, 53, 54, 55, 56, 57, 58, 50)
_JAW_RIGHT = (2, 60, 61, 62, 63, 64, 65, 66, 67, 59)
_BROW_CHAINS = (
    (34, 38, 39, 40, 35),
    (34, 41, 42, 43, 35),
    (36, 44, 45, 46, 37),
    (36, 47, 48, 49, 37),
)
# Constructed midpoints anchored to their defining endpoints.
_MIDPOINT_TRIPLETS = (
    (3, 4, 6), (3, 5, 7), (8, 11, 9), (8, 12, 10),
    (68, 69, 6), (68, 70, 7), (20, 26, 23), (27, 33, 29),
)


def _chain_triplets(chain: tuple[int, ...]) -> list[SliderTriplet]:
    return [SliderTriplet(chain[k - 1], chain[k], chain[k + 1])
            for k in range(1, len(chain) - 1)]


def default_sliders(include_midpoints: bool = False) -> list[SliderTriplet]:
    """Default slider triplets: 28 curve sliders, 36 with midpoints included."""
    out: list[SliderTriplet] = []
    out += _chain_triplets(_JAW_LEFT)
    out += _chain_triplets(_JAW_RIGHT)
    for chain in _BROW_CHAINS:
        out += _chain_triplets(chain)
    if include_midpoints:
        out += [SliderTriplet(*t) for t in _MIDPOINT_TRIPLETS]
    return out


@dataclass
class ValidationReport:
    non_finite: list[int]                 # 1-based landmark indices
    out_of_bounds: list[int]              # 1-based landmark indices
    swapped_pairs: list[tuple[int, int]]  # suspected left/right swaps
    duplicates: list[tuple[int, int]]     # pairs of near-coincident points

    def ok(self) -> bool:
        return not (self.non_finite or self.out_of_bounds
                    or self.swapped_pairs or self.duplicates)

    def messages(self) -> list[str]:
        msgs = [f"non-finite coordinate at landmark {i}" for i in self.non_finite]
        msgs += [f"landmark {i} outside image bounds" for i in self.out_of_bounds]
        msgs += [f"suspected left/right swap of pair ({a},{b})"
                 for a, b in self.swapped_pairs]
        msgs += [f"landmarks {a} and {b} nearly coincident"
                 for a, b in self.duplicates]
        return msgs


def validate_config(config, image_size=None, dup_eps_rel: float = 1e-6) -> ValidationReport:
    """Sanity-check a 72x2 configuration before it enters any analysis.

    Flags non-finite coordinates, points outside the image (when a
    (width, height) is given), bilateral pairs whose signed x-order
    disagrees with the majority of pairs (likely left/right swaps), and
    near-duplicate points closer than ``dup_eps_rel`` of centroid size.
    """
    c = np.asarray(config, dtype=float)
    if c.shape != (N_LANDMARKS, 2):
        raise ValueError(f"expected a {N_LANDMARKS}x2 configuration, got shape {c.shape}")

    finite = np.isfinite(c).all(axis=1)
    non_finite = [i + 1 for i in np.flatnonzero(~finite)]

    out_of_bounds: list[int] = []
    if image_size is not None:
        w, h = image_size
        inside = (c[:, 0] >= 0) & (c[:, 0] <= w) & (c[:, 1] >= 0) & (c[:, 1] <= h)
        out_of_bounds = [i + 1 for i in np.flatnonzero(finite & ~inside)]

    swapped_pairs: list[tuple[int, int]] = []
    duplicates: list[tuple[int, int]] = []
    if not non_finite:
        # Majority vote on the signed x-order of bilateral pairs.
        signs = np.sign([c[b - 1, 0] - c[a - 1, 0] for a, b in PAIRS])
        majority = 1.0 if (signs > 0).sum() >= (signs < 0).sum() else -1.0
        swapped_pairs = [(a, b) for (a, b), s in zip(PAIRS, signs)
                         if s != 0 and s != majority]

        centroid = c.mean(axis=0)
        size = float(np.sqrt(((c - centroid) ** 2).sum()))
        if size > 0:
            d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=2))
            ii, jj = np.triu_indices(N_LANDMARKS, k=1)
            close = d[ii, jj] < dup_eps_rel * size
            duplicates = [(int(i) + 1, int(j) + 1)
                          for i, j in zip(ii[close], jj[close])]

    return ValidationReport(non_finite, out_of_bounds, swapped_pairs, duplicates)
