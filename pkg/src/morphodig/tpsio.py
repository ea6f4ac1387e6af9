"""TPS specimen files and slider-definition CSV files.

The TPS dialect here is the TpsDig2 landmark subset: ``LM=`` blocks of
``x y`` lines followed by optional ``IMAGE=``, ``ID=`` and ``SCALE=`` keys.
Coordinates use the TPS y-up convention; ``pixel_to_tps`` converts from
image (y-down) pixel space. Writing is canonical (5 decimal places, LF) so
round-trips are byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from morphodig.schema import N_LANDMARKS, SliderTriplet


class TpsParseError(ValueError):
    """Malformed TPS or slider file; carries the offending line/row number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Specimen:
    landmarks: np.ndarray  # (n, 2) float, TPS y-up convention
    image_name: Optional[str] = None
    id: Optional[str] = None
    scale: Optional[float] = None

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=float)
        if self.landmarks.ndim != 2 or self.landmarks.shape[1] != 2:
            raise ValueError("landmarks must be an (n, 2) array")


def parse_tps(text: str) -> list[Specimen]:
    """Parse a TPS file into specimens, in file order.

    Tolerates CRLF endings, blank lines between records, surrounding
    whitespace, and case-insensitive keys. Records with a landmark count
    other than 72 parse fine; downstream validation flags them.
    """
    specimens: list[Specimen] = []
    lines = text.splitlines()
    i = 0
    n_lines = len(lines)
    while i < n_lines:
        raw = lines[i].strip()
        if not raw:
            i += 1
            continue
        key, _, value = raw.partition("=")
        if key.strip().upper() != "LM":
            raise TpsParseError(f"expected LM=<count>, got {raw!r}", i + 1)
        try:
            count = int(value.strip())
        except ValueError:
            raise TpsParseError(f"bad landmark count {value.strip()!r}", i + 1) from None
        if count < 0:
            raise TpsParseError(f"negative landmark count {count}", i + 1)
        i += 1
        coords = np.empty((count, 2), dtype=float)
        for k in range(count):
            if i >= n_lines:
                raise TpsParseError(
                    f"expected {count} coordinate lines, file ends after {k}", n_lines + 1)
            row = lines[i].strip()
            parts = row.split()
            if len(parts) != 2:
                raise TpsParseError(
                    f"expected {count} coordinate lines, got {row!r}", i + 1)
            try:
                coords[k] = (float(parts[0]), float(parts[1]))
            except ValueError:
                raise TpsParseError(f"non-numeric coordinate in {row!r}", i + 1) from None
            i += 1
        spec = Specimen(landmarks=coords)
        # Optional metadata keys, any order, until the next LM= or EOF.
        while i < n_lines:
            raw = lines[i].strip()
            if not raw:
                i += 1
                continue
            key, eq, value = raw.partition("=")
            key = key.strip().upper()
            if key == "LM":
                break
            if not eq:
                raise TpsParseError(f"expected key=value, got {raw!r}", i + 1)
            if key == "IMAGE":
                spec.image_name = value.strip()
            elif key == "ID":
                spec.id = value.strip()
            elif key == "SCALE":
                try:
                    spec.scale = float(value.strip())
                except ValueError:
                    raise TpsParseError(f"bad SCALE value {value.strip()!r}", i + 1) from None
            else:
                raise TpsParseError(f"unknown key {key!r}", i + 1)
            i += 1
        specimens.append(spec)
    return specimens


def write_tps(specimens: list[Specimen]) -> str:
    """Serialize specimens to canonical TPS text (5 decimals, LF endings)."""
    out: list[str] = []
    for idx, spec in enumerate(specimens):
        lm = np.asarray(spec.landmarks, dtype=float)
        if not np.isfinite(lm).all():
            raise ValueError(f"specimen {idx}: non-finite coordinates, refusing to write")
        out.append(f"LM={lm.shape[0]}")
        for x, y in lm:
            out.append(f"{x:.5f} {y:.5f}")
        if spec.image_name is not None:
            out.append(f"IMAGE={spec.image_name}")
        if spec.id is not None:
            out.append(f"ID={spec.id}")
        if spec.scale is not None:
            out.append(f"SCALE={spec.scale:.5f}")
    return "\n".join(out) + "\n" if out else ""


@dataclass
class SliderFile:
    triplets: list[SliderTriplet] = field(default_factory=list)


def parse_sliders(text: str) -> SliderFile:
    """Parse a slider CSV (``before,slide,after`` header, 1-based indices)."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or [p.strip().lower() for p in lines[0].split(",")] != ["before", "slide", "after"]:
        raise TpsParseError("expected header 'before,slide,after'", 1)
    triplets: list[SliderTriplet] = []
    for row, ln in enumerate(lines[1:], start=1):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 3:
            raise TpsParseError(f"expected 3 columns, got {ln!r}", row)
        try:
            b, s, a = (int(p) for p in parts)
        except ValueError:
            raise TpsParseError(f"non-integer index in {ln!r}", row) from None
        for v in (b, s, a):
            if not 1 <= v <= N_LANDMARKS:
                raise TpsParseError(f"index {v} outside 1..{N_LANDMARKS}", row)
        triplets.append(SliderTriplet(b, s, a))
    return SliderFile(triplets)


def write_sliders(triplets: list[SliderTriplet]) -> str:
    rows = ["before,slide,after"]
    rows += [f"{t.before},{t.slide},{t.after}" for t in triplets]
    return "\n".join(rows) + "\n"


def pixel_to_tps(points: np.ndarray, image_height: float) -> np.ndarray:
    """Convert y-down pixel coordinates to the TPS y-up convention."""
    if image_height <= 0:
        raise ValueError("image_height must be positive")
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    out[..., 1] = image_height - pts[..., 1]
    return out


def tps_to_pixel(points: np.ndarray, image_height: float) -> np.ndarray:
    """Inverse of :func:`pixel_to_tps`; the flip is an involution."""
    return pixel_to_tps(points, image_height)
