"""Deterministic parametric face generator for training and evaluation.

Each face is a 72-point ground-truth configuration (a hand-built
mirror-symmetric template deformed by shape coefficients, an asymmetry
field, and a pose), a dense base mesh that is an exact fixed linear
function of the truth plus seeded detector noise, and a schematic grayscale
rendering (anti-aliased curves and filled discs) whose features coincide
with the true landmarks. Everything is a pure function of (params, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from morphodig.metrics import ReplicatePair
from morphodig.pipeline import BaseMesh, DEFAULT_MESH_SIZE
from morphodig.schema import N_LANDMARKS
from morphodig.tpsio import Specimen

_CX = 128.0  # template midline

# Index groups (1-based) moved together by each shape coefficient.
_EYES_L = (20, 21, 22, 23, 24, 25, 26, 71)
_EYES_R = (27, 28, 29, 30, 31, 32, 33, 72)
_BROWS = tuple(range(34, 50))
_MOUTH = (3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 68, 69, 70)
_NOSE = (13, 14, 15, 16, 17, 18, 19)
_JAW = (2, 50, 59) + tuple(range(51, 59)) + tuple(range(60, 68))
_IRIS_L = (22, 23, 24, 25)
_IRIS_R = (29, 30, 31, 32)

_IRIS_RADIUS = 9.0
_PUPIL_L = np.array([89.0, 110.0])
_PUPIL_R = np.array([167.0, 110.0])


def _jaw_point(t: float, side: float) -> tuple[float, float]:
    # Quarter-ellipse from the menton (t=0) up to the zygion (t=1).
    a = t * np.pi / 2.0
    return _CX + side * 70.0 * np.sin(a), 225.0 - 95.0 * (1.0 - np.cos(a))


def _brow_points(lateral: np.ndarray, medial: np.ndarray, arch: float) -> list[np.ndarray]:
    # Three points at regular parameter spacing, arched off the chord.
    out = []
    for t in (0.25, 0.5, 0.75):
        p = lateral + t * (medial - lateral)
        out.append(np.array([p[0], p[1] - arch * np.sin(np.pi * t)]))
    return out


def template() -> np.ndarray:
    """The undeformed, mirror-symmetric 72-point template (pixel y-down)."""
    p = np.zeros((N_LANDMARKS + 1, 2))  # 1-based scratch

    p[1] = (_CX, 40.0)      # trichion
    p[2] = (_CX, 225.0)     # menton
    p[3] = (_CX, 186.0)     # labiale inferius
    p[6] = (98.0, 178.0)    # cheilion L
    p[7] = (158.0, 178.0)   # cheilion R
    p[8] = (_CX, 172.0)     # labiale superius
    p[9] = (121.0, 170.0)   # christa philtri L
    p[10] = (135.0, 170.0)
    p[13] = (_CX, 152.0)    # subnasale
    p[14] = (122.0, 148.0)  # columella apex
    p[15] = (134.0, 148.0)
    p[16] = (111.0, 144.0)  # alare
    p[17] = (145.0, 144.0)
    p[18] = (114.0, 150.0)  # alae origin
    p[19] = (142.0, 150.0)
    p[68] = (_CX, 178.0)    # stomion
    p[4] = (p[3] + p[6]) / 2.0
    p[5] = (p[3] + p[7]) / 2.0
    p[11] = (p[8] + p[9]) / 2.0
    p[12] = (p[8] + p[10]) / 2.0
    p[69] = (p[68] + p[6]) / 2.0
    p[70] = (p[68] + p[7]) / 2.0

    p[71] = _PUPIL_L
    p[72] = _PUPIL_R
    r = _IRIS_RADIUS
    p[22] = _PUPIL_L + (0.0, -r)   # palpebrale superius = iris top
    p[23] = _PUPIL_L + (0.0, r)    # palpebrale inferius = iris bottom
    p[24] = _PUPIL_L + (-r, 0.0)   # outer (temporal) iris border
    p[25] = _PUPIL_L + (r, 0.0)
    p[30] = _PUPIL_R + (0.0, -r)
    p[29] = _PUPIL_R + (0.0, r)
    p[31] = _PUPIL_R + (r, 0.0)
    p[32] = _PUPIL_R + (-r, 0.0)
    p[20] = (107.0, 112.0)  # endocanthion L
    p[27] = (149.0, 112.0)
    p[21] = (71.0, 111.0)   # exocanthion L
    p[28] = (185.0, 111.0)
    p[26] = (p[20] + p[23]) / 2.0
    p[33] = (p[27] + p[29]) / 2.0

    p[34] = (66.0, 90.0)    # superciliare laterale L
    p[35] = (110.0, 86.0)   # superciliare mediale L
    p[36] = (190.0, 90.0)
    p[37] = (146.0, 86.0)
    p[38], p[39], p[40] = _brow_points(p[34], p[35], 5.0)
    p[41], p[42], p[43] = _brow_points(p[34], p[35], -3.0)
    p[44], p[45], p[46] = _brow_points(p[36], p[37], 5.0)
    p[47], p[48], p[49] = _brow_points(p[36], p[37], -3.0)

    p[50] = _jaw_point(1.0, -1.0)  # zygion L
    p[59] = _jaw_point(1.0, +1.0)
    for k in range(1, 9):
        p[50 + k] = _jaw_point(k / 9.0, -1.0)
        p[59 + k] = _jaw_point(k / 9.0, +1.0)

    return p[1:]


@dataclass
class FaceParams:
    """Shape multipliers (near 1), asymmetry field, pose, and noise knobs."""
    jaw_width: float = 1.0
    face_height: float = 1.0
    eye_spacing: float = 1.0
    eye_size: float = 1.0
    iris_radius: float = 1.0
    mouth_width: float = 1.0
    brow_arch: float = 1.0
    nose_width: float = 1.0
    asymmetry: Optional[np.ndarray] = None  # (72, 2) additive perturbation
    rotation: float = 0.0                   # radians about the canvas center
    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    pixel_noise_sd: float = 2.0
    mesh_jitter_sd: float = 1.0             # iid per-point detector noise
    mesh_shift_sd: float = 2.5              # per-face detector drift (px/axis)
    mesh_rot_sd: float = 0.004              # per-face drift, radians
    mesh_logscale_sd: float = 0.004
    seed: int = 0

    def __post_init__(self):
        for name in ("jaw_width", "face_height", "eye_spacing", "eye_size",
                     "iris_radius", "mouth_width", "brow_arch", "nose_width"):
            v = getattr(self, name)
            if not 0.5 <= v <= 2.0:
                raise ValueError(f"{name}={v} outside [0.5, 2]")
        if self.iris_radius >= 2.0 * self.eye_size:
            raise ValueError("iris must stay smaller than the eye")
        if self.asymmetry is not None:
            self.asymmetry = np.asarray(self.asymmetry, dtype=float)
            if self.asymmetry.shape != (N_LANDMARKS, 2):
                raise ValueError("asymmetry field must be 72x2")


def _scale_x(pts: np.ndarray, idx: Sequence[int], m: float) -> None:
    rows = [i - 1 for i in idx]
    pts[rows, 0] = _CX + (pts[rows, 0] - _CX) * m


def deform(base: np.ndarray, p: FaceParams) -> np.ndarray:
    """Apply shape coefficients, then the asymmetry field, then the pose."""
    pts = base.copy()
    _scale_x(pts, _JAW, p.jaw_width)
    _scale_x(pts, _MOUTH, p.mouth_width)
    _scale_x(pts, _NOSE, p.nose_width)
    # Eyes shift laterally as blocks; internal geometry scales separately.
    for block, pupil_idx in ((_EYES_L, 71), (_EYES_R, 72)):
        rows = [i - 1 for i in block]
        pupil = pts[pupil_idx - 1].copy()
        new_px = _CX + (pupil[0] - _CX) * p.eye_spacing
        pts[rows, 0] += new_px - pupil[0]
        pupil = pts[pupil_idx - 1].copy()
        pts[rows] = pupil + (pts[rows] - pupil) * p.eye_size
        iris_rows = [i - 1 for i in (_IRIS_L if pupil_idx == 71 else _IRIS_R)]
        extra = p.iris_radius / p.eye_size if p.eye_size != 0 else 1.0
        pts[iris_rows] = pupil + (pts[iris_rows] - pupil) * p.eye_size * extra
    _scale_x(pts, _BROWS, p.eye_spacing)  # brows follow the eyes laterally
    # Arch: amplify vertical offset of the curve points from their chord.
    for lat, med, curve in ((34, 35, (38, 39, 40)), (34, 35, (41, 42, 43)),
                            (36, 37, (44, 45, 46)), (36, 37, (47, 48, 49))):
        a, b = pts[lat - 1], pts[med - 1]
        for t, i in zip((0.25, 0.5, 0.75), curve):
            chord_y = a[1] + t * (b[1] - a[1])
            pts[i - 1, 1] = chord_y + (pts[i - 1, 1] - chord_y) * p.brow_arch
    pts[:, 1] = 130.0 + (pts[:, 1] - 130.0) * p.face_height

    if p.asymmetry is not None:
        pts = pts + p.asymmetry

    # Pose: rotate/scale about the canvas center, then translate.
    center = np.array([128.0, 128.0])
    ct, st = np.cos(p.rotation), np.sin(p.rotation)
    rot = np.array([[ct, -st], [st, ct]])
    pts = (pts - center) @ rot.T * p.scale + center + np.asarray(p.translation)
    return pts


# ---------------------------------------------------------------------------
# Fixed truth -> mesh map
# ---------------------------------------------------------------------------

_MESH_MAP_SEED = 20240101
_mesh_map_cache: dict[int, np.ndarray] = {}


def mesh_map(mesh_size: int = DEFAULT_MESH_SIZE) -> np.ndarray:
    """Fixed (M, 72) convex-weight matrix mapping truth points to the mesh.

    Each mesh point is a sparse convex combination of a few landmarks, so
    the mesh lies on the face and is an exact linear function of the truth.
    """
    if mesh_size not in _mesh_map_cache:
        rng = np.random.default_rng(_MESH_MAP_SEED + mesh_size)
        w = np.zeros((mesh_size, N_LANDMARKS))
        for m in range(mesh_size):
            support = rng.choice(N_LANDMARKS, size=4, replace=False)
            w[m, support] = rng.dirichlet(np.ones(4))
        _mesh_map_cache[mesh_size] = w
    return _mesh_map_cache[mesh_size]


# ---------------------------------------------------------------------------
# Rendering primitives (no image library: analytic coverage rasterization)
# ---------------------------------------------------------------------------

def _blend(img: np.ndarray, alpha: np.ndarray, value: float) -> None:
    img *= (1.0 - alpha)
    img += value * alpha


def _draw_disc(img: np.ndarray, center: np.ndarray, radius: float, value: float) -> None:
    h, w = img.shape
    cx, cy = center
    x0 = max(int(cx - radius) - 2, 0)
    x1 = min(int(cx + radius) + 3, w)
    y0 = max(int(cy - radius) - 2, 0)
    y1 = min(int(cy + radius) + 3, h)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    _blend(img[y0:y1, x0:x1], alpha, value)


def _polyline_samples(pts: np.ndarray, step: float = 0.25) -> np.ndarray:
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.hypot(*(b - a)))
        n = max(int(np.ceil(length / step)), 1)
        t = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        segs.append(a + t * (b - a))
    segs.append(pts[-1:])
    return np.concatenate(segs)


def _draw_polyline(img: np.ndarray, pts: np.ndarray, value: float,
                   width: float = 1.5) -> None:
    """Anti-aliased polyline via a per-pixel distance field to dense samples."""
    h, w = img.shape
    samples = _polyline_samples(np.asarray(pts, dtype=float))
    reach = int(np.ceil(width / 2.0 + 1.0))
    dist = np.full((h, w), np.inf)
    offs = np.arange(-reach, reach + 1)
    base_x = np.floor(samples[:, 0]).astype(int)
    base_y = np.floor(samples[:, 1]).astype(int)
    for dy in offs:
        for dx in offs:
            px = base_x + dx
            py = base_y + dy
            ok = (px >= 0) & (px < w) & (py >= 0) & (py < h)
            if not ok.any():
                continue
            d = np.hypot(px[ok] - samples[ok, 0], py[ok] - samples[ok, 1])
            np.minimum.at(dist, (py[ok], px[ok]), d)
    alpha = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    touched = alpha > 0
    if touched.any():
        img[touched] = img[touched] * (1.0 - alpha[touched]) + value * alpha[touched]


def _bezier3(p0: np.ndarray, mid: np.ndarray, p1: np.ndarray, n: int = 24) -> np.ndarray:
    # Quadratic Bezier forced through the midpoint sample.
    ctrl = 2.0 * mid - 0.5 * (p0 + p1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * ctrl + t ** 2 * p1


def render_face(truth: np.ndarray, canvas: tuple[int, int] = (256, 256),
                noise_sd: float = 0.0, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Schematic grayscale rendering whose curves pass through the landmarks."""
    w, h = canvas
    img = np.full((h, w), 235.0)
    g = lambda i: truth[i - 1]  # 1-based accessor

    # Jaw outline through the menton and both zygions.
    jaw = np.stack([g(i) for i in (50, 58, 57, 56, 55, 54, 53, 52, 51, 2,
                                   60, 61, 62, 63, 64, 65, 66, 67, 59)])
    _draw_polyline(img, jaw, 70.0, width=2.0)
    # Hairline arc zygion -> trichion -> zygion.
    _draw_polyline(img, _bezier3(g(50), g(1), g(59), n=48), 70.0, width=2.0)

    # Brows.
    for chain in ((34, 38, 39, 40, 35), (34, 41, 42, 43, 35),
                  (36, 44, 45, 46, 37), (36, 47, 48, 49, 37)):
        _draw_polyline(img, np.stack([g(i) for i in chain]), 80.0, width=2.0)

    # Eyes: iris and pupil discs plus eyelid arcs through the corners.
    for pupil_i, top_i, bot_i, endo, exo in ((71, 22, 23, 20, 21),
                                             (72, 30, 29, 27, 28)):
        pupil = g(pupil_i)
        r = float(np.hypot(*(g(top_i) - pupil)))
        _draw_disc(img, pupil, r, 120.0)
        _draw_disc(img, pupil, max(r / 3.0, 1.5), 30.0)
        _draw_polyline(img, _bezier3(g(exo), g(top_i) + (0.0, -1.0), g(endo)), 70.0)
        _draw_polyline(img, _bezier3(g(exo), g(bot_i) + (0.0, 1.0), g(endo)), 70.0)

    # Nose.
    _draw_polyline(img, np.stack([g(16), g(18), g(13)]), 110.0)
    _draw_polyline(img, np.stack([g(17), g(19), g(13)]), 110.0)
    _draw_polyline(img, np.stack([g(14), g(13)]), 110.0)
    _draw_polyline(img, np.stack([g(15), g(13)]), 110.0)

    # Mouth: vermilion outlines and the lip crack.
    _draw_polyline(img, np.stack([g(i) for i in (6, 9, 8, 10, 7)]), 100.0, width=2.0)
    _draw_polyline(img, np.stack([g(i) for i in (6, 4, 3, 5, 7)]), 100.0, width=2.0)
    _draw_polyline(img, np.stack([g(i) for i in (6, 69, 68, 70, 7)]), 60.0, width=2.0)

    if noise_sd > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        img += rng.normal(0.0, noise_sd, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_face(params: FaceParams, canvas: tuple[int, int] = (256, 256),
                  mesh_size: int = DEFAULT_MESH_SIZE,
                  image_name: str = "") -> tuple[np.ndarray, BaseMesh, np.ndarray]:
    """One synthetic face: (grayscale image, base mesh, true 72x2 config)."""
    truth = deform(template(), params)
    w, h = canvas
    if (truth[:, 0].min() < 0 or truth[:, 0].max() > w - 1
            or truth[:, 1].min() < 0 or truth[:, 1].max() > h - 1):
        raise ValueError("canvas too small for the posed face")

    rng = np.random.default_rng(params.seed)
    clean = np.column_stack([mesh_map(mesh_size) @ truth[:, 0],
                             mesh_map(mesh_size) @ truth[:, 1]])
    mesh_pts = clean
    # Per-face detector drift: a small similarity wobble of the whole mesh.
    if params.mesh_shift_sd > 0 or params.mesh_rot_sd > 0 or params.mesh_logscale_sd > 0:
        ang = rng.normal(0.0, params.mesh_rot_sd)
        sc = np.exp(rng.normal(0.0, params.mesh_logscale_sd))
        shift = rng.normal(0.0, params.mesh_shift_sd, size=2)
        ct, st = np.cos(ang), np.sin(ang)
        rot = np.array([[ct, -st], [st, ct]])
        c = mesh_pts.mean(axis=0)
        mesh_pts = (mesh_pts - c) @ rot.T * sc + c + shift
    if params.mesh_jitter_sd > 0:
        mesh_pts = mesh_pts + rng.normal(0.0, params.mesh_jitter_sd, size=mesh_pts.shape)

    image = render_face(truth, canvas, noise_sd=params.pixel_noise_sd, rng=rng)
    mesh = BaseMesh(points=mesh_pts, image_name=image_name, image_size=canvas)
    return image, mesh, truth


_SHAPE_FIELDS = ("jaw_width", "face_height", "eye_spacing", "eye_size",
                 "iris_radius", "mouth_width", "brow_arch", "nose_width")


def generate_population(n: int, spread: float = 0.06, seed: int = 0,
                        canvas: tuple[int, int] = (256, 256),
                        mesh_size: int = DEFAULT_MESH_SIZE,
                        pixel_noise_sd: float = 2.0,
                        **param_overrides) -> list[tuple[np.ndarray, BaseMesh, np.ndarray]]:
    """Draw n faces with Gaussian shape coefficients around the template."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    faces = []
    for i in range(n):
        coeffs = {f: float(np.clip(1.0 + spread * rng.standard_normal(), 0.7, 1.4))
                  for f in _SHAPE_FIELDS}
        pose = dict(rotation=float(rng.normal(0.0, 0.015)),
                    translation=tuple(rng.normal(0.0, 2.0, size=2)),
                    scale=float(np.clip(1.0 + rng.normal(0.0, 0.02), 0.9, 1.1)))
        face_seed = int(rng.integers(0, 2**31 - 1))
        params = FaceParams(**coeffs, **pose, pixel_noise_sd=pixel_noise_sd,
                            seed=face_seed, **param_overrides)
        faces.append(generate_face(params, canvas=canvas, mesh_size=mesh_size,
                                   image_name=f"face_{i:03d}.pgm"))
    return faces


def make_replicates(population, landmark_noise_sd: float, seed: int = 0) -> ReplicatePair:
    """Simulated digitizer replicates: truths vs truths + isotropic noise.

    ``population`` is either the output of :func:`generate_population` or a
    plain list of 72x2 configurations.
    """
    if landmark_noise_sd < 0:
        raise ValueError("noise SD must be nonnegative")
    truths = [item[2] if isinstance(item, tuple) else np.asarray(item, dtype=float)
              for item in population]
    rng = np.random.default_rng(seed)
    rep1 = [Specimen(landmarks=t.copy(), id=str(i)) for i, t in enumerate(truths)]
    rep2 = [Specimen(landmarks=t + rng.normal(0.0, landmark_noise_sd, size=t.shape),
                     id=str(i)) for i, t in enumerate(truths)]
    return ReplicatePair(rep1=rep1, rep2=rep2)


# ---------------------------------------------------------------------------
# Binary PGM (P5) image I/O
# ---------------------------------------------------------------------------

def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # Header: magic, width, height, maxval, separated by whitespace/comments.
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[i:i + 1]
        if ch == b"#":
            i = data.index(b"\n", i) + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pixels = np.frombuffer(data[i + 1:i + 1 + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).copy()
