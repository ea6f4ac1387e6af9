"""Two-stage landmark digitizer: linear mesh projection + patch refiner.

Stage one is a trained linear layer mapping a dense base mesh (hundreds of
detector points, consumed from files) to the 72-point configuration. Stage
two is a small convolutional network that looks at a square grayscale patch
around each rough point and predicts a corrective pixel offset. Both stages
are plain numpy with hand-written gradients so every parameter is
finite-difference checkable; training is deterministic given a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from morphodig.schema import N_LANDMARKS
from morphodig.tpsio import Specimen, pixel_to_tps

MODEL_VERSION = 1
DEFAULT_MESH_SIZE = 468
DEFAULT_PATCH_SIZE = 33


@dataclass
class BaseMesh:
    """Dense detector point set for one image, pixel coordinates (y-down)."""
    points: np.ndarray          # (M, 2) float
    image_name: str = ""
    image_size: tuple[int, int] = (256, 256)  # (w, h)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("mesh points must be an (M, 2) array")
        if not np.isfinite(self.points).all():
            raise ValueError("mesh contains non-finite points")


def save_mesh(mesh: BaseMesh, path) -> None:
    doc = {"image": mesh.image_name, "width": mesh.image_size[0],
           "height": mesh.image_size[1], "points": mesh.points.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_mesh(path) -> BaseMesh:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return BaseMesh(points=np.array(doc["points"], dtype=float),
                    image_name=doc.get("image", ""),
                    image_size=(int(doc["width"]), int(doc["height"])))


def _normalize_mesh(mesh: BaseMesh) -> np.ndarray:
    """Flatten mesh coordinates, affinely mapped per image to [-1, 1]^2."""
    w, h = mesh.image_size
    pts = mesh.points
    norm = np.empty_like(pts)
    norm[:, 0] = 2.0 * pts[:, 0] / w - 1.0
    norm[:, 1] = 2.0 * pts[:, 1] / h - 1.0
    return norm.ravel()


@dataclass
class ProjectionLayer:
    """Linear map from the normalized flattened mesh to 72 pixel points."""
    weights: np.ndarray  # (144, 2M)
    bias: np.ndarray     # (144,)
    mesh_size: int

    def predict(self, mesh: BaseMesh) -> np.ndarray:
        if mesh.points.shape[0] != self.mesh_size:
            raise ValueError(
                f"mesh has {mesh.points.shape[0]} points, layer expects {self.mesh_size}")
        flat = self.weights @ _normalize_mesh(mesh) + self.bias
        return flat.reshape(N_LANDMARKS, 2)


def _design_matrices(meshes: Sequence[BaseMesh],
                     targets: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, int]:
    if len(meshes) != len(targets) or len(meshes) < 2:
        raise ValueError("need matched mesh/target lists with at least 2 entries")
    m = meshes[0].points.shape[0]
    for mesh in meshes:
        if mesh.points.shape[0] != m:
            raise ValueError("inconsistent mesh sizes across the dataset")
    x = np.stack([_normalize_mesh(mesh) for mesh in meshes])
    y = np.stack([np.asarray(t, dtype=float).ravel() for t in targets])
    if y.shape[1] != 2 * N_LANDMARKS:
        raise ValueError(f"targets must be {N_LANDMARKS}x2 configurations")
    return x, y, m


def train_projection(meshes: Sequence[BaseMesh],
                     targets: Sequence[np.ndarray],
                     epochs: int = 150,
                     seed: int = 0,
                     batch_size: int = 32,
                     lr: float = 1e-2,
                     lr_decay: float = 0.5,
                     decay_every: int = 50) -> tuple[ProjectionLayer, list[float]]:
    """Fit the projection by mini-batch gradient descent on squared error.

    Features and targets are centered internally (the offsets are folded
    back into the bias afterwards) so the step size is governed by the
    shape variation rather than by the mean face. Deterministic given the
    seed. Returns the layer and the per-epoch training MSE curve.
    """
    x, y, m = _design_matrices(meshes, targets)
    n = x.shape[0]
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y

    rng = np.random.default_rng(seed)
    w = np.zeros((y.shape[1], x.shape[1]))
    b = np.zeros(y.shape[1])
    losses: list[float] = []
    step = lr
    for epoch in range(epochs):
        if epoch > 0 and decay_every > 0 and epoch % decay_every == 0:
            step *= lr_decay
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = xc[idx], yc[idx]
            resid = xb @ w.T + b - yb          # (B, 144)
            gw = (2.0 / idx.size) * resid.T @ xb
            gb = (2.0 / idx.size) * resid.sum(axis=0)
            w -= step * gw
            b -= step * gb
        losses.append(float(((xc @ w.T + b - yc) ** 2).mean()))
    bias = b + mu_y - w @ mu_x
    return ProjectionLayer(weights=w, bias=bias, mesh_size=m), losses


def solve_projection_ridge(meshes: Sequence[BaseMesh],
                           targets: Sequence[np.ndarray],
                           lam: float = 1e-3) -> ProjectionLayer:
    """Closed-form ridge solution: (X'X/n + lam I) W' = X'Y/n on centered data.

    The Gram matrix is normalized by the sample count, so duplicating
    every training row leaves the solution unchanged.
    """
    x, y, m = _design_matrices(meshes, targets)
    n = x.shape[0]
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y
    gram = xc.T @ xc / n + lam * np.eye(x.shape[1])
    try:
        wt = np.linalg.solve(gram, xc.T @ yc / n)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular normal equations (lam={lam}): {exc}") from exc
    # contiguous copy so predictions are bit-identical after a save/load
    # round trip (BLAS results depend on the operand memory layout)
    w = np.ascontiguousarray(wt.T)
    bias = mu_y - w @ mu_x
    return ProjectionLayer(weights=w, bias=bias, mesh_size=m)


def extract_patch(image: np.ndarray, center: tuple[float, float], size: int) -> np.ndarray:
    """Square grayscale patch around the rounded center, values in [0, 1].

    Out-of-image pixels are filled by edge replication, so a patch at an
    image corner still has the full size.
    """
    if size % 2 != 1:
        raise ValueError("patch size must be odd")
    img = np.asarray(image)
    h, w = img.shape
    half = size // 2
    cx = int(np.rint(center[0]))
    cy = int(np.rint(center[1]))
    rows = np.clip(np.arange(cy - half, cy + half + 1), 0, h - 1)
    cols = np.clip(np.arange(cx - half, cx + half + 1), 0, w - 1)
    return img[np.ix_(rows, cols)].astype(float) / 255.0


# ---------------------------------------------------------------------------
# Patch refiner: conv(8) -> relu -> pool -> conv(16) -> relu -> pool ->
# flatten -> concat one-hot landmark index -> dense(32) -> relu -> dense(2)
# ---------------------------------------------------------------------------

_K = 3          # conv kernel side
_C1, _C2 = 8, 16
_HIDDEN = 32


def _conv_out(size: int) -> int:
    return size - _K + 1


def _feature_len(patch_size: int) -> int:
    s = _conv_out(patch_size) // 2
    s = _conv_out(s) // 2
    if s < 1:
        raise ValueError(f"patch size {patch_size} too small for the layer stack")
    return s * s * _C2


@dataclass
class PatchRefiner:
    patch_size: int
    weights: dict[str, np.ndarray]
    n_landmarks: int = N_LANDMARKS
    # Preprocessing constant subtracted from patch values before the first
    # conv layer; centering the mostly-bright patches speeds up training.
    input_offset: float = 0.85

    def offset_limit(self) -> float:
        return self.patch_size / 2.0


def init_refiner(patch_size: int = DEFAULT_PATCH_SIZE, seed: int = 0,
                 n_landmarks: int = N_LANDMARKS) -> PatchRefiner:
    """He-initialized refiner; the final layer starts at zero offsets."""
    feat = _feature_len(patch_size)
    rng = np.random.default_rng(seed)
    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    weights = {
        "conv1_w": he((_C1, 1, _K, _K), _K * _K),
        "conv1_b": np.zeros(_C1),
        "conv2_w": he((_C2, _C1, _K, _K), _C1 * _K * _K),
        "conv2_b": np.zeros(_C2),
        "fc1_w": he((_HIDDEN, feat + n_landmarks), feat + n_landmarks),
        "fc1_b": np.zeros(_HIDDEN),
        "fc2_w": np.zeros((2, _HIDDEN)),
        "fc2_b": np.zeros(2),
    }
    return PatchRefiner(patch_size=patch_size, weights=weights,
                        n_landmarks=n_landmarks)


def _im2col(x: np.ndarray) -> np.ndarray:
    # x: (B, C, H, W) -> (B, Ho, Wo, C*K*K)
    win = np.lib.stride_tricks.sliding_window_view(x, (_K, _K), axis=(2, 3))
    # win: (B, C, Ho, Wo, K, K)
    b, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * _K * _K)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    cols = _im2col(x)
    wmat = w.reshape(w.shape[0], -1)
    out = cols @ wmat.T + b
    return out.transpose(0, 3, 1, 2), cols  # (B, F, Ho, Wo)


def _conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray,
                   x_shape: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b_, f, ho, wo = dout.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, f)        # (B*Ho*Wo, F)
    colflat = cols.reshape(-1, cols.shape[-1])
    dw = (dflat.T @ colflat).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(f, -1)).reshape(b_, ho, wo, -1)
    c = x_shape[1]
    dcols = dcols.reshape(b_, ho, wo, c, _K, _K)
    dx = np.zeros(x_shape)
    for ki in range(_K):
        for kj in range(_K):
            dx[:, :, ki:ki + ho, kj:kj + wo] += dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x: np.ndarray):
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    xr = x[:, :, :ho * 2, :wo * 2].reshape(b, c, ho, 2, wo, 2)
    xw = xr.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, 4)
    arg = xw.argmax(axis=-1)
    out = np.take_along_axis(xw, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def _pool_backward(dout: np.ndarray, cache) -> np.ndarray:
    arg, x_shape = cache
    b, c, h, w = x_shape
    ho, wo = h // 2, w // 2
    dwin = np.zeros((b, c, ho, wo, 4))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, :ho * 2, :wo * 2] = (
        dwin.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ho * 2, wo * 2))
    return dx


def _forward(r: PatchRefiner, patches: np.ndarray, indices: np.ndarray,
             clamp: bool = True):
    """Batched forward pass; returns offsets (B, 2) and the backward cache."""
    w = r.weights
    x = np.asarray(patches, dtype=float)[:, None, :, :] - r.input_offset  # (B, 1, S, S)
    if x.shape[2] != r.patch_size or x.shape[3] != r.patch_size:
        raise ValueError(
            f"patch shape {x.shape[2:]} does not match refiner size {r.patch_size}")
    z1, cols1 = _conv_forward(x, w["conv1_w"], w["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    p1, pc1 = _pool_forward(a1)
    z2, cols2 = _conv_forward(p1, w["conv2_w"], w["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    p2, pc2 = _pool_forward(a2)
    flat = p2.reshape(p2.shape[0], -1)
    onehot = np.zeros((flat.shape[0], r.n_landmarks))
    onehot[np.arange(flat.shape[0]), np.asarray(indices, dtype=int)] = 1.0
    feat = np.concatenate([flat, onehot], axis=1)
    z3 = feat @ w["fc1_w"].T + w["fc1_b"]
    a3 = np.maximum(z3, 0.0)
    out = a3 @ w["fc2_w"].T + w["fc2_b"]
    limit = r.offset_limit()
    clamped = np.clip(out, -limit, limit) if clamp else out
    cache = (x, z1, cols1, a1, p1, pc1, z2, cols2, a2, pc2, feat, z3, a3, out)
    return clamped, cache


def _backward(r: PatchRefiner, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every weight, given d loss/d output."""
    w = r.weights
    (x, z1, cols1, a1, p1, pc1, z2, cols2, a2, pc2, feat, z3, a3, out) = cache
    limit = r.offset_limit()
    dout = dout * (np.abs(out) < limit)  # clamp passes gradient inside bounds
    grads: dict[str, np.ndarray] = {}
    grads["fc2_w"] = dout.T @ a3
    grads["fc2_b"] = dout.sum(axis=0)
    da3 = dout @ w["fc2_w"]
    dz3 = da3 * (z3 > 0)
    grads["fc1_w"] = dz3.T @ feat
    grads["fc1_b"] = dz3.sum(axis=0)
    dfeat = dz3 @ w["fc1_w"]
    feat_len = feat.shape[1] - r.n_landmarks
    dp2 = dfeat[:, :feat_len].reshape(x.shape[0], _C2, -1)
    side = int(np.sqrt(dp2.shape[2]))
    dp2 = dp2.reshape(x.shape[0], _C2, side, side)
    da2 = _pool_backward(dp2, pc2)
    dz2 = da2 * (z2 > 0)
    dp1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(dz2, cols2, w["conv2_w"], p1.shape)
    da1 = _pool_backward(dp1, pc1)
    dz1 = da1 * (z1 > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(dz1, cols1, w["conv1_w"], x.shape)
    return grads


def refiner_forward(r: PatchRefiner, patch: np.ndarray, landmark_index: int) -> np.ndarray:
    """Predicted (dx, dy) pixel offset for one patch, clamped to the patch."""
    out, _ = _forward(r, np.asarray(patch)[None], np.array([landmark_index]))
    return out[0]


def refiner_loss_and_grads(r: PatchRefiner, patches: np.ndarray,
                           indices: np.ndarray, targets: np.ndarray):
    """Mean squared offset error over a batch, with gradients for every weight."""
    out, cache = _forward(r, patches, indices, clamp=True)
    diff = out - np.asarray(targets, dtype=float)
    n = diff.shape[0]
    loss = float((diff ** 2).sum() / n)
    grads = _backward(r, cache, (2.0 / n) * diff)
    return loss, grads


@dataclass
class RefinerDataset:
    """Lazy patch dataset: images indexed per sample, extracted per batch."""
    images: list[np.ndarray]
    image_idx: np.ndarray     # (N,) int
    centers: np.ndarray       # (N, 2) patch centers, pixel coords
    indices: np.ndarray       # (N,) landmark indices, 0-based
    offsets: np.ndarray       # (N, 2) true offsets from the patch center

    def __len__(self) -> int:
        return self.indices.size

    def batch(self, sel: np.ndarray, patch_size: int):
        patches = np.stack([
            extract_patch(self.images[self.image_idx[i]], self.centers[i], patch_size)
            for i in sel])
        return patches, self.indices[sel], self.offsets[sel]


def build_refiner_dataset(images: Sequence[np.ndarray],
                          rough: Sequence[np.ndarray],
                          truths: Sequence[np.ndarray],
                          jitter: float = 4.0,
                          samples_per_landmark: int = 1,
                          seed: int = 0) -> RefinerDataset:
    """Training patches at projected positions plus uniform jitter.

    The jitter mimics realistic projection displacement so the refiner
    learns to correct it. Patches are extracted at the rounded jittered
    point, but the regression target is relative to the unrounded point,
    matching how digitize adds the offset to the raw projection output.
    """
    rng = np.random.default_rng(seed)
    image_idx, centers, indices, offsets = [], [], [], []
    for i, (r, t) in enumerate(zip(rough, truths)):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        for _ in range(samples_per_landmark):
            jit = rng.uniform(-jitter, jitter, size=r.shape)
            pos = r + jit
            image_idx += [i] * r.shape[0]
            centers.append(np.rint(pos))
            indices.append(np.arange(r.shape[0]))
            offsets.append(t - pos)
    return RefinerDataset(images=list(images),
                          image_idx=np.array(image_idx, dtype=int),
                          centers=np.concatenate(centers),
                          indices=np.concatenate(indices),
                          offsets=np.concatenate(offsets))


def train_refiner(r: PatchRefiner, dataset: RefinerDataset,
                  epochs: int = 20, seed: int = 0,
                  batch_size: int = 32, lr: float = 1e-3) -> tuple[PatchRefiner, list[float]]:
    """Mini-batch SGD on the mean squared offset error; deterministic."""
    if len(dataset) == 0:
        raise ValueError("empty refiner dataset")
    limit = r.offset_limit()
    if (np.abs(dataset.offsets) > limit).any():
        raise ValueError(f"dataset offsets exceed the clamp range +-{limit}")
    weights = {k: v.copy() for k, v in r.weights.items()}
    model = PatchRefiner(patch_size=r.patch_size, weights=weights,
                         n_landmarks=r.n_landmarks, input_offset=r.input_offset)
    rng = np.random.default_rng(seed)
    n = len(dataset)
    losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            patches, idx, targets = dataset.batch(sel, model.patch_size)
            loss, grads = refiner_loss_and_grads(model, patches, idx, targets)
            epoch_loss += loss * sel.size
            for k, g in grads.items():
                model.weights[k] -= lr * g
        losses.append(epoch_loss / n)
    return model, losses


# ---------------------------------------------------------------------------
# Composite model
# ---------------------------------------------------------------------------

@dataclass
class DigitizerModel:
    projection: ProjectionLayer
    refiner: PatchRefiner
    mesh_size: int
    patch_size: int
    version: int = MODEL_VERSION
    meta: dict = field(default_factory=dict)


def save_model(model: DigitizerModel, path) -> None:
    doc = {
        "version": model.version,
        "mesh_size": model.mesh_size,
        "patch_size": model.patch_size,
        "projection": {"W": model.projection.weights.tolist(),
                       "b": model.projection.bias.tolist()},
        "refiner": {"input_offset": model.refiner.input_offset,
                    "weights": {k: v.tolist() for k, v in model.refiner.weights.items()}},
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> DigitizerModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version!r}")
    proj = ProjectionLayer(weights=np.array(doc["projection"]["W"], dtype=float),
                           bias=np.array(doc["projection"]["b"], dtype=float),
                           mesh_size=int(doc["mesh_size"]))
    refiner = PatchRefiner(patch_size=int(doc["patch_size"]),
                           weights={k: np.array(v, dtype=float)
                                    for k, v in doc["refiner"]["weights"].items()},
                           input_offset=float(doc["refiner"]["input_offset"]))
    return DigitizerModel(projection=proj, refiner=refiner,
                          mesh_size=int(doc["mesh_size"]),
                          patch_size=int(doc["patch_size"]),
                          version=version, meta=doc.get("meta", {}))


@dataclass
class DigitizeResult:
    specimens: list[Specimen]
    failures: list[tuple[int, str]]  # (input index, message)


def digitize_pixel(model: DigitizerModel, image: np.ndarray,
                   mesh: BaseMesh) -> np.ndarray:
    """Refined 72-point configuration in pixel (y-down) coordinates."""
    rough = model.projection.predict(mesh)
    patches = np.stack([extract_patch(image, c, model.patch_size)
                        for c in np.rint(rough)])
    offsets, _ = _forward(model.refiner, patches, np.arange(rough.shape[0]))
    return rough + offsets


def digitize(model: DigitizerModel,
             inputs: Sequence[tuple[Optional[np.ndarray], Optional[BaseMesh]]]) -> DigitizeResult:
    """Digitize a batch of (image, mesh) inputs into TPS-convention specimens.

    Per-item failures (missing image or mesh, size mismatch) are collected
    rather than aborting the batch; surviving specimens keep input order.
    """
    specimens: list[Specimen] = []
    failures: list[tuple[int, str]] = []
    for i, (image, mesh) in enumerate(inputs):
        if image is None or mesh is None:
            failures.append((i, "missing image or mesh"))
            continue
        try:
            refined = digitize_pixel(model, image, mesh)
        except (ValueError, IndexError) as exc:
            failures.append((i, str(exc)))
            continue
        h = mesh.image_size[1]
        specimens.append(Specimen(landmarks=pixel_to_tps(refined, h),
                                  image_name=mesh.image_name or None,
                                  id=str(i)))
    return DigitizeResult(specimens=specimens, failures=failures)
