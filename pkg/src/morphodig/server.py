"""HTTP API backing the landmark review/correction UI.

The server owns one project (an images directory plus a TPS file). Reads
may run concurrently; every mutation (landmark replacement, save) goes
through one lock. Landmarks travel the API in pixel (y-down) coordinates;
the TPS file on disk stays in the y-up convention. Saves are atomic:
temp file in the same directory, then rename.
"""

from __future__ import annotations

import base64
import json
import os
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from morphodig import schema, synth, tpsio
from morphodig.schema import N_LANDMARKS


class Project:
    """In-memory state for one review session; single source of truth
    between saves."""

    def __init__(self, images_dir: Path, tps_path: Path,
                 status_path: Optional[Path] = None):
        self.images_dir = Path(images_dir)
        self.tps_path = Path(tps_path)
        self.status_path = (Path(status_path) if status_path
                            else self.tps_path.with_suffix(".status.json"))
        self.specimens = tpsio.parse_tps(self.tps_path.read_text(encoding="utf-8"))
        self.lock = threading.Lock()
        self._image_cache: dict[str, np.ndarray] = {}
        self.status: list[str] = ["unreviewed"] * len(self.specimens)
        if self.status_path.exists():
            stored = json.loads(self.status_path.read_text(encoding="utf-8"))
            if isinstance(stored, list) and len(stored) == len(self.specimens):
                self.status = [str(s) for s in stored]

    def image_for(self, index: int) -> np.ndarray:
        spec = self.specimens[index]
        name = spec.image_name
        if not name:
            raise FileNotFoundError(f"specimen {index} has no image name")
        if name not in self._image_cache:
            path = self.images_dir / name
            if not path.exists():
                raise FileNotFoundError(f"image {name} missing from {self.images_dir}")
            self._image_cache[name] = synth.read_pgm(path)
        return self._image_cache[name]

    def save(self) -> None:
        """Atomic write: temp file + rename; the original is never partial."""
        text = tpsio.write_tps(self.specimens)
        tmp = self.tps_path.with_name(self.tps_path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, self.tps_path)
        stmp = self.status_path.with_name(self.status_path.name + ".tmp")
        stmp.write_text(json.dumps(self.status), encoding="utf-8")
        os.replace(stmp, self.status_path)


def _schema_doc() -> dict:
    pm = schema.pair_map()
    return {
        "landmark_count": N_LANDMARKS,
        "pairs": [list(p) for p in pm.pairs],
        "midline": sorted(pm.midline),
        "landmarks": [{"index": d.index, "name": d.name,
                       "kind": d.kind.value, "side": d.side.value}
                      for d in schema.LANDMARKS],
        "sliders": [[t.before, t.slide, t.after]
                    for t in schema.default_sliders()],
    }


def create_app(project: Project, static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="morphodig review server")

    def _spec(index: int) -> tpsio.Specimen:
        if not 0 <= index < len(project.specimens):
            raise HTTPException(status_code=404, detail=f"no specimen {index}")
        return project.specimens[index]

    @app.get("/api/schema")
    def get_schema():
        return _schema_doc()

    @app.get("/api/specimens")
    def get_specimens():
        return [{"index": i,
                 "id": s.id if s.id is not None else str(i),
                 "image": s.image_name,
                 "status": project.status[i]}
                for i, s in enumerate(project.specimens)]

    @app.get("/api/specimens/{index}/image")
    def get_image(index: int):
        _spec(index)
        try:
            img = project.image_for(index)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"width": int(img.shape[1]), "height": int(img.shape[0]),
                "pixels": base64.b64encode(img.tobytes()).decode("ascii")}

    @app.get("/api/specimens/{index}/landmarks")
    def get_landmarks(index: int):
        spec = _spec(index)
        img = project.image_for(index)
        pts = tpsio.tps_to_pixel(spec.landmarks, img.shape[0])
        report = (schema.validate_config(pts, (img.shape[1], img.shape[0]))
                  if pts.shape[0] == N_LANDMARKS else None)
        return {"points": pts.tolist(),
                "warnings": report.messages() if report else
                [f"unexpected landmark count {pts.shape[0]}"]}

    @app.put("/api/specimens/{index}/landmarks")
    def put_landmarks(index: int, body: dict):
        spec = _spec(index)
        points = body.get("points")
        if points is None:
            raise HTTPException(status_code=422, detail="missing 'points'")
        arr = np.asarray(points, dtype=float)
        if arr.shape != (N_LANDMARKS, 2):
            raise HTTPException(
                status_code=422,
                detail=f"expected {N_LANDMARKS}x2 points, got shape {list(arr.shape)}")
        if not np.isfinite(arr).all():
            raise HTTPException(status_code=422, detail="non-finite coordinates")
        img = project.image_for(index)
        with project.lock:
            spec.landmarks = tpsio.pixel_to_tps(arr, img.shape[0])
            project.status[index] = "reviewed"
        return {"ok": True, "status": "reviewed"}

    @app.post("/api/save")
    def save():
        with project.lock:
            try:
                project.save()
            except OSError as exc:
                raise HTTPException(status_code=500,
                                    detail=f"save failed: {exc}") from exc
        return {"ok": True, "path": str(project.tps_path)}

    if static_dir is not None and Path(static_dir).is_dir():
        static_dir = Path(static_dir)

        @app.get("/")
        def index_page():
            return FileResponse(static_dir / "index.html")

        @app.get("/{asset:path}")
        def asset_file(asset: str):
            target = (static_dir / asset).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                raise HTTPException(status_code=404, detail="not found")
            return FileResponse(target)

    return app
