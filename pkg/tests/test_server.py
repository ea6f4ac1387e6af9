import base64
import json
import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from morphodig import synth, tpsio
from morphodig.server import Project, create_app


@pytest.fixture()
def project_dir(tmp_path):
    faces = synth.generate_population(3, seed=4)
    specs = []
    for i, (img, mesh, truth) in enumerate(faces):
        name = f"face_{i:03d}.pgm"
        synth.write_pgm(tmp_path / name, img)
        specs.append(tpsio.Specimen(
            landmarks=tpsio.pixel_to_tps(truth, img.shape[0]),
            image_name=name, id=str(i)))
    (tmp_path / "project.tps").write_text(tpsio.write_tps(specs))
    return tmp_path


@pytest.fixture()
def client(project_dir):
    project = Project(images_dir=project_dir,
                      tps_path=project_dir / "project.tps")
    return TestClient(create_app(project)), project


def test_schema_endpoint(client):
    c, _ = client
    doc = c.get("/api/schema").json()
    assert doc["landmark_count"] == 72
    assert len(doc["pairs"]) == 33
    assert doc["midline"] == [1, 2, 3, 8, 13, 68]
    assert len(doc["landmarks"]) == 72
    assert len(doc["sliders"]) == 28


def test_specimen_listing(client):
    c, _ = client
    rows = c.get("/api/specimens").json()
    assert [r["index"] for r in rows] == [0, 1, 2]
    assert rows[0]["image"] == "face_000.pgm"
    assert rows[0]["status"] == "unreviewed"


def test_image_endpoint(client, project_dir):
    c, _ = client
    doc = c.get("/api/specimens/0/image").json()
    assert (doc["width"], doc["height"]) == (256, 256)
    img = np.frombuffer(base64.b64decode(doc["pixels"]), dtype=np.uint8)
    want = synth.read_pgm(project_dir / "face_000.pgm")
    np.testing.assert_array_equal(img.reshape(256, 256), want)


def test_landmarks_are_pixel_convention(client, project_dir):
    c, _ = client
    pts = np.array(c.get("/api/specimens/0/landmarks").json()["points"])
    tps = tpsio.parse_tps((project_dir / "project.tps").read_text())[0].landmarks
    np.testing.assert_allclose(pts, tpsio.tps_to_pixel(tps, 256))


def test_landmarks_warnings_on_swap(client):
    c, project = client
    pts = np.array(c.get("/api/specimens/0/landmarks").json()["points"])
    swapped = pts.copy()
    swapped[[5, 6]] = swapped[[6, 5]]
    assert c.put("/api/specimens/0/landmarks",
                 json={"points": swapped.tolist()}).status_code == 200
    warnings = c.get("/api/specimens/0/landmarks").json()["warnings"]
    assert any("swap" in w for w in warnings)


def test_unknown_specimen_404(client):
    c, _ = client
    assert c.get("/api/specimens/99/landmarks").status_code == 404
    assert c.put("/api/specimens/99/landmarks", json={"points": []}).status_code == 404


def test_put_validation_422(client):
    c, _ = client
    assert c.put("/api/specimens/0/landmarks", json={}).status_code == 422
    assert c.put("/api/specimens/0/landmarks",
                 json={"points": [[1, 2]] * 3}).status_code == 422
    bad = [[1.0, 2.0]] * 72
    bad[0] = [float("nan"), 0.0]
    # json has no nan literal; send via text replacement
    body = json.dumps({"points": bad}).replace("NaN", "null")
    r = c.put("/api/specimens/0/landmarks", content=body,
              headers={"content-type": "application/json"})
    assert r.status_code == 422


def test_edit_save_reload_roundtrip(client, project_dir):
    c, project = client
    pts = np.array(c.get("/api/specimens/1/landmarks").json()["points"])
    pts[10] = [123.25, 45.5]
    assert c.put("/api/specimens/1/landmarks",
                 json={"points": pts.tolist()}).status_code == 200
    assert c.get("/api/specimens").json()[1]["status"] == "reviewed"
    assert c.post("/api/save").json()["ok"] is True

    fresh = Project(images_dir=project_dir, tps_path=project_dir / "project.tps")
    got = tpsio.tps_to_pixel(fresh.specimens[1].landmarks, 256)
    np.testing.assert_allclose(got[10], [123.25, 45.5])
    assert fresh.status == ["unreviewed", "reviewed", "unreviewed"]


def test_unedited_save_byte_identical(client, project_dir):
    c, _ = client
    before = (project_dir / "project.tps").read_bytes()
    assert c.post("/api/save").status_code == 200
    assert (project_dir / "project.tps").read_bytes() == before


def test_save_failure_leaves_original_intact(client, project_dir, monkeypatch):
    c, _ = client
    before = (project_dir / "project.tps").read_bytes()

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    r = c.post("/api/save")
    assert r.status_code == 500
    assert "save failed" in r.json()["detail"]
    monkeypatch.undo()
    assert (project_dir / "project.tps").read_bytes() == before


def test_missing_image_404(client, project_dir):
    c, project = client
    (project_dir / "face_002.pgm").unlink()
    assert c.get("/api/specimens/2/image").status_code == 404


def test_static_serving_and_traversal_guard(project_dir, tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html>review</html>")
    (static / "app.js").write_text("console.log(1)")
    secret = tmp_path / "secret.txt"
    secret.write_text("nope")
    project = Project(images_dir=project_dir, tps_path=project_dir / "project.tps")
    c = TestClient(create_app(project, static_dir=static))
    assert c.get("/").text == "<html>review</html>"
    assert c.get("/app.js").status_code == 200
    assert c.get("/../secret.txt").status_code in (404, 422)
    assert c.get("/%2e%2e/secret.txt").status_code in (404, 422)
    # API still routed ahead of the static catch-all
    assert c.get("/api/schema").status_code == 200
