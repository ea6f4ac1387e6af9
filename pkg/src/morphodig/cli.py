"""Command-line entry point.

Subcommands: ``synth``, ``train``, ``digitize``, ``gpa``, ``metrics``,
``compare``, ``schema``, ``serve``. Exit codes: 0 success (or partial
success with warnings), 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from morphodig import metrics as mmetrics
from morphodig import pipeline, procrustes, schema, synth, tpsio

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class DataError(Exception):
    pass


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    faces = synth.generate_population(
        args.n, spread=args.spread, seed=args.seed,
        mesh_size=args.mesh_size, pixel_noise_sd=args.noise_sd)
    for i, (image, mesh, truth) in enumerate(faces):
        stem = f"face_{i:03d}"
        synth.write_pgm(out / f"{stem}.pgm", image)
        pipeline.save_mesh(mesh, out / f"{stem}.mesh.json")
        spec = tpsio.Specimen(
            landmarks=tpsio.pixel_to_tps(truth, mesh.image_size[1]),
            image_name=f"{stem}.pgm", id=str(i))
        _write_text(out / f"{stem}.tps", tpsio.write_tps([spec]))
    print(f"wrote {len(faces)} faces to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_triples(data_dir: Path):
    """(image, mesh, truth px-coords) per stem needing all three files."""
    triples = []
    for pgm in sorted(data_dir.glob("*.pgm")):
        stem = pgm.stem
        mesh_path = data_dir / f"{stem}.mesh.json"
        tps_path = data_dir / f"{stem}.tps"
        if not mesh_path.exists() or not tps_path.exists():
            continue
        image = synth.read_pgm(pgm)
        mesh = pipeline.load_mesh(mesh_path)
        specs = tpsio.parse_tps(tps_path.read_text(encoding="utf-8"))
        if len(specs) != 1:
            raise DataError(f"{tps_path}: expected exactly one specimen")
        truth = tpsio.tps_to_pixel(specs[0].landmarks, image.shape[0])
        triples.append((image, mesh, truth))
    return triples


def cmd_train(args) -> int:
    if args.epochs_projection < 1:
        print("error: projection training must precede refinement "
              "(epochs-projection >= 1)", file=sys.stderr)
        return EXIT_USAGE
    data_dir = Path(args.data)
    triples = _load_triples(data_dir)
    if not triples:
        raise DataError(f"no (image, mesh, truth) triples found in {data_dir}")
    images = [t[0] for t in triples]
    meshes = [t[1] for t in triples]
    truths = [t[2] for t in triples]

    layer, proj_losses = pipeline.train_projection(
        meshes, truths, epochs=args.epochs_projection,
        seed=args.seed, lr=args.lr_projection)
    rough = [layer.predict(m) for m in meshes]
    dataset = pipeline.build_refiner_dataset(
        images, rough, truths, jitter=args.jitter, seed=args.seed)
    refiner = pipeline.init_refiner(args.patch_size, seed=args.seed)
    try:
        refiner, ref_losses = pipeline.train_refiner(
            refiner, dataset, epochs=args.epochs_refiner,
            seed=args.seed, lr=args.lr_refiner)
    except ValueError as exc:
        raise DataError(
            f"{exc}; the projection stage is too inaccurate for this patch "
            "size, use a larger --patch-size, more --epochs-projection or "
            "a smaller --jitter") from exc
    model = pipeline.DigitizerModel(
        projection=layer, refiner=refiner,
        mesh_size=meshes[0].points.shape[0], patch_size=args.patch_size,
        meta={"n_faces": len(triples), "seed": args.seed,
              "epochs_projection": args.epochs_projection,
              "epochs_refiner": args.epochs_refiner,
              "lr_projection": args.lr_projection,
              "lr_refiner": args.lr_refiner, "jitter": args.jitter,
              "projection_loss": proj_losses, "refiner_loss": ref_losses})
    pipeline.save_model(model, args.out)
    print(f"trained on {len(triples)} faces; "
          f"final projection MSE {proj_losses[-1]:.5f}, "
          f"final refiner MSE {ref_losses[-1]:.5f}; model -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# digitize
# ---------------------------------------------------------------------------

def cmd_digitize(args) -> int:
    try:
        model = pipeline.load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from exc
    input_dir = Path(args.input)
    stems = sorted(p.stem for p in input_dir.glob("*.pgm"))
    if not stems:
        raise DataError(f"no inputs: no .pgm images in {input_dir}")
    inputs = []
    names = []
    for stem in stems:
        names.append(stem)
        try:
            image = synth.read_pgm(input_dir / f"{stem}.pgm")
            mesh = pipeline.load_mesh(input_dir / f"{stem}.mesh.json")
            mesh.image_name = f"{stem}.pgm"
            inputs.append((image, mesh))
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            inputs.append((None, None))
            print(f"warning: {stem}: {exc}", file=sys.stderr)
    result = pipeline.digitize(model, inputs)
    for i, msg in result.failures:
        print(f"failed: {names[i]}: {msg}", file=sys.stderr)
    if not result.specimens:
        raise DataError("no inputs digitized successfully")
    _write_text(Path(args.out), tpsio.write_tps(result.specimens))
    print(f"digitized {len(result.specimens)} of {len(inputs)} inputs -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gpa / metrics / compare
# ---------------------------------------------------------------------------

def _read_specimens(path) -> list[tpsio.Specimen]:
    try:
        return tpsio.parse_tps(Path(path).read_text(encoding="utf-8"))
    except (OSError, tpsio.TpsParseError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_gpa(args) -> int:
    specs = _read_specimens(args.tps)
    if len(specs) < 2:
        raise DataError("need at least two specimens")
    sliders = None
    if args.sliders:
        sliders = tpsio.parse_sliders(Path(args.sliders).read_text(encoding="utf-8")).triplets
    sample = procrustes.gpa([s.landmarks for s in specs], sliders=sliders)
    aligned = [tpsio.Specimen(landmarks=c, image_name=s.image_name, id=s.id)
               for c, s in zip(sample.configs, specs)]
    _write_text(Path(args.out_aligned), tpsio.write_tps(aligned))
    mean_csv = "x,y\n" + "\n".join(f"{x:.9f},{y:.9f}" for x, y in sample.mean) + "\n"
    _write_text(Path(args.out_mean), mean_csv)
    print(f"GPA converged={sample.converged} iterations={sample.iterations} "
          f"slid={sample.slid}")
    return EXIT_OK


def _ids(specs: list[tpsio.Specimen]) -> list[str]:
    return [s.id if s.id is not None else str(i) for i, s in enumerate(specs)]


def cmd_metrics(args) -> int:
    specs = _read_specimens(args.tps)
    if len(specs) < 2:
        raise DataError("need at least two specimens")
    sample = procrustes.gpa([s.landmarks for s in specs])
    dist = mmetrics.distinctiveness(sample)
    asym = mmetrics.asymmetry(sample, schema.pair_map())
    rows = ["id,distinctiveness,asymmetry"]
    rows += [f"{i},{d:.9f},{a:.9f}" for i, d, a in zip(_ids(specs), dist, asym)]
    _write_text(Path(args.out), "\n".join(rows) + "\n")
    print(f"wrote metrics for {len(specs)} specimens -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = _read_specimens(args.tps_a)
    b = _read_specimens(args.tps_b)
    if len(a) != len(b):
        raise DataError(f"specimen counts differ: {len(a)} vs {len(b)}")
    pair = mmetrics.ReplicatePair(rep1=a, rep2=b)
    table = mmetrics.repeatability(pair)

    scores = {}
    for label, specs in (("a", a), ("b", b)):
        sample = procrustes.gpa([s.landmarks for s in specs])
        scores[label] = (mmetrics.distinctiveness(sample),
                         mmetrics.asymmetry(sample, schema.pair_map()))

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_text(Path(f"{prefix}_anova.json"),
                json.dumps(table.as_dict(), indent=2) + "\n")

    rows = ["id,distinctiveness_a,asymmetry_a,distinctiveness_b,asymmetry_b"]
    rows += [f"{i},{da:.9f},{aa:.9f},{db:.9f},{ab:.9f}"
             for i, da, aa, db, ab in zip(_ids(a), *scores["a"], *scores["b"])]
    _write_text(Path(f"{prefix}_metrics.csv"), "\n".join(rows) + "\n")

    corr_rows = ["measure,scale,r,ci_lo,ci_hi,p"]
    ell_rows = ["measure,level,center_x,center_y,cov_xx,cov_xy,cov_yy,radius,log_r"]
    for mi, measure in enumerate(("distinctiveness", "asymmetry")):
        xs = np.asarray(scores["a"][mi])
        ys = np.asarray(scores["b"][mi])
        r, lo, hi, p = mmetrics.pearson_ci(xs, ys)
        corr_rows.append(f"{measure},raw,{r:.6f},{lo:.6f},{hi:.6f},{p:.3g}")
        if (xs > 0).all() and (ys > 0).all():
            ell = mmetrics.log_cov_ellipses(xs, ys)
            rl, ll, hl, pl = mmetrics.pearson_ci(np.log(xs), np.log(ys))
            corr_rows.append(f"{measure},log,{rl:.6f},{ll:.6f},{hl:.6f},{pl:.3g}")
            for level, radius in zip(ell.levels, ell.radii):
                ell_rows.append(
                    f"{measure},{level},{ell.center[0]:.6f},{ell.center[1]:.6f},"
                    f"{ell.cov[0,0]:.9f},{ell.cov[0,1]:.9f},{ell.cov[1,1]:.9f},"
                    f"{radius:.6f},{ell.log_r:.6f}")
        else:
            print(f"warning: {measure} has nonpositive values; "
                  "log-scale outputs skipped", file=sys.stderr)
    _write_text(Path(f"{prefix}_correlations.csv"), "\n".join(corr_rows) + "\n")
    _write_text(Path(f"{prefix}_ellipses.csv"), "\n".join(ell_rows) + "\n")
    print(f"repeatability R = {table.repeatability:.6f}; outputs at {prefix}_*")
    return EXIT_OK


# ---------------------------------------------------------------------------
# schema / serve
# ---------------------------------------------------------------------------

def cmd_schema(args) -> int:
    pm = schema.pair_map()
    if args.what == "pairs":
        print("first,second")
        for x, y in pm.pairs:
            print(f"{x},{y}")
    elif args.what == "sliders":
        sys.stdout.write(tpsio.write_sliders(
            schema.default_sliders(args.include_midpoints)))
    else:
        print(f"{'index':>5}  {'kind':<22} {'side':<15} name")
        for d in schema.LANDMARKS:
            print(f"{d.index:>5}  {d.kind.value:<22} {d.side.value:<15} {d.name}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from morphodig.server import Project, create_app
    project = Project(images_dir=Path(args.images), tps_path=Path(args.tps),
                      status_path=Path(args.status) if args.status else None)
    app = create_app(project, static_dir=Path(args.static) if args.static else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="morphodig",
                description="Facial landmark digitization and morphometrics toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic faces")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--spread", type=float, default=0.06)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mesh-size", type=int, default=pipeline.DEFAULT_MESH_SIZE)
    s.add_argument("--noise-sd", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train projection then patch refiner")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs-projection", type=int, default=150)
    s.add_argument("--epochs-refiner", type=int, default=20)
    s.add_argument("--lr-projection", type=float, default=0.5)
    s.add_argument("--lr-refiner", type=float, default=0.02)
    s.add_argument("--patch-size", type=int, default=pipeline.DEFAULT_PATCH_SIZE)
    s.add_argument("--jitter", type=float, default=4.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("digitize", help="digitize a folder of image+mesh pairs")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_digitize)

    s = sub.add_parser("gpa", help="generalized Procrustes alignment")
    s.add_argument("--tps", required=True)
    s.add_argument("--sliders")
    s.add_argument("--out-aligned", required=True)
    s.add_argument("--out-mean", required=True)
    s.set_defaults(func=cmd_gpa)

    s = sub.add_parser("metrics", help="distinctiveness and asymmetry per specimen")
    s.add_argument("--tps", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("compare", help="replicate comparison: ANOVA, correlations, ellipses")
    s.add_argument("--tps-a", required=True)
    s.add_argument("--tps-b", required=True)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("schema", help="emit the landmark schema tables")
    s.add_argument("--what", choices=("pairs", "sliders", "table"), default="table")
    s.add_argument("--include-midpoints", action="store_true")
    s.set_defaults(func=cmd_schema)

    s = sub.add_parser("serve", help="review/correction server")
    s.add_argument("--images", required=True)
    s.add_argument("--tps", required=True)
    s.add_argument("--status", help="review-status sidecar JSON path")
    s.add_argument("--static", help="directory of built UI assets")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8400)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
