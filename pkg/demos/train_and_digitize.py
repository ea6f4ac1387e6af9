"""Train a small digitizer and measure what the refiner buys.

Uses a deliberately small run (60 faces, short training) so it finishes
in about a minute; the shipped defaults (200 faces, 150/20 epochs) are
what the test suite exercises. Prints projection-only versus refined
per-landmark error on held-out faces.

Run:  python3 demos/train_and_digitize.py
"""

import time

import numpy as np

from morphodig import pipeline, synth

t0 = time.time()
faces = synth.generate_population(75, seed=2024)
images = [f[0] for f in faces]
meshes = [f[1] for f in faces]
truths = [f[2] for f in faces]
train, held = slice(0, 60), slice(60, 75)
print(f"generated 75 faces in {time.time() - t0:.0f}s")

layer, proj_losses = pipeline.train_projection(
    meshes[train], truths[train], epochs=150, seed=1, lr=0.5)
print(f"projection MSE {proj_losses[0]:.3f} -> {proj_losses[-1]:.3f}")

rough = [layer.predict(m) for m in meshes[train]]
dataset = pipeline.build_refiner_dataset(images[train], rough, truths[train],
                                         jitter=4.0, seed=7)
refiner, ref_losses = pipeline.train_refiner(
    pipeline.init_refiner(33, seed=3), dataset, epochs=12, seed=5, lr=0.02)
print(f"refiner MSE {ref_losses[0]:.3f} -> {ref_losses[-1]:.3f} "
      f"({time.time() - t0:.0f}s elapsed)")

model = pipeline.DigitizerModel(projection=layer, refiner=refiner,
                                mesh_size=meshes[0].points.shape[0],
                                patch_size=33)

proj_err, ref_err = [], []
for img, mesh, truth in zip(images[held], meshes[held], truths[held]):
    rough_pts = layer.predict(mesh)
    refined = pipeline.digitize_pixel(model, img, mesh)
    proj_err.append(np.sqrt(((rough_pts - truth) ** 2).sum(1)).mean())
    ref_err.append(np.sqrt(((refined - truth) ** 2).sum(1)).mean())

print(f"\nheld-out mean per-landmark error over {len(proj_err)} faces:")
print(f"  projection only  {np.mean(proj_err):.3f} px")
print(f"  with refinement  {np.mean(ref_err):.3f} px "
      f"({np.mean(ref_err) / np.mean(proj_err):.0%} of projection error)")
