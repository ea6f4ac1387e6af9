import { describe, expect, it } from "vitest";

import {
  canvasToImage,
  fitTransform,
  hitTest,
  imageToCanvas,
  Point,
  SpecimenEdit,
  zoomAt,
} from "../src/state.js";

describe("view transform", () => {
  it("round-trips image and canvas coordinates", () => {
    const t = { scale: 2.5, offsetX: 30, offsetY: -12 };
    const p: Point = [17.25, 203.5];
    const back = canvasToImage(t, imageToCanvas(t, p));
    expect(back[0]).toBeCloseTo(p[0], 12);
    expect(back[1]).toBeCloseTo(p[1], 12);
  });

  it("fits and centers the image in the canvas", () => {
    const t = fitTransform(256, 256, 900, 700);
    expect(t.scale).toBeCloseTo(700 / 256);
    expect(imageToCanvas(t, [128, 128])).toEqual([450, 350]);
    // corners stay inside the canvas
    const [x0, y0] = imageToCanvas(t, [0, 0]);
    const [x1, y1] = imageToCanvas(t, [256, 256]);
    expect(x0).toBeGreaterThanOrEqual(0);
    expect(y0).toBe(0);
    expect(x1).toBeLessThanOrEqual(900);
    expect(y1).toBe(700);
  });

  it("zoomAt keeps the anchor pixel fixed", () => {
    let t = fitTransform(256, 256, 900, 700);
    const anchor: Point = [400, 300];
    const before = canvasToImage(t, anchor);
    t = zoomAt(t, anchor, 1.5);
    const after = canvasToImage(t, anchor);
    expect(after[0]).toBeCloseTo(before[0], 10);
    expect(after[1]).toBeCloseTo(before[1], 10);
    expect(t.scale).toBeCloseTo((700 / 256) * 1.5);
  });

  it("zoomAt clamps the scale range", () => {
    let t = { scale: 1, offsetX: 0, offsetY: 0 };
    for (let i = 0; i < 50; i++) t = zoomAt(t, [0, 0], 2);
    expect(t.scale).toBe(64);
    for (let i = 0; i < 80; i++) t = zoomAt(t, [0, 0], 0.5);
    expect(t.scale).toBe(0.1);
  });
});

describe("hitTest", () => {
  const t = { scale: 2, offsetX: 10, offsetY: 10 };
  const points: Point[] = [[5, 5], [50, 50], [51, 50]];

  it("finds the nearest landmark within the radius", () => {
    // canvas position of point 1 is (110, 110), point 2 is (112, 110)
    expect(hitTest(points, t, [108, 110])).toBe(1);
  });

  it("prefers the closer of two nearby landmarks", () => {
    // point 2 sits at canvas (112, 110)
    expect(hitTest(points, t, [113, 110])).toBe(2);
  });

  it("returns -1 when nothing is close", () => {
    expect(hitTest(points, t, [500, 500])).toBe(-1);
  });
});

describe("SpecimenEdit", () => {
  const start = (): SpecimenEdit =>
    new SpecimenEdit([[1, 2], [3, 4], [5, 6]]);

  it("tracks moves and the dirty flag", () => {
    const e = start();
    expect(e.dirty).toBe(false);
    e.beginMove(1);
    e.moveTo(1, [30, 40]);
    expect(e.points[1]).toEqual([30, 40]);
    expect(e.dirty).toBe(true);
  });

  it("undo restores the pre-drag position, one gesture at a time", () => {
    const e = start();
    e.beginMove(0);
    e.moveTo(0, [9, 9]);
    e.beginMove(2);
    e.moveTo(2, [7, 7]);
    expect(e.undo()).toBe(true);
    expect(e.points[2]).toEqual([5, 6]);
    expect(e.dirty).toBe(true); // one edit still outstanding
    expect(e.undo()).toBe(true);
    expect(e.points[0]).toEqual([1, 2]);
    expect(e.dirty).toBe(false);
    expect(e.undo()).toBe(false);
  });

  it("a multi-step drag undoes as one gesture", () => {
    const e = start();
    e.beginMove(1);
    e.moveTo(1, [10, 10]);
    e.moveTo(1, [20, 20]);
    e.moveTo(1, [30, 30]);
    e.undo();
    expect(e.points[1]).toEqual([3, 4]);
  });

  it("cancelMove abandons the gesture", () => {
    const e = start();
    e.beginMove(1);
    e.moveTo(1, [99, 99]);
    e.cancelMove();
    expect(e.points[1]).toEqual([3, 4]);
    expect(e.undoDepth).toBe(0);
  });

  it("markSaved clears dirty and the undo history", () => {
    const e = start();
    e.beginMove(0);
    e.moveTo(0, [8, 8]);
    e.markSaved();
    expect(e.dirty).toBe(false);
    expect(e.undo()).toBe(false);
    expect(e.points[0]).toEqual([8, 8]);
  });

  it("snapshot is a deep copy", () => {
    const e = start();
    const snap = e.snapshot();
    e.beginMove(0);
    e.moveTo(0, [100, 100]);
    expect(snap[0]).toEqual([1, 2]);
  });

  it("rejects out-of-range indices", () => {
    const e = start();
    expect(() => e.beginMove(7)).toThrow(RangeError);
    expect(() => e.moveTo(-1, [0, 0])).toThrow(RangeError);
  });
});
