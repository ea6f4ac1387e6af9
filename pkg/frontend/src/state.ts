// Editing state for one specimen: the working copy of its 72 points,
// an undo stack, a dirty flag, and the canvas/image coordinate mapping.
// Pure logic, no DOM, so it is directly testable.

export type Point = [number, number];

export interface ViewTransform {
  scale: number;
  offsetX: number; // canvas x of image x = 0
  offsetY: number;
}

export function imageToCanvas(t: ViewTransform, p: Point): Point {
  return [p[0] * t.scale + t.offsetX, p[1] * t.scale + t.offsetY];
}

export function canvasToImage(t: ViewTransform, p: Point): Point {
  return [(p[0] - t.offsetX) / t.scale, (p[1] - t.offsetY) / t.scale];
}

/** Fit an image into a canvas, centered, preserving aspect ratio. */
export function fitTransform(
  imgW: number, imgH: number, canvasW: number, canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / imgW, canvasH / imgH);
  return {
    scale,
    offsetX: (canvasW - imgW * scale) / 2,
    offsetY: (canvasH - imgH * scale) / 2,
  };
}

/** Zoom about a fixed canvas point so the pixel under the cursor stays put. */
export function zoomAt(t: ViewTransform, at: Point, factor: number): ViewTransform {
  const scale = Math.min(Math.max(t.scale * factor, 0.1), 64);
  const actual = scale / t.scale;
  return {
    scale,
    offsetX: at[0] - (at[0] - t.offsetX) * actual,
    offsetY: at[1] - (at[1] - t.offsetY) * actual,
  };
}

/** Index of the landmark within `radius` canvas px of `at`, or -1. */
export function hitTest(
  points: Point[], t: ViewTransform, at: Point, radius = 8,
): number {
  let best = -1;
  let bestD = radius * radius;
  points.forEach((p, i) => {
    const c = imageToCanvas(t, p);
    const d = (c[0] - at[0]) ** 2 + (c[1] - at[1]) ** 2;
    if (d <= bestD) {
      best = i;
      bestD = d;
    }
  });
  return best;
}

export class SpecimenEdit {
  private undoStack: { index: number; point: Point }[] = [];
  dirty = false;

  constructor(public points: Point[]) {}

  /** Begin a drag: remembers the pre-drag position once per gesture. */
  beginMove(index: number): void {
    const p = this.points[index];
    if (!p) throw new RangeError(`no landmark ${index}`);
    this.undoStack.push({ index, point: [p[0], p[1]] });
  }

  moveTo(index: number, p: Point): void {
    if (!this.points[index]) throw new RangeError(`no landmark ${index}`);
    this.points[index] = [p[0], p[1]];
    this.dirty = true;
  }

  /** Abandon the current gesture without recording an edit. */
  cancelMove(): void {
    const last = this.undoStack.pop();
    if (last) this.points[last.index] = last.point;
  }

  undo(): boolean {
    const last = this.undoStack.pop();
    if (!last) return false;
    this.points[last.index] = last.point;
    this.dirty = this.undoStack.length > 0;
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  /** Called after a successful PUT + save. */
  markSaved(): void {
    this.dirty = false;
    this.undoStack = [];
  }

  snapshot(): Point[] {
    return this.points.map((p) => [p[0], p[1]]);
  }
}
