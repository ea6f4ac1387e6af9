import { SchemaDoc } from "./api.js";
import { imageToCanvas, Point, ViewTransform } from "./state.js";

// Landmark colors by role: left/right of bilateral pairs and midline.
export const COLORS = {
  left: "#4da6ff",
  right: "#ff8c42",
  midline: "#9be564",
  selected: "#ffffff",
};

export type Role = "left" | "right" | "midline";

/** Role per 0-based landmark index, derived from the schema pair list. */
export function roleTable(schema: SchemaDoc): Role[] {
  const roles: Role[] = new Array(schema.landmark_count).fill("midline");
  for (const [a, b] of schema.pairs) {
    roles[a - 1] = "left";
    roles[b - 1] = "right";
  }
  return roles;
}

/** Expand grayscale bytes to RGBA for ImageData. */
export function grayToRgba(gray: Uint8ClampedArray): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(gray.length * 4));
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i] as number;
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export interface Scene {
  image: ImageBitmap | null;
  imageSize: [number, number];
  points: Point[];
  roles: Role[];
  selected: number;
  transform: ViewTransform;
}

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);

  const t = scene.transform;
  if (scene.image) {
    ctx.imageSmoothingEnabled = t.scale < 1;
    ctx.drawImage(
      scene.image,
      t.offsetX, t.offsetY,
      scene.imageSize[0] * t.scale, scene.imageSize[1] * t.scale,
    );
  }

  scene.points.forEach((p, i) => {
    const [cx, cy] = imageToCanvas(t, p);
    const role = scene.roles[i] ?? "midline";
    ctx.beginPath();
    ctx.arc(cx, cy, i === scene.selected ? 6 : 4, 0, Math.PI * 2);
    ctx.fillStyle = COLORS[role];
    ctx.fill();
    if (i === scene.selected) {
      ctx.strokeStyle = COLORS.selected;
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  });
}
