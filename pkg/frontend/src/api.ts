// Typed client for the review server. All coordinates are pixel space,
// y down; the server owns the TPS conversion.

export interface LandmarkDef {
  index: number;
  name: string;
  kind: string;
  side: string;
}

export interface SchemaDoc {
  landmark_count: number;
  pairs: [number, number][];
  midline: number[];
  landmarks: LandmarkDef[];
  sliders: [number, number, number][];
}

export interface SpecimenRow {
  index: number;
  id: string;
  image: string | null;
  status: string;
}

export interface ImageDoc {
  width: number;
  height: number;
  pixels: string; // base64 row-major grayscale bytes
}

export interface LandmarksDoc {
  points: [number, number][];
  warnings: string[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

export class Client {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  getSchema(): Promise<SchemaDoc> {
    return this.request<SchemaDoc>("/api/schema");
  }

  getSpecimens(): Promise<SpecimenRow[]> {
    return this.request<SpecimenRow[]>("/api/specimens");
  }

  getImage(index: number): Promise<ImageDoc> {
    return this.request<ImageDoc>(`/api/specimens/${index}/image`);
  }

  getLandmarks(index: number): Promise<LandmarksDoc> {
    return this.request<LandmarksDoc>(`/api/specimens/${index}/landmarks`);
  }

  putLandmarks(index: number, points: [number, number][]): Promise<void> {
    return this.request(`/api/specimens/${index}/landmarks`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ points }),
    });
  }

  save(): Promise<{ ok: boolean; path: string }> {
    return this.request("/api/save", { method: "POST" });
  }

  private request<T>(path: string, init?: RequestInit): Promise<T> {
    return this.fetchImpl(this.base + path, init).then((r) => parseOrThrow<T>(r));
  }
}

/** Decode the server's base64 grayscale payload into a byte-per-pixel array. */
export function decodePixels(doc: ImageDoc): Uint8ClampedArray {
  const bin = atob(doc.pixels);
  const n = doc.width * doc.height;
  if (bin.length !== n) {
    throw new Error(`pixel payload is ${bin.length} bytes, expected ${n}`);
  }
  const out = new Uint8ClampedArray(n);
  for (let i = 0; i < n; i++) out[i] = bin.charCodeAt(i);
  return out;
}
