// Full edit round trip against a stand-in server that stores landmarks
// the way the real one does: canonical TPS text (y-up, 5 decimals, LF),
// rewritten atomically on save, served to the client in pixel (y-down)
// coordinates.

import { describe, expect, it } from "vitest";

import { Client, FetchLike } from "../src/api.js";
import { SpecimenEdit, Point } from "../src/state.js";

const HEIGHT = 256;

interface Record {
  points: Point[]; // y-up, TPS convention
  image: string;
  id: string;
}

function writeTps(records: Record[]): string {
  const out: string[] = [];
  for (const r of records) {
    out.push(`LM=${r.points.length}`);
    for (const [x, y] of r.points) out.push(`${x.toFixed(5)} ${y.toFixed(5)}`);
    out.push(`IMAGE=${r.image}`);
    out.push(`ID=${r.id}`);
  }
  return out.join("\n") + "\n";
}

function parseTps(text: string): Record[] {
  const lines = text.split("\n").filter((l) => l.length > 0);
  const records: Record[] = [];
  let i = 0;
  while (i < lines.length) {
    const m = /^LM=(\d+)$/.exec(lines[i]!);
    if (!m) throw new Error(`bad line ${lines[i]}`);
    const n = Number(m[1]);
    const points: Point[] = [];
    for (let k = 0; k < n; k++) {
      const parts = lines[i + 1 + k]!.split(" ");
      points.push([Number(parts[0]), Number(parts[1])]);
    }
    i += 1 + n;
    const rec: Record = { points, image: "", id: "" };
    while (i < lines.length && !lines[i]!.startsWith("LM=")) {
      const line = lines[i]!;
      if (line.startsWith("IMAGE=")) rec.image = line.slice(6);
      else if (line.startsWith("ID=")) rec.id = line.slice(3);
      i += 1;
    }
    records.push(rec);
  }
  return records;
}

/** In-memory twin of the review server, file contents and all. */
class FakeServer {
  file: string;
  private specimens: Record[];

  constructor(records: Record[]) {
    this.file = writeTps(records);
    this.specimens = parseTps(this.file);
  }

  /** Restart: reload state from the saved file, as the real server would. */
  reload(): void {
    this.specimens = parseTps(this.file);
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    let m = /^\/api\/specimens\/(\d+)\/landmarks$/.exec(String(url));
    if (m) {
      const spec = this.specimens[Number(m[1])];
      if (!spec) return new Response("{}", { status: 404 });
      if (method === "GET") {
        const px = spec.points.map(([x, y]) => [x, HEIGHT - y]);
        return new Response(JSON.stringify({ points: px, warnings: [] }));
      }
      const body = JSON.parse(String(init?.body)) as { points: Point[] };
      spec.points = body.points.map(([x, y]) => [x, HEIGHT - y]);
      return new Response(JSON.stringify({ ok: true, status: "reviewed" }));
    }
    if (String(url) === "/api/save" && method === "POST") {
      this.file = writeTps(this.specimens);
      return new Response(JSON.stringify({ ok: true, path: "project.tps" }));
    }
    return new Response("{}", { status: 404 });
  };
}

function sampleRecords(): Record[] {
  const records: Record[] = [];
  for (let s = 0; s < 3; s++) {
    const points: Point[] = [];
    for (let i = 0; i < 72; i++) {
      points.push([20 + ((s * 72 + i) * 2.73) % 216, 20 + ((s + i) * 3.17) % 216]);
    }
    records.push({ points, image: `face_00${s}.pgm`, id: String(s) });
  }
  return records;
}

describe("edit round trip through the storage format", () => {
  it("an unedited save leaves the file byte-identical", async () => {
    const server = new FakeServer(sampleRecords());
    const before = server.file;
    const client = new Client("", server.fetch);
    const doc = await client.getLandmarks(1);
    await client.putLandmarks(1, doc.points); // write back, unchanged
    await client.save();
    expect(server.file).toBe(before);
  });

  it("dragging one landmark survives save and reload exactly", async () => {
    const server = new FakeServer(sampleRecords());
    const before = server.file;
    const client = new Client("", server.fetch);

    // load specimen 1, drag landmark 11 (index 10), save
    const doc = await client.getLandmarks(1);
    const edit = new SpecimenEdit(doc.points.map((p) => [p[0], p[1]]));
    edit.beginMove(10);
    edit.moveTo(10, [123.25, 45.5]);
    await client.putLandmarks(1, edit.snapshot() as [number, number][]);
    await client.save();
    edit.markSaved();

    // the server restarts from the file; the edit is still there
    server.reload();
    const again = await client.getLandmarks(1);
    expect(again.points[10]).toEqual([123.25, 45.5]);

    // every line except specimen 1's landmark 11 is byte-identical
    const oldLines = before.split("\n");
    const newLines = server.file.split("\n");
    expect(newLines.length).toBe(oldLines.length);
    const changedLine = 1 + 72 + 2 + 1 + 10; // record 0 block, LM=, 10 rows in
    for (let i = 0; i < oldLines.length; i++) {
      if (i === changedLine) {
        expect(newLines[i]).toBe("123.25000 210.50000"); // y-up on disk
      } else {
        expect(newLines[i]).toBe(oldLines[i]);
      }
    }
  });

  it("other specimens stay byte-identical across an edit", async () => {
    const server = new FakeServer(sampleRecords());
    const client = new Client("", server.fetch);
    const blockOf = (text: string, s: number): string =>
      text.split("LM=")[s + 1]!;
    const before = server.file;

    const doc = await client.getLandmarks(2);
    doc.points[0] = [1.5, 2.5];
    await client.putLandmarks(2, doc.points);
    await client.save();

    expect(blockOf(server.file, 0)).toBe(blockOf(before, 0));
    expect(blockOf(server.file, 1)).toBe(blockOf(before, 1));
    expect(blockOf(server.file, 2)).not.toBe(blockOf(before, 2));
  });
});
