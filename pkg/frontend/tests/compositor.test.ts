import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { PlaneImage, validateManifest } from "../src/manifest.js";
import { compareBytes, compositeIdentity, toBytes } from "../src/compositor.js";

const fixtures = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

function b64(text: string): Uint8Array {
  return new Uint8Array(Buffer.from(text, "base64"));
}

function loadFixture() {
  const bundle = JSON.parse(readFileSync(join(fixtures, "bundle.json"), "utf-8")) as {
    manifest: unknown;
    planes: string[];
  };
  const manifest = validateManifest(bundle.manifest);
  const planes: PlaneImage[] = bundle.planes.map((text) => ({
    rgba: b64(text),
    width: manifest.width,
    height: manifest.height,
  }));
  const reference = JSON.parse(
    readFileSync(join(fixtures, "reference.json"), "utf-8"),
  ) as { width: number; height: number; pixels: string };
  return { manifest, planes, referencePixels: b64(reference.pixels) };
}

describe("compositeIdentity", () => {
  it("matches the float composite exported with the bundle", () => {
    const { manifest, planes, referencePixels } = loadFixture();
    const composed = toBytes(compositeIdentity(manifest, planes));
    expect(composed.length).toBe(referencePixels.length);
    const report = compareBytes(composed, referencePixels, 3);
    // 8-bit plane quantization costs at most 2/255 against the float
    // composite, plus rounding of the reference itself
    expect(report.fractionWithin).toBeGreaterThanOrEqual(0.99);
    expect(report.maxDiff).toBeLessThanOrEqual(6);
  });

  it("an empty bundle composes to black", () => {
    const { manifest, planes } = loadFixture();
    const clear = planes.map((p) => ({ ...p, rgba: new Uint8Array(p.rgba.length) }));
    const composed = compositeIdentity(manifest, clear);
    expect(composed.every((v) => v === 0)).toBe(true);
  });

  it("a single opaque plane passes through exactly", () => {
    const { manifest, planes } = loadFixture();
    const solid = planes.map((p, idx) => {
      const rgba = new Uint8Array(p.rgba.length);
      if (idx === 0) {
        for (let i = 0; i < rgba.length; i += 4) {
          rgba[i] = 200;
          rgba[i + 1] = 100;
          rgba[i + 2] = 50;
          rgba[i + 3] = 255;
        }
      }
      return { ...p, rgba };
    });
    const composed = toBytes(compositeIdentity(manifest, solid));
    expect(composed[0]).toBe(200);
    expect(composed[1]).toBe(100);
    expect(composed[2]).toBe(50);
  });

  it("rejects a wrong plane count and wrong plane sizes", () => {
    const { manifest, planes } = loadFixture();
    expect(() => compositeIdentity(manifest, planes.slice(1))).toThrow(/expected/);
    const bad = planes.map((p) => ({ ...p }));
    bad[2] = { ...bad[2], rgba: bad[2].rgba.slice(0, 8) };
    expect(() => compositeIdentity(manifest, bad)).toThrow(/bytes/);
  });
});

describe("compareBytes", () => {
  it("reports exact agreement and counts outliers", () => {
    const a = new Uint8Array([10, 20, 30, 40, 50, 60]);
    const same = compareBytes(a, a, 0);
    expect(same.maxDiff).toBe(0);
    expect(same.fractionWithin).toBe(1);
    const b = new Uint8Array([10, 20, 30, 40, 50, 70]);
    const off = compareBytes(a, b, 3);
    expect(off.maxDiff).toBe(10);
    expect(off.fractionWithin).toBe(0.5);
  });

  it("rejects mismatched buffers", () => {
    expect(() => compareBytes(new Uint8Array(3), new Uint8Array(6), 1)).toThrow(
      /equal-length/,
    );
  });
});
