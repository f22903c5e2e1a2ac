/**
 * CPU reference compositor.
 *
 * Planes are straight-alpha RGBA and sorted near to far; the composite is the
 * standard over operation applied back to front at the identity pose. The GPU
 * path in gl.ts must agree with this to within rounding, so the tests pin the
 * CPU result against a composite exported alongside the bundle.
 */

import { Manifest, PlaneImage, checkPlane } from "./manifest.js";

/** Composite all planes at the identity pose into float RGB in [0, 1]. */
export function compositeIdentity(manifest: Manifest, planes: PlaneImage[]): Float64Array {
  if (planes.length !== manifest.planes) {
    throw new Error(`expected ${manifest.planes} plane images, got ${planes.length}`);
  }
  planes.forEach((img, p) => checkPlane(manifest, p, img));
  const n = manifest.width * manifest.height;
  const out = new Float64Array(n * 3);
  for (let p = manifest.planes - 1; p >= 0; p--) {
    const rgba = planes[p].rgba;
    for (let i = 0; i < n; i++) {
      const a = rgba[i * 4 + 3] / 255;
      const ia = 1 - a;
      out[i * 3] = (rgba[i * 4] / 255) * a + out[i * 3] * ia;
      out[i * 3 + 1] = (rgba[i * 4 + 1] / 255) * a + out[i * 3 + 1] * ia;
      out[i * 3 + 2] = (rgba[i * 4 + 2] / 255) * a + out[i * 3 + 2] * ia;
    }
  }
  return out;
}

/** Quantize a float RGB composite to 8-bit, rounding half away from zero. */
export function toBytes(rgb: Float64Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgb.length);
  for (let i = 0; i < rgb.length; i++) {
    const v = Math.min(1, Math.max(0, rgb[i]));
    out[i] = Math.round(v * 255);
  }
  return out;
}

export interface AgreementReport {
  maxDiff: number;
  fractionWithin: number;
  pixels: number;
}

/**
 * Compare two 8-bit RGB buffers: max per-channel difference and the fraction
 * of pixels whose channels all differ by at most `tol` levels.
 */
export function compareBytes(
  a: Uint8ClampedArray | Uint8Array,
  b: Uint8ClampedArray | Uint8Array,
  tol: number,
): AgreementReport {
  if (a.length !== b.length || a.length % 3 !== 0) {
    throw new Error(`buffers must be equal-length RGB, got ${a.length} and ${b.length}`);
  }
  const pixels = a.length / 3;
  let maxDiff = 0;
  let within = 0;
  for (let i = 0; i < pixels; i++) {
    let pd = 0;
    for (let c = 0; c < 3; c++) {
      const d = Math.abs(a[i * 3 + c] - b[i * 3 + c]);
      if (d > pd) pd = d;
    }
    if (pd > maxDiff) maxDiff = pd;
    if (pd <= tol) within++;
  }
  return { maxDiff, fractionWithin: within / pixels, pixels };
}
