/** Bundle manifest: plane geometry and the expanded camera it was baked for. */

export interface Manifest {
  planes: number;
  width: number;
  height: number;
  depths: number[];
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  expansion: number;
  delta: number;
}

export class ManifestError extends Error {}

function requireNumber(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ManifestError(`manifest field '${key}' must be a finite number`);
  }
  return v;
}

function requirePositiveInt(obj: Record<string, unknown>, key: string): number {
  const v = requireNumber(obj, key);
  if (!Number.isInteger(v) || v <= 0) {
    throw new ManifestError(`manifest field '${key}' must be a positive integer`);
  }
  return v;
}

/** Validate a parsed manifest object and narrow it to the Manifest type. */
export function validateManifest(raw: unknown): Manifest {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ManifestError("manifest must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const planes = requirePositiveInt(obj, "planes");
  const width = requirePositiveInt(obj, "width");
  const height = requirePositiveInt(obj, "height");
  const depthsRaw = obj["depths"];
  if (!Array.isArray(depthsRaw)) {
    throw new ManifestError("manifest field 'depths' must be an array");
  }
  if (depthsRaw.length !== planes) {
    throw new ManifestError(
      `manifest lists ${planes} planes but 'depths' has ${depthsRaw.length} entries`,
    );
  }
  const depths: number[] = [];
  for (let i = 0; i < depthsRaw.length; i++) {
    const d = depthsRaw[i];
    if (typeof d !== "number" || !Number.isFinite(d) || d <= 0) {
      throw new ManifestError(`manifest depth [${i}] must be a positive number`);
    }
    depths.push(d);
  }
  for (let i = 1; i < depths.length; i++) {
    if (depths[i] <= depths[i - 1]) {
      throw new ManifestError("manifest depths must increase strictly near to far");
    }
  }
  const fx = requireNumber(obj, "fx");
  const fy = requireNumber(obj, "fy");
  if (fx <= 0 || fy <= 0) {
    throw new ManifestError("manifest focal lengths must be positive");
  }
  const cx = requireNumber(obj, "cx");
  const cy = requireNumber(obj, "cy");
  const expansion = requireNumber(obj, "expansion");
  if (expansion < 1) {
    throw new ManifestError("manifest field 'expansion' must be >= 1");
  }
  const delta = requireNumber(obj, "delta");
  if (delta <= 0) {
    throw new ManifestError("manifest field 'delta' must be positive");
  }
  return { planes, width, height, depths, fx, fy, cx, cy, expansion, delta };
}

/** File name of the p-th plane image inside the bundle directory. */
export function planeFileName(p: number): string {
  return `plane_${String(p).padStart(4, "0")}.png`;
}

export interface PlaneImage {
  /** Straight-alpha RGBA bytes, row-major, height*width*4. */
  rgba: Uint8Array;
  width: number;
  height: number;
}

/** Check that a decoded plane image matches the manifest dimensions. */
export function checkPlane(manifest: Manifest, p: number, img: PlaneImage): void {
  if (p < 0 || p >= manifest.planes) {
    throw new ManifestError(`plane index ${p} out of range for ${manifest.planes} planes`);
  }
  if (img.width !== manifest.width || img.height !== manifest.height) {
    throw new ManifestError(
      `plane ${p} is ${img.width}x${img.height}, manifest says ` +
        `${manifest.width}x${manifest.height}`,
    );
  }
  if (img.rgba.length !== manifest.width * manifest.height * 4) {
    throw new ManifestError(`plane ${p} has ${img.rgba.length} bytes, expected RGBA`);
  }
}
