/**
 * Viewer camera state.
 *
 * The world frame is the reference camera frame of the bundle: x right,
 * y down, z forward, origin at the reference optical center. Poses are
 * world-to-camera [R|t] like everywhere else in the pipeline.
 *
 * Yaw and pitch are clamped to the slack the expanded canvas buys: the
 * expanded frustum spans 2*atan(extent / (2*focal)) per axis and the source
 * frustum spans the same with the pre-expansion extent, so the camera may
 * rotate by half the difference before the source frustum leaves the canvas.
 */

import { Manifest } from "./manifest.js";

export type Mat3 = [number, number, number, number, number, number, number, number, number];
export type Vec3 = [number, number, number];

export const IDENTITY: Mat3 = [1, 0, 0, 0, 1, 0, 0, 0, 1];

export function rotX(a: number): Mat3 {
  const c = Math.cos(a);
  const s = Math.sin(a);
  return [1, 0, 0, 0, c, -s, 0, s, c];
}

export function rotY(a: number): Mat3 {
  const c = Math.cos(a);
  const s = Math.sin(a);
  return [c, 0, s, 0, 1, 0, -s, 0, c];
}

export function matMul3(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0) as Mat3;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let s = 0;
      for (let k = 0; k < 3; k++) s += a[i * 3 + k] * b[k * 3 + j];
      out[i * 3 + j] = s;
    }
  }
  return out;
}

export function matVec3(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

export function transpose3(a: Mat3): Mat3 {
  return [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]];
}

export interface Pose {
  R: Mat3;
  t: Vec3;
}

export interface RotationLimits {
  yaw: number;
  pitch: number;
}

/** Half-angle slack per axis between the expanded and the source frustum. */
export function rotationLimits(m: Manifest): RotationLimits {
  const srcW = Math.round(m.width / m.expansion);
  const srcH = Math.round(m.height / m.expansion);
  const yaw =
    (2 * Math.atan(m.width / (2 * m.fx)) - 2 * Math.atan(srcW / (2 * m.fx))) / 2;
  const pitch =
    (2 * Math.atan(m.height / (2 * m.fy)) - 2 * Math.atan(srcH / (2 * m.fy))) / 2;
  return { yaw, pitch };
}

/** Serialize a float with 17 significant digits so it round-trips exactly. */
export function formatFloat17(v: number): string {
  if (!Number.isFinite(v)) throw new Error(`cannot serialize non-finite value ${v}`);
  if (v === 0) return Object.is(v, -0) ? "-0" : "0";
  return v.toPrecision(17);
}

/** Build a trajectory-entry JSON text for a pose rendered with this bundle's camera. */
export function poseEntryJson(m: Manifest, pose: Pose): string {
  const nums = (vs: number[]): string => vs.map(formatFloat17).join(", ");
  const lines = [
    "{",
    `  "R": [${nums(pose.R)}],`,
    `  "t": [${nums(pose.t)}],`,
    `  "fx": ${formatFloat17(m.fx)},`,
    `  "fy": ${formatFloat17(m.fy)},`,
    `  "cx": ${formatFloat17(m.cx)},`,
    `  "cy": ${formatFloat17(m.cy)},`,
    `  "width": ${m.width},`,
    `  "height": ${m.height}`,
    "}",
  ];
  return lines.join("\n");
}

export interface TrajectoryEntry {
  R: Mat3;
  t: Vec3;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

/** Parse and validate one trajectory entry (the inverse of poseEntryJson). */
export function parseTrajectoryEntry(text: string): TrajectoryEntry {
  const raw: unknown = JSON.parse(text);
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("trajectory entry must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const vec = (key: string, n: number): number[] => {
    const v = obj[key];
    if (!Array.isArray(v) || v.length !== n || v.some((x) => typeof x !== "number")) {
      throw new Error(`trajectory entry field '${key}' must be ${n} numbers`);
    }
    return v as number[];
  };
  const num = (key: string): number => {
    const v = obj[key];
    if (typeof v !== "number" || !Number.isFinite(v)) {
      throw new Error(`trajectory entry field '${key}' must be a finite number`);
    }
    return v;
  };
  return {
    R: vec("R", 9) as Mat3,
    t: vec("t", 3) as Vec3,
    fx: num("fx"),
    fy: num("fy"),
    cx: num("cx"),
    cy: num("cy"),
    width: num("width"),
    height: num("height"),
  };
}

export type NavMode = "orbit" | "fly";

export interface Sensitivity {
  /** Yaw sweep, in radians, for a drag across the full widget width. */
  yawPerWidth: number;
  /** Pitch sweep, in radians, for a drag across the full widget height. */
  pitchPerHeight: number;
}

/**
 * Orbit-or-fly camera with clamped rotation.
 *
 * Orbit pivots about a point on the reference optical axis at distance
 * `radius`; radius zero swivels in place, which is the reset state. Fly mode
 * keeps a free optical center, translated along the current camera axes.
 * Both modes clamp the optical center inside a ball around the reference
 * center so the view never leaves the regime the expansion was sized for.
 */
export class ViewerState {
  readonly limits: RotationLimits;
  readonly maxOffset: number;
  mode: NavMode = "orbit";
  yaw = 0;
  pitch = 0;
  radius = 0;
  center: Vec3 = [0, 0, 0];
  sensitivity: Sensitivity;

  constructor(private manifest: Manifest, sensitivity?: Partial<Sensitivity>) {
    this.limits = rotationLimits(manifest);
    this.maxOffset = 0.5 * manifest.depths[0];
    this.sensitivity = {
      yawPerWidth: sensitivity?.yawPerWidth ?? 2 * this.limits.yaw,
      pitchPerHeight: sensitivity?.pitchPerHeight ?? 2 * this.limits.pitch,
    };
  }

  setYaw(v: number): void {
    this.yaw = Math.min(this.limits.yaw, Math.max(-this.limits.yaw, v));
  }

  setPitch(v: number): void {
    this.pitch = Math.min(this.limits.pitch, Math.max(-this.limits.pitch, v));
  }

  /** Apply a pointer drag of (dx, dy) pixels over a widget of the given size. */
  drag(dx: number, dy: number, widgetWidth: number, widgetHeight: number): void {
    this.setYaw(this.yaw + (dx / widgetWidth) * this.sensitivity.yawPerWidth);
    this.setPitch(this.pitch + (dy / widgetHeight) * this.sensitivity.pitchPerHeight);
  }

  /** Orbit mode: change the pivot distance, clamped so parallax stays modest. */
  dolly(dr: number): void {
    this.radius = Math.min(this.maxOffset, Math.max(0, this.radius + dr));
  }

  /** Fly mode: translate by (right, down, forward) in the camera frame. */
  move(delta: Vec3): void {
    const r = this.rotation();
    const world = matVec3(transpose3(r), delta);
    const c: Vec3 = [
      this.center[0] + world[0],
      this.center[1] + world[1],
      this.center[2] + world[2],
    ];
    const n = Math.hypot(c[0], c[1], c[2]);
    if (n > this.maxOffset) {
      const s = this.maxOffset / n;
      c[0] *= s;
      c[1] *= s;
      c[2] *= s;
    }
    this.center = c;
  }

  setMode(mode: NavMode): void {
    if (mode === this.mode) return;
    if (mode === "fly") {
      // carry the current optical center over so the view does not jump
      this.center = this.opticalCenter();
    }
    this.mode = mode;
  }

  reset(): void {
    this.yaw = 0;
    this.pitch = 0;
    this.radius = 0;
    this.center = [0, 0, 0];
  }

  rotation(): Mat3 {
    return matMul3(rotX(this.pitch), rotY(this.yaw));
  }

  opticalCenter(): Vec3 {
    if (this.mode === "fly") return [...this.center];
    const r = this.radius;
    const fwd = matVec3(transpose3(this.rotation()), [0, 0, 1]);
    return [-r * fwd[0], -r * fwd[1], r - r * fwd[2]];
  }

  /** World-to-camera pose for the current state. */
  pose(): Pose {
    const R = this.rotation();
    const c = this.opticalCenter();
    const rc = matVec3(R, c);
    // + 0 folds the negative zero from negating an exact zero
    return { R, t: [-rc[0] + 0, -rc[1] + 0, -rc[2] + 0] };
  }

  /** Trajectory-entry JSON for the current pose, ready for the clipboard. */
  copyPoseJson(): string {
    return poseEntryJson(this.manifest, this.pose());
  }
}
