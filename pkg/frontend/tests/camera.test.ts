import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { Manifest, validateManifest } from "../src/manifest.js";
import {
  IDENTITY,
  Mat3,
  Vec3,
  ViewerState,
  formatFloat17,
  matMul3,
  matVec3,
  parseTrajectoryEntry,
  poseEntryJson,
  rotY,
  rotationLimits,
  transpose3,
} from "../src/camera.js";

const fixtures = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

function fixtureManifest(): Manifest {
  const text = readFileSync(join(fixtures, "bundle", "manifest.json"), "utf-8");
  return validateManifest(JSON.parse(text));
}

describe("rotationLimits", () => {
  it("gives half the frustum slack per axis", () => {
    const m = fixtureManifest();
    // fx 48, width 60, expansion 1.25: atan(60/96) - atan(48/96)
    const expected = Math.atan(0.625) - Math.atan(0.5);
    const limits = rotationLimits(m);
    expect(limits.yaw).toBeCloseTo(expected, 15);
    expect(limits.pitch).toBeCloseTo(expected, 15);
  });

  it("vanishes when the canvas is not expanded", () => {
    const m = { ...fixtureManifest(), expansion: 1, width: 48, height: 48 };
    const limits = rotationLimits(m);
    expect(limits.yaw).toBe(0);
    expect(limits.pitch).toBe(0);
  });
});

describe("pose serialization", () => {
  it("round-trips doubles bitwise through 17 significant digits", () => {
    const values = [
      0.1, -0.30000000000000004, 1 / 3, Math.PI, Math.cos(0.125),
      1e-12, -2.5e17, 48, 0.99219766722932901, 5e-324,
    ];
    for (const v of values) {
      expect(Number(formatFloat17(v))).toBe(v);
    }
    expect(Object.is(Number(formatFloat17(-0)), -0)).toBe(true);
    expect(Number(formatFloat17(0))).toBe(0);
  });

  it("emits an entry the python trajectory parser shape-matches", () => {
    const m = fixtureManifest();
    const pose = { R: rotY(0.125), t: [0.25, -0.125, 0.0625] as Vec3 };
    const text = poseEntryJson(m, pose);
    const entry = parseTrajectoryEntry(text);
    for (let i = 0; i < 9; i++) expect(entry.R[i]).toBe(pose.R[i]);
    for (let i = 0; i < 3; i++) expect(entry.t[i]).toBe(pose.t[i]);
    expect(entry.fx).toBe(m.fx);
    expect(entry.cy).toBe(m.cy);
    expect(entry.width).toBe(m.width);
    expect(entry.height).toBe(m.height);
  });

  it("agrees with the pose fixture exported by the pipeline", () => {
    const entries = JSON.parse(
      readFileSync(join(fixtures, "pose_roundtrip.json"), "utf-8"),
    ) as unknown[];
    const fixture = parseTrajectoryEntry(JSON.stringify(entries[0]));
    const own = parseTrajectoryEntry(
      poseEntryJson(fixtureManifest(), {
        R: rotY(0.125),
        t: [0.25, -0.125, 0.0625],
      }),
    );
    // trig libraries may differ in the last ulp across languages
    for (let i = 0; i < 9; i++) {
      expect(Math.abs(own.R[i] - fixture.R[i])).toBeLessThanOrEqual(1e-15);
    }
    for (let i = 0; i < 3; i++) expect(own.t[i]).toBe(fixture.t[i]);
    expect(own.fx).toBe(fixture.fx);
    expect(own.fy).toBe(fixture.fy);
    expect(own.cx).toBe(fixture.cx);
    expect(own.cy).toBe(fixture.cy);
    expect(own.width).toBe(fixture.width);
    expect(own.height).toBe(fixture.height);
  });

  it("rejects malformed entries", () => {
    expect(() => parseTrajectoryEntry("[1, 2]")).toThrow(/object/);
    expect(() => parseTrajectoryEntry('{"R": [1,2,3], "t": [0,0,0]}')).toThrow(/'R'/);
    const m = fixtureManifest();
    const text = poseEntryJson(m, { R: [...IDENTITY] as Mat3, t: [0, 0, 0] });
    const broken = text.replace('"fy"', '"f_y"');
    expect(() => parseTrajectoryEntry(broken)).toThrow(/'fy'/);
  });
});

describe("ViewerState", () => {
  it("starts at and resets to the identity pose", () => {
    const state = new ViewerState(fixtureManifest());
    const start = state.pose();
    expect(start.R).toEqual(IDENTITY);
    expect(start.t).toEqual([0, 0, 0]);
    state.drag(300, -80, 600, 400);
    state.dolly(0.4);
    state.setMode("fly");
    state.move([0.2, 0, -0.1]);
    state.reset();
    const after = state.pose();
    expect(after.R).toEqual(IDENTITY);
    expect(after.t).toEqual([0, 0, 0]);
  });

  it("maps a full-width drag to the configured yaw sweep", () => {
    const state = new ViewerState(fixtureManifest(), {
      yawPerWidth: 0.04,
      pitchPerHeight: 0.02,
    });
    state.drag(640, 0, 640, 480);
    expect(state.yaw).toBeCloseTo(0.04, 15);
    state.drag(0, 240, 640, 480);
    expect(state.pitch).toBeCloseTo(0.01, 15);
  });

  it("clamps yaw and pitch to the expanded-frustum limits", () => {
    const m = fixtureManifest();
    const state = new ViewerState(m);
    state.drag(1e6, 1e6, 100, 100);
    const limits = rotationLimits(m);
    expect(state.yaw).toBe(limits.yaw);
    expect(state.pitch).toBe(limits.pitch);
    state.drag(-1e7, -1e7, 100, 100);
    expect(state.yaw).toBe(-limits.yaw);
    expect(state.pitch).toBe(-limits.pitch);
  });

  it("orbit keeps the pivot at the set distance", () => {
    const state = new ViewerState(fixtureManifest());
    state.dolly(0.5);
    state.setYaw(0.05);
    state.setPitch(-0.03);
    const c = state.opticalCenter();
    const pivot: Vec3 = [0, 0, state.radius];
    const d = Math.hypot(c[0] - pivot[0], c[1] - pivot[1], c[2] - pivot[2]);
    expect(d).toBeCloseTo(state.radius, 12);
    // t must equal -R c
    const pose = state.pose();
    const rc = matVec3(pose.R, c);
    expect(pose.t[0]).toBeCloseTo(-rc[0], 15);
    expect(pose.t[2]).toBeCloseTo(-rc[2], 15);
  });

  it("bounds the optical center in both modes", () => {
    const m = fixtureManifest();
    const state = new ViewerState(m);
    state.dolly(1e9);
    expect(state.radius).toBe(state.maxOffset);
    state.dolly(-1e9);
    expect(state.radius).toBe(0);
    state.setMode("fly");
    for (let i = 0; i < 50; i++) state.move([0.3, 0.1, -0.2]);
    const c = state.opticalCenter();
    expect(Math.hypot(c[0], c[1], c[2])).toBeLessThanOrEqual(state.maxOffset + 1e-12);
  });

  it("switching to fly mode keeps the current optical center", () => {
    const state = new ViewerState(fixtureManifest());
    state.dolly(0.5);
    state.setYaw(0.06);
    const before = state.opticalCenter();
    state.setMode("fly");
    expect(state.opticalCenter()).toEqual(before);
  });

  it("copyPoseJson emits a parseable entry for the current pose", () => {
    const state = new ViewerState(fixtureManifest());
    state.setYaw(0.05);
    state.setPitch(0.02);
    const entry = parseTrajectoryEntry(state.copyPoseJson());
    const pose = state.pose();
    for (let i = 0; i < 9; i++) expect(entry.R[i]).toBe(pose.R[i]);
    for (let i = 0; i < 3; i++) expect(entry.t[i]).toBe(pose.t[i]);
  });
});

describe("matrix helpers", () => {
  it("rotY transpose is its inverse", () => {
    const r = rotY(0.3);
    const prod = matMul3(r, transpose3(r));
    for (let i = 0; i < 9; i++) {
      expect(prod[i]).toBeCloseTo(IDENTITY[i], 15);
    }
  });
});
