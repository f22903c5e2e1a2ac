/** Wires bundle loading, navigation input, and the HUD to the renderer. */

import { Manifest, validateManifest, planeFileName } from "./manifest.js";
import { ViewerState, NavMode } from "./camera.js";
import { PlaneRenderer } from "./gl.js";

async function loadImage(url: string): Promise<HTMLImageElement> {
  const img = new Image();
  img.decoding = "async";
  const done = new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error(`failed to load ${url}`));
  });
  img.src = url;
  await done;
  return img;
}

export async function loadBundle(
  baseUrl: string,
): Promise<{ manifest: Manifest; planes: HTMLImageElement[] }> {
  const resp = await fetch(`${baseUrl}/manifest.json`);
  if (!resp.ok) throw new Error(`failed to fetch manifest: HTTP ${resp.status}`);
  const manifest = validateManifest(await resp.json());
  const planes = await Promise.all(
    Array.from({ length: manifest.planes }, (_, p) =>
      loadImage(`${baseUrl}/${planeFileName(p)}`),
    ),
  );
  planes.forEach((img, p) => {
    if (img.naturalWidth !== manifest.width || img.naturalHeight !== manifest.height) {
      throw new Error(
        `plane ${p} is ${img.naturalWidth}x${img.naturalHeight}, manifest says ` +
          `${manifest.width}x${manifest.height}`,
      );
    }
  });
  return { manifest, planes };
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export async function startViewer(bundleUrl: string): Promise<void> {
  const status = byId<HTMLDivElement>("status");
  let manifest: Manifest;
  let planes: HTMLImageElement[];
  try {
    ({ manifest, planes } = await loadBundle(bundleUrl));
  } catch (err) {
    status.textContent = String(err);
    return;
  }

  const canvas = byId<HTMLCanvasElement>("view");
  canvas.width = manifest.width;
  canvas.height = manifest.height;
  const gl = canvas.getContext("webgl", { alpha: true, antialias: false });
  if (!gl) {
    status.textContent = "WebGL is not available in this browser";
    return;
  }
  const renderer = new PlaneRenderer(gl, manifest, planes);
  const state = new ViewerState(manifest);

  const planeSlider = byId<HTMLInputElement>("plane-count");
  planeSlider.max = String(manifest.planes);
  planeSlider.value = String(manifest.planes);
  const coverageBox = byId<HTMLInputElement>("coverage");
  const poseBox = byId<HTMLTextAreaElement>("pose");
  const fpsLabel = byId<HTMLSpanElement>("fps");
  const modeSelect = byId<HTMLSelectElement>("mode");

  const degrees = (r: number) => ((r * 180) / Math.PI).toFixed(2);
  status.textContent =
    `${manifest.planes} planes, ${manifest.width}x${manifest.height}, ` +
    `expansion ${manifest.expansion.toFixed(3)}, ` +
    `yaw limit ${degrees(state.limits.yaw)} deg, ` +
    `pitch limit ${degrees(state.limits.pitch)} deg`;

  let dragging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointerup", (ev) => {
    dragging = false;
    canvas.releasePointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const rect = canvas.getBoundingClientRect();
    state.drag(ev.movementX, ev.movementY, rect.width, rect.height);
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const step = 0.02 * manifest.depths[0] * Math.sign(ev.deltaY);
    if (state.mode === "orbit") state.dolly(step);
    else state.move([0, 0, -step]);
  });
  window.addEventListener("keydown", (ev) => {
    if (state.mode !== "fly") return;
    const s = 0.02 * manifest.depths[0];
    const steps: Record<string, [number, number, number]> = {
      w: [0, 0, s],
      s: [0, 0, -s],
      a: [-s, 0, 0],
      d: [s, 0, 0],
      q: [0, -s, 0],
      e: [0, s, 0],
    };
    const delta = steps[ev.key];
    if (delta) state.move(delta);
  });

  modeSelect.addEventListener("change", () => {
    state.setMode(modeSelect.value as NavMode);
  });
  byId<HTMLButtonElement>("reset").addEventListener("click", () => {
    state.reset();
    modeSelect.value = state.mode;
  });
  byId<HTMLButtonElement>("copy-pose").addEventListener("click", () => {
    const text = state.copyPoseJson();
    poseBox.value = text;
    if (navigator.clipboard) void navigator.clipboard.writeText(text);
  });

  let frames = 0;
  let windowStart = performance.now();
  const tick = () => {
    renderer.draw(state.pose(), Number(planeSlider.value), coverageBox.checked);
    frames += 1;
    const now = performance.now();
    if (now - windowStart >= 500) {
      fpsLabel.textContent = ((frames * 1000) / (now - windowStart)).toFixed(1);
      frames = 0;
      windowStart = now;
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}
