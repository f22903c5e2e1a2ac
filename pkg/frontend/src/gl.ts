/**
 * WebGL plane renderer.
 *
 * Each plane is a textured quad at its depth in the world frame; quads are
 * drawn back to front with straight-alpha over blending, which reproduces the
 * CPU compositor up to rasterization. The optional coverage overlay tints
 * pixels whose accumulated alpha falls short of one, exposing regions where
 * the view has left the populated canvas.
 */

import { Manifest } from "./manifest.js";
import { Pose } from "./camera.js";

const PLANE_VS = `
attribute vec2 corner;
uniform float depth;
uniform vec2 canvasSize;
uniform vec4 intrinsics; // fx, fy, cx, cy
uniform mat3 viewR;
uniform vec3 viewT;
uniform mat4 proj;
varying vec2 uv;
void main() {
  uv = corner;
  vec2 px = corner * canvasSize;
  vec3 world = vec3(
    (px.x - intrinsics.z) / intrinsics.x * depth,
    (px.y - intrinsics.w) / intrinsics.y * depth,
    depth);
  vec3 cam = viewR * world + viewT;
  gl_Position = proj * vec4(cam, 1.0);
}
`;

const PLANE_FS = `
precision mediump float;
uniform sampler2D tex;
varying vec2 uv;
void main() {
  gl_FragColor = texture2D(tex, uv);
}
`;

const OVERLAY_VS = `
attribute vec2 corner;
void main() {
  gl_Position = vec4(corner * 2.0 - 1.0, 0.0, 1.0);
}
`;

const OVERLAY_FS = `
precision mediump float;
uniform vec4 tint;
void main() {
  gl_FragColor = tint;
}
`;

function compile(gl: WebGLRenderingContext, kind: number, src: string): WebGLShader {
  const sh = gl.createShader(kind);
  if (!sh) throw new Error("failed to allocate shader");
  gl.shaderSource(sh, src);
  gl.compileShader(sh);
  if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile failed: ${gl.getShaderInfoLog(sh)}`);
  }
  return sh;
}

function link(gl: WebGLRenderingContext, vs: string, fs: string): WebGLProgram {
  const prog = gl.createProgram();
  if (!prog) throw new Error("failed to allocate program");
  gl.attachShader(prog, compile(gl, gl.VERTEX_SHADER, vs));
  gl.attachShader(prog, compile(gl, gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(prog);
  if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
    throw new Error(`program link failed: ${gl.getProgramInfoLog(prog)}`);
  }
  return prog;
}

/** Column-major perspective matrix mapping camera coords through the intrinsics. */
export function projectionMatrix(m: Manifest, near: number, far: number): Float32Array {
  const w = m.width;
  const h = m.height;
  // clip.x / clip.w = 2 (fx x / z + cx) / w - 1, y flipped for NDC
  return new Float32Array([
    (2 * m.fx) / w, 0, 0, 0,
    0, (-2 * m.fy) / h, 0, 0,
    (2 * m.cx) / w - 1, 1 - (2 * m.cy) / h, (far + near) / (far - near), 1,
    0, 0, (-2 * far * near) / (far - near), 0,
  ]);
}

export class PlaneRenderer {
  private gl: WebGLRenderingContext;
  private manifest: Manifest;
  private planeProg: WebGLProgram;
  private overlayProg: WebGLProgram;
  private quad: WebGLBuffer;
  private textures: WebGLTexture[] = [];
  private proj: Float32Array;

  constructor(gl: WebGLRenderingContext, manifest: Manifest, planes: TexImageSource[]) {
    if (planes.length !== manifest.planes) {
      throw new Error(`expected ${manifest.planes} plane images, got ${planes.length}`);
    }
    this.gl = gl;
    this.manifest = manifest;
    this.planeProg = link(gl, PLANE_VS, PLANE_FS);
    this.overlayProg = link(gl, OVERLAY_VS, OVERLAY_FS);

    const buf = gl.createBuffer();
    if (!buf) throw new Error("failed to allocate vertex buffer");
    this.quad = buf;
    gl.bindBuffer(gl.ARRAY_BUFFER, buf);
    gl.bufferData(
      gl.ARRAY_BUFFER,
      new Float32Array([0, 0, 1, 0, 0, 1, 1, 1]),
      gl.STATIC_DRAW,
    );

    for (const img of planes) {
      const tex = gl.createTexture();
      if (!tex) throw new Error("failed to allocate texture");
      gl.bindTexture(gl.TEXTURE_2D, tex);
      gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA, gl.RGBA, gl.UNSIGNED_BYTE, img);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
      this.textures.push(tex);
    }

    const depths = manifest.depths;
    this.proj = projectionMatrix(manifest, 0.1 * depths[0], 10 * depths[depths.length - 1]);
    gl.disable(gl.DEPTH_TEST);
    gl.disable(gl.CULL_FACE);
    gl.enable(gl.BLEND);
  }

  /** Draw the nearest `planeCount` planes at the given pose. */
  draw(pose: Pose, planeCount: number, coverageOverlay: boolean): void {
    const gl = this.gl;
    const m = this.manifest;
    const count = Math.min(Math.max(1, planeCount), m.planes);

    gl.clearColor(0, 0, 0, 0);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quad);

    gl.useProgram(this.planeProg);
    const loc = (name: string) => gl.getUniformLocation(this.planeProg, name);
    const corner = gl.getAttribLocation(this.planeProg, "corner");
    gl.enableVertexAttribArray(corner);
    gl.vertexAttribPointer(corner, 2, gl.FLOAT, false, 0, 0);
    gl.uniform2f(loc("canvasSize"), m.width, m.height);
    gl.uniform4f(loc("intrinsics"), m.fx, m.fy, m.cx, m.cy);
    // row-major pose into column-major uniform
    gl.uniformMatrix3fv(loc("viewR"), true, new Float32Array(pose.R));
    gl.uniform3f(loc("viewT"), pose.t[0], pose.t[1], pose.t[2]);
    gl.uniformMatrix4fv(loc("proj"), false, this.proj);
    gl.uniform1i(loc("tex"), 0);
    gl.activeTexture(gl.TEXTURE0);

    gl.blendFuncSeparate(gl.SRC_ALPHA, gl.ONE_MINUS_SRC_ALPHA, gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
    const depthLoc = loc("depth");
    for (let p = count - 1; p >= 0; p--) {
      gl.uniform1f(depthLoc, m.depths[p]);
      gl.bindTexture(gl.TEXTURE_2D, this.textures[p]);
      gl.drawArrays(gl.TRIANGLE_STRIP, 0, 4);
    }

    if (coverageOverlay) {
      // destination alpha accumulated the over-composited coverage, so a
      // full-screen tint weighted by (1 - dst alpha) marks the deficit
      gl.useProgram(this.overlayProg);
      const oc = gl.getAttribLocation(this.overlayProg, "corner");
      gl.enableVertexAttribArray(oc);
      gl.vertexAttribPointer(oc, 2, gl.FLOAT, false, 0, 0);
      gl.uniform4f(gl.getUniformLocation(this.overlayProg, "tint"), 1, 0, 0.5, 1);
      gl.blendFuncSeparate(gl.ONE_MINUS_DST_ALPHA, gl.ONE, gl.ZERO, gl.ONE);
      gl.drawArrays(gl.TRIANGLE_STRIP, 0, 4);
    }

    // opaque canvas regardless of coverage so the page background never bleeds
    gl.colorMask(false, false, false, true);
    gl.clearColor(0, 0, 0, 1);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.colorMask(true, true, true, true);
  }
}
