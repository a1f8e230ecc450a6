/**
 * Wireframe overlay geometry and drawing.
 *
 * Geometry (edge extraction + projection) is pure and kept separate from
 * canvas work so it can be profiled and tested headless; the redraw
 * budget is 50 ms for a 5000-triangle mesh and the math is the cheap
 * part of that.
 */

import { projectPoints } from "./camera";
import type { MeshData, Pose } from "./types";

export interface WireframeModel {
  /** Flat xyz vertex array. */
  vertices: Float64Array;
  /** Unique undirected edges as vertex index pairs, flat i0,j0,i1,j1,... */
  edges: Uint32Array;
}

/** Deduplicate triangle edges; each shared edge is kept once. */
export function buildWireframe(mesh: MeshData): WireframeModel {
  const vertices = new Float64Array(mesh.vertices.length * 3);
  for (let i = 0; i < mesh.vertices.length; i++) {
    const v = mesh.vertices[i]!;
    vertices[3 * i] = v[0]!;
    vertices[3 * i + 1] = v[1]!;
    vertices[3 * i + 2] = v[2]!;
  }
  const seen = new Set<number>();
  const edges: number[] = [];
  const vcount = mesh.vertices.length;
  for (const tri of mesh.triangles) {
    for (let k = 0; k < 3; k++) {
      const a = tri[k]!;
      const b = tri[(k + 1) % 3]!;
      const key = a < b ? a * vcount + b : b * vcount + a;
      if (!seen.has(key)) {
        seen.add(key);
        edges.push(Math.min(a, b), Math.max(a, b));
      }
    }
  }
  return { vertices, edges: Uint32Array.from(edges) };
}

export interface ProjectedWireframe {
  /** Segments as x0,y0,x1,y1 quadruples; behind-camera edges dropped. */
  segments: Float64Array;
  segmentCount: number;
  behindVertexCount: number;
}

export function projectWireframe(model: WireframeModel, pose: Pose): ProjectedWireframe {
  const { pixels, behindCount } = projectPoints(pose, model.vertices);
  const segments = new Float64Array(model.edges.length * 2);
  let count = 0;
  for (let e = 0; e < model.edges.length; e += 2) {
    const i = model.edges[e]!;
    const j = model.edges[e + 1]!;
    const x0 = pixels[2 * i]!, y0 = pixels[2 * i + 1]!;
    const x1 = pixels[2 * j]!, y1 = pixels[2 * j + 1]!;
    if (Number.isNaN(x0) || Number.isNaN(x1)) continue;
    segments[4 * count] = x0;
    segments[4 * count + 1] = y0;
    segments[4 * count + 2] = x1;
    segments[4 * count + 3] = y1;
    count++;
  }
  return { segments, segmentCount: count, behindVertexCount: behindCount };
}

export function drawWireframe(
  ctx: CanvasRenderingContext2D,
  projected: ProjectedWireframe,
  color = "rgba(80, 220, 120, 0.9)",
): void {
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let s = 0; s < projected.segmentCount; s++) {
    ctx.moveTo(projected.segments[4 * s]!, projected.segments[4 * s + 1]!);
    ctx.lineTo(projected.segments[4 * s + 2]!, projected.segments[4 * s + 3]!);
  }
  ctx.stroke();
  ctx.restore();
}
