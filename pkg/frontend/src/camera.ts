/**
 * Client-side mirror of the server camera model.
 *
 * Conventions (identical to the service, verified against its
 * /api/testvectors): camera axes x-right / y-down / z-forward, rotation
 * R = Rz(theta) * Rx(elevation) * Ry(azimuth), translation (0, 0, depth),
 * pixel = focal * (x/z, y/z) + (u, v). The server is the single source of
 * camera truth; this module must never disagree with it beyond 0.5 px on
 * the golden vectors.
 */

import type { Pose } from "./types";

export const TWO_PI = 2 * Math.PI;

export type Mat3 = [number, number, number, number, number, number, number, number, number];

export function rotationFromAngles(azimuth: number, elevation: number, theta: number): Mat3 {
  const ca = Math.cos(azimuth), sa = Math.sin(azimuth);
  const ce = Math.cos(elevation), se = Math.sin(elevation);
  const ct = Math.cos(theta), st = Math.sin(theta);
  // Rz(theta) * Rx(elevation) * Ry(azimuth), expanded row-major
  return [
    ct * ca - st * se * sa, -st * ce, ct * sa + st * se * ca,
    st * ca + ct * se * sa, ct * ce, st * sa - ct * se * ca,
    -ce * sa, se, ce * ca,
  ];
}

export interface ProjectionResult {
  /** Interleaved x0, y0, x1, y1, ... NaN pairs for behind-camera points. */
  pixels: Float64Array;
  behindCount: number;
}

export const NEAR_PLANE = 1e-6;

/** Project model points; points is a flat xyz array or an array of triples. */
export function projectPoints(pose: Pose, points: ArrayLike<number>): ProjectionResult {
  const flat = points as ArrayLike<number>;
  const n = Math.floor(flat.length / 3);
  const R = rotationFromAngles(pose.azimuth, pose.elevation, pose.theta);
  const out = new Float64Array(2 * n);
  let behind = 0;
  for (let i = 0; i < n; i++) {
    const x = flat[3 * i]!, y = flat[3 * i + 1]!, z = flat[3 * i + 2]!;
    const cx = R[0] * x + R[1] * y + R[2] * z;
    const cy = R[3] * x + R[4] * y + R[5] * z;
    const cz = R[6] * x + R[7] * y + R[8] * z + pose.depth;
    if (cz <= NEAR_PLANE) {
      behind++;
      out[2 * i] = NaN;
      out[2 * i + 1] = NaN;
      continue;
    }
    out[2 * i] = (pose.focal * cx) / cz + pose.u;
    out[2 * i + 1] = (pose.focal * cy) / cz + pose.v;
  }
  return { pixels: out, behindCount: behind };
}

export function flattenPoints(points: number[][]): Float64Array {
  const out = new Float64Array(points.length * 3);
  for (let i = 0; i < points.length; i++) {
    const p = points[i]!;
    out[3 * i] = p[0]!;
    out[3 * i + 1] = p[1]!;
    out[3 * i + 2] = p[2]!;
  }
  return out;
}

export function wrapAzimuth(x: number): number {
  if (x >= 0 && x < TWO_PI) return x;
  let r = x % TWO_PI;
  if (r < 0) r += TWO_PI;
  if (r >= TWO_PI) r = 0;
  return r;
}

export function wrapAngle(x: number): number {
  if (x > -Math.PI && x <= Math.PI) return x;
  let r = x % TWO_PI;
  if (r > Math.PI) r -= TWO_PI;
  if (r <= -Math.PI) r += TWO_PI;
  return r;
}

/** The client-side mirror of the pose invariants gating save. */
export function isValidPose(pose: Pose): boolean {
  const values = [pose.azimuth, pose.elevation, pose.theta, pose.depth, pose.focal, pose.u, pose.v];
  if (!values.every(Number.isFinite)) return false;
  return pose.depth > 0 && pose.focal > 0;
}

export function canonicalPose(pose: Pose): Pose {
  return {
    ...pose,
    azimuth: wrapAzimuth(pose.azimuth),
    elevation: wrapAngle(pose.elevation),
    theta: wrapAngle(pose.theta),
  };
}
