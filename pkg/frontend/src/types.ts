/** Shared wire types for the annotation API. All angles radians, lengths pixels. */

export interface Pose {
  azimuth: number;
  elevation: number;
  theta: number;
  depth: number;
  focal: number;
  u: number;
  v: number;
}

export type AnnotationStatus = "unannotated" | "annotated" | "flagged" | "approved";

export interface AnnotationRecord {
  image_id: string;
  image_path: string;
  category: string;
  model_id: string;
  pose: Pose | null;
  status: AnnotationStatus;
  annotator: string;
  updated_at: string;
  revision: number;
}

export interface MeshData {
  model_id: string;
  vertices: number[][];
  triangles: number[][];
}

export interface TestVector {
  pose: Pose;
  points: number[][];
  pixels: number[][];
}

export interface TestVectorResponse {
  vectors: TestVector[];
  tolerance_px: number;
}

export interface StatsHistogram {
  angle: string;
  edges: number[];
  counts: number[];
}

export interface StatsResponse {
  count: number;
  histograms: StatsHistogram[];
}
