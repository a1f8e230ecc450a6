/** Typed client for the annotation service. All access goes through HTTP. */

import type {
  AnnotationRecord,
  AnnotationStatus,
  MeshData,
  Pose,
  StatsResponse,
  TestVectorResponse,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** 409: someone else saved first; reload before editing further. */
export class ConflictError extends ApiError {}

async function fail(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 409) throw new ConflictError(409, detail);
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) await fail(response);
    return (await response.json()) as T;
  }

  listImages(status?: AnnotationStatus): Promise<{ images: AnnotationRecord[] }> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.getJson(`/api/images${query}`);
  }

  getAnnotation(imageId: string): Promise<AnnotationRecord> {
    return this.getJson(`/api/annotations/${encodeURIComponent(imageId)}`);
  }

  async putAnnotation(
    imageId: string,
    pose: Pose,
    revision: number,
    annotator = "",
  ): Promise<AnnotationRecord> {
    const response = await fetch(
      `${this.baseUrl}/api/annotations/${encodeURIComponent(imageId)}`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ pose, revision, annotator }),
      },
    );
    if (!response.ok) await fail(response);
    return (await response.json()) as AnnotationRecord;
  }

  async postStatus(
    imageId: string,
    status: AnnotationStatus,
    annotator = "",
  ): Promise<AnnotationRecord> {
    const response = await fetch(
      `${this.baseUrl}/api/annotations/${encodeURIComponent(imageId)}/status`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ status, annotator }),
      },
    );
    if (!response.ok) await fail(response);
    return (await response.json()) as AnnotationRecord;
  }

  getMesh(modelId: string): Promise<MeshData> {
    return this.getJson(`/api/models/${encodeURIComponent(modelId)}/mesh.json`);
  }

  getTestVectors(): Promise<TestVectorResponse> {
    return this.getJson("/api/testvectors");
  }

  getStats(): Promise<StatsResponse> {
    return this.getJson("/api/stats");
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}/file`;
  }

  renderUrl(imageId: string, pose: Pose): string {
    const params = new URLSearchParams({ image_id: imageId });
    for (const [key, value] of Object.entries(pose)) {
      params.set(key, String(value));
    }
    return `${this.baseUrl}/api/render?${params.toString()}`;
  }
}
