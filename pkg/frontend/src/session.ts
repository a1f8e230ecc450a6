/**
 * Annotation session state: the current image, the pose draft being
 * adjusted, optimistic-concurrency bookkeeping, and the status workflow.
 *
 * A save sends the revision the session last read; the server accepting
 * it bumps the revision, a 409 means someone else saved first. On
 * conflict the draft is preserved and the session flips into a state the
 * UI must resolve by reloading (no silent overwrite in either direction).
 */

import { ApiClient, ConflictError } from "./api";
import { canonicalPose, isValidPose } from "./camera";
import type { AnnotationRecord, Pose } from "./types";

export type StepMode = "coarse" | "fine";
export type OverlayMode = "wireframe" | "silhouette";

export type AdjustParam =
  | "azimuth"
  | "elevation"
  | "theta"
  | "u"
  | "v"
  | "depth"
  | "focal";

export interface StepSizes {
  angleCoarse: number;
  angleFine: number;
  shiftCoarse: number;
  shiftFine: number;
  scaleCoarse: number;
  scaleFine: number;
}

export const DEFAULT_STEPS: StepSizes = {
  angleCoarse: (5 * Math.PI) / 180,
  angleFine: (0.5 * Math.PI) / 180,
  shiftCoarse: 10,
  shiftFine: 1,
  scaleCoarse: 1.05,
  scaleFine: 1.005,
};

export const DEFAULT_POSE: Pose = {
  azimuth: 0,
  elevation: 0.2,
  theta: 0,
  depth: 8,
  focal: 1200,
  u: 256,
  v: 256,
};

export class UiSession {
  record: AnnotationRecord | null = null;
  draft: Pose = { ...DEFAULT_POSE };
  stepMode: StepMode = "coarse";
  overlayMode: OverlayMode = "wireframe";
  dirty = false;
  conflict = false;
  annotator: string;

  constructor(
    readonly api: ApiClient,
    options: { annotator?: string; steps?: Partial<StepSizes> } = {},
  ) {
    this.annotator = options.annotator ?? "";
    this.steps = { ...DEFAULT_STEPS, ...(options.steps ?? {}) };
  }

  readonly steps: StepSizes;

  get imageId(): string | null {
    return this.record?.image_id ?? null;
  }

  get revision(): number {
    return this.record?.revision ?? 0;
  }

  /** The draft must satisfy the pose invariants before save is enabled. */
  get canSave(): boolean {
    return this.record !== null && !this.conflict && isValidPose(this.draft);
  }

  async load(imageId: string): Promise<AnnotationRecord> {
    const record = await this.api.getAnnotation(imageId);
    this.record = record;
    this.draft = record.pose ? { ...record.pose } : { ...DEFAULT_POSE };
    this.dirty = false;
    this.conflict = false;
    return record;
  }

  /** Re-read the server state after a conflict; the local draft is discarded. */
  async reload(): Promise<AnnotationRecord> {
    if (!this.record) throw new Error("no image loaded");
    return this.load(this.record.image_id);
  }

  setStepMode(mode: StepMode): void {
    this.stepMode = mode;
  }

  toggleStepMode(): void {
    this.stepMode = this.stepMode === "coarse" ? "fine" : "coarse";
  }

  setOverlayMode(mode: OverlayMode): void {
    this.overlayMode = mode;
  }

  /** Nudge one parameter; direction is +1 or -1. */
  adjust(param: AdjustParam, direction: 1 | -1): void {
    const fine = this.stepMode === "fine";
    const next = { ...this.draft };
    switch (param) {
      case "azimuth":
      case "elevation":
      case "theta": {
        const step = fine ? this.steps.angleFine : this.steps.angleCoarse;
        next[param] += direction * step;
        break;
      }
      case "u":
      case "v": {
        const step = fine ? this.steps.shiftFine : this.steps.shiftCoarse;
        next[param] += direction * step;
        break;
      }
      case "depth":
      case "focal": {
        const factor = fine ? this.steps.scaleFine : this.steps.scaleCoarse;
        next[param] *= direction > 0 ? factor : 1 / factor;
        break;
      }
    }
    this.draft = canonicalPose(next);
    this.dirty = true;
  }

  setDraft(pose: Pose): void {
    this.draft = canonicalPose({ ...pose });
    this.dirty = true;
  }

  async save(): Promise<AnnotationRecord> {
    if (!this.record) throw new Error("no image loaded");
    if (!this.canSave) throw new Error("draft violates pose invariants");
    try {
      const record = await this.api.putAnnotation(
        this.record.image_id,
        this.draft,
        this.record.revision,
        this.annotator,
      );
      this.record = record;
      this.dirty = false;
      return record;
    } catch (error) {
      if (error instanceof ConflictError) {
        this.conflict = true;
      }
      throw error;
    }
  }

  async flag(): Promise<AnnotationRecord> {
    return this.transition("flagged");
  }

  async approve(): Promise<AnnotationRecord> {
    return this.transition("approved");
  }

  private async transition(status: "flagged" | "approved"): Promise<AnnotationRecord> {
    if (!this.record) throw new Error("no image loaded");
    if (this.dirty) throw new Error("save or discard the draft before changing status");
    const record = await this.api.postStatus(this.record.image_id, status, this.annotator);
    this.record = record;
    return record;
  }
}
