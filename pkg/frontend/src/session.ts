/**
 * Review session: a cursor over one dialogue's reference expressions with
 * save-on-advance semantics. Advancing past a dirty, gating-valid form
 * issues exactly one gold write; gating violations block the advance;
 * network failures keep the edits local and mark the session dirty.
 */

import { ReviewApi } from "./api.js";
import {
  FormState,
  buildPayload,
  formFromPayload,
  gatingViolations,
  newForm,
} from "./cascade.js";
import { ReDetail } from "./types.js";

export type Filter = "all" | "machine-disagreement" | "unannotated";

export interface AdvanceResult {
  moved: boolean;
  saved: boolean;
  blocked: string[];
  networkError: string | null;
}

export class ReviewSession {
  reIds: string[] = [];
  cursor = 0;
  filter: Filter = "all";
  form: FormState | null = null;
  detail: ReDetail | null = null;
  /** Edits that failed to reach the server and await a retry. */
  pendingWrites = 0;

  constructor(
    private api: ReviewApi,
    public annotatorId: string,
  ) {}

  async open(reIds: string[], filter: Filter = "all"): Promise<void> {
    this.filter = filter;
    this.reIds = [];
    for (const reId of reIds) {
      if (await this.matchesFilter(reId)) this.reIds.push(reId);
    }
    this.cursor = 0;
    if (this.reIds.length > 0) {
      await this.loadCurrent();
    } else {
      this.form = null;
      this.detail = null;
    }
  }

  private async matchesFilter(reId: string): Promise<boolean> {
    if (this.filter === "all") return true;
    const detail = await this.api.getRe(reId);
    if (this.filter === "unannotated") return detail.gold === null;
    // machine-disagreement: a gold record exists and differs from machine.
    if (detail.gold === null || detail.machine === null) return false;
    return JSON.stringify(detail.gold) !== JSON.stringify(detail.machine);
  }

  get currentReId(): string | null {
    return this.reIds[this.cursor] ?? null;
  }

  async loadCurrent(): Promise<void> {
    const reId = this.currentReId;
    if (reId === null) return;
    this.detail = await this.api.getRe(reId);
    const seed = this.detail.gold ?? this.detail.machine;
    this.form = seed !== null ? formFromPayload(seed) : newForm(reId, this.detail.speaker);
    this.form.reId = reId;
  }

  /** Persist the current form if it is dirty; no-op on untouched forms. */
  private async saveIfDirty(): Promise<AdvanceResult> {
    if (this.form === null || !this.form.dirty) {
      return { moved: false, saved: false, blocked: [], networkError: null };
    }
    const violations = gatingViolations(this.form);
    if (violations.length > 0) {
      return { moved: false, saved: false, blocked: violations, networkError: null };
    }
    const payload = buildPayload(this.form);
    if (payload === null) {
      return { moved: false, saved: false, blocked: ["incomplete_attribute"], networkError: null };
    }
    try {
      const result = await this.api.putGold(
        payload,
        this.detail?.gold_revision ?? 0,
        this.annotatorId,
      );
      if (this.detail !== null) {
        this.detail.gold = payload;
        this.detail.gold_revision = result.revision;
      }
      this.form.dirty = false;
      return { moved: false, saved: true, blocked: [], networkError: null };
    } catch (error) {
      this.pendingWrites += 1;
      return {
        moved: false,
        saved: false,
        blocked: [],
        networkError: error instanceof Error ? error.message : String(error),
      };
    }
  }

  private async step(delta: number): Promise<AdvanceResult> {
    const saved = await this.saveIfDirty();
    if (saved.blocked.length > 0 || saved.networkError !== null) {
      return saved;
    }
    const next = this.cursor + delta;
    if (next < 0 || next >= this.reIds.length) {
      return { ...saved, moved: false };
    }
    this.cursor = next;
    await this.loadCurrent();
    return { ...saved, moved: true };
  }

  advance(): Promise<AdvanceResult> {
    return this.step(1);
  }

  back(): Promise<AdvanceResult> {
    return this.step(-1);
  }

  /** Explicit save without moving. */
  save(): Promise<AdvanceResult> {
    return this.saveIfDirty();
  }
}
