/** Thin typed client for the review API. */

import {
  AnnotationPayload,
  DialogueSummary,
  DiffRow,
  GoldWriteResult,
  ProgressReport,
  ReDetail,
  TransactionView,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`API error ${status}`);
  }
}

export class ReviewApi {
  constructor(
    private baseUrl = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await response.json().catch(() => null));
    }
    return (await response.json()) as T;
  }

  listDialogues(): Promise<DialogueSummary[]> {
    return this.get("/api/dialogues");
  }

  getTransaction(dialogueId: string, index: number): Promise<TransactionView> {
    return this.get(`/api/dialogues/${encodeURIComponent(dialogueId)}/transactions/${index}`);
  }

  getRe(reId: string): Promise<ReDetail> {
    return this.get(`/api/res/${encodeURIComponent(reId)}`);
  }

  getDiff(reId: string): Promise<{ re_id: string; diff: DiffRow[] }> {
    return this.get(`/api/diff/${encodeURIComponent(reId)}`);
  }

  getProgress(): Promise<ProgressReport> {
    return this.get("/api/progress");
  }

  async putGold(
    payload: AnnotationPayload,
    revision: number,
    annotatorId: string,
    note = "",
  ): Promise<GoldWriteResult> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/gold/${encodeURIComponent(payload.re_id)}`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          ...payload,
          revision,
          annotator_id: annotatorId,
          note,
        }),
      },
    );
    if (!response.ok) {
      throw new ApiError(response.status, await response.json().catch(() => null));
    }
    return (await response.json()) as GoldWriteResult;
  }
}
