// Thin typed client over the tutoring service API.

import type {
  ApiErrorBody,
  SessionCreated,
  SessionView,
  SimilarCasePayload,
  TurnPayload,
  TutorResponsePayload,
  MasteryEntry,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = body.http_status;
  }
}

async function parseJson<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(body as ApiErrorBody);
  }
  return body as T;
}

export class TutorClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listCases(): Promise<Array<{ case_id: string; image_width: number; image_height: number }>> {
    return parseJson(await fetch(this.url("/cases")));
  }

  async createSession(caseId: string): Promise<SessionCreated> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ case_id: caseId }),
    });
    return parseJson(response);
  }

  async submitTurn(sessionId: string, turn: TurnPayload): Promise<TutorResponsePayload> {
    const response = await fetch(this.url(`/sessions/${sessionId}/turns`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(turn),
    });
    return parseJson(response);
  }

  async sessionView(sessionId: string): Promise<SessionView> {
    return parseJson(await fetch(this.url(`/sessions/${sessionId}`)));
  }

  async mastery(sessionId: string): Promise<Record<string, MasteryEntry>> {
    return parseJson(await fetch(this.url(`/sessions/${sessionId}/mastery`)));
  }

  async similar(sessionId: string): Promise<SimilarCasePayload[]> {
    return parseJson(await fetch(this.url(`/sessions/${sessionId}/similar`)));
  }

  caseImageUrl(caseId: string): string {
    return this.url(`/cases/${caseId}/image`);
  }

  overlayUrl(name: string): string {
    return this.url(`/overlays/${name}`);
  }
}
