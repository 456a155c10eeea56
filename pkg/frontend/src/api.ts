import type { Decision, Progress, QueueResponse, SubmitResult } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin client for the adjudication REST surface. The fetch implementation is
 * injectable so sessions can be scripted and their traffic recorded in tests.
 */
export class AdjudicationApi {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, '');
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  async nextItem(): Promise<QueueResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/queue/next`);
    if (!response.ok) {
      throw new Error(`queue/next failed: ${response.status}`);
    }
    return (await response.json()) as QueueResponse;
  }

  async reportText(reportId: string): Promise<string> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/reports/${encodeURIComponent(reportId)}/text`,
    );
    if (!response.ok) {
      throw new Error(`report text failed: ${response.status}`);
    }
    return await response.text();
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchImpl(`${this.baseUrl}/progress`);
    return (await response.json()) as Progress;
  }

  async submitResolution(
    conflictId: string,
    decision: Decision,
    version: number,
    options: { otherValue?: unknown; ocrFlag?: boolean } = {},
  ): Promise<SubmitResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/resolutions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({
        conflict_id: conflictId,
        decision,
        version,
        other_value: options.otherValue ?? null,
        ocr_error_flag: options.ocrFlag ?? false,
      }),
    });
    const body = (await response.json()) as Record<string, unknown>;
    if (response.status === 200) {
      return {
        kind: 'accepted',
        version: body.version as number,
        progress: body.progress as Progress,
      };
    }
    if (response.status === 409) {
      return { kind: 'stale', version: body.version as number };
    }
    return { kind: 'rejected', message: String(body.error ?? response.status) };
  }

  /** True when the server exposes a configured assistant endpoint. */
  async assistAvailable(): Promise<boolean> {
    const response = await this.fetchImpl(`${this.baseUrl}/assist`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({}),
    });
    return response.status !== 404;
  }

  async assist(conflictId: string, question: string): Promise<string | null> {
    const response = await this.fetchImpl(`${this.baseUrl}/assist`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ conflict_id: conflictId, question }),
    });
    if (response.status === 404) {
      return null; // assistant not configured; panel stays hidden
    }
    if (!response.ok) {
      throw new Error(`assist failed: ${response.status}`);
    }
    const body = (await response.json()) as { reply: string };
    return body.reply;
  }
}
