export type Decision = 'choose_a' | 'choose_b' | 'other';

export type Progress = {
  resolved: number;
  total: number;
};

/** Queue item exactly as the server presents it: no annotator identities. */
export type QueueItem = {
  conflict_id: string;
  report_id: string;
  feature: string;
  feature_description: string;
  allowed_codes: string[] | null;
  candidate_a: unknown;
  candidate_b: unknown;
  queue_position: number;
  version: number;
};

export type QueueResponse =
  | { done: false; item: QueueItem; progress: Progress }
  | { done: true; progress: Progress; summary: Record<string, number> };

export type SubmitResult =
  | { kind: 'accepted'; version: number; progress: Progress }
  | { kind: 'stale'; version: number }
  | { kind: 'rejected'; message: string };

/** What the display layer renders for one conflict. */
export type QueueItemView = {
  conflictId: string;
  reportId: string;
  feature: string;
  description: string;
  candidateA: string;
  candidateB: string;
  allowedCodes: string[] | null;
  /** Report text split on newlines, spaces intact; render in a pre element. */
  reportLines: string[];
  progress: Progress;
  version: number;
};

export type PendingSelection = {
  decision: Decision | null;
  otherValue: string | null;
  ocrFlag: boolean;
};
