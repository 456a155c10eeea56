import { AdjudicationApi } from './api.js';
import { buildView } from './view.js';
import type {
  Decision,
  PendingSelection,
  QueueItem,
  QueueItemView,
  SubmitResult,
} from './types.js';

/** Rendering surface the session drives; the browser binds it to the DOM. */
export interface Display {
  showItem(view: QueueItemView): void;
  showSelection(selection: PendingSelection): void;
  showCompletion(summary: Record<string, number>, progress: { resolved: number; total: number }): void;
  notify(message: string): void;
}

export type SubmitOutcome = 'accepted' | 'stale_refreshed' | 'rejected' | 'not_ready';

/**
 * One adjudicator session: fetch the next blinded conflict, capture a
 * decision (or OCR-error flag), submit with the item's version token, and
 * advance. A stale submit (another tab already resolved the item) refetches
 * instead of silently overwriting.
 */
export class AdjudicationSession {
  private readonly api: AdjudicationApi;
  private readonly display: Display;
  private current: QueueItem | null = null;
  private selection: PendingSelection = { decision: null, otherValue: null, ocrFlag: false };
  done = false;

  constructor(api: AdjudicationApi, display: Display) {
    this.api = api;
    this.display = display;
  }

  get currentItem(): QueueItem | null {
    return this.current;
  }

  get pendingSelection(): PendingSelection {
    return { ...this.selection };
  }

  async start(): Promise<void> {
    await this.advance();
  }

  async advance(): Promise<void> {
    const response = await this.api.nextItem();
    this.selection = { decision: null, otherValue: null, ocrFlag: false };
    if (response.done) {
      this.done = true;
      this.current = null;
      this.display.showCompletion(response.summary, response.progress);
      return;
    }
    this.current = response.item;
    const reportText = await this.api.reportText(response.item.report_id);
    this.display.showItem(buildView(response.item, reportText, response.progress));
    this.display.showSelection(this.selection);
  }

  select(decision: Decision): void {
    if (!this.current) {
      return;
    }
    this.selection.decision = decision;
    if (decision !== 'other') {
      this.selection.otherValue = null;
    }
    this.display.showSelection({ ...this.selection });
  }

  setOtherValue(value: string): void {
    this.selection.decision = 'other';
    this.selection.otherValue = value;
    this.display.showSelection({ ...this.selection });
  }

  toggleOcrFlag(): void {
    this.selection.ocrFlag = !this.selection.ocrFlag;
    this.display.showSelection({ ...this.selection });
  }

  /** Client-side check mirroring the schema: novel values for coded features
   * must be one of the allowed codes. */
  otherValueValid(): boolean {
    if (this.selection.decision !== 'other') {
      return true;
    }
    const value = this.selection.otherValue;
    if (value === null || value === '') {
      return false;
    }
    const codes = this.current?.allowed_codes;
    return !codes || codes.includes(value);
  }

  async submit(): Promise<SubmitOutcome> {
    const item = this.current;
    if (!item || this.selection.decision === null) {
      this.display.notify('choose A, B, or enter another value first');
      return 'not_ready';
    }
    if (!this.otherValueValid()) {
      this.display.notify('the new value must be one of the allowed codes');
      return 'not_ready';
    }
    const result: SubmitResult = await this.api.submitResolution(
      item.conflict_id,
      this.selection.decision,
      item.version,
      {
        otherValue: this.selection.otherValue,
        ocrFlag: this.selection.ocrFlag,
      },
    );
    if (result.kind === 'accepted') {
      await this.advance();
      return 'accepted';
    }
    if (result.kind === 'stale') {
      this.display.notify('this conflict was already resolved elsewhere; reloading');
      await this.advance();
      return 'stale_refreshed';
    }
    this.display.notify(`submission rejected: ${result.message}`);
    return 'rejected';
  }

  /** Keyboard-first controls: A/B pick a candidate, F flags an OCR error,
   * Enter submits. O is handled by the display (opens the other-value input). */
  async handleKey(key: string): Promise<void> {
    switch (key.toLowerCase()) {
      case 'a':
        this.select('choose_a');
        break;
      case 'b':
        this.select('choose_b');
        break;
      case 'f':
        this.toggleOcrFlag();
        break;
      case 'enter':
        await this.submit();
        break;
      default:
        break;
    }
  }
}
