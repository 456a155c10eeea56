import type { QueueItem, Progress, QueueItemView } from './types.js';

function formatCandidate(value: unknown): string {
  if (value === null) {
    return 'null';
  }
  return typeof value === 'string' ? value : JSON.stringify(value);
}

/**
 * Build the render model for one conflict. The report text is split on
 * newlines and otherwise untouched: no tab expansion, no trimming, no
 * wrapping, so the spatial layout of the source grid survives rendering.
 */
export function buildView(
  item: QueueItem,
  reportText: string,
  progress: Progress,
): QueueItemView {
  return {
    conflictId: item.conflict_id,
    reportId: item.report_id,
    feature: item.feature,
    description: item.feature_description,
    candidateA: formatCandidate(item.candidate_a),
    candidateB: formatCandidate(item.candidate_b),
    allowedCodes: item.allowed_codes,
    reportLines: reportText.split('\n'),
    progress,
    version: item.version,
  };
}
