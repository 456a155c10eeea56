import { AdjudicationApi } from './api.js';
import { AdjudicationSession, type Display } from './session.js';
import type { PendingSelection, QueueItemView } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class DomDisplay implements Display {
  showItem(view: QueueItemView): void {
    el('feature-name').textContent = view.feature;
    el('feature-description').textContent = view.description;
    el('candidate-a-value').textContent = view.candidateA;
    el('candidate-b-value').textContent = view.candidateB;
    // textContent into a pre: spaces and newlines land verbatim, no reflow
    el<HTMLPreElement>('report-pane').textContent = view.reportLines.join('\n');
    el('progress').textContent = `${view.progress.resolved} / ${view.progress.total}`;
    el('queue-card').hidden = false;
    el('completion-card').hidden = true;

    const select = el<HTMLSelectElement>('other-select');
    const input = el<HTMLInputElement>('other-input');
    if (view.allowedCodes) {
      select.innerHTML = '';
      for (const code of view.allowedCodes) {
        const option = document.createElement('option');
        option.value = code;
        option.textContent = code;
        select.appendChild(option);
      }
      select.hidden = false;
      input.hidden = true;
    } else {
      select.hidden = true;
      input.hidden = false;
      input.value = '';
    }
  }

  showSelection(selection: PendingSelection): void {
    el('candidate-a').classList.toggle('selected', selection.decision === 'choose_a');
    el('candidate-b').classList.toggle('selected', selection.decision === 'choose_b');
    el('other-row').classList.toggle('selected', selection.decision === 'other');
    el<HTMLInputElement>('ocr-flag').checked = selection.ocrFlag;
  }

  showCompletion(summary: Record<string, number>, progress: { resolved: number; total: number }): void {
    el('queue-card').hidden = true;
    el('completion-card').hidden = false;
    el('completion-progress').textContent = `${progress.resolved} of ${progress.total} conflicts resolved`;
    el('completion-summary').textContent = Object.entries(summary)
      .map(([name, count]) => `${name}: ${count}`)
      .join('\n');
  }

  notify(message: string): void {
    const banner = el('notice');
    banner.textContent = message;
    banner.hidden = false;
    setTimeout(() => {
      banner.hidden = true;
    }, 4000);
  }
}

async function bootstrap(): Promise<void> {
  const api = new AdjudicationApi(window.location.origin);
  const display = new DomDisplay();
  const session = new AdjudicationSession(api, display);

  el('candidate-a').addEventListener('click', () => session.select('choose_a'));
  el('candidate-b').addEventListener('click', () => session.select('choose_b'));
  el<HTMLSelectElement>('other-select').addEventListener('change', (event) => {
    session.setOtherValue((event.target as HTMLSelectElement).value);
  });
  el<HTMLInputElement>('other-input').addEventListener('input', (event) => {
    session.setOtherValue((event.target as HTMLInputElement).value);
  });
  el<HTMLInputElement>('ocr-flag').addEventListener('change', () => session.toggleOcrFlag());
  el('submit').addEventListener('click', () => void session.submit());

  document.addEventListener('keydown', (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === 'INPUT' || target.tagName === 'SELECT')) {
      return; // typing a value; keyboard shortcuts stay out of the way
    }
    if (event.key.toLowerCase() === 'o') {
      const select = el<HTMLSelectElement>('other-select');
      const input = el<HTMLInputElement>('other-input');
      (select.hidden ? input : select).focus();
      event.preventDefault();
      return;
    }
    void session.handleKey(event.key);
  });

  const assistForm = el<HTMLFormElement>('assist-form');
  assistForm.addEventListener('submit', (event) => {
    event.preventDefault();
    const question = el<HTMLInputElement>('assist-question').value;
    const item = session.currentItem;
    if (!item) {
      return;
    }
    void api.assist(item.conflict_id, question).then((reply) => {
      if (reply !== null) {
        el('assist-reply').textContent = reply;
      }
    });
  });
  // hide the assistant panel when the server has no assistant configured
  const assistantUp = await api.assistAvailable().catch(() => false);
  if (!assistantUp) {
    el('assist-panel').hidden = true;
  }

  await session.start();
}

void bootstrap();
