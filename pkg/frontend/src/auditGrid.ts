// Editable transcript-by-concept matrix. A cell click sends the correction;
// the grid re-renders only from the server's response payload, and reverts
// to the last confirmed payload if the server rejects the edit, so no
// optimistic value can outlive an error.

import type { ApiClient, TablePayload } from './api.js';

export interface GridCallbacks {
  onMutated?: (payload: TablePayload) => void;
  onError?: (message: string) => void;
  onOpenTranscript?: (transcriptId: string) => void;
}

export interface GridController {
  refresh(): Promise<void>;
  render(payload: TablePayload): void;
  toggle(transcriptId: string, conceptKey: string): Promise<void>;
  payload(): TablePayload | null;
}

const cellLabel = (value: number) => (value === 1 ? '1' : '0');

export const renderGridDom = (
  host: HTMLElement,
  payload: TablePayload,
  controller: GridController,
  callbacks: GridCallbacks,
): void => {
  const { table, breadth, stale } = payload;
  host.replaceChildren();

  if (stale) {
    const banner = document.createElement('div');
    banner.className = 'banner stale-banner';
    banner.textContent =
      'Vocabulary changed since this table was mapped; re-run mapping before correcting.';
    host.appendChild(banner);
  }
  if (table.incomplete.length) {
    const banner = document.createElement('div');
    banner.className = 'banner incomplete-banner';
    banner.textContent = `Incomplete rows: ${table.incomplete.join(', ')}`;
    host.appendChild(banner);
  }

  const grid = document.createElement('table');
  grid.className = 'audit-grid';
  const head = document.createElement('tr');
  head.appendChild(document.createElement('th'));
  for (const key of table.concept_keys) {
    const th = document.createElement('th');
    th.textContent = key;
    th.dataset.concept = key;
    head.appendChild(th);
  }
  grid.appendChild(head);

  const breadthRow = document.createElement('tr');
  breadthRow.className = 'breadth-row';
  const label = document.createElement('th');
  label.textContent = `b(c) of ${breadth.m_total}`;
  breadthRow.appendChild(label);
  for (const key of table.concept_keys) {
    const td = document.createElement('td');
    td.className = 'breadth-cell';
    td.dataset.concept = key;
    td.textContent = String(breadth.counts[key] ?? 0);
    breadthRow.appendChild(td);
  }
  grid.appendChild(breadthRow);

  for (const transcriptId of Object.keys(table.rows)) {
    const tr = document.createElement('tr');
    const th = document.createElement('th');
    const link = document.createElement('button');
    link.type = 'button';
    link.className = 'transcript-link';
    link.textContent = transcriptId;
    link.addEventListener('click', () => callbacks.onOpenTranscript?.(transcriptId));
    th.appendChild(link);
    tr.appendChild(th);
    for (const key of table.concept_keys) {
      const cell = table.rows[transcriptId][key];
      const td = document.createElement('td');
      const button = document.createElement('button');
      button.type = 'button';
      button.className = `cell value-${cell.value} ${cell.provenance}`;
      button.dataset.transcript = transcriptId;
      button.dataset.concept = key;
      button.textContent = cellLabel(cell.value);
      if (cell.note) button.title = cell.note;
      button.disabled = stale;
      button.addEventListener('click', () => void controller.toggle(transcriptId, key));
      td.appendChild(button);
      tr.appendChild(td);
    }
    grid.appendChild(tr);
  }
  host.appendChild(grid);

  const journal = document.createElement('ol');
  journal.className = 'journal';
  for (const entry of table.journal) {
    const item = document.createElement('li');
    item.textContent =
      `${entry.transcript_id} / ${entry.concept_key}: ` +
      `${entry.old_value} -> ${entry.new_value}` +
      (entry.note ? ` (${entry.note})` : '');
    journal.appendChild(item);
  }
  host.appendChild(journal);
};

export const createGridController = (
  api: ApiClient,
  host: HTMLElement,
  condition: string,
  callbacks: GridCallbacks = {},
  noteProvider: () => string = () => '',
): GridController => {
  let confirmed: TablePayload | null = null;

  const controller: GridController = {
    payload: () => confirmed,

    render(payload) {
      confirmed = payload;
      renderGridDom(host, payload, controller, callbacks);
    },

    async refresh() {
      controller.render(await api.table(condition));
    },

    async toggle(transcriptId, conceptKey) {
      if (!confirmed) return;
      const current = confirmed.table.rows[transcriptId][conceptKey].value;
      try {
        const payload = await api.patchCell(condition, {
          transcript_id: transcriptId,
          concept_key: conceptKey,
          value: current === 1 ? 0 : 1,
          note: noteProvider(),
        });
        controller.render(payload);
        callbacks.onMutated?.(payload);
      } catch (err) {
        controller.render(confirmed); // drop the failed edit entirely
        callbacks.onError?.(err instanceof Error ? err.message : String(err));
      }
    },
  };
  return controller;
};
