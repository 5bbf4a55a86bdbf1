// Page wiring: condition tabs, cloud + controls, audit grid, diff panel.
// Every mutation round-trips through the server before the view updates.

import { createClient, type TablePayload } from './api.js';
import { createGridController, type GridController } from './auditGrid.js';
import { renderCloud } from './cloudView.js';
import { diffBlockReason, renderDiff } from './diffView.js';
import { createStore, type ScaleMode } from './state.js';
import { createTooltip } from './tooltip.js';

const api = createClient('');
const store = createStore();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const errorBar = () => $('error-bar');

const showError = (message: string) => {
  errorBar().textContent = message;
  errorBar().style.display = 'block';
  store.set({ error: message });
};

const clearError = () => {
  errorBar().style.display = 'none';
  store.set({ error: null });
};

let grid: GridController | null = null;

const openTranscript = async (transcriptId: string) => {
  try {
    const t = await api.transcript(transcriptId);
    $('transcript-title').textContent = `${t.id} (participant ${t.participant_id}, ${t.condition_id})`;
    $('transcript-body').textContent = t.text;
    $<HTMLDialogElement>('transcript-modal').showModal();
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
};

const refreshCloud = async () => {
  const { condition, scale, seed, topK } = store.get();
  if (!condition) return;
  const tooltip = createTooltip(document.body);
  await renderCloud(
    api,
    $('cloud-host'),
    tooltip,
    condition,
    { scale, seed, top_k: topK },
    {
      onSelectConcept: (key) => {
        store.set({ selectedConcept: key });
        $('selected-concept').textContent = key;
        highlightColumn(key);
      },
    },
  );
};

const highlightColumn = (conceptKey: string) => {
  document
    .querySelectorAll('.audit-grid [data-concept]')
    .forEach((el) => el.classList.toggle('selected', el.getAttribute('data-concept') === conceptKey));
};

const refreshGrid = async () => {
  const { condition } = store.get();
  if (!condition) return;
  grid = createGridController(
    api,
    $('grid-host'),
    condition,
    {
      onMutated: () => void refreshCloud(),
      onError: showError,
      onOpenTranscript: (tid) => void openTranscript(tid),
    },
    () => $<HTMLInputElement>('note-input').value,
  );
  await grid.refresh();
};

const selectCondition = async (condition: string) => {
  clearError();
  store.set({ condition });
  document.querySelectorAll('.condition-tab').forEach((el) => {
    el.classList.toggle('active', el.getAttribute('data-condition') === condition);
  });
  try {
    await refreshCloud();
    await refreshGrid();
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
};

const refreshDiff = async () => {
  const { diffA, diffB, diffMargin } = store.get();
  const separate = $<HTMLInputElement>('diff-separate').checked;
  try {
    await renderDiff(api, $('diff-host'), { a: diffA, b: diffB, margin: diffMargin, separate });
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
};

const boot = async () => {
  const conditions = await api.conditions();
  const tabs = $('condition-tabs');
  const diffA = $<HTMLSelectElement>('diff-a');
  const diffB = $<HTMLSelectElement>('diff-b');
  for (const info of conditions) {
    const tab = document.createElement('button');
    tab.type = 'button';
    tab.className = 'condition-tab';
    tab.dataset.condition = info.condition_id;
    tab.textContent = `${info.condition_id} (${info.m})`;
    tab.addEventListener('click', () => void selectCondition(info.condition_id));
    tabs.appendChild(tab);
    for (const select of [diffA, diffB]) {
      const option = document.createElement('option');
      option.value = info.condition_id;
      option.textContent = info.condition_id;
      select.appendChild(option);
    }
  }

  $<HTMLSelectElement>('scale-select').addEventListener('change', (event) => {
    store.set({ scale: (event.target as HTMLSelectElement).value as ScaleMode });
    void refreshCloud();
  });
  $<HTMLInputElement>('seed-input').addEventListener('change', (event) => {
    store.set({ seed: Number((event.target as HTMLInputElement).value) || 0 });
    void refreshCloud();
  });
  $<HTMLInputElement>('topk-input').addEventListener('change', (event) => {
    const raw = (event.target as HTMLInputElement).value;
    store.set({ topK: raw ? Number(raw) : null });
    void refreshCloud();
  });

  $('seed-concept-btn').addEventListener('click', async () => {
    const { condition } = store.get();
    const phrase = $<HTMLInputElement>('seed-concept-input').value.trim();
    if (!condition || !phrase) return;
    try {
      await api.seed(condition, [phrase], $<HTMLInputElement>('seed-pin-check').checked);
      $<HTMLInputElement>('seed-concept-input').value = '';
      await refreshGrid(); // table is now stale; the banner explains
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err));
    }
  });

  $('rerun-map-btn').addEventListener('click', async () => {
    const { condition } = store.get();
    if (!condition) return;
    try {
      await api.rerun('map', condition);
      await selectCondition(condition);
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err));
    }
  });

  for (const [el, key] of [
    [diffA, 'diffA'],
    [diffB, 'diffB'],
  ] as const) {
    el.addEventListener('change', () => {
      store.set({ [key]: el.value || null } as never);
      void refreshDiff();
    });
  }
  $<HTMLInputElement>('diff-margin').addEventListener('change', (event) => {
    store.set({ diffMargin: Number((event.target as HTMLInputElement).value) || 0 });
    void refreshDiff();
  });
  $<HTMLInputElement>('diff-separate').addEventListener('change', () => void refreshDiff());

  $('transcript-close').addEventListener('click', () =>
    $<HTMLDialogElement>('transcript-modal').close(),
  );

  if (conditions.length) await selectCondition(conditions[0].condition_id);
};

void boot().catch((err) => showError(err instanceof Error ? err.message : String(err)));
