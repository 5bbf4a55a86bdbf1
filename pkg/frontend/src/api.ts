// Typed client over the pipeline's HTTP API. The UI computes no breadth or
// layout values of its own: everything rendered comes back from here.

export interface ConditionInfo {
  condition_id: string;
  m: number;
}

export interface ConceptEntry {
  text: string;
  pinned: boolean;
  provenance: string;
}

export interface Vocabulary {
  condition_id: string;
  version: string;
  concepts: ConceptEntry[];
}

export interface Cell {
  value: number;
  provenance: string;
  soft_score?: number;
  note?: string;
}

export interface JournalEntry {
  transcript_id: string;
  concept_key: string;
  old_value: number;
  new_value: number;
  note: string;
}

export interface TableJson {
  condition_id: string;
  run_id: string;
  mode: string;
  tau: number;
  vocabulary_version: string;
  concept_keys: string[];
  incomplete: string[];
  rows: Record<string, Record<string, Cell>>;
  journal: JournalEntry[];
}

export interface Breadth {
  condition_id: string;
  m_total: number;
  counts: Record<string, number>;
  forced?: boolean;
}

export interface TablePayload {
  table: TableJson;
  breadth: Breadth;
  stale: boolean;
}

export interface TranscriptPayload {
  id: string;
  participant_id: string;
  condition_id: string;
  text: string;
}

export interface CellPatch {
  transcript_id: string;
  concept_key: string;
  value: number;
  note: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

const asError = async (res: Response): Promise<ApiError> => {
  let detail = `${res.status}`;
  try {
    const body = await res.json();
    detail = body.error ?? JSON.stringify(body);
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(res.status, detail);
};

const getJson = async <T>(url: string): Promise<T> => {
  const res = await fetch(url);
  if (!res.ok) throw await asError(res);
  return res.json();
};

const getText = async (url: string): Promise<string> => {
  const res = await fetch(url);
  if (!res.ok) throw await asError(res);
  return res.text();
};

const sendJson = async <T>(url: string, method: string, body: unknown): Promise<T> => {
  const res = await fetch(url, {
    method,
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  });
  if (!res.ok) throw await asError(res);
  return res.json();
};

const query = (params: Record<string, string | number | boolean | null | undefined>): string => {
  const pairs = Object.entries(params).filter(([, v]) => v !== null && v !== undefined);
  if (!pairs.length) return '';
  return '?' + pairs.map(([k, v]) => `${k}=${encodeURIComponent(String(v))}`).join('&');
};

export interface CloudParams {
  scale?: string | null;
  seed?: number | null;
  top_k?: number | null;
}

export const createClient = (base = '') => ({
  conditions: () => getJson<ConditionInfo[]>(`${base}/api/conditions`),

  vocab: (condition: string) =>
    getJson<Vocabulary>(`${base}/api/vocab/${encodeURIComponent(condition)}`),

  seed: (condition: string, phrases: string[], pin: boolean) =>
    sendJson<Vocabulary>(`${base}/api/vocab/${encodeURIComponent(condition)}/seed`, 'POST', {
      phrases,
      pin,
    }),

  pin: (condition: string, keys: string[], pinned: boolean) =>
    sendJson<Vocabulary>(`${base}/api/vocab/${encodeURIComponent(condition)}/pin`, 'POST', {
      keys,
      pinned,
    }),

  edits: (condition: string, edits: { remove: string[]; add: string[]; unpin?: boolean }[]) =>
    sendJson<Vocabulary>(`${base}/api/vocab/${encodeURIComponent(condition)}/edits`, 'POST', {
      edits,
    }),

  table: (condition: string) =>
    getJson<TablePayload>(`${base}/api/table/${encodeURIComponent(condition)}`),

  patchCell: (condition: string, patch: CellPatch) =>
    sendJson<TablePayload>(
      `${base}/api/table/${encodeURIComponent(condition)}/cell`,
      'PATCH',
      patch,
    ),

  cloudSvg: (condition: string, params: CloudParams = {}) =>
    getText(`${base}/api/cloud/${encodeURIComponent(condition)}${query({ ...params })}`),

  diffSvg: (a: string, b: string, margin: number, separate = false) =>
    getText(`${base}/api/diff${query({ a, b, margin, separate })}`),

  freqSvg: (condition: string, topK?: number | null) =>
    getText(`${base}/api/freq/${encodeURIComponent(condition)}${query({ top_k: topK })}`),

  transcript: (id: string) =>
    getJson<TranscriptPayload>(`${base}/api/transcript/${encodeURIComponent(id)}`),

  rerun: (stage: 'elicit' | 'map', condition: string) =>
    sendJson<unknown>(
      `${base}/api/rerun/${stage}/${encodeURIComponent(condition)}`,
      'POST',
      {},
    ),
});

export type ApiClient = ReturnType<typeof createClient>;
