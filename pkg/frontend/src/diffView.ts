// Two-condition contrast view. Picking the same condition on both sides is
// blocked client-side (mirroring the server's rejection) before any request.

import type { ApiClient } from './api.js';

export interface DiffSelection {
  a: string | null;
  b: string | null;
  margin: number;
  separate: boolean;
}

export const diffBlockReason = (selection: DiffSelection): string | null => {
  if (!selection.a || !selection.b) return 'pick two conditions to compare';
  if (selection.a === selection.b) return 'pick two different conditions';
  if (selection.margin < 0) return 'margin must be at least 0';
  return null;
};

export const renderDiff = async (
  api: ApiClient,
  host: HTMLElement,
  selection: DiffSelection,
): Promise<string | null> => {
  const blocked = diffBlockReason(selection);
  if (blocked) {
    const notice = document.createElement('div');
    notice.className = 'banner diff-blocked';
    notice.textContent = blocked;
    host.replaceChildren(notice);
    return blocked;
  }
  const svg = await api.diffSvg(
    selection.a as string,
    selection.b as string,
    selection.margin,
    selection.separate,
  );
  host.innerHTML = svg;
  return null;
};
