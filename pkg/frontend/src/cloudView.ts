// Cloud panel: injects the server-rendered SVG and attaches hover/click
// affordances. Breadth and participant values shown in the tooltip come
// straight from the data-* attributes the renderer emitted; the view never
// recomputes them.

import type { ApiClient, CloudParams } from './api.js';
import type { TooltipHandle } from './tooltip.js';

export interface CloudHandlers {
  onSelectConcept?: (conceptKey: string) => void;
}

export const buildTooltipContent = (el: Element): HTMLElement => {
  const concept = el.getAttribute('data-concept') ?? '';
  const breadth = el.getAttribute('data-breadth');
  const participants = (el.getAttribute('data-participants') ?? '')
    .split(',')
    .filter(Boolean);

  const box = document.createElement('div');
  const title = document.createElement('strong');
  title.textContent = concept;
  box.appendChild(title);
  if (breadth !== null) {
    const count = document.createElement('div');
    count.className = 'tooltip-breadth';
    count.textContent = `mentioned by ${breadth} participant(s)`;
    box.appendChild(count);
  }
  if (participants.length) {
    const who = document.createElement('div');
    who.className = 'tooltip-participants';
    who.textContent = participants.join(', ');
    box.appendChild(who);
  }
  return box;
};

export const wireCloudSvg = (
  host: HTMLElement,
  tooltip: TooltipHandle,
  handlers: CloudHandlers = {},
): void => {
  host.querySelectorAll('text[data-concept]').forEach((el) => {
    el.addEventListener('mouseenter', (event) => {
      const { clientX, clientY } = event as MouseEvent;
      tooltip.show(clientX, clientY, buildTooltipContent(el));
    });
    el.addEventListener('mouseleave', () => tooltip.hide());
    el.addEventListener('click', () => {
      const key = el.getAttribute('data-concept');
      if (key && handlers.onSelectConcept) handlers.onSelectConcept(key);
    });
  });
};

export const renderCloud = async (
  api: ApiClient,
  host: HTMLElement,
  tooltip: TooltipHandle,
  condition: string,
  params: CloudParams,
  handlers: CloudHandlers = {},
): Promise<void> => {
  const svg = await api.cloudSvg(condition, params);
  host.innerHTML = svg;
  wireCloudSvg(host, tooltip, handlers);
};

// Concepts ordered by rendered size (descending, key tie-break); used to
// assert that scale toggles reorder nothing.
export const sizeOrdering = (host: HTMLElement | Element): string[] =>
  Array.from(host.querySelectorAll('text[data-concept]'))
    .map((el) => ({
      key: el.getAttribute('data-concept') ?? '',
      size: parseFloat(el.getAttribute('font-size') ?? '0'),
    }))
    .sort((a, b) => b.size - a.size || a.key.localeCompare(b.key))
    .map((item) => item.key);

export const breadthByConcept = (host: HTMLElement | Element): Record<string, number> => {
  const out: Record<string, number> = {};
  host.querySelectorAll('text[data-concept]').forEach((el) => {
    const key = el.getAttribute('data-concept');
    const breadth = el.getAttribute('data-breadth');
    if (key && breadth !== null) out[key] = Number(breadth);
  });
  return out;
};
