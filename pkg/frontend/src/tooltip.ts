// Floating tooltip anchored to a host element; content is plain DOM built
// by the caller from server-provided attributes.

export interface TooltipHandle {
  element: HTMLDivElement;
  show(x: number, y: number, content: HTMLElement | string): void;
  hide(): void;
}

export const createTooltip = (host: HTMLElement): TooltipHandle => {
  const el = document.createElement('div');
  el.className = 'tooltip';
  el.style.position = 'absolute';
  el.style.pointerEvents = 'none';
  el.style.display = 'none';
  host.appendChild(el);

  return {
    element: el,
    show(x, y, content) {
      el.replaceChildren(
        typeof content === 'string' ? document.createTextNode(content) : content,
      );
      el.style.left = `${x + 12}px`;
      el.style.top = `${y + 12}px`;
      el.style.display = 'block';
    },
    hide() {
      el.style.display = 'none';
    },
  };
};
