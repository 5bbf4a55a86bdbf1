// View state with subscriptions. Mutations are pessimistic everywhere in
// this UI: state only changes after the server confirms, so nothing here
// ever holds a value the server has not produced.

export type ScaleMode = 'linear' | 'log' | 'sqrt';

export interface ViewState {
  condition: string | null;
  scale: ScaleMode;
  seed: number;
  topK: number | null;
  diffA: string | null;
  diffB: string | null;
  diffMargin: number;
  selectedConcept: string | null;
  error: string | null;
}

export const initialState = (): ViewState => ({
  condition: null,
  scale: 'linear',
  seed: 0,
  topK: null,
  diffA: null,
  diffB: null,
  diffMargin: 1,
  selectedConcept: null,
  error: null,
});

export type Listener = (state: ViewState) => void;

export interface Store {
  get(): ViewState;
  set(partial: Partial<ViewState>): void;
  subscribe(listener: Listener): () => void;
}

export const createStore = (seed: Partial<ViewState> = {}): Store => {
  let state: ViewState = { ...initialState(), ...seed };
  const listeners = new Set<Listener>();
  return {
    get: () => state,
    set(partial) {
      state = { ...state, ...partial };
      listeners.forEach((fn) => fn(state));
    },
    subscribe(listener) {
      listeners.add(listener);
      return () => listeners.delete(listener);
    },
  };
};
