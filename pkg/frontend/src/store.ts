import { ApiError, type ReviewApi } from "./api.js";
import type { QueueItem, SessionInfo, Stats } from "./types.js";

export interface ViewState {
  session: SessionInfo | null;
  queue: QueueItem[];
  totalRemaining: number;
  selectedId: number | null;
  /** id of the decision currently in flight, if any */
  pendingId: number | null;
  /** last server stats snapshot, displayed verbatim */
  stats: Stats | null;
  revision: number;
  /** true when a response carried an older revision than we already saw */
  stale: boolean;
  error: string | null;
  busy: boolean;
}

const PAGE_LIMIT = 20;

function initialState(): ViewState {
  return {
    session: null,
    queue: [],
    totalRemaining: 0,
    selectedId: null,
    pendingId: null,
    stats: null,
    revision: -1,
    stale: false,
    error: null,
    busy: false,
  };
}

/**
 * All UI state transitions. Decisions apply optimistically: the item leaves
 * the queue immediately, the server response reconciles the stats, and a
 * rejection puts the item back where it was with a visible error. The server
 * always wins: stats are stored exactly as received, never recomputed.
 */
export class Store {
  private state: ViewState = initialState();
  private listeners: Array<(s: ViewState) => void> = [];

  constructor(private api: ReviewApi) {}

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: (s: ViewState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  private observeRevision(revision: number): void {
    if (revision < this.state.revision) {
      this.update({ stale: true });
    } else {
      this.update({ revision, stale: false });
    }
  }

  async loadSession(): Promise<void> {
    try {
      const session = await this.api.session();
      this.update({ session, stats: session.stats, error: null });
      this.observeRevision(session.revision);
      await this.refreshQueue();
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async refreshQueue(limit: number = PAGE_LIMIT): Promise<void> {
    try {
      const page = await this.api.queue(limit);
      const selected = this.state.selectedId;
      const stillThere = page.items.some((it) => it.id === selected);
      this.update({
        queue: page.items,
        totalRemaining: page.total_remaining,
        selectedId: stillThere ? selected : page.items[0]?.id ?? null,
        error: null,
      });
      this.observeRevision(page.revision);
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  async refreshMetrics(): Promise<void> {
    try {
      const stats = await this.api.metrics();
      this.update({ stats, error: null });
      this.observeRevision(stats.revision);
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  select(id: number | null): void {
    this.update({ selectedId: id });
  }

  selectedItem(): QueueItem | null {
    return this.state.queue.find((it) => it.id === this.state.selectedId) ?? null;
  }

  /**
   * Submit a decision for the selected item. Resolves true once the server
   * acknowledged it; false when it was rejected (state already restored).
   */
  async submitDecision(action: "keep" | "relabel", newLabel?: number): Promise<boolean> {
    const item = this.selectedItem();
    if (!item || this.state.pendingId !== null) return false;
    const position = this.state.queue.findIndex((it) => it.id === item.id);
    const snapshot = this.state.queue;
    const optimistic = this.state.queue.filter((it) => it.id !== item.id);
    this.update({
      queue: optimistic,
      totalRemaining: Math.max(0, this.state.totalRemaining - 1),
      pendingId: item.id,
      selectedId: optimistic[Math.min(position, optimistic.length - 1)]?.id ?? null,
      error: null,
    });
    try {
      const stats =
        action === "relabel"
          ? await this.api.decide({ id: item.id, action, new_label: newLabel })
          : await this.api.decide({ id: item.id, action });
      this.update({
        stats,
        pendingId: null,
        totalRemaining: stats.queue_remaining,
      });
      this.observeRevision(stats.revision);
      return true;
    } catch (err) {
      const restored = snapshot.slice();
      this.update({
        queue: restored,
        totalRemaining: this.state.totalRemaining + 1,
        pendingId: null,
        selectedId: item.id,
        error: describe(err),
      });
      return false;
    }
  }

  async retrain(): Promise<void> {
    if (this.state.busy) return;
    this.update({ busy: true, error: null });
    try {
      const result = await this.api.retrain();
      this.observeRevision(result.revision);
      await this.refreshQueue();
      await this.refreshMetrics();
    } catch (err) {
      this.update({ error: describe(err) });
    } finally {
      this.update({ busy: false });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return `network error: ${err.message}`;
  return String(err);
}
