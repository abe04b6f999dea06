import { ApiError } from "./api.js";
const PAGE_LIMIT = 20;
function initialState() {
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
    api;
    state = initialState();
    listeners = [];
    constructor(api) {
        this.api = api;
    }
    getState() {
        return this.state;
    }
    subscribe(listener) {
        this.listeners.push(listener);
        return () => {
            this.listeners = this.listeners.filter((l) => l !== listener);
        };
    }
    update(patch) {
        this.state = { ...this.state, ...patch };
        for (const listener of this.listeners)
            listener(this.state);
    }
    observeRevision(revision) {
        if (revision < this.state.revision) {
            this.update({ stale: true });
        }
        else {
            this.update({ revision, stale: false });
        }
    }
    async loadSession() {
        try {
            const session = await this.api.session();
            this.update({ session, stats: session.stats, error: null });
            this.observeRevision(session.revision);
            await this.refreshQueue();
        }
        catch (err) {
            this.update({ error: describe(err) });
        }
    }
    async refreshQueue(limit = PAGE_LIMIT) {
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
        }
        catch (err) {
            this.update({ error: describe(err) });
        }
    }
    async refreshMetrics() {
        try {
            const stats = await this.api.metrics();
            this.update({ stats, error: null });
            this.observeRevision(stats.revision);
        }
        catch (err) {
            this.update({ error: describe(err) });
        }
    }
    select(id) {
        this.update({ selectedId: id });
    }
    selectedItem() {
        return this.state.queue.find((it) => it.id === this.state.selectedId) ?? null;
    }
    /**
     * Submit a decision for the selected item. Resolves true once the server
     * acknowledged it; false when it was rejected (state already restored).
     */
    async submitDecision(action, newLabel) {
        const item = this.selectedItem();
        if (!item || this.state.pendingId !== null)
            return false;
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
            const stats = action === "relabel"
                ? await this.api.decide({ id: item.id, action, new_label: newLabel })
                : await this.api.decide({ id: item.id, action });
            this.update({
                stats,
                pendingId: null,
                totalRemaining: stats.queue_remaining,
            });
            this.observeRevision(stats.revision);
            return true;
        }
        catch (err) {
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
    async retrain() {
        if (this.state.busy)
            return;
        this.update({ busy: true, error: null });
        try {
            const result = await this.api.retrain();
            this.observeRevision(result.revision);
            await this.refreshQueue();
            await this.refreshMetrics();
        }
        catch (err) {
            this.update({ error: describe(err) });
        }
        finally {
            this.update({ busy: false });
        }
    }
}
function describe(err) {
    if (err instanceof ApiError)
        return err.message;
    if (err instanceof Error)
        return `network error: ${err.message}`;
    return String(err);
}
