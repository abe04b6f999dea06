export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
}
/** Thin typed client over the server's five endpoints. */
export class ApiClient {
    baseUrl;
    fetchFn;
    constructor(baseUrl = "", fetchFn = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async request(path, init) {
        const response = await this.fetchFn(this.baseUrl + path, init);
        const body = await response.json().catch(() => ({}));
        if (!response.ok) {
            const message = typeof body?.error === "string" ? body.error : `HTTP ${response.status}`;
            throw new ApiError(response.status, message);
        }
        return body;
    }
    session() {
        return this.request("/api/session");
    }
    queue(limit) {
        return this.request(`/api/queue?limit=${limit}`);
    }
    decide(decision) {
        return this.request("/api/decision", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(decision),
        });
    }
    metrics() {
        return this.request("/api/metrics");
    }
    retrain() {
        return this.request("/api/retrain", { method: "POST", body: "{}" });
    }
}
