export function escapeHtml(text) {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}
/** Labels a reviewer may relabel to: every class except the current one. */
export function relabelOptions(numClasses, currentLabel) {
    const options = [];
    for (let c = 0; c < numClasses; c++) {
        if (c !== currentLabel)
            options.push(c);
    }
    return options;
}
export function renderQueue(items, selectedId, total) {
    if (items.length === 0) {
        return ('<div class="queue-empty" data-testid="queue-empty">' +
            "Queue is empty — no suspicious samples right now." +
            "</div>");
    }
    const rows = items
        .map((it) => {
        const cls = it.id === selectedId ? "queue-row selected" : "queue-row";
        const verdict = it.observed_label === it.predicted_label
            ? `label ${it.observed_label}`
            : `label ${it.observed_label} &rarr; model says ${it.predicted_label}`;
        return (`<tr class="${cls}" data-action="select" data-id="${it.id}">` +
            `<td>#${it.id}</td><td>${it.margin.toFixed(3)}</td><td>${verdict}</td></tr>`);
    })
        .join("");
    return (`<table class="queue" data-testid="queue">` +
        `<thead><tr><th>sample</th><th>margin</th><th>observed vs predicted</th></tr></thead>` +
        `<tbody>${rows}</tbody></table>` +
        `<div class="queue-total">${total} undecided</div>`);
}
function probabilityBars(probs, highlight) {
    return probs
        .map((p, c) => {
        const width = Math.round(p * 100);
        const cls = c === highlight ? "bar observed" : "bar";
        return (`<div class="bar-row"><span class="bar-label">class ${c}</span>` +
            `<div class="${cls}" style="width:${width}%"></div>` +
            `<span class="bar-value">${p.toFixed(3)}</span></div>`);
    })
        .join("");
}
export function featureTable(features, sort) {
    const entries = features.map((v, i) => ({ dim: i, value: v }));
    if (sort === "value")
        entries.sort((a, b) => b.value - a.value);
    const rows = entries
        .map((e) => `<tr><td>x${e.dim}</td><td>${e.value.toFixed(4)}</td></tr>`)
        .join("");
    return (`<table class="features"><thead><tr>` +
        `<th data-action="sort-features" data-sort="dim">dim</th>` +
        `<th data-action="sort-features" data-sort="value">value</th>` +
        `</tr></thead><tbody>${rows}</tbody></table>`);
}
/** 2-D scatter of the first two feature dims: queue in grey, the selected
 * sample and its counter-example highlighted. */
export function scatterSvg(items, selected) {
    const points = [];
    for (const it of items) {
        points.push({ x: it.features[0] ?? 0, y: it.features[1] ?? 0, cls: "pt" });
    }
    points.push({
        x: selected.features[0] ?? 0,
        y: selected.features[1] ?? 0,
        cls: "pt selected",
    });
    if (selected.counterexample) {
        points.push({
            x: selected.counterexample.features[0] ?? 0,
            y: selected.counterexample.features[1] ?? 0,
            cls: "pt counterexample",
        });
    }
    const xs = points.map((p) => p.x);
    const ys = points.map((p) => p.y);
    const pad = 1e-9;
    const x0 = Math.min(...xs);
    const x1 = Math.max(...xs) + pad;
    const y0 = Math.min(...ys);
    const y1 = Math.max(...ys) + pad;
    const size = 220;
    const margin = 12;
    const scaleX = (v) => margin + ((v - x0) / (x1 - x0)) * (size - 2 * margin);
    const scaleY = (v) => size - margin - ((v - y0) / (y1 - y0)) * (size - 2 * margin);
    const circles = points
        .map((p) => `<circle class="${p.cls}" cx="${scaleX(p.x).toFixed(1)}" ` +
        `cy="${scaleY(p.y).toFixed(1)}" r="${p.cls === "pt" ? 3 : 6}"/>`)
        .join("");
    return `<svg class="scatter" viewBox="0 0 ${size} ${size}" width="${size}" height="${size}">${circles}</svg>`;
}
function samplePanel(title, label, probs, features, sort) {
    return (`<div class="panel"><h3>${escapeHtml(title)}</h3>` +
        `<div class="panel-label">label: ${label}</div>` +
        probabilityBars(probs, label) +
        featureTable(features, sort) +
        `</div>`);
}
export function renderDetail(item, numClasses, queue, sort) {
    const left = samplePanel(`sample #${item.id}`, item.observed_label, item.probs, item.features, sort);
    const right = item.counterexample
        ? samplePanel(`counter-example #${item.counterexample.id}`, item.counterexample.label, item.counterexample.probs, item.counterexample.features, sort)
        : '<div class="panel no-counterexample" data-testid="no-counterexample">no counter-example available</div>';
    const margin = `<div class="margin-readout">margin ${item.margin.toFixed(4)}</div>`;
    const relabel = relabelOptions(numClasses, item.observed_label)
        .map((c) => `<button data-action="relabel" data-id="${item.id}" data-label="${c}">relabel &rarr; ${c}</button>`)
        .join("");
    const actions = `<div class="actions">` +
        `<button data-action="keep" data-id="${item.id}">keep label ${item.observed_label}</button>` +
        relabel +
        `</div>`;
    return (`<div class="detail" data-testid="detail">` +
        margin +
        `<div class="panels">${left}${right}</div>` +
        scatterSvg(queue, item) +
        actions +
        `</div>`);
}
export function renderStats(stats) {
    if (!stats)
        return '<div class="stats" data-testid="stats">no stats yet</div>';
    const precision = stats.precision === null ? "&mdash;" : stats.precision.toFixed(3);
    return (`<div class="stats" data-testid="stats">` +
        `<span>reviewed ${stats.reviewed}</span>` +
        `<span>keeps ${stats.keeps}</span>` +
        `<span>relabels ${stats.relabels}</span>` +
        `<span data-testid="precision">precision ${precision}</span>` +
        `<span>queue ${stats.queue_remaining}</span>` +
        `<span>est. noise ${(stats.estimated_remaining_noise * 100).toFixed(1)}%</span>` +
        `<span class="revision">rev ${stats.revision}</span>` +
        `</div>`);
}
export function renderApp(state, sort) {
    const banner = state.error
        ? `<div class="banner error" data-testid="error-banner">${escapeHtml(state.error)} ` +
            `<button data-action="retry">retry</button></div>`
        : "";
    const staleNote = state.stale
        ? '<div class="banner stale" data-testid="stale">stale data — <button data-action="retry">refresh</button></div>'
        : "";
    const name = state.session ? escapeHtml(state.session.dataset.name) : "…";
    const selected = state.queue.find((it) => it.id === state.selectedId) ?? null;
    const detail = selected
        ? renderDetail(selected, state.session?.dataset.num_classes ?? 2, state.queue, sort)
        : '<div class="detail empty">select a sample</div>';
    const retrain = `<button data-action="retrain" ${state.busy ? "disabled" : ""}>retrain model</button>`;
    return (`<header><h1>labelqc review &mdash; ${name}</h1>${renderStats(state.stats)}${retrain}</header>` +
        banner +
        staleNote +
        `<main><section class="left">${renderQueue(state.queue, state.selectedId, state.totalRemaining)}</section>` +
        `<section class="right">${detail}</section></main>`);
}
