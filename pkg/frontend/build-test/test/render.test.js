import assert from "node:assert/strict";
import { test } from "node:test";
import { featureTable, relabelOptions, renderDetail, renderQueue, renderStats } from "../src/render.js";
import { item } from "./fakes.js";
test("queue renders rows in served order", () => {
    const items = [item(9, { margin: 0.01 }), item(4, { margin: 0.02 }), item(7, { margin: 0.03 }),
        item(2, { margin: 0.04 }), item(5, { margin: 0.05 })];
    const html = renderQueue(items, 4, 5);
    const order = [...html.matchAll(/data-id="(\d+)"/g)].map((m) => Number(m[1]));
    assert.deepEqual(order, [9, 4, 7, 2, 5]);
    assert.equal((html.match(/queue-row/g) ?? []).length >= 5, true);
});
test("empty queue shows the clean state", () => {
    const html = renderQueue([], null, 0);
    assert.match(html, /queue-empty/);
    assert.match(html, /Queue is empty/);
});
test("queue row shows observed vs predicted disagreement", () => {
    const html = renderQueue([item(1, { observed_label: 2, predicted_label: 0 })], 1, 1);
    assert.match(html, /label 2 &rarr; model says 0/);
});
test("detail renders two panels when a counter-example exists", () => {
    const it = item(1, {
        counterexample: { id: 8, label: 1, features: [1, 2], probs: [0.2, 0.8] },
    });
    const html = renderDetail(it, 2, [it], "dim");
    assert.equal((html.match(/<div class="panel"/g) ?? []).length, 2);
    assert.match(html, /counter-example #8/);
    assert.match(html, /pt counterexample/); // highlighted on the scatter
});
test("detail without counter-example shows the notice", () => {
    const it = item(1, { counterexample: null });
    const html = renderDetail(it, 2, [it], "dim");
    assert.equal((html.match(/<div class="panel"/g) ?? []).length, 1);
    assert.match(html, /no-counterexample/);
});
test("relabel selector excludes the current label", () => {
    assert.deepEqual(relabelOptions(4, 2), [0, 1, 3]);
    const it = item(1, { observed_label: 2, probs: [0.25, 0.25, 0.25, 0.25] });
    const html = renderDetail(it, 4, [it], "dim");
    const offered = [...html.matchAll(/data-action="relabel" data-id="1" data-label="(\d)"/g)].map((m) => Number(m[1]));
    assert.deepEqual(offered, [0, 1, 3]);
});
test("margin readout present", () => {
    const html = renderDetail(item(1, { margin: 0.1234 }), 2, [item(1)], "dim");
    assert.match(html, /margin 0\.1234/);
});
test("feature table sorts by value when asked", () => {
    const html = featureTable([1.0, 9.0, 4.0], "value");
    const order = [...html.matchAll(/<td>x(\d)<\/td>/g)].map((m) => Number(m[1]));
    assert.deepEqual(order, [1, 2, 0]);
});
test("stats panel shows the server precision verbatim", () => {
    const html = renderStats({
        reviewed: 3,
        keeps: 1,
        relabels: 2,
        precision: 2 / 3,
        queue_remaining: 7,
        estimated_remaining_noise: 0.07,
        revision: 5,
    });
    assert.match(html, /precision 0\.667/);
    assert.match(html, /reviewed 3/);
    const empty = renderStats({
        reviewed: 0,
        keeps: 0,
        relabels: 0,
        precision: null,
        queue_remaining: 0,
        estimated_remaining_noise: 0,
        revision: 0,
    });
    assert.match(empty, /precision &mdash;/);
});
