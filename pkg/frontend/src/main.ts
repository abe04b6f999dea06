import { ApiClient } from "./api.js";
import { renderApp, type FeatureSort } from "./render.js";
import { Store } from "./store.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const store = new Store(new ApiClient(""));
let featureSort: FeatureSort = "dim";

function draw(): void {
  root!.innerHTML = renderApp(store.getState(), featureSort);
}

store.subscribe(draw);

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "select") {
    store.select(Number(target.dataset.id));
  } else if (action === "keep") {
    void store.submitDecision("keep");
  } else if (action === "relabel") {
    void store.submitDecision("relabel", Number(target.dataset.label));
  } else if (action === "retrain") {
    void store.retrain();
  } else if (action === "retry") {
    void store.loadSession();
  } else if (action === "sort-features") {
    featureSort = target.dataset.sort === "value" ? "value" : "dim";
    draw();
  }
});

// refresh the dashboard every few seconds so another tab's decisions show up
setInterval(() => void store.refreshMetrics(), 5000);

void store.loadSession();
