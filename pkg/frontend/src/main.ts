// Browser wiring: sliders sculpt the schedule, curves and cost readouts
// track the latest server responses held in the store.

import { Client } from "./api.js";
import { compartmentColor, curvePaths, niceMax } from "./chart.js";
import { ExplorerStore } from "./store.js";

const W = 760;
const H = 360;

function el<K extends keyof HTMLElementTagNameMap>(tag: K, attrs: Record<string, string> = {}) {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

async function boot() {
  const client = new Client("");
  const store = new ExplorerStore(client);

  const root = document.getElementById("app")!;
  const banner = el("div", { class: "banner" });
  const controls = el("div", { class: "controls" });
  const modelSelect = el("select");
  const phaseSelect = el("select");
  for (const n of [5, 10, 20]) {
    const opt = el("option");
    opt.textContent = String(n);
    opt.setAttribute("value", String(n));
    phaseSelect.appendChild(opt);
  }
  const sliders = el("div", { class: "sliders" });
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${W} ${H}`);
  svg.setAttribute("class", "chart");
  const legend = el("div", { class: "legend" });
  const costPanel = el("div", { class: "costs" });
  const overlayLabel = el("label");
  const overlayBox = el("input", { type: "checkbox" });
  overlayLabel.append(overlayBox, document.createTextNode(" ground-truth overlay"));
  const cIInput = el("input", { type: "number", value: "1", step: "0.1" });
  const cUInput = el("input", { type: "number", value: "0.1", step: "0.01" });
  const seedBtn = el("button");
  seedBtn.textContent = "seed from optimizer";
  controls.append("model ", modelSelect, " phases ", phaseSelect, overlayLabel,
                  " C_I ", cIInput, " C_u ", cUInput, seedBtn);
  root.append(banner, controls, sliders, svg, legend, costPanel);

  function rebuildSliders() {
    sliders.replaceChildren();
    store.schedule.levels.forEach((level, i) => {
      const slider = el("input", {
        type: "range", min: "0", max: String(store.schedule.uUb),
        step: "0.01", value: String(level),
      });
      slider.addEventListener("input", () => store.editSchedule(i, Number(slider.value)));
      sliders.appendChild(slider);
    });
  }

  function render() {
    banner.textContent = store.view.error ? `server error: ${store.view.error}` : "";
    banner.style.display = store.view.error ? "block" : "none";
    const pred = store.view.prediction;
    svg.replaceChildren();
    legend.replaceChildren();
    if (pred) {
      const yMax = Math.max(niceMax(pred), niceMax(store.view.truth));
      const draw = (payload: typeof pred, dashed: boolean) => {
        for (const path of curvePaths(payload, store.view.visibleCompartments, W, H, yMax, dashed)) {
          const p = document.createElementNS("http://www.w3.org/2000/svg", "path");
          p.setAttribute("d", path.d);
          p.setAttribute("fill", "none");
          p.setAttribute("stroke", compartmentColor(payload.compartments.indexOf(path.compartment)));
          if (dashed) p.setAttribute("stroke-dasharray", "6 4");
          svg.appendChild(p);
        }
      };
      draw(pred, false);
      if (store.view.overlayTruth && store.view.truth) draw(store.view.truth, true);
      pred.compartments.forEach((name, i) => {
        const chip = el("label", { class: "chip" });
        const box = el("input", { type: "checkbox" });
        (box as HTMLInputElement).checked = store.view.visibleCompartments.has(name);
        box.addEventListener("change", () => store.toggleCompartment(name));
        chip.append(box, document.createTextNode(name));
        chip.style.color = compartmentColor(i);
        legend.appendChild(chip);
      });
    }
    const costs = store.costs();
    costPanel.textContent = costs
      ? `cost: total ${costs.total.toPrecision(6)} = infection ${costs.infection.toPrecision(6)}`
        + ` + control ${costs.control.toPrecision(6)}`
      : "no prediction yet";
    sliders.querySelectorAll("input").forEach((node, i) => {
      (node as HTMLInputElement).value = String(store.schedule.levels[i] ?? 0);
    });
  }

  store.subscribe(render);
  overlayBox.addEventListener("change", () => void store.setOverlay((overlayBox as HTMLInputElement).checked));
  const applyWeights = () => store.setWeights(Number((cIInput as HTMLInputElement).value),
                                              Number((cUInput as HTMLInputElement).value));
  cIInput.addEventListener("change", applyWeights);
  cUInput.addEventListener("change", applyWeights);
  seedBtn.addEventListener("click", () => void store.seedFromOptimizer());
  phaseSelect.addEventListener("change", async () => {
    if (store.schedule.modelId) {
      await store.selectModel(store.schedule.modelId, Number((phaseSelect as HTMLSelectElement).value));
      rebuildSliders();
    }
  });
  modelSelect.addEventListener("change", async () => {
    await store.selectModel((modelSelect as HTMLSelectElement).value,
                            Number((phaseSelect as HTMLSelectElement).value));
    rebuildSliders();
  });

  const models = await client.listModels();
  for (const meta of models) {
    const opt = el("option", { value: meta.id });
    opt.textContent = `${meta.id} (${meta.mode}, N=${meta.train_size})`;
    modelSelect.appendChild(opt);
  }
  if (models.length > 0) {
    (modelSelect as HTMLSelectElement).value = models[0].id;
    await store.selectModel(models[0].id, 5);
    rebuildSliders();
  } else {
    banner.textContent = "no models published yet - train one via POST /models or the CLI";
    banner.style.display = "block";
  }
}

boot().catch((err) => {
  const root = document.getElementById("app")!;
  root.textContent = `failed to start: ${err}`;
});
