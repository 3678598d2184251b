/** DOM wiring for the fader console. */
import { FeatureName, Note, fetchTransport } from "./api.js";
import { renderRoll } from "./pianoroll.js";
import { ConsoleStore } from "./state.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "";
const store = new ConsoleStore(fetchTransport(baseUrl));

const DEMO_SEGMENTS: Record<string, Note[]> = {
  "chord pad": [
    [48, 0, 8], [55, 0, 8], [60, 0, 8], [64, 0, 8],
    [47, 8, 8], [55, 8, 8], [59, 8, 8], [62, 8, 8],
  ],
  "running line": [
    [60, 0, 2], [62, 2, 2], [64, 4, 2], [65, 6, 2],
    [67, 8, 2], [69, 10, 2], [71, 12, 2], [72, 14, 2],
  ],
  "sparse chords": [[48, 0, 16], [52, 0, 16], [55, 0, 16], [59, 8, 8]],
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const errorBanner = el<HTMLDivElement>("error-banner");
const inputRoll = el<HTMLDivElement>("input-roll");
const outputRoll = el<HTMLDivElement>("output-roll");
const beforeRoll = el<HTMLDivElement>("before-roll");
const afterRoll = el<HTMLDivElement>("after-roll");
const transferPanel = el<HTMLDivElement>("transfer-panel");
const rhythmFader = el<HTMLInputElement>("rhythm-fader");
const noteFader = el<HTMLInputElement>("note-fader");
const rhythmValue = el<HTMLSpanElement>("rhythm-value");
const noteValue = el<HTMLSpanElement>("note-value");
const rhythmDensity = el<HTMLSpanElement>("rhythm-density");
const noteDensity = el<HTMLSpanElement>("note-density");
const gauges = el<HTMLDivElement>("gauges");
const presetControls = el<HTMLDivElement>("preset-controls");
const alphaSlider = el<HTMLInputElement>("alpha");
const alphaValue = el<HTMLSpanElement>("alpha-value");
const modelLine = el<HTMLDivElement>("model-line");
const segmentPicker = el<HTMLSelectElement>("segment-picker");

for (const name of Object.keys(DEMO_SEGMENTS)) {
  const option = document.createElement("option");
  option.value = name;
  option.textContent = name;
  segmentPicker.appendChild(option);
}

segmentPicker.addEventListener("change", () => {
  const segment = DEMO_SEGMENTS[segmentPicker.value];
  if (segment) void store.loadSegment(segment);
});

el<HTMLButtonElement>("load-button").addEventListener("click", () => {
  const segment = DEMO_SEGMENTS[segmentPicker.value];
  if (segment) void store.loadSegment(segment);
});

rhythmFader.addEventListener("input", () => {
  store.onFaderChange("rhythm", Number(rhythmFader.value));
});
noteFader.addEventListener("input", () => {
  store.onFaderChange("note", Number(noteFader.value));
});
alphaSlider.addEventListener("input", () => {
  alphaValue.textContent = Number(alphaSlider.value).toFixed(2);
});

el<HTMLButtonElement>("preset-low").addEventListener("click", () => {
  void store.applyPreset(0, Number(alphaSlider.value));
});
el<HTMLButtonElement>("preset-high").addEventListener("click", () => {
  void store.applyPreset(1, Number(alphaSlider.value));
});

function renderGauges(state: ReturnType<typeof store.getState>): void {
  gauges.textContent = "";
  for (const feature of ["rhythm", "note"] as FeatureName[]) {
    const posterior = state.gauges[feature];
    if (!posterior) continue;
    const row = document.createElement("div");
    row.className = "gauge-row";
    const label = document.createElement("span");
    label.textContent = `${feature} · p(high)`;
    const bar = document.createElement("div");
    bar.className = "gauge-bar";
    const fill = document.createElement("div");
    fill.className = "gauge-fill";
    fill.style.width = `${(posterior[1] * 100).toFixed(1)}%`;
    bar.appendChild(fill);
    const value = document.createElement("span");
    value.className = "mono";
    value.textContent = posterior[1].toFixed(3);
    row.append(label, bar, value);
    gauges.appendChild(row);
  }
}

store.subscribe((state) => {
  errorBanner.textContent = state.error ?? "";
  errorBanner.hidden = !state.error;
  document.body.classList.toggle("busy", state.requestInFlight);

  if (state.info) {
    modelLine.textContent =
      `${state.info.mode} · checkpoint ${state.info.checkpoint_id} · ` +
      `z ${state.info.dims.z_dim} · fader dim ${state.info.reg_dim}`;
    const presetsAvailable = state.info.mode === "gm_vae";
    presetControls.hidden = !presetsAvailable;
  }

  rhythmFader.value = String(state.faders.rhythm);
  noteFader.value = String(state.faders.note);
  rhythmValue.textContent = state.faders.rhythm.toFixed(2);
  noteValue.textContent = state.faders.note.toFixed(2);

  if (state.segment) renderRoll(inputRoll, state.segment, "input");
  if (state.output) {
    renderRoll(outputRoll, state.output.notes, "output");
    rhythmDensity.textContent = state.output.densities.rhythm.toFixed(4);
    noteDensity.textContent = state.output.densities.note.toFixed(4);
  }
  renderGauges(state);

  transferPanel.hidden = !state.transfer;
  if (state.transfer) {
    renderRoll(beforeRoll, state.transfer.notes_before, "before");
    renderRoll(afterRoll, state.transfer.notes_after, "after");
    el<HTMLSpanElement>("delta-rhythm").textContent =
      state.transfer.density_delta.rhythm.toFixed(4);
    el<HTMLSpanElement>("delta-note").textContent =
      state.transfer.density_delta.note.toFixed(4);
    el<HTMLSpanElement>("before-densities").textContent =
      `rhythm ${state.transfer.densities_before.rhythm.toFixed(4)} · ` +
      `note ${state.transfer.densities_before.note.toFixed(4)}`;
    el<HTMLSpanElement>("after-densities").textContent =
      `rhythm ${state.transfer.densities_after.rhythm.toFixed(4)} · ` +
      `note ${state.transfer.densities_after.note.toFixed(4)}`;
  }
});

void store.loadModelInfo().then(() => {
  segmentPicker.value = "chord pad";
  void store.loadSegment(DEMO_SEGMENTS["chord pad"]);
});
