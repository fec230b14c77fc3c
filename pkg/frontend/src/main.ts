/** Browser wiring: a mutation entry form on the left, recommendations and
 * evidence on the right. All rendering goes through the pure functions in
 * render.ts; this file only moves strings into the DOM. */

import { createApiClient } from "./api.js";
import { renderErrors, renderEvidence } from "./render.js";
import { initialState, SubmitController, type UiState } from "./state.js";
import type { MutationInput } from "./types.js";

const api = createApiClient("");
const controller = new SubmitController();
let state: UiState = initialState();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function readForm(): { mutations: MutationInput[]; cancerType: string | null } {
  const raw = ($("mutations-input") as HTMLTextAreaElement).value;
  const mutations: MutationInput[] = [];
  for (const line of raw.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const [gene = "", mutation = "", bits = ""] = trimmed.split(/[\s:]+/);
    mutations.push({
      gene,
      mutation,
      annotations: bits ? bits.split("").map((c) => Number(c)) : null,
    });
  }
  const cancer = ($("cancer-type") as HTMLSelectElement).value;
  return { mutations, cancerType: cancer || null };
}

function paint(): void {
  $("errors").innerHTML = renderErrors(state.fieldErrors, state.requestError);
  $("status").textContent = state.loading ? "scoring..." : "";
  if (state.response) {
    $("evidence").innerHTML = renderEvidence(state.response);
    const shown = $("evidence").querySelectorAll("tbody tr").length;
    if (shown !== state.response.recommendations.length) {
      throw new Error("rendered drug count diverged from the response");
    }
  }
}

async function onSubmit(event: Event): Promise<void> {
  event.preventDefault();
  const form = readForm();
  state = { ...state, ...form, loading: true };
  paint();
  const settled = await controller.submit(state, api);
  if (settled === null) return; // a newer submission superseded this one
  state = settled;
  paint();
}

export function mount(): void {
  $("profile-form").addEventListener("submit", (e) => {
    void onSubmit(e);
  });
  paint();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  mount();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", mount);
}
