/** UI state and the submit flow.
 *
 * A controller hands each submission a fresh token from a shared counter;
 * when a submission settles after a newer one has started, its result is
 * discarded, so the state never shows a stale response over a newer one.
 */

import { ApiError, type ApiClient } from "./api.js";
import type { MutationInput, RecommendResponse } from "./types.js";
import { validateMutations, type FieldError } from "./validate.js";

export interface UiState {
  mutations: MutationInput[];
  cancerType: string | null;
  response: RecommendResponse | null;
  fieldErrors: FieldError[];
  requestError: ApiError | null;
  loading: boolean;
}

export function initialState(): UiState {
  return {
    mutations: [],
    cancerType: null,
    response: null,
    fieldErrors: [],
    requestError: null,
    loading: false,
  };
}

/** Pure pre-flight validation; invalid rows never reach the network. */
export function checkBeforeSubmit(state: UiState): FieldError[] {
  if (state.mutations.length === 0) {
    return [{ row: 0, field: "gene", message: "enter at least one mutation" }];
  }
  return validateMutations(state.mutations);
}

export class SubmitController {
  private counter = 0;

  /** Run one submission. Resolves to the next state, or null when a newer
   * submission started in the meantime (stale result, discard it). */
  async submit(state: UiState, api: ApiClient): Promise<UiState | null> {
    const fieldErrors = checkBeforeSubmit(state);
    if (fieldErrors.length > 0) {
      return { ...state, fieldErrors, requestError: null, loading: false };
    }
    const token = ++this.counter;
    let next: UiState;
    try {
      const response = await api.recommend({
        mutations: state.mutations,
        cancer_type: state.cancerType,
      });
      next = { ...state, fieldErrors: [], requestError: null, loading: false, response };
    } catch (err) {
      const apiError = err instanceof ApiError ? err : new ApiError("network", String(err));
      next = { ...state, fieldErrors: [], requestError: apiError, loading: false };
    }
    if (token !== this.counter) {
      return null; // superseded while in flight
    }
    return next;
  }
}
