/** A fixed response payload shaped like the service's output. */

import type { RecommendResponse } from "../src/types.js";

export function samplePayload(overrides: Partial<RecommendResponse> = {}): RecommendResponse {
  const base: RecommendResponse = {
    recommendations: [
      {
        drug_id: "DRUG004", name: "compound-004", probability: 0.91, rank: 1,
        robust_z: 2.4, degenerate_iqr: false,
        cohort_summary: { min: 0.42, q1: 0.55, median: 0.61, q3: 0.68, max: 0.8 },
        aux_link: "https://example.org/drug-evidence/compound-004",
      },
      {
        drug_id: "DRUG010", name: "compound-010", probability: 0.84, rank: 2,
        robust_z: 0.7, degenerate_iqr: false,
        cohort_summary: { min: 0.5, q1: 0.62, median: 0.7, q3: 0.79, max: 0.88 },
        aux_link: "https://example.org/drug-evidence/compound-010",
      },
      {
        drug_id: "DRUG001", name: "compound-001", probability: 0.77, rank: 3,
        robust_z: null, degenerate_iqr: true,
        cohort_summary: { min: 0.77, q1: 0.77, median: 0.77, q3: 0.77, max: 0.77 },
        aux_link: "https://example.org/drug-evidence/compound-001",
      },
    ],
    dispersion: {
      iqr: 0.18, median: 0.55, low_confidence: false, threshold: 0.02,
      per_drug_z: { DRUG001: 1.2, DRUG004: 2.0, DRUG010: 1.6 },
    },
    swarm: { DRUG001: 0.77, DRUG004: 0.91, DRUG007: 0.31, DRUG010: 0.84 },
    model_version: "0.1.0",
    model_hash: "abcdef0123456789abcdef0123456789",
    cohort_id: "CRC",
    flags: [],
  };
  return { ...base, ...overrides };
}
