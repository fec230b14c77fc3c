/** Wire types mirroring the service's /api/v1/recommend payloads. */

export interface MutationInput {
  gene: string;
  mutation: string;
  /** 23 bits of 0/1, or null when the server should use its own annotations. */
  annotations: number[] | null;
}

export interface RecommendRequest {
  mutations: MutationInput[];
  cancer_type: string | null;
  cohort?: string | null;
}

export interface CohortSummary {
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
}

export interface Recommendation {
  drug_id: string;
  name: string;
  probability: number;
  rank: number;
  robust_z: number | null;
  degenerate_iqr: boolean;
  cohort_summary: CohortSummary | null;
  aux_link: string;
}

export interface Dispersion {
  iqr: number;
  median: number;
  low_confidence: boolean;
  threshold: number;
  per_drug_z: Record<string, number | null>;
}

export interface RecommendResponse {
  recommendations: Recommendation[];
  dispersion: Dispersion;
  swarm: Record<string, number>;
  model_version: string;
  model_hash: string;
  cohort_id: string | null;
  flags: string[];
}
