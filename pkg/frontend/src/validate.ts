/** Client-side validation of mutation rows before any request is sent.
 * Mirrors the server's rules so obviously malformed input fails inline. */

import type { MutationInput } from "./types.js";

export const ANNOTATION_DIM = 23;

export interface FieldError {
  /** row index in the entry list */
  row: number;
  field: "gene" | "mutation" | "annotations";
  message: string;
}

export function validateMutations(rows: MutationInput[]): FieldError[] {
  const errors: FieldError[] = [];
  rows.forEach((row, i) => {
    if (!row.gene.trim()) {
      errors.push({ row: i, field: "gene", message: "gene name is required" });
    }
    if (!row.mutation.trim()) {
      errors.push({ row: i, field: "mutation", message: "mutation identifier is required" });
    }
    if (row.annotations !== null) {
      if (row.annotations.length !== ANNOTATION_DIM) {
        errors.push({
          row: i,
          field: "annotations",
          message: `annotation vector must have ${ANNOTATION_DIM} entries, got ${row.annotations.length}`,
        });
      } else if (row.annotations.some((b) => b !== 0 && b !== 1)) {
        errors.push({ row: i, field: "annotations", message: "annotation values must be 0 or 1" });
      }
    }
  });
  return errors;
}
