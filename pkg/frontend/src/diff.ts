/** Field-level comparison of a machine record against gold. */

import { AnnotationPayload } from "./types.js";

export interface FieldDiff {
  field: keyof AnnotationPayload;
  machine: unknown;
  gold: unknown;
}

const FIELDS: (keyof AnnotationPayload)[] = [
  "re_id",
  "speaker",
  "addressee",
  "speaker_landmark",
  "is_quantificational",
  "is_specified",
  "is_accommodated",
  "is_grounded",
  "is_imagined",
  "addressee_landmark",
  "reason",
];

export function diffFields(
  machine: AnnotationPayload,
  gold: AnnotationPayload,
): FieldDiff[] {
  return FIELDS.filter((field) => machine[field] !== gold[field]).map((field) => ({
    field,
    machine: machine[field],
    gold: gold[field],
  }));
}

/** Element-wise set comparison for landmark fields, for display. */
export function setDiff(
  machine: string | null,
  gold: string | null,
): { onlyMachine: string[]; onlyGold: string[]; both: string[] } {
  const machineIds = new Set(machine ? machine.split("+") : []);
  const goldIds = new Set(gold ? gold.split("+") : []);
  return {
    onlyMachine: [...machineIds].filter((id) => !goldIds.has(id)).sort(),
    onlyGold: [...goldIds].filter((id) => !machineIds.has(id)).sort(),
    both: [...machineIds].filter((id) => goldIds.has(id)).sort(),
  };
}
