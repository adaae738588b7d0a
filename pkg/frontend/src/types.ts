/** Wire types of the review API. */

export type Role = "giver" | "follower";

export const ATTRIBUTES = [
  "is_quantificational",
  "is_specified",
  "is_accommodated",
  "is_grounded",
  "is_imagined",
] as const;

export type AttributeName = (typeof ATTRIBUTES)[number];

/** One serialized annotation record (machine or gold). */
export interface AnnotationPayload {
  re_id: string;
  speaker: Role;
  addressee: Role;
  speaker_landmark: string | null;
  is_quantificational: boolean;
  is_specified: boolean | null;
  is_accommodated: boolean | null;
  is_grounded: boolean | null;
  is_imagined: boolean | null;
  addressee_landmark: string | null;
  reason: string;
}

export interface LandmarkCandidate {
  umlm: string;
  name: string;
  ordinal: number;
  x: number;
  y: number;
  shared: boolean;
  discrepancy: "lexical" | "existence" | "multiplicity" | "identical";
}

export interface ReDetail {
  re_id: string;
  dialogue_id: string;
  transaction_index: number;
  speaker: Role;
  surface_text: string;
  original_mtlm: { map_pair_id: string; name: string };
  machine: AnnotationPayload | null;
  gold: AnnotationPayload | null;
  gold_revision: number;
  candidates: { g: LandmarkCandidate[]; f: LandmarkCandidate[] };
}

export interface DialogueSummary {
  dialogue_id: string;
  map_pair_id: string;
  transactions: number;
  res: number;
}

export interface TransactionView {
  dialogue_id: string;
  transaction_index: number;
  context: string;
  acts: string;
  target_re_ids: string[];
}

export interface DiffRow {
  field: string;
  machine: unknown;
  gold: unknown;
}

export interface ProgressReport {
  dialogues: { dialogue_id: string; total_res: number; gold_res: number }[];
  total_res: number;
  gold_res: number;
}

export interface GoldWriteResult {
  re_id: string;
  revision: number;
  warnings: { rule_id: string; message: string }[];
}
