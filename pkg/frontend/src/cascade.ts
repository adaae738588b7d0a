/**
 * Cascade form state machine.
 *
 * Mirrors the server's gating rules so the form can never assemble a payload
 * the server would reject for gating reasons: answering a gate closed clears
 * and disables everything downstream, grounding controls the addressee
 * picker, and is_imagined=true locks the addressee set to a verbatim copy of
 * the speaker set.
 */

import { ATTRIBUTES, AttributeName, AnnotationPayload, Role } from "./types.js";

export type TriState = boolean | null;

export interface FormState {
  reId: string;
  speaker: Role;
  addressee: Role;
  speakerLandmark: string[];
  attributes: Record<AttributeName, TriState>;
  addresseeLandmark: string[];
  reason: string;
  /** True once the annotator touched anything. */
  dirty: boolean;
}

export function emptyAttributes(): Record<AttributeName, TriState> {
  return {
    is_quantificational: null,
    is_specified: null,
    is_accommodated: null,
    is_grounded: null,
    is_imagined: null,
  };
}

export function newForm(reId: string, speaker: Role): FormState {
  return {
    reId,
    speaker,
    addressee: speaker === "giver" ? "follower" : "giver",
    speakerLandmark: [],
    attributes: emptyAttributes(),
    addresseeLandmark: [],
    reason: "",
    dirty: false,
  };
}

/** Prefill a form from an existing record (machine suggestion or gold). */
export function formFromPayload(payload: AnnotationPayload): FormState {
  return {
    reId: payload.re_id,
    speaker: payload.speaker,
    addressee: payload.addressee,
    speakerLandmark: splitRefSet(payload.speaker_landmark),
    attributes: {
      is_quantificational: payload.is_quantificational,
      is_specified: payload.is_specified,
      is_accommodated: payload.is_accommodated,
      is_grounded: payload.is_grounded,
      is_imagined: payload.is_imagined,
    },
    addresseeLandmark: splitRefSet(payload.addressee_landmark),
    reason: payload.reason,
    dirty: false,
  };
}

export function splitRefSet(text: string | null): string[] {
  return text === null || text === "" ? [] : text.split("+");
}

export function joinRefSet(ids: string[]): string | null {
  return ids.length === 0 ? null : [...ids].sort().join("+");
}

/**
 * Attribute names whose controls are live, in decision order: a prefix of
 * ATTRIBUTES that includes the first unanswered or gate-closing attribute.
 */
export function enabledAttributes(state: FormState): AttributeName[] {
  const enabled: AttributeName[] = ["is_quantificational"];
  const a = state.attributes;
  if (a.is_quantificational !== false) return enabled;
  enabled.push("is_specified");
  if (a.is_specified !== true) return enabled;
  enabled.push("is_accommodated");
  if (a.is_accommodated !== true) return enabled;
  enabled.push("is_grounded");
  if (a.is_grounded !== true) return enabled;
  enabled.push("is_imagined");
  return enabled;
}

export function addresseePickerEnabled(state: FormState): boolean {
  return state.attributes.is_grounded === true && !addresseeLocked(state);
}

export function addresseePickerRequired(state: FormState): boolean {
  return state.attributes.is_grounded === true;
}

/** is_imagined=true forces the addressee set to copy the speaker set. */
export function addresseeLocked(state: FormState): boolean {
  return state.attributes.is_imagined === true;
}

/**
 * Answer one attribute. Setting a value on a disabled (gated-off) control is
 * ignored; answering a gate closed clears everything downstream.
 */
export function setAttribute(
  state: FormState,
  name: AttributeName,
  value: TriState,
): FormState {
  if (!enabledAttributes(state).includes(name)) return state;
  const attributes = { ...state.attributes, [name]: value };
  const order = ATTRIBUTES.indexOf(name);
  for (const downstream of ATTRIBUTES.slice(order + 1)) {
    attributes[downstream] = null;
  }
  let addresseeLandmark = state.addresseeLandmark;
  if (attributes.is_grounded !== true) {
    addresseeLandmark = [];
  }
  if (attributes.is_imagined === true) {
    addresseeLandmark = [...state.speakerLandmark];
  }
  return { ...state, attributes, addresseeLandmark, dirty: true };
}

export function setSpeakerLandmark(state: FormState, ids: string[]): FormState {
  const next = { ...state, speakerLandmark: [...ids], dirty: true };
  if (addresseeLocked(state)) {
    next.addresseeLandmark = [...ids];
  }
  return next;
}

export function setAddresseeLandmark(state: FormState, ids: string[]): FormState {
  if (!addresseePickerEnabled(state)) return state;
  return { ...state, addresseeLandmark: [...ids], dirty: true };
}

export function setReason(state: FormState, reason: string): FormState {
  return { ...state, reason, dirty: true };
}

/** Stable rule identifiers shared with the server's validator. */
export const GATING_RULES = [
  "gate_specified",
  "gate_accommodated",
  "gate_grounded",
  "gate_imagined",
  "addressee_role",
  "speaker_landmark_missing",
  "addressee_landmark_missing",
  "addressee_landmark_forbidden",
  "imagined_copy",
  "incomplete_attribute",
] as const;

export type RuleId = (typeof GATING_RULES)[number];

/**
 * Client-side mirror of the server's cascade validation. Returns the rule
 * ids a submission of this form would violate; the UI blocks submission
 * unless this is empty (the server's 422 remains the authority).
 */
export function gatingViolations(state: FormState): RuleId[] {
  const out: RuleId[] = [];
  const a = state.attributes;
  if (a.is_quantificational === null) {
    out.push("incomplete_attribute");
    return out;
  }
  const expectations: [RuleId, TriState, boolean][] = [
    ["gate_specified", a.is_specified, a.is_quantificational === false],
    ["gate_accommodated", a.is_accommodated, a.is_specified === true],
    ["gate_grounded", a.is_grounded, a.is_accommodated === true],
    ["gate_imagined", a.is_imagined, a.is_grounded === true],
  ];
  for (const [rule, value, shouldBePresent] of expectations) {
    if (shouldBePresent && value === null) out.push(rule);
    if (!shouldBePresent && value !== null) out.push(rule);
  }
  if (state.addressee === state.speaker) out.push("addressee_role");
  if (a.is_quantificational === false && state.speakerLandmark.length === 0) {
    out.push("speaker_landmark_missing");
  }
  if (a.is_grounded === true && state.addresseeLandmark.length === 0) {
    out.push("addressee_landmark_missing");
  }
  if (a.is_grounded !== true && state.addresseeLandmark.length > 0) {
    out.push("addressee_landmark_forbidden");
  }
  if (
    a.is_imagined === true &&
    joinRefSet(state.addresseeLandmark) !== joinRefSet(state.speakerLandmark)
  ) {
    out.push("imagined_copy");
  }
  return out;
}

/**
 * Assemble the wire payload. Returns null when gating violations remain, so
 * a blocked form can never produce a submission.
 */
export function buildPayload(state: FormState): AnnotationPayload | null {
  if (gatingViolations(state).length > 0) return null;
  return {
    re_id: state.reId,
    speaker: state.speaker,
    addressee: state.addressee,
    speaker_landmark: joinRefSet(state.speakerLandmark),
    is_quantificational: state.attributes.is_quantificational as boolean,
    is_specified: state.attributes.is_specified,
    is_accommodated: state.attributes.is_accommodated,
    is_grounded: state.attributes.is_grounded,
    is_imagined: state.attributes.is_imagined,
    addressee_landmark: joinRefSet(state.addresseeLandmark),
    reason: state.reason,
  };
}
