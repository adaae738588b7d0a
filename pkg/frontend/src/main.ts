/** DOM wiring for the adjudication workbench. All state logic lives in
 * cascade.ts / session.ts; this file only renders and forwards events. */

import { ApiError, ReviewApi } from "./api.js";
import {
  FormState,
  TriState,
  addresseeLocked,
  addresseePickerEnabled,
  addresseePickerRequired,
  enabledAttributes,
  gatingViolations,
  setAddresseeLandmark,
  setAttribute,
  setReason,
  setSpeakerLandmark,
} from "./cascade.js";
import { diffFields } from "./diff.js";
import { Filter, ReviewSession } from "./session.js";
import { ATTRIBUTES, AttributeName, LandmarkCandidate } from "./types.js";

const api = new ReviewApi();
const session = new ReviewSession(api, localStorage.getItem("annotator") ?? "reviewer");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function renderDialogueList(): Promise<void> {
  const container = byId("dialogues");
  container.replaceChildren();
  const dialogues = await api.listDialogues();
  for (const dialogue of dialogues) {
    const button = el("button", "dialogue", `${dialogue.dialogue_id} (${dialogue.res})`);
    button.addEventListener("click", () => openDialogue(dialogue.dialogue_id, dialogue.transactions));
    container.appendChild(button);
  }
}

async function openDialogue(dialogueId: string, transactions: number): Promise<void> {
  const reIds: string[] = [];
  for (let k = 0; k < transactions; k += 1) {
    const view = await api.getTransaction(dialogueId, k);
    reIds.push(...view.target_re_ids);
  }
  const filter = (byId("filter") as HTMLSelectElement).value as Filter;
  await session.open(reIds, filter);
  await renderCurrent();
  await renderProgress();
}

async function renderContext(): Promise<void> {
  const detail = session.detail;
  if (!detail) return;
  const view = await api.getTransaction(detail.dialogue_id, detail.transaction_index);
  const context = byId("context");
  context.textContent = view.context;
  highlightCurrent(context, detail.re_id);
  byId("acts").textContent = view.acts;
}

function highlightCurrent(container: HTMLElement, reId: string): void {
  const text = container.textContent ?? "";
  const marker = `[rid=${reId}|`;
  const start = text.indexOf(marker);
  if (start < 0) return;
  const end = text.indexOf("]", start);
  container.replaceChildren(
    document.createTextNode(text.slice(0, start)),
    el("mark", "", text.slice(start, end + 1)),
    document.createTextNode(text.slice(end + 1)),
  );
}

function triButton(
  name: AttributeName,
  value: TriState,
  current: TriState,
  enabled: boolean,
): HTMLButtonElement {
  const label = value === null ? "n/a" : value ? "yes" : "no";
  const button = el("button", "tri", label);
  if (value === current) button.classList.add("active");
  button.disabled = !enabled;
  button.addEventListener("click", () => {
    if (!session.form) return;
    session.form = setAttribute(session.form, name, value);
    renderForm();
  });
  return button;
}

function candidateRow(
  candidate: LandmarkCandidate,
  selected: string[],
  enabled: boolean,
  onToggle: (ids: string[]) => void,
): HTMLElement {
  const row = el("label", "candidate");
  const checkbox = el("input") as HTMLInputElement;
  checkbox.type = "checkbox";
  checkbox.checked = selected.includes(candidate.umlm);
  checkbox.disabled = !enabled;
  checkbox.addEventListener("change", () => {
    const next = checkbox.checked
      ? [...selected, candidate.umlm]
      : selected.filter((id) => id !== candidate.umlm);
    onToggle(next);
  });
  row.appendChild(checkbox);
  row.appendChild(el("code", "", candidate.umlm));
  row.appendChild(el("span", "coords", `(${candidate.x}, ${candidate.y})`));
  row.appendChild(el("span", `badge ${candidate.discrepancy}`, candidate.discrepancy));
  return row;
}

function renderPicker(
  containerId: string,
  candidates: LandmarkCandidate[],
  selected: string[],
  enabled: boolean,
  onToggle: (ids: string[]) => void,
): void {
  const container = byId(containerId);
  container.replaceChildren();
  for (const candidate of candidates) {
    container.appendChild(candidateRow(candidate, selected, enabled, onToggle));
  }
}

function renderForm(): void {
  const form = session.form;
  const detail = session.detail;
  if (!form || !detail) {
    byId("re-header").textContent = "no expression selected";
    return;
  }
  byId("re-header").textContent =
    `${form.reId} | ${detail.surface_text} | speaker: ${form.speaker}`;

  const attributesBox = byId("attributes");
  attributesBox.replaceChildren();
  const enabled = enabledAttributes(form);
  for (const name of ATTRIBUTES) {
    const row = el("div", "attribute");
    row.appendChild(el("span", "attr-name", name));
    const live = enabled.includes(name);
    row.appendChild(triButton(name, true, form.attributes[name], live));
    row.appendChild(triButton(name, false, form.attributes[name], live));
    if (!live) row.classList.add("gated-off");
    attributesBox.appendChild(row);
  }

  const speakerSide = form.speaker === "giver" ? "g" : "f";
  const addresseeSide = speakerSide === "g" ? "f" : "g";
  renderPicker(
    "speaker-picker",
    detail.candidates[speakerSide],
    form.speakerLandmark,
    true,
    (ids) => {
      if (!session.form) return;
      session.form = setSpeakerLandmark(session.form, ids);
      renderForm();
    },
  );
  const locked = addresseeLocked(form);
  const addresseeCandidates = locked
    ? detail.candidates[speakerSide]
    : detail.candidates[addresseeSide];
  renderPicker(
    "addressee-picker",
    addresseeCandidates,
    form.addresseeLandmark,
    addresseePickerEnabled(form),
    (ids) => {
      if (!session.form) return;
      session.form = setAddresseeLandmark(session.form, ids);
      renderForm();
    },
  );
  byId("addressee-note").textContent = locked
    ? "locked to the speaker's landmark (imagined)"
    : addresseePickerRequired(form)
      ? "required"
      : "not applicable";

  const reason = byId("reason") as HTMLTextAreaElement;
  if (reason.value !== form.reason) reason.value = form.reason;

  const violations = gatingViolations(form);
  byId("violations").textContent = form.dirty ? violations.join(", ") : "";
  renderDiff();
}

async function renderDiff(): Promise<void> {
  const detail = session.detail;
  const table = byId("diff");
  table.replaceChildren();
  if (!detail || !detail.machine || !detail.gold) return;
  for (const row of diffFields(detail.machine, detail.gold)) {
    const tr = el("div", "diff-row");
    tr.appendChild(el("span", "diff-field", row.field));
    tr.appendChild(el("span", "diff-machine", String(row.machine)));
    tr.appendChild(el("span", "diff-gold", String(row.gold)));
    const accept = el("button", "", "accept machine");
    accept.addEventListener("click", () => {
      if (!session.detail?.machine || !session.form) return;
      const machinePayload = session.detail.machine;
      session.form = {
        ...session.form,
        ...payloadPatch(machinePayload, row.field),
        dirty: true,
      };
      renderForm();
    });
    tr.appendChild(accept);
    table.appendChild(tr);
  }
}

function payloadPatch(
  payload: NonNullable<ReviewSession["detail"]>["machine"],
  field: string,
): Partial<FormState> {
  if (!payload) return {};
  if (field === "speaker_landmark") {
    return { speakerLandmark: payload.speaker_landmark?.split("+") ?? [] };
  }
  if (field === "addressee_landmark") {
    return { addresseeLandmark: payload.addressee_landmark?.split("+") ?? [] };
  }
  if (field === "reason") return { reason: payload.reason };
  if ((ATTRIBUTES as readonly string[]).includes(field)) {
    const attributes = session.form ? { ...session.form.attributes } : null;
    if (!attributes) return {};
    attributes[field as AttributeName] = payload[field as AttributeName];
    return { attributes };
  }
  return {};
}

async function renderProgress(): Promise<void> {
  const progress = await api.getProgress();
  byId("progress").textContent = `gold ${progress.gold_res}/${progress.total_res}`;
}

async function renderCurrent(): Promise<void> {
  await renderContext();
  renderForm();
}

async function onAdvance(delta: 1 | -1): Promise<void> {
  const result = delta === 1 ? await session.advance() : await session.back();
  if (result.blocked.length > 0) {
    byId("violations").textContent = `blocked: ${result.blocked.join(", ")}`;
    return;
  }
  if (result.networkError !== null) {
    byId("violations").textContent = `offline, edits kept locally: ${result.networkError}`;
    return;
  }
  await renderCurrent();
  if (result.saved) await renderProgress();
}

function wireEvents(): void {
  byId("next").addEventListener("click", () => void onAdvance(1));
  byId("prev").addEventListener("click", () => void onAdvance(-1));
  byId("save").addEventListener("click", async () => {
    const result = await session.save();
    if (result.blocked.length > 0) {
      byId("violations").textContent = `blocked: ${result.blocked.join(", ")}`;
    } else if (result.networkError !== null) {
      byId("violations").textContent = `offline: ${result.networkError}`;
    } else {
      await renderProgress();
      renderForm();
    }
  });
  (byId("reason") as HTMLTextAreaElement).addEventListener("input", (event) => {
    if (!session.form) return;
    session.form = setReason(session.form, (event.target as HTMLTextAreaElement).value);
  });
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLTextAreaElement) return;
    if (event.key === "j" || event.key === "ArrowRight") void onAdvance(1);
    if (event.key === "k" || event.key === "ArrowLeft") void onAdvance(-1);
  });
}

async function start(): Promise<void> {
  wireEvents();
  try {
    await renderDialogueList();
    await renderProgress();
  } catch (error) {
    byId("violations").textContent =
      error instanceof ApiError ? `API error ${error.status}` : String(error);
  }
}

void start();
