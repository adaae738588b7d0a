import { describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { setAttribute, setSpeakerLandmark, setAddresseeLandmark } from "../src/cascade.js";
import { ReviewSession } from "../src/session.js";
import { AnnotationPayload, ReDetail } from "../src/types.js";

function detailFor(reId: string, machine: AnnotationPayload | null = null): ReDetail {
  return {
    re_id: reId,
    dialogue_id: "d0",
    transaction_index: 0,
    speaker: "giver",
    surface_text: "the alpha",
    original_mtlm: { map_pair_id: "m0", name: "alpha" },
    machine,
    gold: null,
    gold_revision: 0,
    candidates: { g: [], f: [] },
  };
}

interface FakeCalls {
  puts: { url: string; body: Record<string, unknown> }[];
}

function fakeApi(details: Record<string, ReDetail>, failPuts = false): [ReviewApi, FakeCalls] {
  const calls: FakeCalls = { puts: [] };
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    if (init?.method === "PUT") {
      if (failPuts) throw new Error("network down");
      const body = JSON.parse(String(init.body)) as Record<string, unknown>;
      calls.puts.push({ url, body });
      const reId = url.split("/").pop() as string;
      details[reId].gold_revision += 1;
      return new Response(
        JSON.stringify({ re_id: reId, revision: details[reId].gold_revision, warnings: [] }),
        { status: 200 },
      );
    }
    const reId = url.split("/").pop() as string;
    const detail = details[reId];
    if (!detail) return new Response("{}", { status: 404 });
    return new Response(JSON.stringify(detail), { status: 200 });
  };
  return [new ReviewApi("", fetchImpl), calls];
}

function editToValidQuantificational(session: ReviewSession): void {
  if (!session.form) throw new Error("no form");
  session.form = setAttribute(session.form, "is_quantificational", true);
}

describe("review session", () => {
  it("advancing over an untouched form issues no write", async () => {
    const [api, calls] = fakeApi({ a: detailFor("a"), b: detailFor("b") });
    const session = new ReviewSession(api, "ann");
    await session.open(["a", "b"]);
    const result = await session.advance();
    expect(result.moved).toBe(true);
    expect(result.saved).toBe(false);
    expect(calls.puts).toHaveLength(0);
    expect(session.currentReId).toBe("b");
  });

  it("advancing with a valid edit issues exactly one write", async () => {
    const [api, calls] = fakeApi({ a: detailFor("a"), b: detailFor("b") });
    const session = new ReviewSession(api, "ann");
    await session.open(["a", "b"]);
    editToValidQuantificational(session);
    const result = await session.advance();
    expect(result.saved).toBe(true);
    expect(result.moved).toBe(true);
    expect(calls.puts).toHaveLength(1);
    expect(calls.puts[0].url).toContain("/api/gold/a");
    expect(calls.puts[0].body.annotator_id).toBe("ann");
    expect(calls.puts[0].body.is_quantificational).toBe(true);
    expect(calls.puts[0].body.revision).toBe(0);
  });

  it("blocks the advance on a gating-invalid edit", async () => {
    const [api, calls] = fakeApi({ a: detailFor("a"), b: detailFor("b") });
    const session = new ReviewSession(api, "ann");
    await session.open(["a", "b"]);
    if (!session.form) throw new Error("no form");
    // Grounded path left incomplete: specified=true but nothing downstream.
    session.form = setAttribute(session.form, "is_quantificational", false);
    session.form = setSpeakerLandmark(session.form, ["m0_alpha#0@g"]);
    session.form = setAttribute(session.form, "is_specified", true);
    const result = await session.advance();
    expect(result.moved).toBe(false);
    expect(result.blocked).toContain("gate_accommodated");
    expect(calls.puts).toHaveLength(0);
    expect(session.currentReId).toBe("a");
  });

  it("keeps edits local on network failure and flags the session", async () => {
    const [api, calls] = fakeApi({ a: detailFor("a"), b: detailFor("b") }, true);
    const session = new ReviewSession(api, "ann");
    await session.open(["a", "b"]);
    editToValidQuantificational(session);
    const result = await session.advance();
    expect(result.moved).toBe(false);
    expect(result.networkError).toContain("network down");
    expect(session.pendingWrites).toBe(1);
    expect(session.form?.dirty).toBe(true);
    expect(calls.puts).toHaveLength(0);
  });

  it("prefills the form from the machine record and saves an adjudication", async () => {
    const machine: AnnotationPayload = {
      re_id: "a",
      speaker: "giver",
      addressee: "follower",
      speaker_landmark: "m0_alpha#0@g",
      is_quantificational: false,
      is_specified: true,
      is_accommodated: true,
      is_grounded: true,
      is_imagined: false,
      addressee_landmark: "m0_alpha#1@f",
      reason: "machine says so",
    };
    const [api, calls] = fakeApi({ a: detailFor("a", machine) });
    const session = new ReviewSession(api, "ann");
    await session.open(["a"]);
    expect(session.form?.addresseeLandmark).toEqual(["m0_alpha#1@f"]);
    if (!session.form) throw new Error("no form");
    session.form = setAddresseeLandmark(session.form, ["m0_alpha#0@f"]);
    const result = await session.save();
    expect(result.saved).toBe(true);
    expect(calls.puts[0].body.addressee_landmark).toBe("m0_alpha#0@f");
  });

  it("filters to unannotated expressions", async () => {
    const annotated = detailFor("a");
    annotated.gold = {
      re_id: "a",
      speaker: "giver",
      addressee: "follower",
      speaker_landmark: null,
      is_quantificational: true,
      is_specified: null,
      is_accommodated: null,
      is_grounded: null,
      is_imagined: null,
      addressee_landmark: null,
      reason: "",
    };
    const [api] = fakeApi({ a: annotated, b: detailFor("b") });
    const session = new ReviewSession(api, "ann");
    await session.open(["a", "b"], "unannotated");
    expect(session.reIds).toEqual(["b"]);
  });
});
