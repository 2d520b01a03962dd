import { describe, expect, it } from "vitest";

import type { AppState } from "../src/app.js";
import {
  escapeHtml,
  promptPreview,
  renderActions,
  renderApp,
  renderError,
  renderExamples,
  renderFinal,
  renderRow,
  statusBadge,
} from "../src/render.js";
import type { Candidate, CandidatesPage, FinalPayload, Health } from "../src/types.js";
import { DEFAULT_QUERY } from "../src/types.js";

function candidate(overrides: Partial<Candidate> = {}): Candidate {
  return {
    class_id: "cls-000-00",
    name: "Economic Consequences",
    prompt: "Texts presenting the issue chiefly as a matter of economic consequences.",
    count: 47,
    example_unit_ids: ["u1", "u2"],
    source_batches: [0],
    status: "proposed",
    merged_into: null,
    model_count: 3,
    merged_from: [],
    final_rank: null,
    ...overrides,
  };
}

function page(classes: Candidate[], overrides: Partial<CandidatesPage> = {}): CandidatesPage {
  return {
    total: classes.length,
    page: 1,
    page_size: 20,
    finalized: false,
    classes,
    warnings: [],
    ...overrides,
  };
}

function health(overrides: Partial<Health> = {}): Health {
  return { status: "ok", pipeline_kind: "frames_sentence", finalized: false, decisions: 0, ...overrides };
}

function state(overrides: Partial<AppState> = {}): AppState {
  return {
    health: health(),
    page: page([candidate()]),
    final: null,
    query: { ...DEFAULT_QUERY },
    error: null,
    pending: null,
    loading: false,
    ...overrides,
  };
}

describe("escapeHtml", () => {
  it("escapes every html metacharacter", () => {
    expect(escapeHtml(`<b a="1" c='2'>&x</b>`)).toBe(
      "&lt;b a=&quot;1&quot; c=&#39;2&#39;&gt;&amp;x&lt;/b&gt;",
    );
  });

  it("passes plain text through", () => {
    expect(escapeHtml("Economic Growth 7")).toBe("Economic Growth 7");
  });
});

describe("promptPreview", () => {
  it("keeps short prompts intact", () => {
    expect(promptPreview("short prompt")).toBe("short prompt");
  });

  it("truncates long prompts with an ellipsis", () => {
    const long = "x".repeat(400);
    const preview = promptPreview(long);
    expect(preview.length).toBeLessThan(145);
    expect(preview.endsWith("…")).toBe(true);
  });
});

describe("row rendering", () => {
  it("shows the server count verbatim, never a derived number", () => {
    const c = candidate({ count: 47, merged_from: ["a", "b", "c"], example_unit_ids: ["u1"] });
    const s = state({ page: page([c]) });
    const html = renderRow(c, s, s.page!);
    expect(html).toContain('<td class="count">47</td>');
  });

  it("escapes server-supplied names and prompts", () => {
    const c = candidate({ name: `<img src=x onerror="pwn()">`, prompt: "a & b < c" });
    const s = state({ page: page([c]) });
    const html = renderRow(c, s, s.page!);
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img src=x onerror=&quot;pwn()&quot;&gt;");
    expect(html).toContain("a &amp; b &lt; c");
  });

  it("badges the status and notes the merge target", () => {
    expect(statusBadge("kept")).toBe('<span class="badge badge-kept">kept</span>');
    const merged = candidate({ status: "merged", merged_into: "cls-000-09" });
    const s = state({ page: page([merged]) });
    const html = renderRow(merged, s, s.page!);
    expect(html).toContain("merged into cls-000-09");
    expect(html).toContain("folded");
    expect(html).not.toContain("data-action=");
  });
});

describe("examples", () => {
  it("lists example texts inline with their unit ids", () => {
    const c = candidate({
      examples: [
        { unit_id: "art-1:0", text: "The debate over tuition." },
        { unit_id: "art-2:0", text: null },
      ],
    });
    const html = renderExamples(c);
    expect(html).toContain("art-1:0");
    expect(html).toContain("The debate over tuition.");
    expect(html).toContain("text unavailable");
  });

  it("notes when no examples were requested", () => {
    expect(renderExamples(candidate())).toContain("none");
  });
});

describe("action controls", () => {
  it("offers exactly one control per decision kind on a live row", () => {
    const rows = [candidate(), candidate({ class_id: "cls-000-01", name: "Other" })];
    const s = state({ page: page(rows) });
    const html = renderActions(rows[0]!, s, s.page!);
    for (const action of ["keep", "discard", "merge", "rename", "edit-prompt"]) {
      expect(html.split(`data-action="${action}"`).length).toBe(2);
    }
    expect(html).not.toContain("disabled");
  });

  it("excludes the row itself and merged rows from merge targets", () => {
    const rows = [
      candidate(),
      candidate({ class_id: "cls-000-01", name: "Other", status: "merged" }),
    ];
    const s = state({ page: page(rows) });
    const html = renderActions(rows[0]!, s, s.page!);
    expect(html).not.toContain("data-merge-target");
  });

  it("disables every mutating control after finalize", () => {
    const s = state({
      health: health({ finalized: true }),
      page: page([candidate({ status: "kept" })], { finalized: true }),
    });
    const html = renderApp(s);
    const buttons = html.match(/<button[^>]*data-action="[^"]+"[^>]*>/g) ?? [];
    expect(buttons.length).toBeGreaterThan(0);
    for (const button of buttons) {
      if (button.includes('data-action="refresh"')) {
        expect(button).not.toContain("disabled");
      } else if (/data-action="(keep|discard|merge|rename|edit-prompt|finalize)"/.test(button)) {
        expect(button).toContain("disabled");
      }
    }
  });

  it("disables mutating controls while a decision is in flight", () => {
    const s = state({ pending: "cls-000-00" });
    const html = renderApp(s);
    for (const action of ["keep", "discard", "finalize"]) {
      const button = html.match(new RegExp(`<button[^>]*data-action="${action}"[^>]*>`));
      expect(button?.[0]).toContain("disabled");
    }
  });
});

describe("error banner", () => {
  it("renders the server reason, escaped", () => {
    const html = renderError(`unknown class_id 'cls-<x>'`);
    expect(html).toContain("role=\"alert\"");
    expect(html).toContain("unknown class_id &#39;cls-&lt;x&gt;&#39;");
  });

  it("renders nothing without an error", () => {
    expect(renderError(null)).toBe("");
  });
});

describe("final panel", () => {
  it("renders ranked final classes read-only", () => {
    const final: FinalPayload = {
      schema: "final/v1",
      config_hash: "f".repeat(64),
      pipeline_kind: "frames_sentence",
      classes: [
        { name: "A", prompt: "pa", final_rank: 1, source_class_id: "cls-000-00", count: 9 },
        { name: "B", prompt: "pb", final_rank: 2, source_class_id: "cls-000-01", count: 4 },
      ],
      none_class: "No Frame",
      includes_none_class: false,
      finalized_at: "2025-11-03T10:30:00+00:00",
      registry_hash: "a".repeat(64),
      warnings: [],
    };
    const html = renderFinal(final);
    expect(html).toContain("Final classes (2)");
    expect(html).toContain("No Frame");
    expect(html).not.toContain("data-action=");
  });

  it("renders nothing before finalize", () => {
    expect(renderFinal(null)).toBe("");
  });
});
