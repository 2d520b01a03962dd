/**
 * Browser entry point: mounts the app on #app and wires DOM events to
 * controller actions through event delegation, re-rendering the whole view
 * from acknowledged state after every change.
 */

import { ReviewApi } from "./api.js";
import { ReviewApp } from "./app.js";
import { renderApp } from "./render.js";
import type { CandidateQuery } from "./types.js";

function mount(container: HTMLElement): ReviewApp {
  const api = new ReviewApi("");
  const app = new ReviewApp(api, (state) => {
    container.innerHTML = renderApp(state);
  });

  container.addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest<HTMLButtonElement>("button[data-action]");
    if (!button || button.disabled) return;
    const id = button.dataset.id ?? "";
    switch (button.dataset.action) {
      case "refresh":
        void app.refresh();
        break;
      case "finalize":
        if (window.confirm("Finalize the class set? This cannot be undone.")) {
          void app.finalize();
        }
        break;
      case "page-prev":
        void app.prevPage();
        break;
      case "page-next":
        void app.nextPage();
        break;
      case "keep":
        void app.keep(id);
        break;
      case "discard":
        void app.discard(id);
        break;
      case "merge": {
        const select = container.querySelector<HTMLSelectElement>(
          `select[data-merge-target="${CSS.escape(id)}"]`,
        );
        if (select && select.value) void app.merge(id, select.value);
        break;
      }
      case "rename": {
        const input = container.querySelector<HTMLInputElement>(
          `input[data-rename-value="${CSS.escape(id)}"]`,
        );
        const name = input?.value.trim();
        if (name) void app.rename(id, name);
        break;
      }
      case "edit-prompt": {
        const area = container.querySelector<HTMLTextAreaElement>(
          `textarea[data-prompt-value="${CSS.escape(id)}"]`,
        );
        const prompt = area?.value.trim();
        if (prompt) void app.editPrompt(id, prompt);
        break;
      }
    }
  });

  container.addEventListener("change", (event) => {
    const select = (event.target as HTMLElement).closest<HTMLSelectElement>("select[data-query]");
    if (!select) return;
    const key = select.dataset.query as keyof CandidateQuery;
    if (key === "status" || key === "sort") {
      void app.setQuery({ [key]: select.value } as Partial<CandidateQuery>);
    }
  });

  void app.refresh();
  return app;
}

const root = document.getElementById("app");
if (root) mount(root);
