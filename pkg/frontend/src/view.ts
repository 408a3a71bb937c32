/** DOM rendering for each page. Values are copied verbatim from service
 * responses via textContent; nothing is computed client-side and no markup
 * is built from strings.
 */

import type { AnalysisSummary } from "./api.js";
import { CATEGORIES, type UiState, canSubmit } from "./state.js";

export interface Handlers {
  onStart(): void;
  onFileChange(input: HTMLInputElement): void;
  onCategoryChange(value: string): void;
  onSubmit(): void;
  onFinish(): void;
  onHome(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function button(label: string, action: string, onClick: () => void, disabled = false) {
  const b = el("button", "action", label);
  b.type = "button";
  b.dataset.action = action;
  b.disabled = disabled;
  b.addEventListener("click", onClick);
  return b;
}

function errorBanner(message: string): HTMLElement {
  const banner = el("div", "error-banner", message);
  banner.setAttribute("role", "alert");
  return banner;
}

function beginPage(handlers: Handlers): HTMLElement {
  const page = el("section", "page page-begin");
  page.dataset.page = "begin";
  page.append(
    el("h1", "title", "Palm line reading"),
    el(
      "p",
      "tagline",
      "Upload a photo of your palm and the service will trace its heart, head, life, and fate lines.",
    ),
    button("Start", "start", handlers.onStart),
  );
  return page;
}

function uploadPage(state: UiState, handlers: Handlers): HTMLElement {
  const page = el("section", "page page-upload");
  page.dataset.page = "upload";
  page.append(el("h1", "title", "Upload your palm image"));
  if (state.error) {
    page.append(errorBanner(state.error));
  }

  const fileLabel = el("label", "field", "Palm photo (PNG) ");
  const fileInput = el("input");
  fileInput.type = "file";
  fileInput.accept = "image/png";
  fileInput.dataset.field = "file";
  fileInput.disabled = state.pending;
  fileInput.addEventListener("change", () => handlers.onFileChange(fileInput));
  fileLabel.append(fileInput);
  page.append(fileLabel);

  if (state.file) {
    const caption = el("p", "file-name", state.file.name);
    page.append(caption);
    if (state.file.previewUrl) {
      const preview = el("img", "preview");
      preview.src = state.file.previewUrl;
      preview.alt = "preview of the selected palm photo";
      page.append(preview);
    }
  }

  const fieldset = el("fieldset", "categories");
  fieldset.append(el("legend", undefined, "Whose hand is this?"));
  for (const option of CATEGORIES) {
    const label = el("label", "category");
    const radio = el("input");
    radio.type = "radio";
    radio.name = "category";
    radio.value = option.value;
    radio.checked = state.category === option.value;
    radio.disabled = state.pending;
    radio.addEventListener("change", () => handlers.onCategoryChange(option.value));
    label.append(radio, document.createTextNode(` ${option.label}`));
    fieldset.append(label);
  }
  page.append(fieldset);

  page.append(
    button(
      state.pending ? "Analyzing…" : "Upload and analyze",
      "submit",
      handlers.onSubmit,
      !canSubmit(state),
    ),
  );
  return page;
}

function resultPage(result: AnalysisSummary, handlers: Handlers): HTMLElement {
  const page = el("section", "page page-result");
  page.dataset.page = "result";
  page.append(el("h1", "title", "Palm prediction"), el("p", "greeting", result.report.greeting));

  const img = el("img", "annotated");
  img.src = result.annotated_url;
  img.alt = "palm photo with detected lines highlighted";
  page.append(img);

  const table = el("table", "lines");
  const head = el("tr");
  for (const column of ["Line", "Length", "Shape", "Confidence"]) {
    head.append(el("th", undefined, column));
  }
  table.append(head);
  for (const line of result.lines) {
    const row = el("tr");
    row.dataset.kind = line.kind;
    row.append(
      el("td", undefined, line.kind),
      el("td", undefined, line.length_class),
      el("td", undefined, line.shape_class),
      el("td", undefined, line.confidence.toFixed(2)),
    );
    table.append(row);
  }
  page.append(table);

  const traits = el("ul", "traits");
  for (const entry of result.report.entries) {
    const item = el("li", "trait");
    item.dataset.kind = entry.kind;
    item.append(el("strong", undefined, `${entry.kind}: `), document.createTextNode(entry.text));
    traits.append(item);
  }
  page.append(traits);

  if (result.report.combinations.length > 0) {
    const combos = el("ul", "combinations");
    for (const combo of result.report.combinations) {
      const item = el("li", "combination");
      item.dataset.name = combo.name;
      item.textContent = combo.text;
      combos.append(item);
    }
    page.append(combos);
  }

  page.append(el("p", "disclaimer", result.report.disclaimer));
  page.append(button("Done", "finish", handlers.onFinish));
  return page;
}

function endPage(handlers: Handlers): HTMLElement {
  const page = el("section", "page page-end");
  page.dataset.page = "end";
  page.append(
    el("h1", "title", "Thanks for visiting"),
    el("p", "tagline", "We hope your lines read kindly."),
    button("Home", "home", handlers.onHome),
  );
  return page;
}

export function render(root: HTMLElement, state: UiState, handlers: Handlers): void {
  root.replaceChildren();
  switch (state.page) {
    case "begin":
      root.append(beginPage(handlers));
      break;
    case "upload":
      root.append(uploadPage(state, handlers));
      break;
    case "result":
      if (!state.result) {
        throw new Error("result page requires an analysis result");
      }
      root.append(resultPage(state.result, handlers));
      break;
    case "end":
      root.append(endPage(handlers));
      break;
  }
}
