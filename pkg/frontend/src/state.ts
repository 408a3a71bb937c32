/** Pure page state machine: Begin -> Upload -> Result -> End -> Begin.
 *
 * Transitions are total functions returning fresh state; anything outside
 * the cycle above (plus the error-stay loop on Upload) throws. The Result
 * page is constructible only with a populated analysis summary.
 */

import type { AnalysisSummary } from "./api.js";

export type Page = "begin" | "upload" | "result" | "end";

export interface CategoryOption {
  value: string;
  label: string;
}

// service tokens on the wire, human phrasing on screen
export const CATEGORIES: readonly CategoryOption[] = [
  { value: "male_left", label: "Male left hand" },
  { value: "male_right", label: "Male right hand" },
  { value: "female_left", label: "Female left hand" },
  { value: "female_right", label: "Female right hand" },
];

export interface SelectedFile {
  name: string;
  size: number;
  previewUrl: string | null;
}

export interface UiState {
  readonly page: Page;
  readonly file: SelectedFile | null;
  readonly category: string | null;
  readonly pending: boolean;
  readonly result: AnalysisSummary | null;
  readonly error: string | null;
}

export function initialState(): UiState {
  return {
    page: "begin",
    file: null,
    category: null,
    pending: false,
    result: null,
    error: null,
  };
}

function expectPage(state: UiState, page: Page, action: string): void {
  if (state.page !== page) {
    throw new Error(`${action} is only valid on the ${page} page, not ${state.page}`);
  }
}

export function start(state: UiState): UiState {
  expectPage(state, "begin", "start");
  return { ...initialState(), page: "upload" };
}

/** Pick (or clear) the file; oversize files are refused before any upload. */
export function chooseFile(
  state: UiState,
  file: SelectedFile | null,
  maxUploadBytes: number,
): UiState {
  expectPage(state, "upload", "chooseFile");
  if (state.pending) {
    return state;
  }
  if (file !== null && file.size > maxUploadBytes) {
    const limitKb = Math.floor(maxUploadBytes / 1024);
    return {
      ...state,
      file: null,
      error: `"${file.name}" is too large; the service accepts up to ${limitKb} KiB`,
    };
  }
  return { ...state, file, error: null };
}

export function chooseCategory(state: UiState, category: string | null): UiState {
  expectPage(state, "upload", "chooseCategory");
  if (state.pending) {
    return state;
  }
  if (category !== null && !CATEGORIES.some((c) => c.value === category)) {
    throw new Error(`unknown category token: ${category}`);
  }
  return { ...state, category, error: null };
}

/** The upload action is enabled only with a file, a category, and no
 * request already in flight. */
export function canSubmit(state: UiState): boolean {
  return (
    state.page === "upload" && state.file !== null && state.category !== null && !state.pending
  );
}

export function beginSubmit(state: UiState): UiState {
  if (!canSubmit(state)) {
    throw new Error("submit requires a file and a category on the upload page");
  }
  return { ...state, pending: true, error: null };
}

export function submitSucceeded(state: UiState, result: AnalysisSummary): UiState {
  expectPage(state, "upload", "submitSucceeded");
  if (!state.pending) {
    throw new Error("no analyze request is in flight");
  }
  return { ...state, page: "result", pending: false, result, error: null };
}

/** Failure keeps the user on Upload with a banner so they can retry. */
export function submitFailed(state: UiState, message: string): UiState {
  expectPage(state, "upload", "submitFailed");
  if (!state.pending) {
    throw new Error("no analyze request is in flight");
  }
  return { ...state, pending: false, error: message };
}

export function finish(state: UiState): UiState {
  expectPage(state, "result", "finish");
  return { ...state, page: "end" };
}

/** Home resets everything; no residual result or selections survive. */
export function goHome(state: UiState): UiState {
  expectPage(state, "end", "goHome");
  return initialState();
}
