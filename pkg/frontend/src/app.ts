/** Controller: owns the state, talks to the API, re-renders on every
 * transition. One analyze request may be in flight at a time; the submit
 * control stays disabled until it settles.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  type SelectedFile,
  type UiState,
  beginSubmit,
  chooseCategory,
  chooseFile,
  finish,
  goHome,
  initialState,
  start,
  submitFailed,
  submitSucceeded,
} from "./state.js";
import { type Handlers, render } from "./view.js";

// used until /health answers with the real service limit
export const FALLBACK_MAX_UPLOAD_BYTES = 8 * 1024 * 1024;

export interface AppOptions {
  api: ApiClient;
  root: HTMLElement;
  /** Test seam: object-URL factory for file previews. */
  previewUrl?: (blob: Blob) => string | null;
}

interface PendingUpload {
  blob: Blob;
  name: string;
}

export class App {
  private api: ApiClient;
  private root: HTMLElement;
  private previewUrl: (blob: Blob) => string | null;
  private stateValue: UiState = initialState();
  private maxUploadBytes = FALLBACK_MAX_UPLOAD_BYTES;
  private upload: PendingUpload | null = null;

  constructor(options: AppOptions) {
    this.api = options.api;
    this.root = options.root;
    this.previewUrl = options.previewUrl ?? defaultPreviewUrl;
  }

  get state(): UiState {
    return this.stateValue;
  }

  get uploadLimit(): number {
    return this.maxUploadBytes;
  }

  /** Render the Begin page and learn the service upload limit. */
  async init(): Promise<void> {
    this.apply(this.stateValue);
    try {
      const info = await this.api.serviceInfo();
      if (Number.isFinite(info.max_upload_bytes) && info.max_upload_bytes > 0) {
        this.maxUploadBytes = info.max_upload_bytes;
      }
    } catch {
      // degraded or unreachable service: keep the fallback limit; the
      // analyze call will surface the real error with a retry banner
    }
  }

  private apply(next: UiState): void {
    this.stateValue = next;
    render(this.root, next, this.handlers());
  }

  private handlers(): Handlers {
    return {
      onStart: () => this.handleStart(),
      onFileChange: (input) => this.handleFileInput(input),
      onCategoryChange: (value) => this.apply(chooseCategory(this.stateValue, value)),
      onSubmit: () => {
        void this.handleSubmit();
      },
      onFinish: () => this.apply(finish(this.stateValue)),
      onHome: () => this.handleHome(),
    };
  }

  private handleStart(): void {
    this.upload = null;
    this.apply(start(this.stateValue));
  }

  private handleHome(): void {
    this.upload = null;
    this.apply(goHome(this.stateValue));
  }

  private handleFileInput(input: HTMLInputElement): void {
    const file = input.files && input.files.length > 0 ? input.files[0] : null;
    this.setFile(file ? { blob: file, name: file.name, size: file.size } : null);
  }

  /** DOM-free entry point used by both the change handler and tests. */
  setFile(pick: { blob: Blob; name: string; size: number } | null): void {
    if (pick === null) {
      this.upload = null;
      this.apply(chooseFile(this.stateValue, null, this.maxUploadBytes));
      return;
    }
    const selected: SelectedFile = {
      name: pick.name,
      size: pick.size,
      previewUrl: this.previewUrl(pick.blob),
    };
    const next = chooseFile(this.stateValue, selected, this.maxUploadBytes);
    this.upload = next.file === null ? null : { blob: pick.blob, name: pick.name };
    this.apply(next);
  }

  async handleSubmit(): Promise<void> {
    const category = this.stateValue.category;
    const upload = this.upload;
    if (upload === null || category === null) {
      return;
    }
    this.apply(beginSubmit(this.stateValue));
    try {
      const summary = await this.api.analyze(upload.blob, upload.name, category);
      this.apply(submitSucceeded(this.stateValue, summary));
    } catch (err) {
      this.apply(submitFailed(this.stateValue, describeFailure(err)));
    }
  }
}

function describeFailure(err: unknown): string {
  if (err instanceof ApiError) {
    return `The service could not analyze this image (${err.message}). Please try again.`;
  }
  return "Could not reach the analysis service. Please try again.";
}

function defaultPreviewUrl(blob: Blob): string | null {
  if (typeof URL !== "undefined" && typeof URL.createObjectURL === "function") {
    return URL.createObjectURL(blob);
  }
  return null;
}
