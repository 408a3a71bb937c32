/** Typed client for the analysis service JSON API.
 *
 * Every value the UI displays originates from these response shapes; the
 * client never derives or recomputes analysis data.
 */

export interface LineSummary {
  kind: string;
  arc_length: number;
  depth: number;
  confidence: number;
  length_class: string;
  shape_class: string;
}

export interface ReportEntry {
  kind: string;
  present: boolean;
  length_class: string | null;
  shape_class: string | null;
  text: string;
  confidence: number;
}

export interface TraitReport {
  greeting: string;
  category: string;
  entries: ReportEntry[];
  combinations: { name: string; text: string }[];
  disclaimer: string;
}

export interface AnalysisSummary {
  id: string;
  model: string;
  lines: LineSummary[];
  report: TraitReport;
  annotated_url: string;
  timings: Record<string, number>;
}

export interface ServiceInfo {
  status: string;
  version: string;
  max_upload_bytes: number;
}

/** Non-2xx API responses carry {error, detail?}; surfaced as this error. */
export class ApiError extends Error {
  readonly status: number;
  readonly detail?: string;

  constructor(status: number, error: string, detail?: string) {
    super(detail ? `${error}: ${detail}` : error);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) {
    return;
  }
  let error = `request failed (${response.status})`;
  let detail: string | undefined;
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (body.error) {
      error = body.error;
    }
    detail = body.detail;
  } catch {
    // non-JSON body: keep the status-based message
  }
  throw new ApiError(response.status, error, detail);
}

export class ApiClient {
  private readonly fetchImpl: FetchLike;
  private readonly base: string;

  constructor(fetchImpl?: FetchLike, base = "") {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  async serviceInfo(): Promise<ServiceInfo> {
    const response = await this.fetchImpl(`${this.base}/health`);
    await raiseForStatus(response);
    return (await response.json()) as ServiceInfo;
  }

  async analyze(image: Blob, filename: string, category: string): Promise<AnalysisSummary> {
    const form = new FormData();
    form.append("image", image, filename);
    form.append("category", category);
    const response = await this.fetchImpl(`${this.base}/api/analyze`, {
      method: "POST",
      body: form,
    });
    await raiseForStatus(response);
    return (await response.json()) as AnalysisSummary;
  }

  async result(id: string): Promise<AnalysisSummary> {
    const response = await this.fetchImpl(`${this.base}/api/result/${encodeURIComponent(id)}`);
    await raiseForStatus(response);
    return (await response.json()) as AnalysisSummary;
  }
}
