/** Thin client for the recommendation endpoint.
 *
 * Network failures, validation rejections (4xx) and server failures (5xx)
 * surface as distinct error kinds so the UI can render them differently.
 */

import type { RecommendRequest, RecommendResponse } from "./types.js";

export type ApiErrorKind = "network" | "validation" | "server";

export class ApiError extends Error {
  readonly kind: ApiErrorKind;
  readonly status: number | null;

  constructor(kind: ApiErrorKind, message: string, status: number | null = null) {
    super(message);
    this.kind = kind;
    this.status = status;
  }
}

export interface ApiClient {
  recommend(req: RecommendRequest): Promise<RecommendResponse>;
}

type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export function createApiClient(baseUrl: string, fetchImpl: FetchLike = fetch): ApiClient {
  const root = baseUrl.replace(/\/$/, "");
  return {
    async recommend(req: RecommendRequest): Promise<RecommendResponse> {
      let resp: Response;
      try {
        resp = await fetchImpl(`${root}/api/v1/recommend`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(req),
        });
      } catch (err) {
        throw new ApiError("network", `request failed: ${String(err)}`);
      }
      if (resp.ok) {
        return (await resp.json()) as RecommendResponse;
      }
      const body = await resp.text();
      const detail = extractDetail(body);
      if (resp.status >= 400 && resp.status < 500) {
        throw new ApiError("validation", detail, resp.status);
      }
      throw new ApiError("server", detail || `server error ${resp.status}`, resp.status);
    },
  };
}

function extractDetail(body: string): string {
  try {
    const parsed = JSON.parse(body);
    if (typeof parsed.detail === "string") return parsed.detail;
    if (Array.isArray(parsed.detail) && parsed.detail.length > 0) {
      const first = parsed.detail[0];
      const loc = Array.isArray(first.loc) ? first.loc.join(".") : "";
      return loc ? `${loc}: ${first.msg}` : String(first.msg ?? body);
    }
  } catch {
    /* non-JSON body: fall through to the raw text */
  }
  return body;
}
