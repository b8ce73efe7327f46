/**
 * Typed client for the read-only snapshot API, plus a sequence-numbered
 * loader: rapid filter changes fire overlapping requests, and only the
 * newest issued request may update the view, no matter the order the
 * responses land in.
 */

import type { HeatmapResponse, MetaResponse, ProvidersResponse, CellAppointment } from "./types.js";
import type { Filters } from "./state.js";

export type FetchLike = (url: string) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`API error ${status}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url) => fetch(url),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const response = await this.fetchFn(this.baseUrl + path);
    const body = await response.json().catch(() => null);
    if (!response.ok) throw new ApiError(response.status, body);
    return body;
  }

  heatmap(week: string, filters: Filters): Promise<HeatmapResponse> {
    const params = new URLSearchParams({ week });
    if (filters.provider) params.set("provider", filters.provider);
    if (filters.specialty) params.set("specialty", filters.specialty);
    if (filters.site) params.set("site", filters.site);
    return this.getJson(`/api/v1/heatmap?${params}`) as Promise<HeatmapResponse>;
  }

  block(date: string, hour: number, filters: Filters): Promise<CellAppointment[]> {
    const params = new URLSearchParams();
    if (filters.provider) params.set("provider", filters.provider);
    if (filters.specialty) params.set("specialty", filters.specialty);
    if (filters.site) params.set("site", filters.site);
    const query = params.toString();
    return this.getJson(`/api/v1/blocks/${date}/${hour}${query ? "?" + query : ""}`) as Promise<
      CellAppointment[]
    >;
  }

  providers(): Promise<ProvidersResponse> {
    return this.getJson("/api/v1/providers") as Promise<ProvidersResponse>;
  }

  meta(): Promise<MetaResponse> {
    return this.getJson("/api/v1/meta") as Promise<MetaResponse>;
  }
}

export type LoadOutcome<T> =
  | { kind: "value"; value: T; applied: boolean }
  | { kind: "error"; error: unknown; applied: boolean };

/**
 * Discards out-of-order responses: every issue() takes the next sequence
 * number, and a response only applies if nothing newer has applied yet.
 * A slow old response can therefore never overwrite a newer one.
 */
export class SequencedLoader<T> {
  private nextSeq = 1;
  private appliedSeq = 0;

  async issue(request: () => Promise<T>): Promise<LoadOutcome<T>> {
    const seq = this.nextSeq++;
    try {
      const value = await request();
      if (seq <= this.appliedSeq) return { kind: "value", value, applied: false };
      this.appliedSeq = seq;
      return { kind: "value", value, applied: true };
    } catch (error) {
      if (seq <= this.appliedSeq) return { kind: "error", error, applied: false };
      this.appliedSeq = seq;
      return { kind: "error", error, applied: true };
    }
  }
}
