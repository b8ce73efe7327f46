/**
 * Response shapes of the /api/v1 endpoints. The dashboard performs no
 * probability arithmetic beyond display formatting: colors, expected
 * counts, and overbook recommendations all arrive server-computed.
 */

export type CellColor = "yellow" | "orange" | "red";

export interface CellAppointment {
  appointment_id: string;
  scheduled_at: string;
  probability: number;
}

export interface HeatmapCell {
  date: string;
  hour: number;
  provider_id: string | null;
  expected: number;
  n_scheduled: number;
  color: CellColor;
  overbook: number;
  appointments: CellAppointment[];
}

export interface HeatmapResponse {
  snapshot_id: string;
  week: string;
  start: string;
  end: string;
  days: string[];
  hours: number[];
  filters: Record<string, string>;
  providers: string[];
  cells: HeatmapCell[];
}

export interface ProviderInfo {
  provider_id: string;
  specialty: string;
  sites: string[];
}

export interface ProvidersResponse {
  snapshot_id: string;
  providers: ProviderInfo[];
}

export interface MetaResponse {
  snapshot_id: string;
  generated_at: string;
  date_range: [string, string];
  open_hour: number;
  close_hour: number;
  specialties: string[];
  sites: string[];
  model: Record<string, unknown>;
}

const COLORS = new Set(["yellow", "orange", "red"]);

/** Structural validation of a heatmap payload; invalid data must never reach the grid. */
export function isHeatmapResponse(payload: unknown): payload is HeatmapResponse {
  if (typeof payload !== "object" || payload === null) return false;
  const doc = payload as Record<string, unknown>;
  if (typeof doc.snapshot_id !== "string" || typeof doc.week !== "string") return false;
  if (!Array.isArray(doc.days) || !Array.isArray(doc.hours) || !Array.isArray(doc.cells)) {
    return false;
  }
  for (const cell of doc.cells as unknown[]) {
    if (typeof cell !== "object" || cell === null) return false;
    const c = cell as Record<string, unknown>;
    if (typeof c.date !== "string" || typeof c.hour !== "number") return false;
    if (typeof c.expected !== "number" || typeof c.n_scheduled !== "number") return false;
    if (typeof c.color !== "string" || !COLORS.has(c.color)) return false;
    if (typeof c.overbook !== "number" || !Array.isArray(c.appointments)) return false;
  }
  return true;
}
