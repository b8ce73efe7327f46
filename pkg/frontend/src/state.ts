/**
 * View state: exactly one (week, filters, snapshot) triple is rendered at
 * any time. Week navigation is always Monday-anchored, and the state
 * serializes to a query string so views are shareable links.
 */

export interface Filters {
  provider: string | null;
  specialty: string | null;
  site: string | null;
}

export interface ViewState {
  week: string; // ISO date of the Monday
  filters: Filters;
  snapshotId: string | null;
  selectedCell: { date: string; hour: number } | null;
}

export function emptyFilters(): Filters {
  return { provider: null, specialty: null, site: null };
}

export function initialState(week: string): ViewState {
  return { week: mondayOf(week), filters: emptyFilters(), snapshotId: null, selectedCell: null };
}

/** Monday of the week containing the given ISO date. */
export function mondayOf(isoDate: string): string {
  const d = new Date(isoDate + "T00:00:00Z");
  if (Number.isNaN(d.getTime())) throw new Error(`not a date: ${isoDate}`);
  const weekday = (d.getUTCDay() + 6) % 7; // Monday = 0
  d.setUTCDate(d.getUTCDate() - weekday);
  return d.toISOString().slice(0, 10);
}

export function shiftWeek(monday: string, weeks: number): string {
  const d = new Date(monday + "T00:00:00Z");
  d.setUTCDate(d.getUTCDate() + 7 * weeks);
  return mondayOf(d.toISOString().slice(0, 10));
}

export function toQueryString(state: ViewState): string {
  const params = new URLSearchParams();
  params.set("week", state.week);
  for (const key of ["provider", "specialty", "site"] as const) {
    const value = state.filters[key];
    if (value) params.set(key, value);
  }
  return params.toString();
}

export function fromQueryString(query: string, fallbackWeek: string): ViewState {
  const params = new URLSearchParams(query);
  const week = params.get("week");
  const state = initialState(week ?? fallbackWeek);
  state.filters.provider = params.get("provider");
  state.filters.specialty = params.get("specialty");
  state.filters.site = params.get("site");
  return state;
}
