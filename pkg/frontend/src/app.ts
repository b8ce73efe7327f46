/**
 * Dashboard bootstrap: provider tabs plus filter selects over the week
 * grid, URL-synced state, and a polling refresh with a visible snapshot
 * timestamp. Out-of-order heatmap responses are discarded by sequence
 * number, so the rendered grid always matches the latest filter state.
 */

import { ApiClient, ApiError, SequencedLoader } from "./api.js";
import { renderHeatmap } from "./heatmap.js";
import {
  fromQueryString,
  initialState,
  mondayOf,
  shiftWeek,
  toQueryString,
  type ViewState,
} from "./state.js";
import { showTooltip } from "./tooltip.js";
import type { HeatmapCell, HeatmapResponse, ProvidersResponse } from "./types.js";

const POLL_INTERVAL_MS = 5 * 60 * 1000;

export interface AppElements {
  grid: HTMLElement;
  tooltip: HTMLElement;
  tabs: HTMLElement;
  specialty: HTMLSelectElement;
  site: HTMLSelectElement;
  weekLabel: HTMLElement;
  prevWeek: HTMLElement;
  nextWeek: HTMLElement;
  status: HTMLElement;
}

export class Dashboard {
  state: ViewState;
  private loader = new SequencedLoader<HeatmapResponse>();
  private generatedAt: string | null = null;

  constructor(
    private elements: AppElements,
    private api: ApiClient,
    private syncUrl: (query: string) => void = () => {},
    today: string = new Date().toISOString().slice(0, 10),
  ) {
    this.state = initialState(today);
  }

  loadFromQuery(query: string, fallbackWeek: string): void {
    this.state = fromQueryString(query, fallbackWeek);
  }

  async start(): Promise<void> {
    const providers = await this.api.providers();
    this.renderTabs(providers);
    this.renderFilterOptions(providers);
    try {
      this.generatedAt = (await this.api.meta()).generated_at;
    } catch {
      this.generatedAt = null;
    }
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const { week, filters } = this.state;
    const outcome = await this.loader.issue(() => this.api.heatmap(week, filters));
    if (!outcome.applied) return; // a newer request superseded this one
    if (outcome.kind === "error") {
      this.showError(outcome.error);
      return;
    }
    const payload = outcome.value;
    if (renderHeatmap(this.elements.grid, payload, { onCellSelect: (cell) => this.select(cell) })) {
      this.state.snapshotId = payload.snapshot_id;
      this.elements.weekLabel.textContent = `Week of ${payload.week}`;
      const generated = this.generatedAt ? ` · generated ${this.generatedAt}` : "";
      this.elements.status.textContent = `snapshot ${payload.snapshot_id}${generated}`;
      this.syncUrl(toQueryString(this.state));
    }
  }

  private showError(error: unknown): void {
    if (error instanceof ApiError && error.status === 404) {
      // a filter the snapshot does not know; mark it invalid and keep the grid
      this.elements.status.textContent = "filter not found in this snapshot";
      this.elements.tabs.classList.add("filter-invalid");
      return;
    }
    this.elements.status.textContent = "could not reach the service";
  }

  private select(cell: HeatmapCell): void {
    this.state.selectedCell = { date: cell.date, hour: cell.hour };
    void showTooltip(this.elements.tooltip, cell, {
      fetchBlock: (date, hour) => this.api.block(date, hour, this.state.filters),
    });
  }

  async setProvider(provider: string | null): Promise<void> {
    this.elements.tabs.classList.remove("filter-invalid");
    this.state.filters.provider = provider;
    await this.refresh();
  }

  async setSpecialty(specialty: string | null): Promise<void> {
    this.state.filters.specialty = specialty;
    await this.refresh();
  }

  async setSite(site: string | null): Promise<void> {
    this.state.filters.site = site;
    await this.refresh();
  }

  async clearFilters(): Promise<void> {
    this.state.filters = { provider: null, specialty: null, site: null };
    await this.refresh();
  }

  async goWeek(delta: number): Promise<void> {
    this.state.week = shiftWeek(this.state.week, delta);
    await this.refresh();
  }

  async jumpToWeek(anyDate: string): Promise<void> {
    this.state.week = mondayOf(anyDate);
    await this.refresh();
  }

  private renderTabs(providers: ProvidersResponse): void {
    const doc = this.elements.tabs.ownerDocument;
    this.elements.tabs.innerHTML = "";
    const all = doc.createElement("button");
    all.className = "tab tab-all";
    all.textContent = "All providers";
    all.addEventListener("click", () => void this.setProvider(null));
    this.elements.tabs.appendChild(all);
    for (const provider of providers.providers) {
      const tab = doc.createElement("button");
      tab.className = "tab";
      tab.setAttribute("data-provider", provider.provider_id);
      tab.textContent = `${provider.provider_id} (${provider.specialty})`;
      tab.addEventListener("click", () => void this.setProvider(provider.provider_id));
      this.elements.tabs.appendChild(tab);
    }
  }

  private renderFilterOptions(providers: ProvidersResponse): void {
    const doc = this.elements.specialty.ownerDocument;
    const fill = (select: HTMLSelectElement, values: string[]) => {
      select.innerHTML = "";
      const blank = doc.createElement("option");
      blank.value = "";
      blank.textContent = "(any)";
      select.appendChild(blank);
      for (const value of values) {
        const option = doc.createElement("option");
        option.value = value;
        option.textContent = value;
        select.appendChild(option);
      }
    };
    fill(this.elements.specialty, [...new Set(providers.providers.map((p) => p.specialty))].sort());
    fill(this.elements.site, [...new Set(providers.providers.flatMap((p) => p.sites))].sort());
  }
}

/** Wire the dashboard into the page; called from index.html. */
export function boot(doc: Document): Dashboard {
  const byId = (id: string) => doc.getElementById(id) as HTMLElement;
  const elements: AppElements = {
    grid: byId("grid"),
    tooltip: byId("tooltip"),
    tabs: byId("tabs"),
    specialty: byId("specialty") as HTMLSelectElement,
    site: byId("site") as HTMLSelectElement,
    weekLabel: byId("week-label"),
    prevWeek: byId("prev-week"),
    nextWeek: byId("next-week"),
    status: byId("status"),
  };
  const dashboard = new Dashboard(elements, new ApiClient(), (query) =>
    window.history.replaceState(null, "", `?${query}`),
  );
  dashboard.loadFromQuery(window.location.search, new Date().toISOString().slice(0, 10));

  elements.prevWeek.addEventListener("click", () => void dashboard.goWeek(-1));
  elements.nextWeek.addEventListener("click", () => void dashboard.goWeek(1));
  elements.specialty.addEventListener("change", () =>
    void dashboard.setSpecialty(elements.specialty.value || null),
  );
  elements.site.addEventListener("change", () => void dashboard.setSite(elements.site.value || null));

  void dashboard.start();
  setInterval(() => void dashboard.refresh(), POLL_INTERVAL_MS);
  return dashboard;
}
