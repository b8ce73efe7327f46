/**
 * Heatmap grid rendering: days of the week on the x-axis, hour blocks on
 * the y-axis. Cell background classes come exclusively from the
 * server-provided color field so the UI can never disagree with the API's
 * thresholds; the only formatting done here is rounding for display.
 */

import { isHeatmapResponse, type HeatmapCell, type HeatmapResponse } from "./types.js";

const DAY_LABELS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

export interface RenderHooks {
  onCellSelect?: (cell: HeatmapCell) => void;
}

export function formatExpected(value: number): string {
  return value.toFixed(1);
}

function dayLabel(isoDate: string): string {
  const d = new Date(isoDate + "T00:00:00Z");
  const label = DAY_LABELS[(d.getUTCDay() + 6) % 7] ?? "";
  return `${label} ${isoDate.slice(5)}`;
}

/**
 * Replace the container's grid with the given payload. An invalid payload
 * raises a visible error banner and leaves the previous grid untouched.
 */
export function renderHeatmap(container: HTMLElement, payload: unknown, hooks: RenderHooks = {}): boolean {
  const doc = container.ownerDocument;
  clearBanner(container);
  if (!isHeatmapResponse(payload)) {
    const banner = doc.createElement("div");
    banner.className = "error-banner";
    banner.setAttribute("role", "alert");
    banner.textContent = "Received an invalid heatmap payload; showing the previous grid.";
    container.prepend(banner);
    return false;
  }
  const grid = buildGrid(doc, payload, hooks);
  const previous = container.querySelector(".heatmap-grid");
  if (previous) {
    previous.replaceWith(grid);
  } else {
    container.appendChild(grid);
  }
  container.setAttribute("data-snapshot-id", payload.snapshot_id);
  container.setAttribute("data-week", payload.week);
  return true;
}

function clearBanner(container: HTMLElement): void {
  container.querySelector(".error-banner")?.remove();
}

function buildGrid(doc: Document, payload: HeatmapResponse, hooks: RenderHooks): HTMLElement {
  const byKey = new Map<string, HeatmapCell>();
  for (const cell of payload.cells) byKey.set(`${cell.date}/${cell.hour}`, cell);

  const table = doc.createElement("table");
  table.className = "heatmap-grid";

  const head = doc.createElement("tr");
  head.appendChild(doc.createElement("th"));
  for (const day of payload.days) {
    const th = doc.createElement("th");
    th.textContent = dayLabel(day);
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const hour of payload.hours) {
    const row = doc.createElement("tr");
    const label = doc.createElement("th");
    label.textContent = `${String(hour).padStart(2, "0")}:00`;
    row.appendChild(label);
    for (const day of payload.days) {
      const cell = byKey.get(`${day}/${hour}`);
      row.appendChild(renderCell(doc, day, hour, cell, hooks));
    }
    table.appendChild(row);
  }
  return table;
}

function renderCell(
  doc: Document,
  day: string,
  hour: number,
  cell: HeatmapCell | undefined,
  hooks: RenderHooks,
): HTMLElement {
  const td = doc.createElement("td");
  if (!cell) {
    td.className = "cell cell-missing";
    return td;
  }
  td.className = `cell color-${cell.color}`;
  td.setAttribute("data-date", day);
  td.setAttribute("data-hour", String(hour));
  td.setAttribute("data-expected", String(cell.expected));

  const expected = doc.createElement("span");
  expected.className = "expected";
  expected.textContent = formatExpected(cell.expected);
  td.appendChild(expected);

  const detail = doc.createElement("span");
  detail.className = "scheduled";
  detail.textContent = `${cell.n_scheduled} booked`;
  td.appendChild(detail);

  if (cell.overbook > 0) {
    const overbook = doc.createElement("span");
    overbook.className = "overbook";
    overbook.textContent = `+${cell.overbook}`;
    td.appendChild(overbook);
  }

  td.addEventListener("click", () => hooks.onCellSelect?.(cell));
  return td;
}
