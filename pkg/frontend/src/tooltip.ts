/**
 * Appointment tooltip panel: the block endpoint's entries, one row per
 * appointment with its time and individual no-show probability. A failed
 * fetch leaves a retry affordance instead of a blank panel.
 */

import type { CellAppointment } from "./types.js";
import type { HeatmapCell } from "./types.js";

export interface TooltipDeps {
  fetchBlock: (date: string, hour: number) => Promise<CellAppointment[]>;
}

function timeOf(scheduledAt: string): string {
  const t = scheduledAt.indexOf("T");
  return t >= 0 ? scheduledAt.slice(t + 1, t + 6) : scheduledAt;
}

export async function showTooltip(panel: HTMLElement, cell: HeatmapCell, deps: TooltipDeps): Promise<void> {
  const doc = panel.ownerDocument;
  panel.innerHTML = "";
  panel.setAttribute("data-date", cell.date);
  panel.setAttribute("data-hour", String(cell.hour));

  const title = doc.createElement("h3");
  title.textContent = `${cell.date} ${String(cell.hour).padStart(2, "0")}:00`;
  panel.appendChild(title);

  let entries: CellAppointment[];
  try {
    entries = await deps.fetchBlock(cell.date, cell.hour);
  } catch {
    const failure = doc.createElement("p");
    failure.className = "tooltip-error";
    failure.textContent = "Could not load appointment details.";
    panel.appendChild(failure);
    const retry = doc.createElement("button");
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void showTooltip(panel, cell, deps));
    panel.appendChild(retry);
    return;
  }

  if (entries.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "tooltip-empty";
    empty.textContent = "No appointments scheduled in this block.";
    panel.appendChild(empty);
    return;
  }

  const list = doc.createElement("table");
  list.className = "tooltip-rows";
  for (const entry of entries) {
    const row = doc.createElement("tr");
    row.className = "tooltip-row";
    const when = doc.createElement("td");
    when.textContent = timeOf(entry.scheduled_at);
    const id = doc.createElement("td");
    id.textContent = entry.appointment_id;
    const probability = doc.createElement("td");
    probability.className = "probability";
    probability.textContent = entry.probability.toFixed(2);
    row.append(when, id, probability);
    list.appendChild(row);
  }
  panel.appendChild(list);

  const total = doc.createElement("p");
  total.className = "tooltip-total";
  // display-only: the server's cell value is authoritative
  total.textContent = `Expected misses: ${cell.expected.toFixed(1)}`;
  panel.appendChild(total);
}
