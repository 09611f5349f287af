import { escapeHtml } from "./format.js";
import type { PlanOccupancy } from "./types.js";

const CELL_PX_PER_M = 48;

/** Selectable preview resolutions; static control choices, not data. */
export const RESOLUTION_PRESETS_M = [0.5, 1.0, 2.0, 2.5];

/** Traditional-web-form grid editor: one clickable cell per grid square,
 * seat and device badges where things already sit. Clicks carry col/row in
 * data attributes, so out-of-bounds placements are impossible to express.
 * `previewCellSizeM` re-renders the geometry at a different resolution
 * without touching the stored plan. */
export function renderGridEditor(plan: PlanOccupancy, previewCellSizeM?: number): string {
  const cellSize = previewCellSizeM ?? plan.cell_size_m;
  const px = Math.max(16, Math.round(cellSize * CELL_PX_PER_M));
  const seatsByCell = new Map<string, string[]>();
  for (const seat of plan.seats) {
    if (seat.valid_to !== null) continue;
    const key = `${seat.cell.col},${seat.cell.row}`;
    const label = seat.username ?? seat.member_id;
    seatsByCell.set(key, [...(seatsByCell.get(key) ?? []), label]);
  }
  const devicesByCell = new Map<string, string[]>();
  for (const device of plan.devices) {
    if (!device.cell) continue;
    const key = `${device.cell.col},${device.cell.row}`;
    devicesByCell.set(key, [...(devicesByCell.get(key) ?? []), device.device_id]);
  }

  const cells: string[] = [];
  for (let row = 0; row < plan.rows; row += 1) {
    for (let col = 0; col < plan.cols; col += 1) {
      const key = `${col},${row}`;
      const badges = [
        ...(seatsByCell.get(key) ?? []).map(
          (name) => `<span class="badge seat" title="seat">${escapeHtml(name)}</span>`,
        ),
        ...(devicesByCell.get(key) ?? []).map(
          (id) => `<span class="badge device" title="device">${escapeHtml(id)}</span>`,
        ),
      ].join("");
      const occupied = badges ? " occupied" : "";
      cells.push(
        `<button class="cell${occupied}" data-col="${col}" data-row="${row}" ` +
          `aria-label="cell ${col},${row}">${badges}</button>`,
      );
    }
  }
  return `
  <section class="grid-editor" data-plan-id="${escapeHtml(plan.plan_id)}">
    <header>
      <h2>${escapeHtml(plan.name)}</h2>
      <label>resolution
        <select data-action="preview-resolution">
          ${RESOLUTION_PRESETS_M
            .map(
              (size) =>
                `<option value="${size}"${size === cellSize ? " selected" : ""}>${size} m</option>`,
            )
            .join("")}
        </select>
      </label>
      <span class="dims">${plan.cols} × ${plan.rows} cells at ${cellSize} m</span>
    </header>
    <div class="grid" style="grid-template-columns: repeat(${plan.cols}, ${px}px); grid-auto-rows: ${px}px;">
      ${cells.join("\n      ")}
    </div>
  </section>`;
}

/** The form opened when a cell is clicked; posts to the seats or
 * device-location endpoints. */
export function renderCellForm(planId: string, col: number, row: number): string {
  return `
  <form class="cell-form" data-plan-id="${escapeHtml(planId)}" data-col="${col}" data-row="${row}">
    <h3>Place at (${col}, ${row})</h3>
    <label>kind
      <select name="kind">
        <option value="seat">seat</option>
        <option value="device">device</option>
      </select>
    </label>
    <label>member or device id <input name="subject" required /></label>
    <button type="submit">Place</button>
    <output class="form-error" role="alert"></output>
  </form>`;
}
