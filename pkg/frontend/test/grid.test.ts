import { describe, expect, it } from "vitest";

import { renderCellForm, renderGridEditor } from "../src/grid";
import type { PlanOccupancy } from "../src/types";
import { fixture } from "./helpers";

const plan = fixture<PlanOccupancy>("plan.json");

describe("grid editor", () => {
  it("renders the recorded fixture", () => {
    expect(renderGridEditor(plan)).toMatchSnapshot();
  });

  it("shows one clickable cell per grid square and nothing outside", () => {
    const html = renderGridEditor(plan);
    const cells = html.match(/class="cell/g) ?? [];
    expect(cells.length).toBe(plan.cols * plan.rows);
    const cols = [...html.matchAll(/data-col="(\d+)"/g)].map((m) => Number(m[1]));
    const rows = [...html.matchAll(/data-row="(\d+)"/g)].map((m) => Number(m[1]));
    expect(Math.max(...cols)).toBe(plan.cols - 1);
    expect(Math.max(...rows)).toBe(plan.rows - 1);
  });

  it("badges occupied cells with seat and device names", () => {
    const html = renderGridEditor(plan);
    for (const seat of plan.seats.filter((s) => s.valid_to === null)) {
      expect(html).toContain(seat.username ?? seat.member_id);
    }
    for (const device of plan.devices) {
      expect(html).toContain(device.device_id);
    }
    expect(html).toContain('class="badge seat"');
    expect(html).toContain('class="badge device"');
  });

  it("re-renders at a preview resolution without losing badges", () => {
    const preview = renderGridEditor(plan, 2.0);
    expect(preview).toContain("2 m");
    expect(preview).toContain(`repeat(${plan.cols}, 96px)`);
    for (const device of plan.devices) {
      expect(preview).toContain(device.device_id);
    }
    expect(renderGridEditor(plan)).toContain(`repeat(${plan.cols}, 48px)`);
  });

  it("cell form posts coordinates it was opened with", () => {
    const html = renderCellForm(plan.plan_id, 3, 4);
    expect(html).toContain('data-col="3"');
    expect(html).toContain('data-row="4"');
    expect(html).toContain("Place at (3, 4)");
    expect(html).toMatchSnapshot();
  });
});
