/** Browser glue: session handling, navigation, polling, and the optimistic
 * extend/redistribute flow. All rendering goes through the pure functions in
 * compliance.ts / grid.ts / deviceBoard.ts, which the snapshot tests cover. */

import { ApiClient, ApiError, loadBootstrap } from "./api.js";
import { renderComplianceTable, withRowMessage, type RowMessages } from "./compliance.js";
import { renderDeviceBoard } from "./deviceBoard.js";
import { renderCellForm, renderGridEditor } from "./grid.js";
import { mayVisit, visibleRoutes } from "./routes.js";
import type { Assignment, Me, PlanOccupancy } from "./types.js";

interface ConsoleSession {
  client: ApiClient;
  me: Me;
  pollIntervalS: number;
  selectedPlan: string | null;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderNav(session: ConsoleSession, active: string): void {
  el("nav").innerHTML = visibleRoutes(session.me.role)
    .map(
      (route) =>
        `<a href="#${route.id}" class="${route.id === active ? "active" : ""}">${route.label}</a>`,
    )
    .join("");
}

async function showCompliance(session: ConsoleSession, messages: RowMessages = {}): Promise<void> {
  const { rows } = await session.client.compliance();
  const assignmentsByMember: Record<string, Assignment[]> = {};
  for (const row of rows) {
    assignmentsByMember[row.member_id] = (
      await session.client.assignments(row.member_id)
    ).assignments;
  }
  el("view").innerHTML = renderComplianceTable(rows, assignmentsByMember, messages);
  wireComplianceActions(session);
}

function wireComplianceActions(session: ConsoleSession): void {
  el("view").querySelectorAll<HTMLButtonElement>("button[data-action]").forEach((button) => {
    button.addEventListener("click", async () => {
      const holder = button.closest("[data-assignment-id]") as HTMLElement;
      const rowEl = button.closest("tr") as HTMLElement;
      const assignmentId = holder.dataset.assignmentId!;
      const memberId = rowEl.dataset.memberId!;
      // optimistic: mark the row busy, roll back with an inline error
      rowEl.classList.add("pending");
      try {
        if (button.dataset.action === "extend") {
          const newClose = prompt("new close time (RFC 3339)", "") ?? "";
          await session.client.extendDeadline(assignmentId, newClose);
        } else {
          await session.client.redistribute(assignmentId);
        }
        await showCompliance(session);
      } catch (error) {
        const message = error instanceof ApiError ? error.envelope.message : String(error);
        await showCompliance(session, withRowMessage({}, memberId, message));
      } finally {
        rowEl.classList.remove("pending");
      }
    });
  });
}

async function showGrid(session: ConsoleSession, previewCellSizeM?: number): Promise<void> {
  if (!session.selectedPlan) {
    el("view").innerHTML = `<p class="empty">no floor plan selected</p>`;
    return;
  }
  const plan: PlanOccupancy = await session.client.planOccupancy(session.selectedPlan);
  el("view").innerHTML = renderGridEditor(plan, previewCellSizeM);
  el("view")
    .querySelector<HTMLSelectElement>("select[data-action=preview-resolution]")
    ?.addEventListener("change", (event) => {
      void showGrid(session, Number((event.target as HTMLSelectElement).value));
    });
  el("view").querySelectorAll<HTMLButtonElement>(".cell").forEach((cell) => {
    cell.addEventListener("click", () => openCellForm(session, plan, cell));
  });
}

function openCellForm(session: ConsoleSession, plan: PlanOccupancy, cell: HTMLButtonElement): void {
  const col = Number(cell.dataset.col);
  const row = Number(cell.dataset.row);
  const slot = el("dialog-slot");
  slot.innerHTML = renderCellForm(plan.plan_id, col, row);
  const form = slot.querySelector("form")!;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const subject = String(data.get("subject") ?? "");
    try {
      if (data.get("kind") === "seat") {
        await session.client.assignSeat(subject, plan.plan_id, col, row);
      } else {
        await session.client.moveDevice(subject, plan.plan_id, col, row);
      }
      slot.innerHTML = "";
      await showGrid(session);
    } catch (error) {
      const output = form.querySelector("output")!;
      output.textContent =
        error instanceof ApiError ? error.envelope.message : String(error);
    }
  });
}

async function showDeviceBoard(session: ConsoleSession, stale = false): Promise<void> {
  try {
    const faults =
      session.me.role === "user" ? { reports: [] } : await session.client.faults();
    const plan = session.selectedPlan
      ? await session.client.planOccupancy(session.selectedPlan)
      : null;
    const deviceIds = plan
      ? plan.devices.map((device) => device.device_id)
      : [...new Set(faults.reports.map((report) => report.device_id))];
    const boards: string[] = [];
    for (const deviceId of deviceIds) {
      const dashboard = await session.client.renderDashboard("device", deviceId);
      boards.push(renderDeviceBoard(dashboard, faults.reports, stale));
    }
    el("view").innerHTML =
      boards.join("\n") || `<p class="empty">no devices to show</p>`;
  } catch (error) {
    if (error instanceof ApiError && error.status === 403) {
      el("view").innerHTML = `<p class="forbidden">403: this dashboard is private</p>`;
      return;
    }
    // leave the last good view up and flag it
    const banner = document.createElement("div");
    banner.className = "stale-banner";
    banner.setAttribute("role", "alert");
    banner.textContent = "showing stale data: last poll failed";
    el("view").prepend(banner);
  }
}

async function route(session: ConsoleSession): Promise<void> {
  const target = window.location.hash.replace(/^#/, "") || "device-board";
  if (!mayVisit(session.me.role, target)) {
    // staff views are hidden for user sessions, never rendered
    window.location.hash = "#device-board";
    return;
  }
  renderNav(session, target);
  if (target === "compliance") await showCompliance(session);
  else if (target === "grid-editor") await showGrid(session);
  else if (target === "my-dashboard") {
    const doc = await session.client.renderDashboard("member", session.me.member_id);
    el("view").innerHTML = renderDeviceBoard(doc, []);
  } else await showDeviceBoard(session);
}

async function main(): Promise<void> {
  const bootstrap = await loadBootstrap();
  const client = new ApiClient(bootstrap.api_base_url);
  const stored = window.sessionStorage.getItem("lablink-token");
  if (stored) client.setToken(stored);

  let me: Me;
  try {
    me = await client.me();
  } catch {
    el("view").innerHTML = `
      <form id="login">
        <label>username <input name="username" /></label>
        <label>password <input name="password" type="password" /></label>
        <button type="submit">Sign in</button>
        <output role="alert"></output>
      </form>`;
    el("view").querySelector("form")!.addEventListener("submit", async (event) => {
      event.preventDefault();
      const data = new FormData(event.target as HTMLFormElement);
      try {
        const { token } = await client.login(
          String(data.get("username")), String(data.get("password")),
        );
        window.sessionStorage.setItem("lablink-token", token);
        window.location.reload();
      } catch (error) {
        el("view").querySelector("output")!.textContent =
          error instanceof ApiError ? error.envelope.message : String(error);
      }
    });
    return;
  }

  const session: ConsoleSession = {
    client,
    me,
    pollIntervalS: bootstrap.poll_interval_s ?? 15,
    selectedPlan: window.sessionStorage.getItem("lablink-plan"),
  };
  window.addEventListener("hashchange", () => void route(session));
  await route(session);
  window.setInterval(() => void route(session), session.pollIntervalS * 1000);
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  void main();
}
