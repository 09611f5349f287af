import { escapeHtml, formatPercent, formatTime } from "./format.js";
import type { Assignment, ComplianceRow } from "./types.js";

/** Per-row inline messages (surfaced API errors, e.g. invalid_window). */
export type RowMessages = Record<string, string>;

/** The compliance table mirrors GET /surveys/compliance: assigned and
 * completed counts verbatim, the rate as a formatted percent, and the
 * staff actions wired through data attributes. */
export function renderComplianceTable(
  rows: ComplianceRow[],
  assignmentsByMember: Record<string, Assignment[]> = {},
  messages: RowMessages = {},
): string {
  const body = rows
    .map((row) => {
      const rate = row.rate === undefined ? "–" : formatPercent(row.rate);
      const open = (assignmentsByMember[row.member_id] ?? []).filter(
        (assignment) => !assignment.completed,
      );
      const actions = open
        .map(
          (assignment) => `
        <span class="actions" data-assignment-id="${escapeHtml(assignment.assignment_id)}">
          <button data-action="extend">Extend</button>
          <button data-action="redistribute">Resend</button>
          <span class="deadline">closes ${escapeHtml(formatTime(assignment.close_time))}</span>
        </span>`,
        )
        .join("");
      const note = messages[row.member_id]
        ? `<div class="row-error" role="alert">${escapeHtml(messages[row.member_id])}</div>`
        : "";
      return `
    <tr data-member-id="${escapeHtml(row.member_id)}">
      <td>${escapeHtml(row.username)}</td>
      <td class="count">${row.completed}/${row.assigned}</td>
      <td class="rate">${rate}</td>
      <td>${actions}${note}</td>
    </tr>`;
    })
    .join("");
  return `
  <table class="compliance">
    <thead><tr><th>Member</th><th>Completed</th><th>Rate</th><th>Actions</th></tr></thead>
    <tbody>${body}</tbody>
  </table>`;
}

/** Attach an inline error message to one member's row (invalid windows,
 * closed assignments, permission errors all land here). */
export function withRowMessage(messages: RowMessages, memberId: string, message: string): RowMessages {
  return { ...messages, [memberId]: message };
}
