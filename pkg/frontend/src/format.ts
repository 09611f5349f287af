/** Display formatting only. Values always originate in an API document;
 * nothing here derives new quantities from telemetry. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** API rate (0..1) shown as a whole percent, e.g. 0.6666… -> "67%". */
export function formatPercent(rate: number): string {
  return `${Math.round(rate * 100)}%`;
}

/** RFC 3339 timestamps are shown as they arrive, minus the milliseconds. */
export function formatTime(iso: string): string {
  return iso.replace(/\.\d{3}Z$/, "Z");
}

/** Local-hour block from night-cutoff evidence, e.g. [22, 6). */
export function formatHourBlock(startHour: number, endHour: number): string {
  return `[${startHour}:00, ${endHour}:00)`;
}
