import { escapeHtml, formatHourBlock, formatTime } from "./format.js";
import type { DashboardDoc, FaultReport, PanelDoc, SeriesPoint } from "./types.js";

const CHART_W = 480;
const CHART_H = 120;

/** Flag colors per fault class; evidence text comes straight from the
 * report document. */
const FLAG_CLASS: Record<string, string> = {
  silent: "flag-silent",
  partial_loss: "flag-partial",
  night_cutoff: "flag-night",
  out_of_range: "flag-range",
  consensus_outlier: "flag-consensus",
};

function evidenceSummary(report: FaultReport): string {
  const e = report.evidence;
  switch (report.fault_class) {
    case "night_cutoff":
      return `dark ${formatHourBlock(e.block_start_hour, e.block_end_hour)}`;
    case "partial_loss":
      return `received ${e.received} of ${e.expected}`;
    case "out_of_range":
      return `${e.outliers} of ${e.points} out of spec`;
    case "consensus_outlier":
      return `${e.exceeding} of ${e.bins} bins off consensus`;
    default:
      return `no data for ${e.gap_s}s`;
  }
}

export function renderFaultFlags(reports: FaultReport[]): string {
  if (!reports.length) return "";
  const flags = reports
    .map(
      (report) => `
    <a class="flag ${FLAG_CLASS[report.fault_class] ?? "flag-other"}"
       href="#fault-${escapeHtml(report.report_id)}"
       title="${escapeHtml(formatTime(report.window_start))} – ${escapeHtml(formatTime(report.window_end))}">
      ${escapeHtml(report.fault_class)}: ${escapeHtml(evidenceSummary(report))}
    </a>`,
    )
    .join("");
  return `<div class="fault-flags">${flags}</div>`;
}

/** Polyline geometry is pure display scaling; every value a user can read
 * (tooltips, first/last labels) is the API number verbatim. */
function renderChart(series: SeriesPoint[]): string {
  if (!series.length) {
    return `<p class="empty">no data in the lookback window</p>`;
  }
  const values = series.map((p) => p.value);
  const low = Math.min(...values);
  const high = Math.max(...values);
  const span = high - low || 1;
  const step = series.length > 1 ? CHART_W / (series.length - 1) : 0;
  const points = series
    .map((point, i) => {
      const x = i * step;
      const y = CHART_H - ((point.value - low) / span) * CHART_H;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const dots = series
    .map((point, i) => {
      const x = i * step;
      const y = CHART_H - ((point.value - low) / span) * CHART_H;
      return `<circle cx="${x.toFixed(1)}" cy="${y.toFixed(1)}" r="3">
        <title>${escapeHtml(formatTime(point.time))}: ${point.value}</title>
      </circle>`;
    })
    .join("");
  const first = series[0];
  const last = series[series.length - 1];
  return `
  <svg viewBox="0 0 ${CHART_W} ${CHART_H}" class="chart" role="img"
       aria-label="${series.length} samples">
    <polyline fill="none" points="${points}"></polyline>
    ${dots}
  </svg>
  <footer class="chart-range">
    <span>${escapeHtml(formatTime(first.time))}</span>
    <span>${escapeHtml(formatTime(last.time))}</span>
  </footer>`;
}

function renderPanel(panel: PanelDoc): string {
  return `
  <article class="panel">
    <h3>${escapeHtml(panel.title)}</h3>
    ${renderChart(panel.series)}
  </article>`;
}

/** One device card: its rendered dashboard panels plus any open fault
 * flags, exactly as the API reported them. */
export function renderDeviceBoard(
  dashboard: DashboardDoc,
  faults: FaultReport[],
  stale = false,
): string {
  const mine = faults.filter((report) => report.device_id === dashboard.owner_id);
  const banner = stale
    ? `<div class="stale-banner" role="alert">showing stale data: last poll failed</div>`
    : "";
  return `
  <section class="device-board" data-device-id="${escapeHtml(dashboard.owner_id)}">
    ${banner}
    <header>
      <h2>${escapeHtml(dashboard.owner_id)}</h2>
      ${renderFaultFlags(mine)}
    </header>
    ${dashboard.panels.map(renderPanel).join("\n")}
    <footer class="rendered-at">rendered ${escapeHtml(formatTime(dashboard.rendered_at))}</footer>
  </section>`;
}
