/** Documents exactly as the API returns them; the console adds nothing. */

export type Role = "user" | "staff" | "admin";

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail?: unknown;
}

export interface Bootstrap {
  api_base_url: string;
  poll_interval_s: number;
}

export interface Me {
  member_id: string;
  username: string;
  email: string;
  display_name: string;
  role: Role;
  descriptor: string;
  created_at: string;
  active: boolean;
}

export interface ComplianceRow {
  member_id: string;
  username: string;
  assigned: number;
  completed: number;
  rate?: number;
}

export interface Assignment {
  assignment_id: string;
  member_id: string;
  template_id: string;
  open_time: string;
  close_time: string;
  anonymous_id: string;
  completed: boolean;
  completed_at: string | null;
  deliveries: number;
}

export interface GridCellRef {
  col: number;
  row: number;
}

export interface SeatDoc {
  seat_id: string;
  member_id: string;
  plan_id: string;
  cell: GridCellRef;
  valid_from: string;
  valid_to: string | null;
  username?: string;
}

export interface DeviceDoc {
  device_id: string;
  owner: string | null;
  location_general: string;
  location_specific: string;
  plan_id: string | null;
  cell: GridCellRef | null;
  known_fields: { fieldname: string }[];
  system_version: string;
  status: string;
}

export interface PlanOccupancy {
  plan_id: string;
  name: string;
  cell_size_m: number;
  cols: number;
  rows: number;
  seats: SeatDoc[];
  devices: DeviceDoc[];
}

export interface SeriesPoint {
  time: string;
  value: number;
}

export interface PanelDoc {
  title: string;
  render_hint: string;
  lookback_s: number;
  query: { selector: Record<string, string>; agg: string; every_s: number | null };
  series: SeriesPoint[];
}

export interface DashboardDoc {
  dashboard_id: string;
  owner_kind: "member" | "device";
  owner_id: string;
  visibility: "private" | "public";
  rendered_at: string;
  panels: PanelDoc[];
}

export interface FaultReport {
  report_id: string;
  device_id: string;
  fieldname: string;
  fault_class: string;
  window_start: string;
  window_end: string;
  severity: number;
  evidence: Record<string, number>;
}
