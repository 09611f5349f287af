import type { Role } from "./types.js";

export interface Route {
  id: string;
  label: string;
  minRole: Role;
}

const RANK: Record<Role, number> = { user: 0, staff: 1, admin: 2 };

/** Every view the console knows about. Staff-only views are filtered out of
 * the navigation entirely for user sessions: hidden, not merely disabled. */
export const ALL_ROUTES: Route[] = [
  { id: "device-board", label: "Devices", minRole: "user" },
  { id: "my-dashboard", label: "My dashboard", minRole: "user" },
  { id: "compliance", label: "Survey compliance", minRole: "staff" },
  { id: "grid-editor", label: "Floor plan", minRole: "staff" },
  { id: "fault-board", label: "Faults", minRole: "staff" },
];

export function visibleRoutes(role: Role): Route[] {
  return ALL_ROUTES.filter((route) => RANK[role] >= RANK[route.minRole]);
}

export function mayVisit(role: Role, routeId: string): boolean {
  return visibleRoutes(role).some((route) => route.id === routeId);
}
