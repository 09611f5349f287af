import type {
  Assignment,
  Bootstrap,
  ComplianceRow,
  DashboardDoc,
  ErrorEnvelope,
  FaultReport,
  Me,
  PlanOccupancy,
} from "./types.js";

/** A request the API refused; carries the uniform error envelope. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly envelope: ErrorEnvelope,
  ) {
    super(envelope.message);
  }
}

/** Thin fetch wrapper: the console is a pure API client and never touches
 * the store directly. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string | null = null,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({ code: "bad_response", message: "unparseable response" }));
    if (!response.ok) {
      throw new ApiError(response.status, payload as ErrorEnvelope);
    }
    return payload as T;
  }

  login(username: string, password: string): Promise<{ token: string; role: string }> {
    return this.request("POST", "/auth/token", { username, password });
  }

  me(): Promise<Me> {
    return this.request("GET", "/me");
  }

  compliance(): Promise<{ rows: ComplianceRow[] }> {
    return this.request("GET", "/surveys/compliance");
  }

  assignments(memberId: string): Promise<{ assignments: Assignment[] }> {
    return this.request("GET", `/surveys/assignments?member_id=${encodeURIComponent(memberId)}`);
  }

  extendDeadline(assignmentId: string, newClose: string): Promise<Assignment> {
    return this.request("POST", `/surveys/assignments/${assignmentId}/extend`, {
      new_close: newClose,
    });
  }

  redistribute(assignmentId: string): Promise<{ deliveries: number }> {
    return this.request("POST", `/surveys/assignments/${assignmentId}/redistribute`, {});
  }

  planOccupancy(planId: string): Promise<PlanOccupancy> {
    return this.request("GET", `/floorplans/${planId}`);
  }

  assignSeat(memberId: string, planId: string, col: number, row: number): Promise<unknown> {
    return this.request("POST", "/seats", { member_id: memberId, plan_id: planId, col, row });
  }

  moveDevice(deviceId: string, planId: string, col: number, row: number): Promise<unknown> {
    return this.request("PATCH", `/devices/${deviceId}/location`, { plan_id: planId, col, row });
  }

  renderDashboard(ownerKind: string, ownerId: string): Promise<DashboardDoc> {
    return this.request("GET", `/dashboards/${ownerKind}/${ownerId}`);
  }

  faults(): Promise<{ reports: FaultReport[] }> {
    return this.request("GET", "/faults");
  }
}

export async function loadBootstrap(fetchImpl: typeof fetch = fetch): Promise<Bootstrap> {
  const response = await fetchImpl("/console/bootstrap.json");
  return (await response.json()) as Bootstrap;
}
