// Typed client for the collector REST API. Every byte the dashboard shows
// or mutates goes through here; there is no other channel to the server.

export type Classification = "smart-home" | "general-purpose" | "unknown";

export interface Device {
  device_id: string;
  oui: string;
  classification: Classification;
  monitored: boolean;
  overridden: boolean;
  name: string;
  hint_name: string;
  category: string;
  vendor: string;
  bytes_sent: number;
  bytes_received: number;
}

export interface EndpointRow {
  endpoint: string;
  bytes_sent: number;
  bytes_received: number;
  confident: boolean;
  company: string | null;
  country: string | null;
  is_tracker: boolean;
  service: string | null;
}

export interface SeriesPoint {
  window_start: number;
  bytes_sent: number;
  bytes_received: number;
}

export interface EndpointSeries {
  endpoint: string;
  total_bytes: number;
  points: SeriesPoint[];
}

export interface BandwidthResponse {
  device_id: string;
  window: number;
  series: EndpointSeries[];
}

export interface Vocabulary {
  categories: string[];
  vendors: string[];
  classifications: string[];
  hint_kinds: string[];
  hint_delete_scopes: string[];
}

export interface ValidationRow {
  method: string;
  target: string;
  outcome: string;
}

export interface LabelResult {
  device_id: string;
  category: string;
  vendor: string;
  outcomes: ValidationRow[];
}

export interface MonitorResult {
  device_id: string;
  monitored: boolean;
  overridden: boolean;
}

export type HintScope = "dhcp" | "ssdp";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

export class CollectorClient {
  constructor(private readonly base = "") {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await fetch(this.base + path, init);
    const text = await response.text();
    let payload: unknown = {};
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = { detail: text };
      }
    }
    if (!response.ok) {
      const detail = (payload as { detail?: unknown }).detail;
      throw new ApiError(
        response.status,
        typeof detail === "string" ? detail : `HTTP ${response.status}`,
      );
    }
    return payload as T;
  }

  async devices(): Promise<Device[]> {
    const data = await this.call<{ devices: Device[] }>("GET", "/v1/devices");
    return data.devices;
  }

  endpoints(deviceId: string): Promise<{ device_id: string; endpoints: EndpointRow[] }> {
    return this.call("GET", `/v1/devices/${encodeURIComponent(deviceId)}/endpoints`);
  }

  bandwidth(deviceId: string, window = 5): Promise<BandwidthResponse> {
    const path = `/v1/devices/${encodeURIComponent(deviceId)}/bandwidth?window=${window}`;
    return this.call("GET", path);
  }

  setMonitor(deviceId: string, monitored: boolean, overrideMac?: string): Promise<MonitorResult> {
    const body: Record<string, unknown> = { monitored };
    if (overrideMac) {
      body.override_mac = overrideMac;
    }
    return this.call("POST", `/v1/devices/${encodeURIComponent(deviceId)}/monitor`, body);
  }

  submitLabel(
    deviceId: string,
    label: { name: string; category: string; vendor: string },
  ): Promise<LabelResult> {
    return this.call("POST", `/v1/devices/${encodeURIComponent(deviceId)}/labels`, label);
  }

  deleteDevice(deviceId: string): Promise<{ deleted: Record<string, number> }> {
    return this.call("DELETE", `/v1/devices/${encodeURIComponent(deviceId)}`);
  }

  deleteHints(deviceId: string, scope: HintScope): Promise<{ scope: string; deleted_hints: number }> {
    return this.call("DELETE", `/v1/devices/${encodeURIComponent(deviceId)}?only=${scope}`);
  }

  vocabulary(): Promise<Vocabulary> {
    return this.call("GET", "/v1/vocabulary");
  }
}
