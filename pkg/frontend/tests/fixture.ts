// In-memory stand-in for the collector. It answers the same routes with the
// same JSON shapes and status codes the real service does, so the app under
// test cannot tell the difference, and tests can verify server state by
// querying back through the API.

import type {
  Device,
  EndpointRow,
  EndpointSeries,
  SeriesPoint,
  Vocabulary,
} from "../src/api.js";

export const CATEGORIES = [
  "appliance", "tv", "voice", "camera", "hub", "plug",
  "office", "storage", "game", "car", "computer", "other",
];

const VENDORS = [
  "Amazon", "Apple", "Google", "LIFX", "Philips",
  "Samsung", "Sonos", "TP-Link", "Wyze",
];

const CATEGORY_SYNONYMS: Record<string, string> = {
  "smart speaker": "voice",
  "television": "tv",
  "smart tv": "tv",
  "security camera": "camera",
};

const VENDOR_SYNONYMS: Record<string, string> = {
  "nest": "Google",
  "tp link": "TP-Link",
};

function standardizeCategory(raw: string): string {
  const text = raw.trim().toLowerCase();
  if (!text) {
    return "";
  }
  return CATEGORY_SYNONYMS[text] ?? text;
}

function standardizeVendor(raw: string): string {
  const text = raw.trim();
  if (!text) {
    return "";
  }
  const key = text.toLowerCase();
  if (VENDOR_SYNONYMS[key]) {
    return VENDOR_SYNONYMS[key];
  }
  return VENDORS.find((v) => v.toLowerCase() === key) ?? text;
}

interface HandleResult {
  status: number;
  payload: unknown;
}

export class FixtureCollector {
  readonly devices = new Map<string, Device>();
  readonly endpoints = new Map<string, EndpointRow[]>();
  readonly bandwidth = new Map<string, EndpointSeries[]>();
  readonly hints = new Map<string, { dhcp: number; ssdp: number }>();
  readonly requests: string[] = [];
  failNextMonitor = false;
  offline = false;

  addDevice(partial: Partial<Device> & { device_id: string }): Device {
    const device: Device = {
      oui: "f0:b4:d2",
      classification: "smart-home",
      monitored: false,
      overridden: false,
      name: "",
      hint_name: "",
      category: "",
      vendor: "",
      bytes_sent: 0,
      bytes_received: 0,
      ...partial,
    };
    this.devices.set(device.device_id, device);
    return device;
  }

  vocabulary(): Vocabulary {
    return {
      categories: [...CATEGORIES],
      vendors: [...VENDORS],
      classifications: ["smart-home", "general-purpose", "unknown"],
      hint_kinds: ["ssdp", "mdns", "upnp", "http-user-agent", "dhcp-hostname"],
      hint_delete_scopes: ["dhcp", "ssdp"],
    };
  }

  handle(method: string, rawUrl: string, body?: Record<string, unknown>): HandleResult {
    this.requests.push(`${method} ${rawUrl.split("?")[0]}`);
    const [path, query = ""] = rawUrl.split("?");
    const params = new URLSearchParams(query);
    const parts = path.split("/").filter(Boolean);

    if (method === "GET" && path === "/v1/devices") {
      const rows = [...this.devices.values()].sort((a, b) =>
        a.device_id < b.device_id ? -1 : 1,
      );
      return { status: 200, payload: { devices: rows.map((d) => ({ ...d })) } };
    }
    if (method === "GET" && path === "/v1/vocabulary") {
      return { status: 200, payload: this.vocabulary() };
    }

    if (parts[0] === "v1" && parts[1] === "devices" && parts.length === 4) {
      const id = decodeURIComponent(parts[2]);
      const device = this.devices.get(id);
      if (!device) {
        return { status: 404, payload: { detail: "unknown device" } };
      }
      switch (`${method} ${parts[3]}`) {
        case "GET endpoints":
          return {
            status: 200,
            payload: { device_id: id, endpoints: this.endpoints.get(id) ?? [] },
          };
        case "GET bandwidth": {
          const window = Number(params.get("window") ?? "5");
          if (window < 5 || window % 5) {
            return { status: 400, payload: { detail: `window must be a multiple of 5, got ${window}` } };
          }
          return {
            status: 200,
            payload: {
              device_id: id,
              window,
              series: rebucket(this.bandwidth.get(id) ?? [], window),
            },
          };
        }
        case "POST monitor":
          return this.setMonitor(device, body ?? {});
        case "POST labels":
          return this.submitLabel(device, body ?? {});
      }
      return { status: 404, payload: { detail: "no such route" } };
    }

    if (method === "DELETE" && parts[0] === "v1" && parts[1] === "devices" && parts.length === 3) {
      const id = decodeURIComponent(parts[2]);
      if (!this.devices.has(id)) {
        return { status: 404, payload: { detail: "unknown device" } };
      }
      const only = params.get("only");
      if (only === "dhcp" || only === "ssdp") {
        const counts = this.hints.get(id) ?? { dhcp: 0, ssdp: 0 };
        const deleted = counts[only];
        counts[only] = 0;
        this.hints.set(id, counts);
        return { status: 200, payload: { scope: only, deleted_hints: deleted } };
      }
      const flows = (this.bandwidth.get(id) ?? []).reduce((n, s) => n + s.points.length, 0);
      this.devices.delete(id);
      this.endpoints.delete(id);
      this.bandwidth.delete(id);
      this.hints.delete(id);
      return { status: 200, payload: { deleted: { devices: 1, flows } } };
    }

    return { status: 404, payload: { detail: "no such route" } };
  }

  private setMonitor(device: Device, body: Record<string, unknown>): HandleResult {
    if (this.failNextMonitor) {
      this.failNextMonitor = false;
      return { status: 503, payload: { detail: "collector is restarting, try again" } };
    }
    const monitored = Boolean(body.monitored);
    const needsOverride =
      monitored && device.classification === "general-purpose" && !device.overridden;
    if (needsOverride) {
      const digits = String(body.override_mac ?? "").replace(/[^0-9a-fA-F]/g, "");
      if (digits.length !== 12) {
        return {
          status: 403,
          payload: {
            detail:
              "monitoring a general-purpose device requires owner confirmation with its MAC address",
          },
        };
      }
      device.overridden = true;
    }
    device.monitored = monitored;
    return {
      status: 200,
      payload: {
        device_id: device.device_id,
        monitored: device.monitored,
        overridden: device.overridden,
      },
    };
  }

  private submitLabel(device: Device, body: Record<string, unknown>): HandleResult {
    const name = String(body.name ?? "");
    const category = String(body.category ?? "");
    const vendor = String(body.vendor ?? "");
    if (!name && !category && !vendor) {
      return { status: 400, payload: { detail: "empty label" } };
    }
    device.name = name;
    device.category = standardizeCategory(category);
    device.vendor = standardizeVendor(vendor);
    return {
      status: 200,
      payload: {
        device_id: device.device_id,
        category: device.category,
        vendor: device.vendor,
        outcomes: [],
      },
    };
  }
}

function rebucket(series: EndpointSeries[], window: number): EndpointSeries[] {
  return series.map((s) => {
    const merged = new Map<number, { sent: number; received: number }>();
    for (const p of s.points) {
      const bucket = Math.floor(p.window_start / window) * window;
      const pair = merged.get(bucket) ?? { sent: 0, received: 0 };
      pair.sent += p.bytes_sent;
      pair.received += p.bytes_received;
      merged.set(bucket, pair);
    }
    const points: SeriesPoint[] = [...merged.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([window_start, pair]) => ({
        window_start,
        bytes_sent: pair.sent,
        bytes_received: pair.received,
      }));
    return { endpoint: s.endpoint, total_bytes: s.total_bytes, points };
  });
}

export function installFetch(collector: FixtureCollector): void {
  globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
    if (collector.offline) {
      throw new TypeError("fetch failed");
    }
    const url =
      typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    const { status, payload } = collector.handle(method, url, body);
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
}

// deterministic 64-hex ids shaped like the salted digests the collector serves
export function hexId(n: number): string {
  let out = "";
  let x = (n + 0x6d2b79f5) >>> 0;
  for (let i = 0; i < 8; i++) {
    x = Math.imul(x ^ (x >>> 15), x | 1) >>> 0;
    x = (x + Math.imul(x ^ (x >>> 7), x | 61)) >>> 0;
    out += ((x ^ (x >>> 14)) >>> 0).toString(16).padStart(8, "0");
  }
  return out;
}

const OUIS = ["f0:b4:d2", "d4:21:22", "3c:84:6a", "b8:27:eb"];

export function fleetOf(count: number): FixtureCollector {
  const collector = new FixtureCollector();
  for (let i = 0; i < count; i++) {
    collector.addDevice({
      device_id: hexId(i),
      oui: OUIS[i % OUIS.length],
      hint_name: `device-${String(i).padStart(2, "0")}`,
      bytes_sent: 320 * (i + 1),
      bytes_received: 1480 * (i + 1),
    });
  }
  return collector;
}

function pt(window_start: number, bytes_sent: number, bytes_received: number): SeriesPoint {
  return { window_start, bytes_sent, bytes_received };
}

export const CAST_ID = hexId(400);

// one well-populated device: three endpoints, one of them a tracker, one
// known only through shared observations (confident=false)
export function castFixture(): FixtureCollector {
  const collector = new FixtureCollector();
  collector.addDevice({
    device_id: CAST_ID,
    oui: "d4:21:22",
    hint_name: "living-room-cast",
    category: "tv",
    vendor: "Google",
    monitored: true,
    bytes_sent: 61800,
    bytes_received: 481350,
  });
  collector.endpoints.set(CAST_ID, [
    {
      endpoint: "media.streamco.example",
      bytes_sent: 52000,
      bytes_received: 480000,
      confident: true,
      company: "StreamCo",
      country: "US",
      is_tracker: false,
      service: "https",
    },
    {
      endpoint: "metrics.adsync.example",
      bytes_sent: 9000,
      bytes_received: 1200,
      confident: true,
      company: "AdSync Ltd",
      country: "US",
      is_tracker: true,
      service: "https",
    },
    {
      endpoint: "edge-42.mirrornet.example",
      bytes_sent: 800,
      bytes_received: 150,
      confident: false,
      company: null,
      country: null,
      is_tracker: false,
      service: null,
    },
  ]);
  collector.bandwidth.set(CAST_ID, [
    {
      endpoint: "media.streamco.example",
      total_bytes: 532000,
      points: [pt(1000, 20000, 150000), pt(1005, 12000, 180000), pt(1010, 8000, 90000), pt(1020, 12000, 60000)],
    },
    {
      endpoint: "metrics.adsync.example",
      total_bytes: 10200,
      points: [pt(1005, 4500, 600), pt(1020, 4500, 600)],
    },
    {
      endpoint: "edge-42.mirrornet.example",
      total_bytes: 950,
      points: [pt(1010, 800, 150)],
    },
  ]);
  collector.hints.set(CAST_ID, { dhcp: 1, ssdp: 2 });
  return collector;
}
