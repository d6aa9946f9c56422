import type { Device } from "./api.js";

const UNITS = ["B", "KB", "MB", "GB", "TB"];

export function formatBytes(total: number): string {
  let value = total;
  let unit = 0;
  while (value >= 1000 && unit < UNITS.length - 1) {
    value /= 1000;
    unit += 1;
  }
  return unit === 0 ? `${value} B` : `${value.toFixed(1)} ${UNITS[unit]}`;
}

// Label name wins, then a discovery hint, then the hashed id itself.
export function displayName(device: Device): string {
  return device.name || device.hint_name || shortId(device.device_id);
}

export function shortId(deviceId: string): string {
  return deviceId.length > 12 ? deviceId.slice(0, 12) : deviceId;
}

export function formatClock(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().slice(11, 19);
}
