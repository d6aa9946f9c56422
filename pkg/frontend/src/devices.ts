import type { Device } from "./api.js";
import { displayName, formatBytes, shortId } from "./format.js";

export interface DeviceListHandlers {
  onSelect(device: Device): void;
  onToggleMonitor(device: Device, monitored: boolean): void;
  onOverride(device: Device, mac: string): void;
}

function cell(row: HTMLTableRowElement, className?: string): HTMLTableCellElement {
  const td = row.insertCell();
  if (className) {
    td.className = className;
  }
  return td;
}

// The monitor column is the consent surface. Smart-home and unknown devices
// get a plain checkbox. General-purpose devices that were never explicitly
// opted in render a MAC entry instead: typing the device's own MAC is the
// owner's proof of possession, and the server discards it after checking
// its shape.
function monitorControl(
  device: Device,
  draftMac: string,
  handlers: DeviceListHandlers,
): HTMLElement {
  if (device.classification === "general-purpose" && !device.overridden) {
    const wrap = document.createElement("div");
    wrap.className = "override-cell";
    const input = document.createElement("input");
    input.type = "text";
    input.className = "override-mac";
    input.placeholder = "aa:bb:cc:dd:ee:ff";
    input.title = "This looks like a phone or computer. To monitor it anyway, type its MAC address to confirm you own it.";
    input.value = draftMac;
    const confirm = document.createElement("button");
    confirm.type = "button";
    confirm.className = "override-confirm";
    confirm.textContent = "Unlock";
    confirm.addEventListener("click", () => {
      handlers.onOverride(device, input.value.trim());
    });
    wrap.append(input, confirm);
    return wrap;
  }

  const checkbox = document.createElement("input");
  checkbox.type = "checkbox";
  checkbox.className = "monitor-toggle";
  checkbox.checked = device.monitored;
  checkbox.addEventListener("change", () => {
    handlers.onToggleMonitor(device, checkbox.checked);
  });
  return checkbox;
}

export function renderDeviceList(
  container: HTMLElement,
  devices: Device[],
  selectedId: string | null,
  overrideDrafts: Map<string, string>,
  handlers: DeviceListHandlers,
): void {
  container.textContent = "";
  if (!devices.length) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No devices reported yet. Start a capture client and they will appear here.";
    container.append(empty);
    return;
  }

  const table = document.createElement("table");
  table.className = "device-table";
  const head = table.createTHead().insertRow();
  for (const title of ["Device", "Category", "Vendor", "Class", "Traffic", "Monitor"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.append(th);
  }

  const body = table.createTBody();
  for (const device of devices) {
    const row = body.insertRow();
    row.className = "device-row";
    row.dataset.deviceId = device.device_id;
    if (device.device_id === selectedId) {
      row.classList.add("selected");
    }

    const nameCell = cell(row, "name-cell");
    const link = document.createElement("button");
    link.type = "button";
    link.className = "device-link";
    link.textContent = displayName(device);
    link.addEventListener("click", () => handlers.onSelect(device));
    const id = document.createElement("code");
    id.className = "device-id";
    id.title = device.device_id;
    id.textContent = shortId(device.device_id);
    nameCell.append(link, id);

    cell(row).textContent = device.category || "";
    cell(row).textContent = device.vendor || device.oui;

    const badge = document.createElement("span");
    badge.className = `badge badge-${device.classification}`;
    badge.textContent = device.classification;
    cell(row).append(badge);

    cell(row, "traffic-cell").textContent =
      `${formatBytes(device.bytes_sent)} out, ${formatBytes(device.bytes_received)} in`;

    cell(row, "monitor-cell").append(
      monitorControl(device, overrideDrafts.get(device.device_id) ?? "", handlers),
    );

    const macDraft = row.querySelector<HTMLInputElement>("input.override-mac");
    macDraft?.addEventListener("input", () => {
      overrideDrafts.set(device.device_id, macDraft.value);
    });
  }

  container.append(table);
}
