import type { Device, EndpointRow, HintScope, Vocabulary } from "./api.js";
import { displayName, formatBytes } from "./format.js";

export interface DetailHandlers {
  onClose(): void;
  onSubmitLabel(device: Device, label: { name: string; category: string; vendor: string }): void;
  onDeleteDevice(device: Device): void;
  onDeleteHints(device: Device, scope: HintScope): void;
  onWindowChange(seconds: number): void;
}

const WINDOW_CHOICES = [5, 30, 60, 300];

function datalist(id: string, options: string[]): HTMLDataListElement {
  const list = document.createElement("datalist");
  list.id = id;
  for (const value of options) {
    const option = document.createElement("option");
    option.value = value;
    list.append(option);
  }
  return list;
}

function labeledInput(labelText: string, id: string, listId?: string): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "field";
  const label = document.createElement("label");
  label.htmlFor = id;
  label.textContent = labelText;
  const input = document.createElement("input");
  input.type = "text";
  input.id = id;
  input.autocomplete = "off";
  if (listId) {
    input.setAttribute("list", listId);
  }
  wrap.append(label, input);
  return wrap;
}

export function renderDetail(
  container: HTMLElement,
  device: Device,
  vocab: Vocabulary,
  windowSeconds: number,
  handlers: DetailHandlers,
): void {
  container.textContent = "";

  const header = document.createElement("div");
  header.className = "detail-header";
  const title = document.createElement("h2");
  title.textContent = displayName(device);
  const badge = document.createElement("span");
  badge.className = `badge badge-${device.classification}`;
  badge.textContent = device.classification;
  const id = document.createElement("code");
  id.className = "device-id";
  id.textContent = device.device_id;
  const close = document.createElement("button");
  close.type = "button";
  close.className = "detail-close";
  close.textContent = "Back to device list";
  close.addEventListener("click", handlers.onClose);
  header.append(title, badge, id, close);
  container.append(header);

  // label editor: text boxes with dropdown autocomplete, free text allowed
  const form = document.createElement("form");
  form.className = "label-form";
  form.append(
    labeledInput("Name", "label-name"),
    labeledInput("Category", "label-category", "category-options"),
    labeledInput("Vendor", "label-vendor", "vendor-options"),
    datalist("category-options", vocab.categories),
    datalist("vendor-options", vocab.vendors),
  );
  const submit = document.createElement("button");
  submit.type = "submit";
  submit.className = "label-submit";
  submit.textContent = "Save label";
  form.append(submit);
  const message = document.createElement("p");
  message.className = "form-message";
  form.append(message);

  const nameInput = form.querySelector<HTMLInputElement>("#label-name")!;
  const categoryInput = form.querySelector<HTMLInputElement>("#label-category")!;
  const vendorInput = form.querySelector<HTMLInputElement>("#label-vendor")!;
  nameInput.value = device.name;
  categoryInput.value = device.category;
  vendorInput.value = device.vendor;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const label = {
      name: nameInput.value.trim(),
      category: categoryInput.value.trim(),
      vendor: vendorInput.value.trim(),
    };
    if (!label.name && !label.category && !label.vendor) {
      message.textContent = "Enter a name, category, or vendor first.";
      message.classList.add("error");
      return;
    }
    handlers.onSubmitLabel(device, label);
  });
  container.append(form);

  const endpoints = document.createElement("section");
  endpoints.className = "endpoint-section";
  const endpointsTitle = document.createElement("h3");
  endpointsTitle.textContent = "Endpoints";
  const endpointMount = document.createElement("div");
  endpointMount.className = "endpoint-mount";
  endpoints.append(endpointsTitle, endpointMount);
  container.append(endpoints);

  const chart = document.createElement("section");
  chart.className = "chart-section";
  const chartTitle = document.createElement("h3");
  chartTitle.textContent = "Bandwidth per endpoint";
  const windowSelect = document.createElement("select");
  windowSelect.className = "window-select";
  for (const seconds of WINDOW_CHOICES) {
    const option = document.createElement("option");
    option.value = String(seconds);
    option.textContent = seconds < 60 ? `${seconds} s buckets` : `${seconds / 60} min buckets`;
    option.selected = seconds === windowSeconds;
    windowSelect.append(option);
  }
  windowSelect.addEventListener("change", () => {
    handlers.onWindowChange(Number(windowSelect.value));
  });
  const chartMount = document.createElement("div");
  chartMount.className = "chart-mount";
  chart.append(chartTitle, windowSelect, chartMount);
  container.append(chart);

  const danger = document.createElement("section");
  danger.className = "danger-section";
  const dangerTitle = document.createElement("h3");
  dangerTitle.textContent = "Remove data";
  const dhcp = document.createElement("button");
  dhcp.type = "button";
  dhcp.className = "delete-dhcp";
  dhcp.textContent = "Forget DHCP hostname";
  dhcp.addEventListener("click", () => handlers.onDeleteHints(device, "dhcp"));
  const ssdp = document.createElement("button");
  ssdp.type = "button";
  ssdp.className = "delete-ssdp";
  ssdp.textContent = "Forget SSDP/UPnP hints";
  ssdp.addEventListener("click", () => handlers.onDeleteHints(device, "ssdp"));
  const wipe = document.createElement("button");
  wipe.type = "button";
  wipe.className = "delete-device";
  wipe.textContent = "Delete all data for this device";
  wipe.addEventListener("click", () => handlers.onDeleteDevice(device));
  danger.append(dangerTitle, dhcp, ssdp, wipe);
  container.append(danger);
}

export function renderEndpointTable(container: HTMLElement, rows: EndpointRow[]): void {
  container.textContent = "";
  if (!rows.length) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No flows recorded for this device yet.";
    container.append(empty);
    return;
  }

  const table = document.createElement("table");
  table.className = "endpoint-table";
  const head = table.createTHead().insertRow();
  for (const title of ["Endpoint", "Company", "Country", "Service", "Sent", "Received"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.append(th);
  }

  const body = table.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    tr.className = "endpoint-row";
    if (row.is_tracker) {
      tr.classList.add("tracker");
    }

    const nameCell = tr.insertCell();
    nameCell.className = "endpoint-name";
    nameCell.append(row.endpoint);
    if (!row.confident) {
      const marker = document.createElement("span");
      marker.className = "uncertain-marker";
      marker.textContent = "?";
      marker.title = "Hostname guessed from shared observations, not confirmed by this device's own DNS or TLS traffic.";
      nameCell.append(" ", marker);
    }

    const companyCell = tr.insertCell();
    companyCell.textContent = row.company ?? "";
    if (row.is_tracker) {
      const badge = document.createElement("span");
      badge.className = "badge badge-tracker";
      badge.textContent = "tracker";
      companyCell.append(" ", badge);
    }

    tr.insertCell().textContent = row.country ?? "";
    tr.insertCell().textContent = row.service ?? "";
    tr.insertCell().textContent = formatBytes(row.bytes_sent);
    tr.insertCell().textContent = formatBytes(row.bytes_received);
  }

  container.append(table);
}
