// Single-page shell. State lives on the server; this class only caches the
// latest responses, re-renders, and polls on the same five second cadence
// the capture clients upload on. Refreshing the page rebuilds everything
// from the API alone.

import { ApiError, CollectorClient } from "./api.js";
import type { Device, HintScope, Vocabulary } from "./api.js";
import { renderBandwidthChart } from "./chart.js";
import { renderDetail, renderEndpointTable } from "./detail.js";
import { renderDeviceList } from "./devices.js";
import { displayName } from "./format.js";

export const POLL_MS = 5000;

export class App {
  private devices: Device[] = [];
  private vocab: Vocabulary | null = null;
  private selectedId: string | null = null;
  private renderedDetailFor: string | null = null;
  private windowSeconds = 5;
  private offline = false;
  private status = "";
  private statusIsError = false;
  private overrideDrafts = new Map<string, string>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  private readonly banner: HTMLElement;
  private readonly statusLine: HTMLElement;
  private readonly view: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly client = new CollectorClient(),
    private readonly pollMs = POLL_MS,
  ) {
    root.textContent = "";
    const heading = document.createElement("h1");
    heading.textContent = "lanlens";
    this.banner = document.createElement("div");
    this.banner.className = "offline-banner";
    this.banner.textContent = "Collector unreachable. Retrying.";
    this.banner.hidden = true;
    this.statusLine = document.createElement("p");
    this.statusLine.className = "status-message";
    this.statusLine.hidden = true;
    this.view = document.createElement("div");
    this.view.className = "view";
    root.append(heading, this.banner, this.statusLine, this.view);
  }

  async start(): Promise<void> {
    this.stop();
    try {
      this.vocab = await this.client.vocabulary();
    } catch (error) {
      this.fail(error);
    }
    await this.poll();
    this.timer = setInterval(() => {
      void this.poll();
    }, this.pollMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async poll(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      this.devices = await this.client.devices();
      if (this.vocab === null) {
        this.vocab = await this.client.vocabulary();
      }
      this.offline = false;
      if (this.selectedId && !this.selected()) {
        this.selectedId = null;
      }
      this.render();
      if (this.selectedId) {
        await this.refreshDetailPanels();
      }
    } catch (error) {
      this.fail(error);
      this.render();
    } finally {
      this.inFlight = false;
    }
  }

  private selected(): Device | null {
    return this.devices.find((d) => d.device_id === this.selectedId) ?? null;
  }

  private fail(error: unknown): void {
    if (error instanceof ApiError) {
      this.setStatus(error.message, true);
    } else {
      this.offline = true;
    }
  }

  private setStatus(text: string, isError = false): void {
    this.status = text;
    this.statusIsError = isError;
    this.statusLine.hidden = !text;
    this.statusLine.textContent = text;
    this.statusLine.classList.toggle("error", isError);
  }

  // force bypasses the typing guard and rebuilds the current view outright;
  // polls leave it false so they never steal focus or half-typed input
  private render(force = false): void {
    this.banner.hidden = !this.offline;
    this.statusLine.hidden = !this.status;
    this.statusLine.textContent = this.status;
    this.statusLine.classList.toggle("error", this.statusIsError);

    const device = this.selected();
    if (device && this.vocab) {
      if (force || this.renderedDetailFor !== device.device_id) {
        this.renderDetailScaffold(device, this.vocab);
        this.renderedDetailFor = device.device_id;
      }
      return;
    }
    this.renderedDetailFor = null;
    this.renderList(force);
  }

  private renderList(force: boolean): void {
    if (!force) {
      const active = document.activeElement;
      if (active instanceof HTMLInputElement && this.view.contains(active)) {
        return;
      }
    }
    renderDeviceList(this.view, this.devices, this.selectedId, this.overrideDrafts, {
      onSelect: (d) => void this.select(d),
      onToggleMonitor: (d, monitored) => void this.toggleMonitor(d, monitored),
      onOverride: (d, mac) => void this.override(d, mac),
    });
  }

  private renderDetailScaffold(device: Device, vocab: Vocabulary): void {
    renderDetail(this.view, device, vocab, this.windowSeconds, {
      onClose: () => {
        this.selectedId = null;
        this.setStatus("");
        this.render(true);
      },
      onSubmitLabel: (d, label) => void this.submitLabel(d, label),
      onDeleteDevice: (d) => void this.deleteDevice(d),
      onDeleteHints: (d, scope) => void this.deleteHints(d, scope),
      onWindowChange: (seconds) => {
        this.windowSeconds = seconds;
        void this.refreshChart();
      },
    });
  }

  private async select(device: Device): Promise<void> {
    this.selectedId = device.device_id;
    this.setStatus("");
    this.render();
    await this.refreshDetailPanels();
  }

  private async refreshDetailPanels(): Promise<void> {
    await Promise.all([this.refreshEndpoints(), this.refreshChart()]);
  }

  private async refreshEndpoints(): Promise<void> {
    const id = this.selectedId;
    const mount = this.view.querySelector<HTMLElement>(".endpoint-mount");
    if (!id || !mount) {
      return;
    }
    try {
      const data = await this.client.endpoints(id);
      renderEndpointTable(mount, data.endpoints);
    } catch (error) {
      this.fail(error);
      this.banner.hidden = !this.offline;
    }
  }

  private async refreshChart(): Promise<void> {
    const id = this.selectedId;
    const mount = this.view.querySelector<HTMLElement>(".chart-mount");
    if (!id || !mount) {
      return;
    }
    try {
      const data = await this.client.bandwidth(id, this.windowSeconds);
      renderBandwidthChart(mount, data);
    } catch (error) {
      this.fail(error);
      this.banner.hidden = !this.offline;
    }
  }

  private async toggleMonitor(device: Device, monitored: boolean): Promise<void> {
    const previous = device.monitored;
    device.monitored = monitored;
    try {
      const ack = await this.client.setMonitor(device.device_id, monitored);
      device.monitored = ack.monitored;
      device.overridden = ack.overridden;
      this.setStatus(
        ack.monitored
          ? `Monitoring ${displayName(device)}.`
          : `Stopped monitoring ${displayName(device)}.`,
      );
    } catch (error) {
      device.monitored = previous;
      this.fail(error);
      if (!(error instanceof ApiError)) {
        this.setStatus("Could not reach the collector; monitor state unchanged.", true);
      }
    }
    this.render(true);
  }

  private async override(device: Device, mac: string): Promise<void> {
    if (!mac) {
      this.setStatus("Type the device's MAC address to confirm you own it.", true);
      this.render();
      return;
    }
    try {
      const ack = await this.client.setMonitor(device.device_id, true, mac);
      device.monitored = ack.monitored;
      device.overridden = ack.overridden;
      this.overrideDrafts.delete(device.device_id);
      this.setStatus(`Monitoring ${displayName(device)}.`);
    } catch (error) {
      this.fail(error);
    }
    this.render(true);
  }

  private async submitLabel(
    device: Device,
    label: { name: string; category: string; vendor: string },
  ): Promise<void> {
    try {
      const result = await this.client.submitLabel(device.device_id, label);
      device.name = label.name;
      device.category = result.category;
      device.vendor = result.vendor;
      const parts = [`Saved: category "${result.category}", vendor "${result.vendor}".`];
      if (result.outcomes.length) {
        const validated = result.outcomes.filter((o) => o.outcome === "validated").length;
        parts.push(`Validation: ${validated} of ${result.outcomes.length} checks agree.`);
      }
      this.setStatus(parts.join(" "));
      this.render(true);
      await this.refreshDetailPanels();
    } catch (error) {
      this.fail(error);
      this.render();
    }
  }

  private async deleteDevice(device: Device): Promise<void> {
    try {
      const result = await this.client.deleteDevice(device.device_id);
      const rows = Object.values(result.deleted).reduce((a, b) => a + b, 0);
      this.selectedId = null;
      this.setStatus(`Deleted ${displayName(device)}: ${rows} stored rows removed.`);
      this.devices = await this.client.devices();
    } catch (error) {
      this.fail(error);
    }
    this.render(true);
  }

  private async deleteHints(device: Device, scope: HintScope): Promise<void> {
    try {
      const result = await this.client.deleteHints(device.device_id, scope);
      this.setStatus(`Removed ${result.deleted_hints} ${scope} hints.`);
      this.devices = await this.client.devices();
    } catch (error) {
      this.fail(error);
    }
    this.render(true);
  }
}
