// Bootstrap: read config.json, take one status snapshot, wire the
// widgets, then poll the feed on the configured cadence.

import { ControlApi, TelemetryApi } from "./api.js";
import { FeedPoller, SliderController, ToggleController } from "./controller.js";
import type { FeedSnapshot } from "./controller.js";
import { fromStatus } from "./model.js";
import {
  buildControls,
  renderCards,
  renderCharts,
  renderHeader,
  setFreshness,
  settleSlider,
  settleToggle,
  showToast,
} from "./view.js";

interface Config {
  gatewayUrl: string;
  telemetryUrl: string;
  channelId: number;
  pollIntervalS: number;
}

function section(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

async function boot(): Promise<void> {
  const resp = await fetch("./config.json");
  if (!resp.ok) {
    throw new Error(`config.json: ${resp.status}`);
  }
  const config = (await resp.json()) as Config;

  const control = new ControlApi(config.gatewayUrl);
  const telemetry = new TelemetryApi(config.telemetryUrl);

  const header = section("header-bar");
  const controls = section("controls");
  const cards = section("cards");
  const charts = section("charts");
  const freshness = section("freshness");
  const toasts = section("toasts");

  const status = await control.status();
  let model = fromStatus(status, new Date());
  renderHeader(header, model);

  const sliders = new Map<number, SliderController>();
  const togglers = new Map<number, ToggleController>();
  const widgetEvents = {
    onSettle(pin: number, value: number): void {
      settleSlider(pin, value);
    },
    onError(pin: number, message: string): void {
      showToast(toasts, `pin ${pin}: ${message}`);
    },
  };
  const toggleEvents = {
    onSettle(pin: number, value: number): void {
      settleToggle(pin, value);
    },
    onError(pin: number, message: string): void {
      showToast(toasts, `pin ${pin}: ${message}`);
    },
  };

  buildControls(controls, model, {
    onSliderMove(pin, value) {
      sliders.get(pin)?.move(value);
    },
    onToggle(pin) {
      togglers.get(pin)?.toggle();
    },
  });
  for (const [pin, duty] of Object.entries(model.duty)) {
    sliders.set(Number(pin), new SliderController(control, Number(pin), duty, widgetEvents));
  }
  for (const [pin, level] of Object.entries(model.digital)) {
    togglers.set(Number(pin), new ToggleController(control, Number(pin), level, toggleEvents));
  }

  const poller = new FeedPoller(telemetry, config.channelId, config.pollIntervalS * 1000, {
    onData(snapshot: FeedSnapshot): void {
      model = { ...model, lastUpdated: new Date(), stale: false };
      renderCards(cards, snapshot);
      renderCharts(charts, snapshot);
      setFreshness(freshness, false, model.lastUpdated);
    },
    onError(message: string): void {
      model = { ...model, stale: true };
      setFreshness(freshness, true, model.lastUpdated);
      showToast(toasts, `telemetry: ${message}`);
    },
  });
  poller.start();
  window.addEventListener("beforeunload", () => poller.stop());
}

boot().catch((err) => {
  const toasts = document.getElementById("toasts");
  if (toasts) {
    showToast(toasts, String(err));
  }
  console.error(err);
});
