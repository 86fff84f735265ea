// DOM construction and updates. Everything here takes explicit elements
// or ids so tests can drive the page without the bootstrap in main.ts.

import type { FeedSnapshot } from "./controller.js";
import type { DeviceViewModel } from "./model.js";
import {
  cardValues,
  dailyMeans,
  renderDailyBars,
  renderSeriesChart,
  seriesFromFeed,
} from "./charts.js";

export interface WidgetHooks {
  onSliderMove(pin: number, value: number): void;
  onToggle(pin: number): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function buildControls(
  root: HTMLElement,
  model: DeviceViewModel,
  hooks: WidgetHooks,
): void {
  root.textContent = "";

  const toggles = el("div", "toggle-grid");
  for (const pin of Object.keys(model.digital).map(Number).sort((a, b) => a - b)) {
    const button = el("button", "toggle", `D${pin}`);
    button.id = `toggle-${pin}`;
    button.dataset.pin = String(pin);
    button.setAttribute("aria-pressed", model.digital[pin] === 1 ? "true" : "false");
    button.addEventListener("click", () => hooks.onToggle(pin));
    toggles.appendChild(button);
  }
  root.appendChild(toggles);

  const sliders = el("div", "slider-list");
  for (const pin of Object.keys(model.duty).map(Number).sort((a, b) => a - b)) {
    const row = el("div", "slider-row");
    row.appendChild(el("label", "slider-label", `LED ${pin}`));

    const led = el("span", "led off");
    led.id = `led-${pin}`;
    row.appendChild(led);

    const input = el("input");
    input.type = "range";
    input.min = "0";
    input.max = "255";
    input.step = "1";
    input.id = `slider-${pin}`;
    input.value = String(model.duty[pin]);
    input.addEventListener("input", () => hooks.onSliderMove(pin, Number(input.value)));
    row.appendChild(input);

    const readout = el("span", "slider-value", String(model.duty[pin]));
    readout.id = `slider-value-${pin}`;
    row.appendChild(readout);

    sliders.appendChild(row);
  }
  root.appendChild(sliders);
}

// The slider, its readout, and the LED dot settle together on the
// acknowledged value; duty 0 renders the LED off.
export function settleSlider(pin: number, value: number): void {
  const input = document.getElementById(`slider-${pin}`) as HTMLInputElement | null;
  if (input) {
    input.value = String(value);
  }
  const readout = document.getElementById(`slider-value-${pin}`);
  if (readout) {
    readout.textContent = String(value);
  }
  const led = document.getElementById(`led-${pin}`);
  if (led) {
    led.classList.toggle("off", value === 0);
    (led as HTMLElement).style.opacity = value === 0 ? "" : String(0.25 + (value / 255) * 0.75);
  }
}

export function settleToggle(pin: number, level: number): void {
  const button = document.getElementById(`toggle-${pin}`);
  if (button) {
    button.setAttribute("aria-pressed", level === 1 ? "true" : "false");
  }
}

export function renderHeader(root: HTMLElement, model: DeviceViewModel): void {
  root.textContent = "";
  root.appendChild(el("span", "device-name", model.deviceName || model.deviceId));
  const badge = el(
    "span",
    model.connected ? "badge badge-ok" : "badge badge-down",
    model.connected ? "connected" : "offline",
  );
  badge.id = "connection-badge";
  root.appendChild(badge);
}

export function renderCards(root: HTMLElement, snapshot: FeedSnapshot): void {
  const values = cardValues(snapshot.temperature, snapshot.humidity);
  const cards: Array<[string, string, number | null, string]> = [
    ["card-avg-temp", "avg temperature", values.avgTemperature, "°C"],
    ["card-avg-hum", "avg humidity", values.avgHumidity, "%"],
    ["card-min-temp", "min temperature", values.minTemperature, "°C"],
    ["card-max-temp", "max temperature", values.maxTemperature, "°C"],
  ];
  root.textContent = "";
  for (const [id, label, value, unit] of cards) {
    const card = el("div", "card");
    card.id = id;
    const valueEl = el("div", "card-value", value === null ? "-" : String(value));
    valueEl.className = "card-value";
    card.appendChild(valueEl);
    card.appendChild(el("div", "card-unit", unit));
    card.appendChild(el("div", "card-label", label));
    root.appendChild(card);
  }
}

export function renderCharts(root: HTMLElement, snapshot: FeedSnapshot): void {
  root.textContent = "";
  const entries = snapshot.feed.feeds;
  if (entries.length === 0) {
    const empty = el("div", "empty-state", "no telemetry yet");
    empty.id = "feed-empty";
    root.appendChild(empty);
    return;
  }
  const temperature = seriesFromFeed(entries, "field1");
  const humidity = seriesFromFeed(entries, "field2");
  root.appendChild(renderSeriesChart(temperature, humidity));
  root.appendChild(renderDailyBars(dailyMeans(entries, "field1")));
}

export function setFreshness(
  root: HTMLElement,
  stale: boolean,
  lastUpdated: Date | null,
): void {
  root.textContent = "";
  if (stale) {
    const badge = el("span", "badge badge-stale", "stale");
    badge.id = "stale-badge";
    root.appendChild(badge);
  }
  if (lastUpdated !== null) {
    root.appendChild(
      el("span", "last-updated", `updated ${lastUpdated.toISOString().slice(11, 19)}Z`),
    );
  }
}

export function showToast(root: HTMLElement, message: string): void {
  const toast = el("div", "toast", message);
  root.appendChild(toast);
  setTimeout(() => toast.remove(), 4000);
}
