// SVG chart builders. Pure element factories with no fetch and no
// globals, so tests can render straight from feed documents.

import type { FeedEntry, SummaryDoc } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface SeriesPoint {
  at: Date;
  value: number;
}

export interface DailyMean {
  date: string; // YYYY-MM-DD, UTC
  mean: number;
  count: number;
}

export function seriesFromFeed(entries: FeedEntry[], field: string): SeriesPoint[] {
  const points: SeriesPoint[] = [];
  for (const entry of entries) {
    const value = entry[field];
    if (typeof value === "number") {
      points.push({ at: new Date(entry.created_at), value });
    }
  }
  return points;
}

function roundHalfUp(sum: number, count: number): number {
  return Math.floor(sum / count + 0.5);
}

export function dailyMeans(entries: FeedEntry[], field: string): DailyMean[] {
  const buckets = new Map<string, { sum: number; count: number }>();
  for (const point of seriesFromFeed(entries, field)) {
    const day = point.at.toISOString().slice(0, 10);
    const bucket = buckets.get(day) ?? { sum: 0, count: 0 };
    bucket.sum += point.value;
    bucket.count += 1;
    buckets.set(day, bucket);
  }
  return [...buckets.entries()]
    .sort(([a], [b]) => (a < b ? -1 : 1))
    .map(([date, { sum, count }]) => ({
      date,
      mean: roundHalfUp(sum, count),
      count,
    }));
}

export interface CardValues {
  avgTemperature: number | null;
  avgHumidity: number | null;
  minTemperature: number | null;
  maxTemperature: number | null;
}

export function cardValues(
  temperature: SummaryDoc,
  humidity: SummaryDoc,
): CardValues {
  return {
    avgTemperature: temperature.mean_rounded,
    avgHumidity: humidity.mean_rounded,
    minTemperature: temperature.min,
    maxTemperature: temperature.max,
  };
}

function svg(tag: string, attrs: Record<string, string>): SVGElement {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [name, value] of Object.entries(attrs)) {
    el.setAttribute(name, value);
  }
  return el;
}

interface Scale {
  x(at: Date): number;
  y(value: number): number;
}

function makeScale(
  points: SeriesPoint[],
  width: number,
  height: number,
  pad: number,
): Scale {
  const times = points.map((p) => p.at.getTime());
  const values = points.map((p) => p.value);
  const tMin = Math.min(...times);
  const tMax = Math.max(...times);
  const vMin = Math.min(...values);
  const vMax = Math.max(...values);
  const tSpan = Math.max(1, tMax - tMin);
  const vSpan = Math.max(1, vMax - vMin);
  return {
    x: (at) => pad + ((at.getTime() - tMin) / tSpan) * (width - 2 * pad),
    y: (value) => height - pad - ((value - vMin) / vSpan) * (height - 2 * pad),
  };
}

// Two-series line chart; one marker circle per data point so the point
// count is visible (and countable) in the rendered document.
export function renderSeriesChart(
  temperature: SeriesPoint[],
  humidity: SeriesPoint[],
  width = 640,
  height = 240,
): SVGElement {
  const root = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    class: "chart chart-series",
    role: "img",
  });
  const all = [...temperature, ...humidity];
  if (all.length === 0) {
    return root;
  }
  const pad = 12;
  const series: Array<[SeriesPoint[], string]> = [
    [temperature, "temperature"],
    [humidity, "humidity"],
  ];
  for (const [points, name] of series) {
    if (points.length === 0) {
      continue;
    }
    const scale = makeScale(points, width, height, pad);
    const coords = points.map((p) => `${scale.x(p.at).toFixed(1)},${scale.y(p.value).toFixed(1)}`);
    root.appendChild(
      svg("polyline", {
        points: coords.join(" "),
        class: `series series-${name}`,
        fill: "none",
      }),
    );
    for (const [i, point] of points.entries()) {
      root.appendChild(
        svg("circle", {
          cx: scale.x(point.at).toFixed(1),
          cy: scale.y(point.value).toFixed(1),
          r: "2",
          class: `point point-${name}`,
          "data-value": String(point.value),
          "data-index": String(i),
        }),
      );
    }
  }
  return root;
}

export function renderDailyBars(
  days: DailyMean[],
  width = 640,
  height = 160,
): SVGElement {
  const root = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    class: "chart chart-daily",
    role: "img",
  });
  if (days.length === 0) {
    return root;
  }
  const pad = 12;
  const peak = Math.max(...days.map((d) => d.mean), 1);
  const slot = (width - 2 * pad) / days.length;
  for (const [i, day] of days.entries()) {
    const barHeight = (day.mean / peak) * (height - 2 * pad);
    root.appendChild(
      svg("rect", {
        x: (pad + i * slot + slot * 0.15).toFixed(1),
        y: (height - pad - barHeight).toFixed(1),
        width: (slot * 0.7).toFixed(1),
        height: barHeight.toFixed(1),
        class: "bar",
        "data-date": day.date,
        "data-mean": String(day.mean),
      }),
    );
  }
  return root;
}
