// Shared test plumbing: a recording fetch fake and feed entries built
// from the replication fixture CSV.

import { readFileSync } from "node:fs";
import { resolve } from "node:path";

import type { FeedEntry, FetchLike } from "../src/api.js";

export interface FetchFake {
  fetchFn: FetchLike;
  urls: string[];
}

type Handler = (url: string) => unknown | Promise<unknown>;

export function jsonResponse(doc: unknown, status = 200): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => doc,
  } as unknown as Response;
}

// Records every URL, then asks the handler for the body. A handler that
// throws (or rejects) simulates a network / server failure.
export function recordingFetch(handler: Handler): FetchFake {
  const urls: string[] = [];
  const fetchFn: FetchLike = async (url) => {
    urls.push(url);
    return jsonResponse(await handler(url));
  };
  return { fetchFn, urls };
}

export function pathOf(url: string): string {
  return url.replace(/^https?:\/\/[^/]+/, "");
}

// vitest runs with frontend/ as the working directory.
const FIXTURE = resolve(process.cwd(), "..", "fixtures", "july2016.csv");

export function fixtureRows(): Array<{ ts: string; temp: number; hum: number }> {
  const lines = readFileSync(FIXTURE, "utf-8").trim().split("\n");
  return lines.slice(1).map((line) => {
    const [ts, temp, hum] = line.split(",");
    return { ts, temp: Number(temp), hum: Number(hum) };
  });
}

export function fixtureFeed(): FeedEntry[] {
  return fixtureRows().map((row, i) => ({
    created_at: row.ts,
    entry_id: i + 1,
    field1: row.temp,
    field2: row.hum,
  }));
}

export function flush(times = 3): Promise<void> {
  let chain = Promise.resolve();
  for (let i = 0; i < times; i++) {
    chain = chain.then(() => new Promise<void>((resolve) => setTimeout(resolve, 0)));
  }
  return chain;
}
