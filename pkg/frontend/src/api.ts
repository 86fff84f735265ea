// Typed clients for the two HTTP contracts the dashboard is allowed to
// speak: the GPIO control plane and the telemetry read endpoints. Every
// request below is a GET; nothing else in the app touches the network.

export interface StatusDoc {
  id: string;
  name: string;
  connected: boolean;
  digital: Record<string, number>;
  pwm: Record<string, number>;
  sensor?: { temperature: number; humidity: number };
}

export interface AckDoc {
  id: string;
  name: string;
  connected: boolean;
  value: number;
}

export interface SensorDoc {
  id: string;
  name: string;
  connected: boolean;
  temperature: number;
  humidity: number;
}

export interface FeedEntry {
  created_at: string;
  entry_id: number;
  field1?: number;
  field2?: number;
  [field: string]: string | number | undefined;
}

export interface FeedDoc {
  channel: { id: number; created_at: string; [label: string]: string | number };
  feeds: FeedEntry[];
}

export interface SummaryDoc {
  channel: number;
  field: string;
  mean_rounded: number | null;
  min: number | null;
  max: number | null;
  count: number;
  window: { start: string; end: string } | null;
}

export type FetchLike = (url: string) => Promise<Response>;

const defaultFetch: FetchLike = (url) => fetch(url);

async function getJson<T>(fetchFn: FetchLike, url: string): Promise<T> {
  const resp = await fetchFn(url);
  if (!resp.ok) {
    throw new Error(`GET ${url} failed: ${resp.status}`);
  }
  return (await resp.json()) as T;
}

function checkPin(pin: number): void {
  if (!Number.isInteger(pin) || pin < 0) {
    throw new RangeError(`bad pin ${pin}`);
  }
}

export class ControlApi {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = defaultFetch,
  ) {}

  status(): Promise<StatusDoc> {
    return getJson(this.fetchFn, `${this.base}/`);
  }

  sensor(): Promise<SensorDoc> {
    return getJson(this.fetchFn, `${this.base}/sensor`);
  }

  digitalWrite(pin: number, level: number): Promise<AckDoc> {
    checkPin(pin);
    if (level !== 0 && level !== 1) {
      throw new RangeError(`digital level must be 0 or 1, got ${level}`);
    }
    return getJson(this.fetchFn, `${this.base}/digital/${pin}/${level}`);
  }

  analogWrite(pin: number, duty: number): Promise<AckDoc> {
    checkPin(pin);
    // Last line of defense: no UI path may emit an out-of-range duty.
    if (!Number.isInteger(duty) || duty < 0 || duty > 255) {
      throw new RangeError(`duty must be 0..255, got ${duty}`);
    }
    return getJson(this.fetchFn, `${this.base}/analog/${pin}/${duty}`);
  }
}

export class TelemetryApi {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = defaultFetch,
  ) {}

  readFeed(channelId: number, results?: number): Promise<FeedDoc> {
    const query = results !== undefined ? `?results=${results}` : "";
    return getJson(this.fetchFn, `${this.base}/channels/${channelId}/feeds${query}`);
  }

  readSummary(channelId: number, field: string): Promise<SummaryDoc> {
    if (!/^field[1-8]$/.test(field)) {
      throw new RangeError(`bad field name ${field}`);
    }
    return getJson(
      this.fetchFn,
      `${this.base}/channels/${channelId}/summary?field=${field}`,
    );
  }
}
