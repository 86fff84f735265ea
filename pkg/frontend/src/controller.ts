// Widget controllers. Each widget keeps at most one request in flight;
// a value moved while waiting is parked and only the latest one is sent
// once the acknowledgement lands. Failures revert to the last
// acknowledged value.

import type { AckDoc, ControlApi, FeedDoc, SummaryDoc, TelemetryApi } from "./api.js";
import { clampDuty } from "./model.js";

export interface SliderEvents {
  onSettle(pin: number, value: number): void;
  onError(pin: number, message: string): void;
}

export class SliderController {
  private acknowledged: number;
  private pending: number | null = null;
  private inflight = false;

  constructor(
    private readonly api: ControlApi,
    readonly pin: number,
    initial: number,
    private readonly events: SliderEvents,
  ) {
    this.acknowledged = clampDuty(initial);
  }

  get value(): number {
    return this.acknowledged;
  }

  get busy(): boolean {
    return this.inflight;
  }

  move(raw: number): void {
    const duty = clampDuty(raw);
    if (this.inflight) {
      this.pending = duty;
      return;
    }
    if (duty === this.acknowledged) {
      this.events.onSettle(this.pin, this.acknowledged);
      return;
    }
    void this.send(duty);
  }

  private async send(duty: number): Promise<void> {
    this.inflight = true;
    try {
      const ack: AckDoc = await this.api.analogWrite(this.pin, duty);
      this.acknowledged = ack.value;
      this.events.onSettle(this.pin, ack.value);
    } catch (err) {
      this.pending = null;
      this.events.onError(this.pin, String(err));
      this.events.onSettle(this.pin, this.acknowledged);
    } finally {
      this.inflight = false;
    }
    if (this.pending !== null) {
      const next = this.pending;
      this.pending = null;
      if (next !== this.acknowledged) {
        void this.send(next);
      }
    }
  }
}

export class ToggleController {
  private acknowledged: number;
  private inflight = false;

  constructor(
    private readonly api: ControlApi,
    readonly pin: number,
    initial: number,
    private readonly events: SliderEvents,
  ) {
    this.acknowledged = initial === 1 ? 1 : 0;
  }

  get value(): number {
    return this.acknowledged;
  }

  toggle(): void {
    if (this.inflight) {
      return;
    }
    const target = this.acknowledged === 1 ? 0 : 1;
    this.inflight = true;
    this.api
      .digitalWrite(this.pin, target)
      .then((ack) => {
        this.acknowledged = ack.value;
        this.events.onSettle(this.pin, ack.value);
      })
      .catch((err) => {
        this.events.onError(this.pin, String(err));
        this.events.onSettle(this.pin, this.acknowledged);
      })
      .finally(() => {
        this.inflight = false;
      });
  }
}

export interface FeedSnapshot {
  feed: FeedDoc;
  temperature: SummaryDoc;
  humidity: SummaryDoc;
}

export interface PollerEvents {
  onData(snapshot: FeedSnapshot): void;
  onError(message: string): void;
}

export class FeedPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inflight = false;

  constructor(
    private readonly api: TelemetryApi,
    private readonly channelId: number,
    private readonly intervalMs: number,
    private readonly events: PollerEvents,
  ) {}

  start(): void {
    if (this.timer !== null) {
      return;
    }
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  // Polls never overlap: a tick that finds one in flight just skips.
  async tick(): Promise<void> {
    if (this.inflight) {
      return;
    }
    this.inflight = true;
    try {
      const [feed, temperature, humidity] = await Promise.all([
        this.api.readFeed(this.channelId),
        this.api.readSummary(this.channelId, "field1"),
        this.api.readSummary(this.channelId, "field2"),
      ]);
      this.events.onData({ feed, temperature, humidity });
    } catch (err) {
      this.events.onError(String(err));
    } finally {
      this.inflight = false;
    }
  }
}
