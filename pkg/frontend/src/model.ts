// View model: what the page believes about the device. Only acknowledged
// server responses may move it; widgets never show optimistic writes.

import type { StatusDoc } from "./api.js";

export interface SensorValue {
  temperature: number;
  humidity: number;
}

export interface DeviceViewModel {
  deviceId: string;
  deviceName: string;
  connected: boolean;
  digital: Record<number, number>;
  duty: Record<number, number>;
  sensor: SensorValue | null;
  lastUpdated: Date | null;
  stale: boolean;
}

export function emptyModel(): DeviceViewModel {
  return {
    deviceId: "",
    deviceName: "",
    connected: false,
    digital: {},
    duty: {},
    sensor: null,
    lastUpdated: null,
    stale: false,
  };
}

export function clampDuty(value: number): number {
  if (!Number.isFinite(value)) {
    return 0;
  }
  return Math.min(255, Math.max(0, Math.round(value)));
}

export function fromStatus(doc: StatusDoc, now: Date): DeviceViewModel {
  const digital: Record<number, number> = {};
  for (const [pin, level] of Object.entries(doc.digital)) {
    digital[Number(pin)] = level;
  }
  const duty: Record<number, number> = {};
  for (const [pin, value] of Object.entries(doc.pwm)) {
    duty[Number(pin)] = value;
  }
  return {
    deviceId: doc.id,
    deviceName: doc.name,
    connected: doc.connected,
    digital,
    duty,
    sensor: doc.sensor ?? null,
    lastUpdated: now,
    stale: false,
  };
}

export function ackDuty(
  model: DeviceViewModel,
  pin: number,
  value: number,
  now: Date,
): DeviceViewModel {
  return {
    ...model,
    duty: { ...model.duty, [pin]: value },
    lastUpdated: now,
    stale: false,
  };
}

export function ackDigital(
  model: DeviceViewModel,
  pin: number,
  level: number,
  now: Date,
): DeviceViewModel {
  return {
    ...model,
    digital: { ...model.digital, [pin]: level },
    lastUpdated: now,
    stale: false,
  };
}
