/** Typed client for the placement service. */

import { parsePfm, PfmImage } from "./pfm.js";
import type { Quat, Vec3 } from "./quat.js";

export interface PoseDict {
  q: number[];
  T: number[];
}

export interface Status {
  frames: number;
  width: number;
  height: number;
  pose: PoseDict;
  scale: number;
  anchors: [number, number][];
  min_anchors: number;
  locked: boolean;
  solved: boolean;
  rms_px: number[] | null;
  converged: boolean[] | null;
  mean_rms_px: number | null;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let message = `HTTP ${res.status}`;
  try {
    const body = (await res.json()) as { error?: string };
    if (body && typeof body.error === "string") message = body.error;
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(res.status, message);
}

export class PlacementApi {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.url(path));
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  private async postJson<T>(path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  private async getBytes(path: string): Promise<ArrayBuffer> {
    const res = await this.fetchImpl(this.url(path));
    await raiseForStatus(res);
    return res.arrayBuffer();
  }

  status(): Promise<Status> {
    return this.getJson<Status>("/status");
  }

  /** Input frame t as encoded PNG bytes. */
  framePng(t: number): Promise<ArrayBuffer> {
    return this.getBytes(`/frame/${t}`);
  }

  /** Frame t with the object composited, encoded PNG bytes. */
  previewPng(t: number): Promise<ArrayBuffer> {
    return this.getBytes(`/preview/${t}`);
  }

  async depth(t: number): Promise<PfmImage> {
    return parsePfm(await this.getBytes(`/depth/${t}`));
  }

  setPose(q: Quat | number[], T: Vec3 | number[], scale?: number): Promise<Status> {
    const body: { q: number[]; T: number[]; scale?: number } = {
      q: Array.from(q),
      T: Array.from(T),
    };
    if (scale !== undefined) body.scale = scale;
    return this.postJson<Status>("/pose", body);
  }

  setAnchors(points: [number, number][]): Promise<Status> {
    return this.postJson<Status>("/anchors", { points });
  }

  solve(): Promise<Status> {
    return this.postJson<Status>("/solve");
  }

  lock(): Promise<Status> {
    return this.postJson<Status>("/lock");
  }
}
