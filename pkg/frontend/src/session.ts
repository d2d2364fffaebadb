/** Placement session logic, kept separate from the DOM so it is testable.
 *
 * The session mirrors the server's placement state and pushes every edit
 * immediately; the server checkpoints to disk, so there is no local dirty
 * state to lose. Anchor posts always send the full list (the endpoint
 * replaces, it does not append).
 */

import type { Status } from "./api.js";
import { Quat, Vec3, quatFromAxisAngle, quatMultiply, quatNormalize } from "./quat.js";

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

/** The slice of PlacementApi the session needs; tests feed a fake. */
export interface PlacementClient {
  status(): Promise<Status>;
  setPose(q: number[], T: number[], scale?: number): Promise<Status>;
  setAnchors(points: [number, number][]): Promise<Status>;
  solve(): Promise<Status>;
  lock(): Promise<Status>;
}

export class NeedMoreAnchorsError extends Error {
  constructor(needed: number, have: number) {
    super(`need >= ${needed} anchors, have ${have}`);
    this.name = "NeedMoreAnchorsError";
  }
}

/** Pixel click + depth -> camera-space 3D point via the pinhole model. */
export function backprojectClick(u: number, v: number, depth: number, k: Intrinsics): Vec3 {
  if (!(depth > 0) || !Number.isFinite(depth)) {
    throw new Error(`cannot backproject through invalid depth ${depth}`);
  }
  return [((u - k.cx) / k.fx) * depth, ((v - k.cy) / k.fy) * depth, depth];
}

export class UiSession {
  private state: Status | null = null;

  constructor(private readonly client: PlacementClient) {}

  get status(): Status {
    if (this.state === null) throw new Error("session not started; call refresh() first");
    return this.state;
  }

  get pose(): { q: Quat; T: Vec3 } {
    const p = this.status.pose;
    return { q: [...p.q] as Quat, T: [...p.T] as Vec3 };
  }

  get anchors(): [number, number][] {
    return this.status.anchors.map((a) => [a[0], a[1]]);
  }

  get canSolve(): boolean {
    return this.status.anchors.length >= this.status.min_anchors;
  }

  async refresh(): Promise<Status> {
    this.state = await this.client.status();
    return this.state;
  }

  /** Set the absolute placement pose (and optionally scale). */
  async place(q: Quat | number[], T: Vec3 | number[], scale?: number): Promise<Status> {
    this.state = await this.client.setPose(Array.from(q), Array.from(T), scale);
    return this.state;
  }

  /** Rotate the current placement by angle around axis (object-side). */
  async rotate(axis: Vec3, radians: number): Promise<Status> {
    const dq = quatFromAxisAngle(axis, radians);
    const q = quatNormalize(quatMultiply(this.pose.q, dq));
    return this.place(q, this.pose.T);
  }

  async translate(delta: Vec3): Promise<Status> {
    const T = this.pose.T;
    return this.place(this.pose.q, [T[0] + delta[0], T[1] + delta[1], T[2] + delta[2]]);
  }

  async scaleBy(factor: number): Promise<Status> {
    if (!(factor > 0)) throw new Error(`scale factor must be > 0, got ${factor}`);
    return this.place(this.pose.q, this.pose.T, this.status.scale * factor);
  }

  async addAnchor(u: number, v: number): Promise<Status> {
    const next = this.anchors;
    next.push([u, v]);
    this.state = await this.client.setAnchors(next);
    return this.state;
  }

  async removeLastAnchor(): Promise<Status> {
    const next = this.anchors;
    next.pop();
    this.state = await this.client.setAnchors(next);
    return this.state;
  }

  async clearAnchors(): Promise<Status> {
    this.state = await this.client.setAnchors([]);
    return this.state;
  }

  /** Solve per-frame poses; refuses locally below the anchor minimum. */
  async solve(): Promise<Status> {
    if (!this.canSolve) {
      throw new NeedMoreAnchorsError(this.status.min_anchors, this.status.anchors.length);
    }
    this.state = await this.client.solve();
    return this.state;
  }

  async lock(): Promise<Status> {
    this.state = await this.client.lock();
    return this.state;
  }
}
