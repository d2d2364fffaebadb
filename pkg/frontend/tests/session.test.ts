import { describe, expect, it } from "vitest";

import type { Status } from "../src/api.js";
import {
  NeedMoreAnchorsError,
  PlacementClient,
  UiSession,
  backprojectClick,
} from "../src/session.js";

/** In-memory stand-in mimicking the service's placement semantics. */
class FakeClient implements PlacementClient {
  pose = { q: [1, 0, 0, 0], T: [0, 0, 1.5] };
  scale = 1.0;
  anchors: [number, number][] = [];
  locked = false;
  solved = false;
  solveCalls = 0;
  anchorPosts: number[] = [];

  private snapshot(): Status {
    return {
      frames: 4,
      width: 64,
      height: 64,
      pose: { q: [...this.pose.q], T: [...this.pose.T] },
      scale: this.scale,
      anchors: this.anchors.map((a) => [a[0], a[1]]),
      min_anchors: 6,
      locked: this.locked,
      solved: this.solved,
      rms_px: this.solved ? [0.1, 0.1, 0.1, 0.1] : null,
      converged: this.solved ? [true, true, true, true] : null,
      mean_rms_px: this.solved ? 0.1 : null,
    };
  }

  async status(): Promise<Status> {
    return this.snapshot();
  }

  async setPose(q: number[], T: number[], scale?: number): Promise<Status> {
    this.pose = { q: [...q], T: [...T] };
    if (scale !== undefined) this.scale = scale;
    this.solved = false;
    return this.snapshot();
  }

  async setAnchors(points: [number, number][]): Promise<Status> {
    this.anchors = points.map((p) => [p[0], p[1]]);
    this.anchorPosts.push(points.length);
    this.solved = false;
    return this.snapshot();
  }

  async solve(): Promise<Status> {
    this.solveCalls += 1;
    this.solved = true;
    return this.snapshot();
  }

  async lock(): Promise<Status> {
    this.locked = true;
    return this.snapshot();
  }
}

async function startSession(): Promise<{ fake: FakeClient; session: UiSession }> {
  const fake = new FakeClient();
  const session = new UiSession(fake);
  await session.refresh();
  return { fake, session };
}

describe("backprojectClick", () => {
  const k = { fx: 64, fy: 64, cx: 32, cy: 32 };

  it("sends the principal point straight down the optical axis", () => {
    expect(backprojectClick(32, 32, 2, k)).toEqual([0, 0, 2]);
  });

  it("scales offsets by depth over focal length", () => {
    const [x, y, z] = backprojectClick(48, 24, 4, k);
    expect(x).toBeCloseTo(1, 12); // (48-32)/64 * 4
    expect(y).toBeCloseTo(-0.5, 12); // (24-32)/64 * 4
    expect(z).toBe(4);
  });

  it("refuses holes and nonpositive depth", () => {
    expect(() => backprojectClick(32, 32, 0, k)).toThrow(/depth/);
    expect(() => backprojectClick(32, 32, NaN, k)).toThrow(/depth/);
  });
});

describe("UiSession", () => {
  it("requires refresh before reading state", () => {
    const session = new UiSession(new FakeClient());
    expect(() => session.status).toThrow(/refresh/);
  });

  it("rotating +90 then -90 degrees returns to the start pose", async () => {
    const { session } = await startSession();
    const before = session.pose.q;
    await session.rotate([0, 1, 0], Math.PI / 2);
    await session.rotate([0, 1, 0], -Math.PI / 2);
    const after = session.pose.q;
    for (let i = 0; i < 4; i++) {
      expect(after[i]).toBeCloseTo(before[i]!, 12);
    }
  });

  it("scaleBy multiplies: x2 then x0.5 restores the scale", async () => {
    const { session } = await startSession();
    await session.scaleBy(2);
    expect(session.status.scale).toBe(2);
    await session.scaleBy(0.5);
    expect(session.status.scale).toBe(1);
    await expect(session.scaleBy(-1)).rejects.toThrow(/factor/);
  });

  it("translate accumulates deltas", async () => {
    const { session } = await startSession();
    await session.translate([0.1, 0, 0]);
    await session.translate([0, -0.2, 0.5]);
    const T = session.pose.T;
    expect(T[0]).toBeCloseTo(0.1, 12);
    expect(T[1]).toBeCloseTo(-0.2, 12);
    expect(T[2]).toBeCloseTo(2.0, 12);
  });

  it("posts the full anchor list on every add (replace semantics)", async () => {
    const { fake, session } = await startSession();
    await session.addAnchor(10, 10);
    await session.addAnchor(20, 20);
    await session.addAnchor(30, 30);
    expect(fake.anchorPosts).toEqual([1, 2, 3]);
    expect(fake.anchors).toEqual([
      [10, 10],
      [20, 20],
      [30, 30],
    ]);
    await session.removeLastAnchor();
    expect(fake.anchors).toEqual([
      [10, 10],
      [20, 20],
    ]);
    await session.clearAnchors();
    expect(fake.anchors).toEqual([]);
  });

  it("blocks solve below six anchors and allows it at six", async () => {
    const { fake, session } = await startSession();
    for (let i = 0; i < 5; i++) {
      await session.addAnchor(10 + i, 10);
    }
    expect(session.canSolve).toBe(false);
    await expect(session.solve()).rejects.toThrow(NeedMoreAnchorsError);
    await expect(session.solve()).rejects.toThrow(/need >= 6 anchors, have 5/);
    expect(fake.solveCalls).toBe(0);

    await session.addAnchor(15, 10);
    expect(session.canSolve).toBe(true);
    const status = await session.solve();
    expect(fake.solveCalls).toBe(1);
    expect(status.solved).toBe(true);
    expect(status.rms_px).toHaveLength(4);
  });

  it("editing the pose invalidates a previous solve", async () => {
    const { session } = await startSession();
    for (let i = 0; i < 6; i++) {
      await session.addAnchor(10 + i, 10);
    }
    await session.solve();
    expect(session.status.solved).toBe(true);
    await session.translate([0.01, 0, 0]);
    expect(session.status.solved).toBe(false);
  });

  it("lock is reflected in status", async () => {
    const { session } = await startSession();
    const status = await session.lock();
    expect(status.locked).toBe(true);
  });
});
