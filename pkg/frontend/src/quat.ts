/** Unit quaternion helpers, [w, x, y, z] order throughout. */

export type Quat = [number, number, number, number];
export type Vec3 = [number, number, number];

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n < 1e-12) throw new Error("cannot normalize zero quaternion");
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatConjugate(q: Quat): Quat {
  return [q[0], -q[1], -q[2], -q[3]];
}

export function quatFromAxisAngle(axis: Vec3, radians: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n < 1e-12) throw new Error("rotation axis must be nonzero");
  const h = radians / 2;
  const s = Math.sin(h) / n;
  return [Math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s];
}

/** Rotate a vector: q * [0,v] * q^-1 expanded to avoid the detour. */
export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = quatNormalize(q);
  const [vx, vy, vz] = v;
  // t = 2 * (q_vec x v)
  const tx = 2 * (y * vz - z * vy);
  const ty = 2 * (z * vx - x * vz);
  const tz = 2 * (x * vy - y * vx);
  return [
    vx + w * tx + (y * tz - z * ty),
    vy + w * ty + (z * tx - x * tz),
    vz + w * tz + (x * ty - y * tx),
  ];
}

/** Smallest rotation angle taking a to b, in radians. */
export function quatAngleBetween(a: Quat, b: Quat): number {
  const an = quatNormalize(a);
  const bn = quatNormalize(b);
  const dot = Math.abs(an[0] * bn[0] + an[1] * bn[1] + an[2] * bn[2] + an[3] * bn[3]);
  return 2 * Math.acos(Math.min(1, dot));
}
