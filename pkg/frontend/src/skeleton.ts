/**
 * Stick-figure kinematics of the default biped, used to draw the side and
 * top views from a StateFrame. Mirrors the simulator's documented default
 * geometry: hips +-0.08 m lateral of the base, 0.38 m thigh and shank,
 * sole 0.07 m below the ankle, head 0.62 m above the base.
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w, x, y, z

export const GEOMETRY = {
  hipOffsetY: 0.08,
  thigh: 0.38,
  shank: 0.38,
  ankleHeight: 0.07,
  headOffsetZ: 0.62,
  footToe: 0.11,
  footHeel: -0.09,
};

// joint order within one leg: hip yaw (z), hip roll (x), hip pitch (y),
// knee pitch (y), ankle pitch (y), ankle roll (x)
const LEG_AXES: Vec3[] = [
  [0, 0, 1],
  [1, 0, 0],
  [0, 1, 0],
  [0, 1, 0],
  [0, 1, 0],
  [1, 0, 0],
];

type Mat3 = number[]; // row-major 9

function quatToMat(q: Quat): Mat3 {
  const [w, x, y, z] = q;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}

function axisAngle(axis: Vec3, angle: number): Mat3 {
  const [ux, uy, uz] = axis;
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const t = 1 - c;
  return [
    c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s,
    uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s,
    uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t,
  ];
}

function matMul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let acc = 0;
      for (let k = 0; k < 3; k++) acc += a[3 * i + k] * b[3 * k + j];
      out[3 * i + j] = acc;
    }
  }
  return out;
}

function matVec(m: Mat3, v: Vec3): Vec3 {
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export interface LegPoints {
  hip: Vec3;
  knee: Vec3;
  ankle: Vec3;
  heel: Vec3;
  toe: Vec3;
}

export interface SkeletonPoints {
  base: Vec3;
  head: Vec3;
  left: LegPoints;
  right: LegPoints;
}

/** World positions of the drawable joints from base pose + 12 joint angles. */
export function skeletonPoints(basePos: Vec3, baseQuat: Quat, q: number[]): SkeletonPoints {
  const rBase = quatToMat(baseQuat);
  const legs: LegPoints[] = [];
  for (const side of [1, -1]) {
    const angles = side === 1 ? q.slice(0, 6) : q.slice(6, 12);
    let rot = rBase;
    let pos = add(basePos, matVec(rBase, [0, side * GEOMETRY.hipOffsetY, 0]));
    const hip = pos;
    // hip yaw, roll, pitch share an origin
    for (let j = 0; j < 3; j++) {
      rot = matMul(rot, axisAngle(LEG_AXES[j], angles[j]));
    }
    const knee = add(pos, matVec(rot, [0, 0, -GEOMETRY.thigh]));
    rot = matMul(rot, axisAngle(LEG_AXES[3], angles[3]));
    const ankle = add(knee, matVec(rot, [0, 0, -GEOMETRY.shank]));
    rot = matMul(rot, axisAngle(LEG_AXES[4], angles[4]));
    rot = matMul(rot, axisAngle(LEG_AXES[5], angles[5]));
    const heel = add(ankle, matVec(rot, [GEOMETRY.footHeel, 0, -GEOMETRY.ankleHeight]));
    const toe = add(ankle, matVec(rot, [GEOMETRY.footToe, 0, -GEOMETRY.ankleHeight]));
    legs.push({ hip, knee, ankle, heel, toe });
  }
  const head = add(basePos, matVec(rBase, [0, 0, GEOMETRY.headOffsetZ]));
  return { base: basePos, head, left: legs[0], right: legs[1] };
}
