/**
 * Pointer-to-message mappings.  Both are pure functions of their inputs so a
 * recorded pointer path always replays to an identical message sequence.
 */

import type { ControlMessage, ForceMessage } from "./protocol.js";
import type { Point2 } from "./viewState.js";

/** Normalize IEEE negative zero, which JSON cannot represent. */
function nz(value: number): number {
  return value === 0 ? 0 : value;
}

/**
 * Map a pointer drag on a selected vertex to a stream of force messages.
 *
 * Each pointer sample emits one message whose vector is the screen-space
 * offset from the grab point scaled by `gain` (screen y grows downward, so
 * it is negated to give a physical +y); releasing the pointer emits a final
 * zero-force message so the server does not keep applying the last sample.
 */
export function dragToForce(
  path: readonly Point2[],
  grab: Point2,
  vertex: number,
  gain: number,
): ForceMessage[] {
  const out: ForceMessage[] = path.map((p) => ({
    type: "force",
    vertex,
    vec: [nz(gain * (p.x - grab.x)), nz(-gain * (p.y - grab.y)), 0],
  }));
  out.push({ type: "force", vertex, vec: [0, 0, 0] });
  return out;
}

export interface SketchResult {
  message: ControlMessage;
  /** Arc-length-uniform resampling of the sketch, for the overlay. */
  resampled: Point2[];
}

/**
 * Resample `polyline` to `samples` points spaced uniformly by arc length.
 * Endpoints are preserved; a single-point polyline resamples to copies of
 * that point.
 */
export function resamplePolyline(
  polyline: readonly Point2[],
  samples: number,
): Point2[] {
  if (polyline.length === 0) throw new Error("cannot resample an empty polyline");
  if (samples < 1) throw new Error(`need at least one sample, got ${samples}`);
  const first = polyline[0]!;
  const cumulative = [0];
  for (let i = 1; i < polyline.length; i++) {
    const a = polyline[i - 1]!;
    const b = polyline[i]!;
    cumulative.push(cumulative[i - 1]! + Math.hypot(b.x - a.x, b.y - a.y));
  }
  const total = cumulative[cumulative.length - 1]!;
  if (total === 0 || samples === 1) {
    return Array.from({ length: samples }, () => ({ ...first }));
  }
  const out: Point2[] = [];
  let seg = 0;
  for (let k = 0; k < samples; k++) {
    const s = (total * k) / (samples - 1);
    while (seg < polyline.length - 2 && cumulative[seg + 1]! < s) seg++;
    const a = polyline[seg]!;
    const b = polyline[seg + 1]!;
    const span = cumulative[seg + 1]! - cumulative[seg]!;
    const t = span === 0 ? 0 : (s - cumulative[seg]!) / span;
    out.push({ x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) });
  }
  return out;
}

/**
 * Map a sketched 2-D target polyline to a control request for `goalVertex`.
 *
 * The sketch is drawn in the model's x/y plane relative to the vertex's
 * current screen position (`origin`), scaled by `gain` from pixels to model
 * units.  The quasi-static solver takes a single end-of-horizon goal, so the
 * request carries the sketch's final point; the full resampling is returned
 * for the predicted-trajectory overlay.  A single-point sketch is exactly a
 * single-goal request.
 */
export function sketchToControl(
  polyline: readonly Point2[],
  horizon: number,
  goalVertex: number,
  origin: Point2,
  gain: number,
  samples = 10,
): SketchResult {
  const resampled = resamplePolyline(polyline, samples);
  const end = resampled[resampled.length - 1]!;
  const goal: [number, number, number] = [
    nz(gain * (end.x - origin.x)),
    nz(-gain * (end.y - origin.y)),
    0,
  ];
  return {
    message: { type: "control", targets: [[goalVertex, goal]], horizon },
    resampled,
  };
}
