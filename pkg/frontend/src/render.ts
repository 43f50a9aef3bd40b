/**
 * 2-D orthographic projection of the mesh for the planar strip/chain
 * scenarios: pure geometry in, draw lists out, so the mapping is testable
 * without a canvas.  A thin canvas binding can consume `projectPositions`
 * and `pressureBars` directly.
 */

import type { Point2 } from "./viewState.js";

export interface Viewport {
  width: number;
  height: number;
  /** Pixels per model unit. */
  scale: number;
  /** Model-space point mapped to the viewport centre. */
  center: Point2;
}

/** Project flat x,y,z position triples onto the viewport (x right, y up). */
export function projectPositions(
  positions: readonly number[],
  view: Viewport,
): Point2[] {
  const out: Point2[] = [];
  for (let i = 0; i + 2 < positions.length; i += 3) {
    out.push({
      x: view.width / 2 + view.scale * (positions[i]! - view.center.x),
      y: view.height / 2 - view.scale * (positions[i + 1]! - view.center.y),
    });
  }
  return out;
}

/**
 * Index of the projected vertex nearest the pointer, or null when none is
 * within `radius` pixels.
 */
export function pickVertex(
  projected: readonly Point2[],
  pointer: Point2,
  radius: number,
): number | null {
  let best: number | null = null;
  let bestDist = radius;
  projected.forEach((p, i) => {
    const d = Math.hypot(p.x - pointer.x, p.y - pointer.y);
    if (d <= bestDist) {
      best = i;
      bestDist = d;
    }
  });
  return best;
}

export interface Bar {
  /** Bar height as a fraction of the tallest bar (1 for the maximum). */
  fraction: number;
  value: number;
}

/** Normalize solved chamber pressures into bar-gauge heights. */
export function pressureBars(pressures: readonly number[]): Bar[] {
  const max = Math.max(...pressures, 0);
  return pressures.map((value) => ({
    value,
    fraction: max === 0 ? 0 : value / max,
  }));
}
