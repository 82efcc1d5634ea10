/** Anchor grids, IoU, box-delta coding, and NMS in plain arrays. Boxes are
 * [x1, y1, x2, y2] in input-image pixels. */

export type Box = [number, number, number, number];

export function buildAnchors(
  featHeight: number,
  featWidth: number,
  stride: number,
  scales: number[],
  ratios: number[]
): Box[] {
  const anchors: Box[] = [];
  for (let gy = 0; gy < featHeight; gy++) {
    for (let gx = 0; gx < featWidth; gx++) {
      const cx = (gx + 0.5) * stride;
      const cy = (gy + 0.5) * stride;
      for (const scale of scales) {
        const side = scale * stride;
        for (const ratio of ratios) {
          const h = side * Math.sqrt(ratio);
          const w = side / Math.sqrt(ratio);
          anchors.push([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]);
        }
      }
    }
  }
  return anchors;
}

export function iou(a: Box, b: Box): number {
  const ix = Math.min(a[2], b[2]) - Math.max(a[0], b[0]);
  const iy = Math.min(a[3], b[3]) - Math.max(a[1], b[1]);
  if (ix <= 0 || iy <= 0) return 0;
  const inter = ix * iy;
  const areaA = (a[2] - a[0]) * (a[3] - a[1]);
  const areaB = (b[2] - b[0]) * (b[3] - b[1]);
  return inter / (areaA + areaB - inter);
}

/** Standard R-CNN box parameterization of `gt` relative to `anchor`. */
export function encodeDeltas(anchor: Box, gt: Box): [number, number, number, number] {
  const aw = anchor[2] - anchor[0];
  const ah = anchor[3] - anchor[1];
  const ax = anchor[0] + aw / 2;
  const ay = anchor[1] + ah / 2;
  const gw = gt[2] - gt[0];
  const gh = gt[3] - gt[1];
  const gx = gt[0] + gw / 2;
  const gy = gt[1] + gh / 2;
  return [(gx - ax) / aw, (gy - ay) / ah, Math.log(gw / aw), Math.log(gh / ah)];
}

export function decodeDeltas(anchor: Box, deltas: ArrayLike<number>): Box {
  const aw = anchor[2] - anchor[0];
  const ah = anchor[3] - anchor[1];
  const ax = anchor[0] + aw / 2;
  const ay = anchor[1] + ah / 2;
  // Clamp log-scale terms so early training noise cannot explode box sizes.
  const dw = Math.min(4, Math.max(-4, deltas[2]));
  const dh = Math.min(4, Math.max(-4, deltas[3]));
  const cx = ax + deltas[0] * aw;
  const cy = ay + deltas[1] * ah;
  const w = aw * Math.exp(dw);
  const h = ah * Math.exp(dh);
  return [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2];
}

export function clipBox(box: Box, side: number): Box {
  return [
    Math.min(Math.max(box[0], 0), side),
    Math.min(Math.max(box[1], 0), side),
    Math.min(Math.max(box[2], 0), side),
    Math.min(Math.max(box[3], 0), side),
  ];
}

/** Greedy IoU suppression; returns kept indices, highest score first. */
export function nms(boxes: Box[], scores: number[], iouThreshold: number, maxKeep: number): number[] {
  const order = scores.map((s, i) => i).sort((a, b) => scores[b] - scores[a] || a - b);
  const kept: number[] = [];
  for (const idx of order) {
    if (kept.length >= maxKeep) break;
    if (kept.every((k) => iou(boxes[idx], boxes[k]) <= iouThreshold)) {
      kept.push(idx);
    }
  }
  return kept;
}

export interface AnchorAssignment {
  /** 1 = positive, 0 = negative, -1 = ignore. */
  labels: Int8Array;
  /** Delta targets, meaningful only where labels[i] === 1. */
  targets: Float32Array;
}

export function assignAnchors(
  anchors: Box[],
  gts: Box[],
  positiveIou = 0.5,
  negativeIou = 0.3
): AnchorAssignment {
  const labels = new Int8Array(anchors.length).fill(0);
  const targets = new Float32Array(anchors.length * 4);
  if (gts.length === 0) {
    return { labels, targets };
  }
  let bestAnchorPerGt = new Array(gts.length).fill(-1);
  let bestIouPerGt = new Array(gts.length).fill(-1);
  for (let i = 0; i < anchors.length; i++) {
    let best = 0;
    let bestGt = -1;
    for (let g = 0; g < gts.length; g++) {
      const ov = iou(anchors[i], gts[g]);
      if (ov > best) {
        best = ov;
        bestGt = g;
      }
      if (ov > bestIouPerGt[g]) {
        bestIouPerGt[g] = ov;
        bestAnchorPerGt[g] = i;
      }
    }
    if (best >= positiveIou) {
      labels[i] = 1;
      targets.set(encodeDeltas(anchors[i], gts[bestGt]), i * 4);
    } else if (best >= negativeIou) {
      labels[i] = -1;
    }
  }
  // Every ground truth owns its best-overlapping anchor even below threshold.
  for (let g = 0; g < gts.length; g++) {
    const i = bestAnchorPerGt[g];
    if (i >= 0 && bestIouPerGt[g] > 0) {
      labels[i] = 1;
      targets.set(encodeDeltas(anchors[i], gts[g]), i * 4);
    }
  }
  return { labels, targets };
}
