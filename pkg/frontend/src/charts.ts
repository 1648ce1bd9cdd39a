/** Pure chart layout helpers plus thin canvas renderers. */

export interface Extent {
  min: number;
  max: number;
}

export function niceExtent(values: number[], padFraction = 0.05): Extent {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const pad = (max - min) * padFraction;
  return { min: min - pad, max: max + pad };
}

export function scale(value: number, domain: Extent, rangeLo: number, rangeHi: number): number {
  const t = (value - domain.min) / (domain.max - domain.min);
  return rangeLo + t * (rangeHi - rangeLo);
}

export interface SeriesPoint {
  x: number;
  y: number;
}

/** Map data series into pixel-space polylines for a w x h canvas. */
export function lineLayout(
  series: SeriesPoint[][],
  w: number,
  h: number,
  margin = 28,
): { polylines: Array<Array<[number, number]>>; xDomain: Extent; yDomain: Extent } {
  const xs = series.flat().map((p) => p.x);
  const ys = series.flat().map((p) => p.y);
  const xDomain = niceExtent(xs);
  const yDomain = niceExtent(ys.concat([0]));
  const polylines = series.map((pts) =>
    pts.map(
      (p) =>
        [scale(p.x, xDomain, margin, w - 8), scale(p.y, yDomain, h - margin, 8)] as [number, number],
    ),
  );
  return { polylines, xDomain, yDomain };
}

/** Bar geometry for a per-class bar chart in a w x h canvas. */
export function barLayout(
  values: number[],
  w: number,
  h: number,
  margin = 28,
): Array<{ x: number; y: number; width: number; height: number }> {
  const n = values.length;
  if (n === 0) return [];
  const innerW = w - margin - 8;
  const slot = innerW / n;
  const barW = Math.max(2, slot * 0.7);
  return values.map((v, i) => {
    const clamped = Math.max(0, Math.min(1, v));
    const barH = clamped * (h - margin - 8);
    return { x: margin + i * slot + (slot - barW) / 2, y: h - margin - barH, width: barW, height: barH };
  });
}

export function drawLineChart(
  ctx: CanvasRenderingContext2D,
  series: SeriesPoint[][],
  colors: string[],
  labels: string[],
): void {
  const { width: w, height: h } = ctx.canvas;
  ctx.clearRect(0, 0, w, h);
  const { polylines, yDomain } = lineLayout(series, w, h);
  ctx.strokeStyle = '#555';
  ctx.strokeRect(28, 8, w - 36, h - 36);
  ctx.fillStyle = '#888';
  ctx.font = '10px sans-serif';
  ctx.fillText(yDomain.max.toFixed(2), 2, 14);
  ctx.fillText(yDomain.min.toFixed(2), 2, h - 28);
  polylines.forEach((line, i) => {
    ctx.strokeStyle = colors[i % colors.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    line.forEach(([x, y], k) => (k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.stroke();
    line.forEach(([x, y]) => {
      ctx.fillStyle = colors[i % colors.length];
      ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
    });
    ctx.fillText(labels[i] ?? '', w - 70, 16 + i * 12);
  });
}

export function drawBarChart(
  ctx: CanvasRenderingContext2D,
  values: number[],
  colors: string[],
  names: string[],
): void {
  const { width: w, height: h } = ctx.canvas;
  ctx.clearRect(0, 0, w, h);
  const bars = barLayout(values, w, h);
  ctx.font = '9px sans-serif';
  bars.forEach((b, i) => {
    ctx.fillStyle = colors[i % colors.length];
    ctx.fillRect(b.x, b.y, b.width, b.height);
    ctx.save();
    ctx.translate(b.x + b.width / 2, h - 24);
    ctx.rotate(-Math.PI / 4);
    ctx.fillStyle = '#aaa';
    ctx.fillText(names[i] ?? String(i), -18, 8);
    ctx.restore();
    ctx.fillStyle = '#ccc';
    ctx.fillText(values[i].toFixed(2), b.x - 2, Math.max(10, b.y - 3));
  });
}
