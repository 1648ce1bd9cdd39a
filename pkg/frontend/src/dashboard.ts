import { api } from './api.js';
import { drawBarChart, drawLineChart } from './charts.js';
import type { MetricRecord, Status } from './types.js';

/** Min per-class IoU over classes that actually appear (IoU > 0 proxy). */
export function minClassIou(record: MetricRecord): number {
  const present = record.per_class_iou.filter((v) => v > 0);
  return present.length ? Math.min(...present) : 0;
}

export class Dashboard {
  private timer: number | undefined;

  constructor(
    private lineCanvas: HTMLCanvasElement,
    private barCanvas: HTMLCanvasElement,
    private banner: HTMLElement,
    private emptyNote: HTMLElement,
    private classNames: string[] = [],
    private palette: string[] = [],
  ) {}

  configure(status: Status): void {
    this.classNames = status.class_names;
    this.palette = status.palette.map(([r, g, b]) => `rgb(${r},${g},${b})`);
  }

  start(intervalMs = 3000): void {
    const tick = () => void this.refresh();
    tick();
    this.timer = window.setInterval(tick, intervalMs);
  }

  stop(): void {
    if (this.timer !== undefined) window.clearInterval(this.timer);
  }

  async refresh(): Promise<void> {
    let records: MetricRecord[];
    try {
      records = await api.metrics();
      this.banner.hidden = true;
    } catch {
      this.banner.hidden = false; // reconnect banner, keep last charts
      return;
    }
    if (records.length === 0) {
      this.emptyNote.hidden = false;
      return;
    }
    this.emptyNote.hidden = true;
    const miou = records.map((r) => ({ x: r.budget_fraction, y: r.miou }));
    const minIou = records.map((r) => ({ x: r.budget_fraction, y: minClassIou(r) }));
    const lctx = this.lineCanvas.getContext('2d');
    if (lctx) drawLineChart(lctx, [miou, minIou], ['#6cf', '#fa6'], ['mIoU', 'min IoU']);
    const last = records[records.length - 1];
    const bctx = this.barCanvas.getContext('2d');
    if (bctx) drawBarChart(bctx, last.per_class_iou, this.palette, this.classNames);
  }
}
