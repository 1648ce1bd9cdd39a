import { api } from './api.js';
import { Dashboard } from './dashboard.js';
import { Painter, brushPixels } from './painter.js';
import { decodeRle } from './rle.js';
import type { QueueItem, Status, UnitMask } from './types.js';

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const state = {
  status: null as Status | null,
  queue: [] as QueueItem[],
  current: null as QueueItem | null,
  mask: null as UnitMask | null,
  painter: null as Painter | null,
  classId: 0,
  brush: 3,
  zoom: 6,
  image: null as HTMLImageElement | null,
  drawing: false,
};

function paletteColor(c: number): string {
  const p = state.status?.palette[c];
  return p ? `rgb(${p[0]},${p[1]},${p[2]})` : '#f0f';
}

function renderClassBar(): void {
  const bar = $('classes');
  bar.innerHTML = '';
  state.status?.class_names.forEach((name, c) => {
    const btn = document.createElement('button');
    btn.className = 'class-btn' + (c === state.classId ? ' active' : '');
    btn.innerHTML = `<span class="swatch" style="background:${paletteColor(c)}"></span>${c + 1}:${name}`;
    btn.onclick = () => {
      state.classId = c;
      renderClassBar();
    };
    bar.appendChild(btn);
  });
}

function renderQueue(): void {
  const list = $('queue');
  list.innerHTML = '';
  if (state.queue.length === 0) {
    list.innerHTML = `<li class="note">${state.status?.phase === 'labeling' ? 'queue empty' : 'waiting for units...'}</li>`;
    return;
  }
  state.queue.forEach((item) => {
    const li = document.createElement('li');
    li.className = item === state.current ? 'active' : '';
    li.innerHTML = `<span class="kind ${item.kind}">${item.kind}</span> ${item.unit_id} <span class="cost">${item.cost}px</span>`;
    li.onclick = () => void selectUnit(item);
    list.appendChild(li);
  });
}

function renderStatus(): void {
  const s = state.status;
  if (!s) return;
  $('phase').textContent = s.phase;
  $('budget').textContent = `${s.labeled_pixels.toLocaleString()} / ${s.total_pixels.toLocaleString()} px (${(
    s.budget_fraction * 100
  ).toFixed(1)}%)`;
  ($('budgetbar-fill') as HTMLElement).style.width = `${Math.min(100, s.budget_fraction * 500)}%`;
  $('iteration').textContent = String(s.iteration);
}

function cropDims(): { h: number; w: number; r0: number; c0: number } | null {
  if (!state.current) return null;
  const [r0, c0, r1, c1] = state.current.crop;
  return { h: r1 - r0, w: c1 - c0, r0, c0 };
}

function redrawCanvas(): void {
  const canvas = $('paint') as unknown as HTMLCanvasElement;
  const ctx = canvas.getContext('2d');
  const dims = cropDims();
  if (!ctx || !dims || !state.painter || !state.mask) return;
  const { h, w, r0, c0 } = dims;
  const z = state.zoom;
  canvas.width = w * z;
  canvas.height = h * z;
  ctx.imageSmoothingEnabled = false;
  if (state.image) ctx.drawImage(state.image, 0, 0, w * z, h * z);

  const imgW = state.mask.width;
  // halo so thin EDGE bands stay visible and paintable
  ctx.fillStyle = 'rgba(255,255,255,0.25)';
  for (const p of state.painter.maskOrder) {
    const row = Math.floor(p / imgW) - r0;
    const col = (p % imgW) - c0;
    ctx.fillRect(col * z, row * z, z, 1);
    ctx.fillRect(col * z, (row + 1) * z - 1, z, 1);
  }
  for (const p of state.painter.maskOrder) {
    const cls = state.painter.classAt(p);
    if (cls === undefined) continue;
    const row = Math.floor(p / imgW) - r0;
    const col = (p % imgW) - c0;
    ctx.fillStyle = paletteColor(cls);
    ctx.globalAlpha = 0.55;
    ctx.fillRect(col * z, row * z, z, z);
    ctx.globalAlpha = 1.0;
  }
  const covered = (state.painter.coverage() * 100).toFixed(1);
  $('coverage').textContent = `${covered}% painted`;
  ($('submit') as HTMLButtonElement).disabled = state.painter.toRuns() === null;
}

async function selectUnit(item: QueueItem): Promise<void> {
  state.current = item;
  state.mask = await api.unitMask(item.unit_id);
  state.painter = new Painter(decodeRle(state.mask.rle, state.mask.height * state.mask.width));
  const img = new Image();
  img.onload = () => {
    state.image = img;
    redrawCanvas();
  };
  img.src = api.unitImageUrl(item.unit_id);
  renderQueue();
  redrawCanvas();
}

function canvasToImagePixel(ev: MouseEvent): { row: number; col: number } | null {
  const dims = cropDims();
  if (!dims) return null;
  const canvas = $('paint') as unknown as HTMLCanvasElement;
  const rect = canvas.getBoundingClientRect();
  const col = Math.floor((ev.clientX - rect.left) / state.zoom) + dims.c0;
  const row = Math.floor((ev.clientY - rect.top) / state.zoom) + dims.r0;
  return { row, col };
}

function paintAt(ev: MouseEvent): void {
  const pt = canvasToImagePixel(ev);
  if (!pt || !state.painter || !state.mask) return;
  const pixels = brushPixels(pt.row, pt.col, state.brush, state.mask.height, state.mask.width);
  if (state.painter.stroke(pixels, state.classId) > 0) redrawCanvas();
}

async function submitCurrent(): Promise<void> {
  if (!state.current || !state.painter) return;
  const runs = state.painter.toRuns();
  if (!runs) return;
  try {
    await api.submitLabels(state.current.unit_id, runs);
    state.current = null;
    state.painter = null;
    await refreshQueue();
  } catch (err) {
    $('error').textContent = String(err);
  }
}

async function skipCurrent(): Promise<void> {
  if (!state.current) return;
  await api.skip(state.current.unit_id);
  state.current = null;
  await refreshQueue();
}

async function refreshQueue(): Promise<void> {
  try {
    state.status = await api.status();
    state.queue = await api.queue();
    $('offline').hidden = true;
  } catch {
    $('offline').hidden = false;
    return;
  }
  if (state.current && !state.queue.some((q) => q.unit_id === state.current!.unit_id)) {
    state.current = null;
    state.painter = null;
  }
  if (!state.current && state.queue.length) await selectUnit(state.queue[0]);
  renderStatus();
  renderQueue();
  renderClassBar();
  redrawCanvas();
}

function bindInputs(dash: Dashboard): void {
  const canvas = $('paint') as unknown as HTMLCanvasElement;
  canvas.addEventListener('mousedown', (ev) => {
    state.drawing = true;
    paintAt(ev);
  });
  canvas.addEventListener('mousemove', (ev) => {
    if (state.drawing) paintAt(ev);
  });
  window.addEventListener('mouseup', () => (state.drawing = false));
  $('submit').onclick = () => void submitCurrent();
  $('skip').onclick = () => void skipCurrent();
  $('fill').onclick = () => {
    state.painter?.fill(state.classId);
    redrawCanvas();
  };
  $('undo').onclick = () => {
    state.painter?.undo();
    redrawCanvas();
  };
  ($('brush') as HTMLInputElement).oninput = (ev) => {
    state.brush = Number((ev.target as HTMLInputElement).value);
    $('brushsize').textContent = String(state.brush);
  };
  window.addEventListener('keydown', (ev) => {
    const k = ev.key;
    if (k >= '1' && k <= '9') {
      const c = Number(k) - 1;
      if (state.status && c < state.status.num_classes) {
        state.classId = c;
        renderClassBar();
      }
    } else if (k === 'u') $('undo').click();
    else if (k === 'f') $('fill').click();
    else if (k === 'Enter') void submitCurrent();
  });
  void dash;
}

async function boot(): Promise<void> {
  const dash = new Dashboard(
    $('chart-progress') as unknown as HTMLCanvasElement,
    $('chart-classes') as unknown as HTMLCanvasElement,
    $('offline'),
    $('no-metrics'),
  );
  bindInputs(dash);
  await refreshQueue();
  if (state.status) dash.configure(state.status);
  dash.start();
  window.setInterval(() => void refreshQueue(), 1500);
}

void boot();
