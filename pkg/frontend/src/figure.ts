// Turns result rows into bandwidth-vs-threads panels and renders them as
// SVG. Output is a pure function of the rows: ordering is sorted everywhere
// and no timestamps or generated ids appear, so identical input bytes give
// identical output bytes.

import { ResultRow, SchemaError } from "./schema.js";

export interface SeriesPoint {
  threads: number;
  gbps: number;
  validated: boolean;
}

export interface Series {
  mode: string;
  memNode: number;
  affinity: string;
  points: SeriesPoint[];
}

export interface Panel {
  group: string;
  kernel: string;
  series: Series[];
}

const KERNEL_ORDER = ["Copy", "Scale", "Add", "Triad"];

// label suffixes that encode the placement, not the group
const PLACEMENT_SUFFIX = /-(pmem|numa)\d+$/;

/** Config labels group by their prefix: class1b-pmem2 belongs to class1b. */
export function groupOf(label: string): string {
  return label.replace(PLACEMENT_SUFFIX, "");
}

function kernelRank(kernel: string): number {
  const i = KERNEL_ORDER.indexOf(kernel);
  return i === -1 ? KERNEL_ORDER.length : i;
}

function compareKernels(a: string, b: string): number {
  return kernelRank(a) - kernelRank(b) || (a < b ? -1 : a > b ? 1 : 0);
}

function compareSeries(a: Series, b: Series): number {
  return (
    a.mode.localeCompare(b.mode) ||
    a.memNode - b.memNode ||
    a.affinity.localeCompare(b.affinity)
  );
}

/** One panel per (group, kernel); one series per (mode, mem_node, affinity). */
export function buildPanels(rows: ResultRow[]): Panel[] {
  if (rows.length === 0) throw new SchemaError("no rows");
  const panels = new Map<string, Map<string, Map<string, Series>>>();
  for (const row of rows) {
    const group = groupOf(row.label);
    const byKernel = panels.get(group) ?? new Map<string, Map<string, Series>>();
    panels.set(group, byKernel);
    const byPlacement = byKernel.get(row.kernel) ?? new Map<string, Series>();
    byKernel.set(row.kernel, byPlacement);
    const key = `${row.mode}#${row.memNode}#${row.affinity}`;
    let series = byPlacement.get(key);
    if (!series) {
      series = { mode: row.mode, memNode: row.memNode, affinity: row.affinity, points: [] };
      byPlacement.set(key, series);
    }
    const existing = series.points.find((p) => p.threads === row.threads);
    if (existing) {
      // multiple rows at one thread count keep the best rate, like the curve
      // the producing tool reports
      if (row.bestRateGbps > existing.gbps) {
        existing.gbps = row.bestRateGbps;
        existing.validated = row.validated;
      }
    } else {
      series.points.push({ threads: row.threads, gbps: row.bestRateGbps, validated: row.validated });
    }
  }

  const out: Panel[] = [];
  for (const group of [...panels.keys()].sort()) {
    const byKernel = panels.get(group)!;
    for (const kernel of [...byKernel.keys()].sort(compareKernels)) {
      const series = [...byKernel.get(kernel)!.values()].sort(compareSeries);
      for (const s of series) s.points.sort((a, b) => a.threads - b.threads);
      out.push({ group, kernel, series });
    }
  }
  return out;
}

/** `<mode>#<mem_node>`, with the affinity appended only when needed to tell
 * two series of the same placement apart. */
export function legendLabel(series: Series, panel: Panel): string {
  const base = `${series.mode}#${series.memNode}`;
  const clashes = panel.series.filter(
    (s) => s.mode === series.mode && s.memNode === series.memNode
  );
  return clashes.length > 1 ? `${base} ${series.affinity}` : base;
}

// -- svg ----------------------------------------------------------------------

const WIDTH = 760;
const HEIGHT = 460;
const MARGIN = { top: 48, right: 190, bottom: 56, left: 76 };
const PLOT_W = WIDTH - MARGIN.left - MARGIN.right;
const PLOT_H = HEIGHT - MARGIN.top - MARGIN.bottom;

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

function fmt(value: number): string {
  const text = value.toFixed(2);
  return text === "-0.00" ? "0.00" : text;
}

function fmtRate(value: number): string {
  return Number(value.toPrecision(6)).toString();
}

function niceStep(rough: number): number {
  const power = Math.pow(10, Math.floor(Math.log10(rough)));
  for (const mult of [1, 2, 2.5, 5, 10]) {
    if (power * mult >= rough) return power * mult;
  }
  return power * 10;
}

function marker(mode: string, cx: number, cy: number, color: string, filled: boolean): string {
  const fill = filled ? color : "#ffffff";
  if (mode === "pmem") {
    return `<rect x="${fmt(cx - 4)}" y="${fmt(cy - 4)}" width="8" height="8" fill="${fill}" stroke="${color}" stroke-width="1.5"/>`;
  }
  if (mode === "numa") {
    return `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="4.5" fill="${fill}" stroke="${color}" stroke-width="1.5"/>`;
  }
  const d = `M ${fmt(cx)} ${fmt(cy - 5)} L ${fmt(cx + 5)} ${fmt(cy)} L ${fmt(cx)} ${fmt(cy + 5)} L ${fmt(cx - 5)} ${fmt(cy)} Z`;
  return `<path d="${d}" fill="${fill}" stroke="${color}" stroke-width="1.5"/>`;
}

/** Render one panel. Pure string building; nothing here reads the clock. */
export function renderPanelSvg(panel: Panel): string {
  const threadValues = [...new Set(panel.series.flatMap((s) => s.points.map((p) => p.threads)))]
    .sort((a, b) => a - b);
  const maxRate = Math.max(...panel.series.flatMap((s) => s.points.map((p) => p.gbps)));
  const xMin = threadValues[0]!;
  const xMax = threadValues[threadValues.length - 1]!;
  const xSpan = xMax > xMin ? xMax - xMin : 1;
  const yStep = niceStep((maxRate > 0 ? maxRate : 1) / 4);
  const yMax = yStep * Math.max(1, Math.ceil((maxRate > 0 ? maxRate : 1) / yStep));

  const x = (threads: number) => MARGIN.left + ((threads - xMin) / xSpan) * PLOT_W;
  const y = (gbps: number) => MARGIN.top + PLOT_H - (gbps / yMax) * PLOT_H;

  const stride = Math.max(1, Math.ceil(threadValues.length / 14));
  const xTicks = threadValues.filter(
    (_, i) => i % stride === 0 || i === threadValues.length - 1
  );
  const yTicks: number[] = [];
  for (let tick = 0; tick <= yMax + yStep / 2; tick += yStep) yTicks.push(tick);

  const grid = yTicks
    .map(
      (tick) =>
        `<line x1="${fmt(MARGIN.left)}" y1="${fmt(y(tick))}" x2="${fmt(MARGIN.left + PLOT_W)}" y2="${fmt(y(tick))}" stroke="#dddddd" stroke-width="1"/>`
    )
    .join("\n  ");

  const xLabels = xTicks
    .map(
      (tick) =>
        `<text x="${fmt(x(tick))}" y="${fmt(MARGIN.top + PLOT_H + 20)}" class="tick" text-anchor="middle">${tick}</text>`
    )
    .join("\n  ");

  const yLabels = yTicks
    .map(
      (tick) =>
        `<text x="${fmt(MARGIN.left - 8)}" y="${fmt(y(tick) + 4)}" class="tick" text-anchor="end">${fmtRate(tick)}</text>`
    )
    .join("\n  ");

  const seriesArt = panel.series
    .map((series, index) => {
      const color = PALETTE[index % PALETTE.length]!;
      const path = series.points
        .map((p, i) => `${i === 0 ? "M" : "L"} ${fmt(x(p.threads))} ${fmt(y(p.gbps))}`)
        .join(" ");
      const markers = series.points
        .map((p) => marker(series.mode, x(p.threads), y(p.gbps), color, p.validated))
        .join("\n  ");
      return `<path d="${path}" fill="none" stroke="${color}" stroke-width="2"/>\n  ${markers}`;
    })
    .join("\n  ");

  const legend = panel.series
    .map((series, index) => {
      const color = PALETTE[index % PALETTE.length]!;
      const ly = MARGIN.top + 10 + index * 24;
      const lx = MARGIN.left + PLOT_W + 18;
      return (
        `<line x1="${fmt(lx)}" y1="${fmt(ly)}" x2="${fmt(lx + 22)}" y2="${fmt(ly)}" stroke="${color}" stroke-width="2"/>\n  ` +
        marker(series.mode, lx + 11, ly, color, true) +
        `\n  <text x="${fmt(lx + 30)}" y="${fmt(ly + 4)}" class="legend">${legendLabel(series, panel)}</text>`
      );
    })
    .join("\n  ");

  const unvalidated = panel.series.some((s) => s.points.some((p) => !p.validated));
  const footnote = unvalidated
    ? `<text x="${fmt(MARGIN.left)}" y="${fmt(HEIGHT - 8)}" class="note">hollow markers: validation failed</text>`
    : "";

  return `<?xml version="1.0" encoding="UTF-8"?>
<svg width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" xmlns="http://www.w3.org/2000/svg">
  <style>
    .title { font: bold 16px sans-serif; fill: #222222; }
    .axis { font: 13px sans-serif; fill: #444444; }
    .tick { font: 11px sans-serif; fill: #444444; }
    .legend { font: 12px sans-serif; fill: #222222; }
    .note { font: 11px sans-serif; fill: #888888; }
  </style>
  <rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>
  <text x="${fmt(MARGIN.left + PLOT_W / 2)}" y="28" class="title" text-anchor="middle">${panel.group} ${panel.kernel}</text>
  ${grid}
  <line x1="${fmt(MARGIN.left)}" y1="${fmt(MARGIN.top)}" x2="${fmt(MARGIN.left)}" y2="${fmt(MARGIN.top + PLOT_H)}" stroke="#222222" stroke-width="1.5"/>
  <line x1="${fmt(MARGIN.left)}" y1="${fmt(MARGIN.top + PLOT_H)}" x2="${fmt(MARGIN.left + PLOT_W)}" y2="${fmt(MARGIN.top + PLOT_H)}" stroke="#222222" stroke-width="1.5"/>
  ${xLabels}
  ${yLabels}
  <text x="${fmt(MARGIN.left + PLOT_W / 2)}" y="${fmt(HEIGHT - 16)}" class="axis" text-anchor="middle">threads</text>
  <text x="20" y="${fmt(MARGIN.top + PLOT_H / 2)}" class="axis" text-anchor="middle" transform="rotate(-90, 20, ${fmt(MARGIN.top + PLOT_H / 2)})">best rate (GB/s)</text>
  ${seriesArt}
  ${legend}
  ${footnote}
</svg>
`;
}

export interface RenderedFigure {
  filename: string;
  svg: string;
  panel: Panel;
}

/** Every panel rendered, named `<group>-<kernel>.svg`, in stable order. */
export function renderAll(rows: ResultRow[]): RenderedFigure[] {
  return buildPanels(rows).map((panel) => ({
    filename: `${panel.group}-${panel.kernel}.svg`,
    svg: renderPanelSvg(panel),
    panel,
  }));
}
