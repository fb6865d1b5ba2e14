import * as fs from "node:fs";
import { describe, expect, it } from "vitest";

import {
  buildPanels,
  groupOf,
  legendLabel,
  renderAll,
  renderPanelSvg,
} from "../src/figure.js";
import { parseResultsCsv, ResultRow } from "../src/schema.js";

const FIXTURE = new URL("./fixtures/class1b-smoke.csv", import.meta.url);
const fixtureRows = () => parseResultsCsv(fs.readFileSync(FIXTURE, "utf8"));

function row(overrides: Partial<ResultRow>): ResultRow {
  return {
    label: "desk",
    kernel: "Copy",
    threads: 1,
    affinity: "close",
    mode: "numa",
    memNode: 0,
    bestRateGbps: 10,
    avgTimeS: 0.001,
    minTimeS: 0.001,
    maxTimeS: 0.001,
    validated: true,
    unpinned: false,
    ...overrides,
  };
}

describe("groupOf", () => {
  it("strips the placement suffix only", () => {
    expect(groupOf("class1b-pmem1")).toBe("class1b");
    expect(groupOf("class1c-close-pmem0")).toBe("class1c-close");
    expect(groupOf("class2a-numa1")).toBe("class2a");
    expect(groupOf("desk")).toBe("desk");
    expect(groupOf("pmem1")).toBe("pmem1");
  });
});

describe("buildPanels", () => {
  it("makes one panel per kernel for the smoke group, two series each", () => {
    const panels = buildPanels(fixtureRows());
    expect(panels.map((p) => `${p.group} ${p.kernel}`)).toEqual([
      "class1b Copy",
      "class1b Scale",
      "class1b Add",
      "class1b Triad",
    ]);
    for (const panel of panels) {
      const placements = new Set(
        fixtureRows()
          .filter((r) => r.kernel === panel.kernel)
          .map((r) => `${r.mode}#${r.memNode}#${r.affinity}`)
      );
      expect(panel.series).toHaveLength(placements.size);
      for (const series of panel.series) {
        expect(series.points.map((p) => p.threads)).toEqual([1, 2]);
      }
    }
  });

  it("separates series that differ only by affinity", () => {
    const rows = [
      row({ label: "sweep-pmem0", mode: "pmem", affinity: "close" }),
      row({ label: "sweep-pmem0", mode: "pmem", affinity: "spread", bestRateGbps: 12 }),
    ];
    const panel = buildPanels(rows)[0]!;
    expect(panel.series).toHaveLength(2);
    expect(panel.series.map((s) => legendLabel(s, panel))).toEqual([
      "pmem#0 close",
      "pmem#0 spread",
    ]);
  });

  it("keeps the plain legend form when placements are unambiguous", () => {
    const panel = buildPanels(fixtureRows())[0]!;
    expect(panel.series.map((s) => legendLabel(s, panel))).toEqual([
      "pmem#1",
      "pmem#2",
    ]);
  });

  it("keeps the best rate when thread counts repeat", () => {
    const rows = [
      row({ threads: 2, bestRateGbps: 9 }),
      row({ threads: 2, bestRateGbps: 11 }),
      row({ threads: 1, bestRateGbps: 5 }),
    ];
    const series = buildPanels(rows)[0]!.series[0]!;
    expect(series.points).toEqual([
      { threads: 1, gbps: 5, validated: true },
      { threads: 2, gbps: 11, validated: true },
    ]);
  });

  it("refuses an empty row set", () => {
    expect(() => buildPanels([])).toThrow("no rows");
  });
});

describe("renderPanelSvg", () => {
  it("is deterministic for identical input", () => {
    const first = renderAll(fixtureRows());
    const second = renderAll(fixtureRows());
    expect(second.map((f) => f.svg)).toEqual(first.map((f) => f.svg));
    expect(first.map((f) => f.filename)).toEqual([
      "class1b-Copy.svg",
      "class1b-Scale.svg",
      "class1b-Add.svg",
      "class1b-Triad.svg",
    ]);
  });

  it("does not mutate or reorder its input rows", () => {
    const rows = fixtureRows();
    const snapshot = JSON.parse(JSON.stringify(rows));
    renderAll(rows);
    expect(rows).toEqual(snapshot);
  });

  it("draws square markers for pmem and circles for numa", () => {
    const pmemSvg = renderPanelSvg(
      buildPanels([row({ label: "a-pmem0", mode: "pmem" })])[0]!
    );
    expect(pmemSvg).toContain("<rect x=");
    const numaSvg = renderPanelSvg(
      buildPanels([row({ label: "a-numa0", mode: "numa" })])[0]!
    );
    expect(numaSvg).toContain("<circle cx=");
  });

  it("marks unvalidated points hollow and says so", () => {
    const svg = renderPanelSvg(
      buildPanels([
        row({ threads: 1 }),
        row({ threads: 2, validated: false }),
      ])[0]!
    );
    expect(svg).toContain('fill="#ffffff"');
    expect(svg).toContain("hollow markers: validation failed");
    const clean = renderPanelSvg(buildPanels([row({ threads: 1 })])[0]!);
    expect(clean).not.toContain("hollow markers");
  });

  it("handles a single-point series", () => {
    const svg = renderPanelSvg(buildPanels([row({})])[0]!);
    expect(svg).toContain("<svg");
    expect(svg).not.toContain("NaN");
  });

  it("labels axes and title from the data", () => {
    const svg = renderPanelSvg(buildPanels(fixtureRows())[0]!);
    expect(svg).toContain(">class1b Copy</text>");
    expect(svg).toContain(">threads</text>");
    expect(svg).toContain(">best rate (GB/s)</text>");
  });
});
