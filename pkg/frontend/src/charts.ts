/** Chart data extraction and SVG rendering for report documents.
 *
 * The console never recomputes a metric: series, scatter points, and the
 * frontier are lifted verbatim from the report document, and rendering
 * only maps those numbers onto pixels.
 */

import type { ModeBundle, ReportDocument } from "./types.js";

export const MODE_COLORS: Record<string, string> = {
  no_reflect: "#4c72b0",
  buyer_reflect: "#dd8452",
  seller_reflect: "#55a868",
  both_reflect: "#c44e52",
};

export const MODE_ORDER = ["no_reflect", "buyer_reflect", "seller_reflect", "both_reflect"];

function orderedModes(report: ReportDocument): string[] {
  const present = Object.keys(report.modes);
  const ordered = MODE_ORDER.filter((mode) => present.includes(mode));
  for (const mode of present) if (!ordered.includes(mode)) ordered.push(mode);
  return ordered;
}

export interface LineSeries {
  mode: string;
  values: number[];
}

export function cumulativeSeries(
  report: ReportDocument,
  which: "buyer" | "seller",
): LineSeries[] {
  const key: keyof ModeBundle = which === "buyer" ? "cum_avg_buyer" : "cum_avg_seller";
  return orderedModes(report).map((mode) => ({
    mode,
    values: report.modes[mode][key] as number[],
  }));
}

export interface ScatterPoint {
  mode: string;
  x: number;
  y: number;
}

export function scatterPoints(report: ReportDocument): ScatterPoint[] {
  return orderedModes(report).map((mode) => ({
    mode,
    x: report.modes[mode].avg_buyer_ss,
    y: report.modes[mode].avg_seller_ss,
  }));
}

export function frontierPoints(report: ReportDocument): [number, number][] {
  return report.frontier;
}

export interface ChartLayout {
  width: number;
  height: number;
  margin: number;
}

const DEFAULT_LAYOUT: ChartLayout = { width: 480, height: 320, margin: 40 };

interface Scale {
  (value: number): number;
}

function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (value: number) => r0 + ((value - d0) / span) * (r1 - r0);
}

function svgOpen(layout: ChartLayout, title: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${layout.height}" ` +
    `role="img" aria-label="${title}">`
  );
}

function axes(layout: ChartLayout): string {
  const { width, height, margin } = layout;
  return (
    `<line class="axis" x1="${margin}" y1="${height - margin}" x2="${width - margin}" ` +
    `y2="${height - margin}" stroke="#333"/>` +
    `<line class="axis" x1="${margin}" y1="${margin}" x2="${margin}" ` +
    `y2="${height - margin}" stroke="#333"/>`
  );
}

/** Cumulative-average utility lines, one path per mode. */
export function renderCumulativeChartSvg(
  report: ReportDocument,
  which: "buyer" | "seller",
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const series = cumulativeSeries(report, which);
  const length = Math.max(1, ...series.map((line) => line.values.length));
  const everyValue = series.flatMap((line) => line.values);
  const top = Math.max(0.1, ...everyValue);
  const x = linearScale([1, length], [layout.margin, layout.width - layout.margin]);
  const y = linearScale([0, top], [layout.height - layout.margin, layout.margin]);

  const paths = series
    .map((line) => {
      const points = line.values
        .map((value, index) => `${x(index + 1).toFixed(1)},${y(value).toFixed(1)}`)
        .join(" ");
      const color = MODE_COLORS[line.mode] ?? "#888";
      return (
        `<polyline class="mode-line" data-mode="${line.mode}" fill="none" ` +
        `stroke="${color}" stroke-width="2" points="${points}"/>`
      );
    })
    .join("");
  return (
    svgOpen(layout, `Cumulative average ${which} utility`) + axes(layout) + paths + "</svg>"
  );
}

/** Average surplus-share scatter with the zero-sum frontier line. */
export function renderSurplusScatterSvg(
  report: ReportDocument,
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const x = linearScale([0, 1], [layout.margin, layout.width - layout.margin]);
  const y = linearScale([0, 1], [layout.height - layout.margin, layout.margin]);

  const frontier = frontierPoints(report)
    .map(([fx, fy]) => `${x(fx).toFixed(1)},${y(fy).toFixed(1)}`)
    .join(" ");
  const frontierPath =
    `<polyline class="frontier" fill="none" stroke="#999" stroke-dasharray="6 4" ` +
    `points="${frontier}"/>`;

  const points = scatterPoints(report)
    .map((point) => {
      const color = MODE_COLORS[point.mode] ?? "#888";
      return (
        `<circle class="mode-point" data-mode="${point.mode}" cx="${x(point.x).toFixed(1)}" ` +
        `cy="${y(point.y).toFixed(1)}" r="6" fill="${color}"/>`
      );
    })
    .join("");
  return svgOpen(layout, "Average surplus shares") + axes(layout) + frontierPath + points + "</svg>";
}
