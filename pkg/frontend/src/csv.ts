/** CSV download for report documents.
 *
 * Byte-compatible with the CSV the backend CLI writes: same header, same
 * row order, 6-decimal fixed formatting. Values come straight from the
 * report document; nothing is recomputed.
 */

import { MODE_ORDER } from "./charts.js";
import type { ReportDocument } from "./types.js";

export const CSV_HEADER = "mode,avg_buyer_ss,avg_seller_ss,no_deal_count,unclaimed";

function fixed6(value: number): string {
  return value.toFixed(6);
}

export function reportToCsv(report: ReportDocument): string {
  const present = Object.keys(report.modes);
  const modes = MODE_ORDER.filter((mode) => present.includes(mode)).concat(
    present.filter((mode) => !MODE_ORDER.includes(mode)),
  );
  const lines = [CSV_HEADER];
  for (const mode of modes) {
    const bundle = report.modes[mode];
    lines.push(
      `${mode},${fixed6(bundle.avg_buyer_ss)},${fixed6(bundle.avg_seller_ss)},` +
        `${bundle.no_deal_count},${fixed6(bundle.unclaimed)}`,
    );
  }
  return lines.join("\n") + "\n";
}
