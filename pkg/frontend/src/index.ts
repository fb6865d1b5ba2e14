export { CSV_COLUMNS, parseResultsCsv, SchemaError } from "./schema.js";
export type { ResultRow } from "./schema.js";
export {
  buildPanels,
  groupOf,
  legendLabel,
  renderAll,
  renderPanelSvg,
} from "./figure.js";
export type { Panel, RenderedFigure, Series, SeriesPoint } from "./figure.js";
export { main, parseArgs, UsageError } from "./cli.js";
export type { Options } from "./cli.js";
