/**
 * Minimal deterministic SVG assembly: fixed-precision coordinates, no
 * timestamps, no randomness, so identical inputs yield identical bytes.
 */

export const WIDTH = 640;
export const HEIGHT = 440;
export const MARGIN = { left: 72, right: 24, top: 36, bottom: 52 };

export const PALETTE = [
  "#1f5fa8",
  "#c23b22",
  "#2d6a4f",
  "#7b2d8b",
  "#b8860b",
  "#3a7ca5",
  "#555555",
];

export const fmt = (v: number): string => v.toFixed(2);

export interface Scale {
  (v: number): number;
  ticks: number[];
  label: (v: number) => string;
}

export function linearScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const span = hi - lo || 1;
  const s = ((v: number) => rLo + ((v - lo) / span) * (rHi - rLo)) as Scale;
  const step = niceStep(span);
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-9; t += step) {
    ticks.push(Number(t.toFixed(10)));
  }
  s.ticks = ticks;
  s.label = (v) => trimNumber(v);
  return s;
}

export function log10Scale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const span = lhi - llo || 1;
  const s = ((v: number) => rLo + ((Math.log10(v) - llo) / span) * (rHi - rLo)) as Scale;
  const ticks: number[] = [];
  for (let e = Math.ceil(llo - 1e-9); e <= Math.floor(lhi + 1e-9); e++) {
    ticks.push(Math.pow(10, e));
  }
  s.ticks = ticks;
  s.label = (v) => {
    const e = Math.round(Math.log10(v));
    return `1e${e}`;
  };
  return s;
}

function niceStep(span: number): number {
  const raw = span / 6;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 2.5, 5, 10]) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

export function trimNumber(v: number): string {
  if (Number.isInteger(v)) return String(v);
  return String(Number(v.toPrecision(6)));
}

export function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export class SvgDoc {
  private parts: string[] = [];

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`
    );
  }

  path(points: Array<{ x: number; y: number }>, stroke: string, width = 1.5, dash = ""): void {
    if (points.length === 0) return;
    const d = points.map((p, i) => `${i === 0 ? "M" : "L"}${fmt(p.x)} ${fmt(p.y)}`).join(" ");
    const dd = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(`<path d="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"${dd}/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`
    );
  }

  text(x: number, y: number, s: string, opts: { size?: number; anchor?: string; rotate?: boolean } = {}): void {
    const size = opts.size ?? 12;
    const anchor = opts.anchor ?? "start";
    const tr = opts.rotate ? ` transform="rotate(-90 ${fmt(x)} ${fmt(y)})"` : "";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-family="Helvetica,Arial,sans-serif" font-size="${size}" text-anchor="${anchor}"${tr}>${esc(s)}</text>`
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">\n` +
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>\n` +
      this.parts.join("\n") +
      `\n</svg>\n`
    );
  }
}

export interface Frame {
  doc: SvgDoc;
  xs: Scale;
  ys: Scale;
}

/** Axes box with ticks, grid and labels. */
export function frame(
  xs: Scale,
  ys: Scale,
  title: string,
  xLabel: string,
  yLabel: string
): Frame {
  const doc = new SvgDoc();
  const { left, right, top, bottom } = MARGIN;
  const x0 = left;
  const x1 = WIDTH - right;
  const y0 = HEIGHT - bottom;
  const y1 = top;
  for (const t of xs.ticks) {
    const px = xs(t);
    doc.line(px, y0, px, y1, "#dddddd", 0.5);
    doc.line(px, y0, px, y0 + 4, "#000000", 1);
    doc.text(px, y0 + 16, xs.label(t), { anchor: "middle", size: 11 });
  }
  for (const t of ys.ticks) {
    const py = ys(t);
    doc.line(x0, py, x1, py, "#dddddd", 0.5);
    doc.line(x0 - 4, py, x0, py, "#000000", 1);
    doc.text(x0 - 6, py + 4, ys.label(t), { anchor: "end", size: 11 });
  }
  doc.line(x0, y0, x1, y0, "#000000", 1.2);
  doc.line(x0, y0, x0, y1, "#000000", 1.2);
  doc.text((x0 + x1) / 2, 20, title, { anchor: "middle", size: 14 });
  doc.text((x0 + x1) / 2, HEIGHT - 12, xLabel, { anchor: "middle", size: 12 });
  doc.text(18, (y0 + y1) / 2, yLabel, { anchor: "middle", size: 12, rotate: true });
  return { doc, xs, ys };
}

export function legend(doc: SvgDoc, entries: Array<{ label: string; color: string; dash?: string }>): void {
  const x = MARGIN.left + 10;
  let y = MARGIN.top + 12;
  for (const e of entries) {
    doc.line(x, y - 4, x + 22, y - 4, e.color, 2, e.dash ?? "");
    doc.text(x + 28, y, e.label, { size: 11 });
    y += 16;
  }
}
