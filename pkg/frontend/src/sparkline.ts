/** Tiny canvas strip charts for telemetry series. */

export function drawSparkline(
  ctx: CanvasRenderingContext2D,
  values: number[],
  x: number,
  y: number,
  w: number,
  h: number,
  color: string,
  label: string,
): void {
  ctx.strokeStyle = "#333";
  ctx.strokeRect(x, y, w, h);
  ctx.fillStyle = "#888";
  ctx.font = "10px monospace";
  ctx.fillText(label, x + 3, y + 10);
  if (values.length < 2) return;
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi - lo < 1e-9) {
    hi = lo + 1;
  }
  ctx.strokeStyle = color;
  ctx.beginPath();
  values.forEach((v, i) => {
    const px = x + (i / (values.length - 1)) * w;
    const py = y + h - ((v - lo) / (hi - lo)) * (h - 12) - 2;
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  const last = values[values.length - 1];
  ctx.fillStyle = color;
  ctx.fillText(last.toFixed(3), x + w - 52, y + 10);
}

export function drawBar(
  ctx: CanvasRenderingContext2D,
  value: number,
  max: number,
  x: number,
  y: number,
  w: number,
  h: number,
  color: string,
  label: string,
): void {
  ctx.strokeStyle = "#333";
  ctx.strokeRect(x, y, w, h);
  const frac = Math.min(1, Math.max(0, value / max));
  ctx.fillStyle = color;
  ctx.fillRect(x, y + h * (1 - frac), w, h * frac);
  ctx.fillStyle = "#aaa";
  ctx.font = "10px monospace";
  ctx.fillText(label, x, y + h + 11);
}
