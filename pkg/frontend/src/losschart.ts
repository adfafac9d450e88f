// Two-series loss chart (train, validation) over epochs.

import type { LossSide } from "./schema.js";

export interface LossPoint {
	epoch: number;
	train: number;
	val: number;
}

export interface ChartSeries {
	train: { x: number; y: number }[];
	val: { x: number; y: number }[];
}

export function appendLoss(points: LossPoint[], epoch: number, train: LossSide, val: LossSide): LossPoint[] {
	// Replace on duplicate epoch (reconnect resync can replay history).
	const next = points.filter((p) => p.epoch !== epoch);
	next.push({ epoch, train: train.total, val: val.total });
	next.sort((a, b) => a.epoch - b.epoch);
	return next;
}

export function chartSeries(points: LossPoint[], width: number, height: number, pad = 6): ChartSeries {
	if (points.length === 0) return { train: [], val: [] };
	const xs = points.map((p) => p.epoch);
	const ys = points.flatMap((p) => [p.train, p.val]);
	const xMin = Math.min(...xs);
	const xMax = Math.max(...xs, xMin + 1);
	const yMin = Math.min(...ys);
	const yMax = Math.max(...ys, yMin + 1e-9);
	const sx = (x: number) => pad + ((x - xMin) / (xMax - xMin)) * (width - 2 * pad);
	const sy = (y: number) => height - pad - ((y - yMin) / (yMax - yMin)) * (height - 2 * pad);
	return {
		train: points.map((p) => ({ x: sx(p.epoch), y: sy(p.train) })),
		val: points.map((p) => ({ x: sx(p.epoch), y: sy(p.val) })),
	};
}

export function paintChart(ctx: CanvasRenderingContext2D, points: LossPoint[], width: number, height: number): void {
	ctx.clearRect(0, 0, width, height);
	ctx.fillStyle = "#14141c";
	ctx.fillRect(0, 0, width, height);
	const series = chartSeries(points, width, height);

	const drawLine = (pts: { x: number; y: number }[], color: string) => {
		if (pts.length === 0) return;
		ctx.strokeStyle = color;
		ctx.lineWidth = 1.5;
		ctx.beginPath();
		ctx.moveTo(pts[0].x, pts[0].y);
		for (const p of pts.slice(1)) ctx.lineTo(p.x, p.y);
		ctx.stroke();
	};
	drawLine(series.train, "#5ec8a8");
	drawLine(series.val, "#e0a35c");

	ctx.fillStyle = "#888";
	ctx.font = "10px sans-serif";
	ctx.fillText("train", 8, 12);
	ctx.fillStyle = "#e0a35c";
	ctx.fillText("val", 40, 12);
}
