// Pattern grid geometry. Layout is a pure function of the last pattern
// event so it can be snapshot-tested without a canvas; the painter below
// just rasterizes the cells.

import type { PatternEvent } from "./schema.js";

export const GRID_ROWS = 9;
export const GRID_COLS = 32;

export const ROW_LABELS = [
	"kick", "snare", "hh closed", "hh open", "tom low", "tom mid", "tom high", "clap", "rim",
];

export interface GridCell {
	row: number;
	col: number;
	x: number; // px, includes the microtiming nudge
	y: number;
	w: number;
	h: number;
	opacity: number; // velocity
}

export interface GridLayout {
	cells: GridCell[];
	beatLines: number[]; // x positions every 4 columns
	width: number;
	height: number;
}

export function layoutPattern(
	pattern: PatternEvent | null,
	width: number,
	height: number,
): GridLayout {
	const cellW = width / GRID_COLS;
	const cellH = height / GRID_ROWS;
	const cells: GridCell[] = [];
	if (pattern) {
		for (let row = 0; row < GRID_ROWS; row++) {
			for (let col = 0; col < GRID_COLS; col++) {
				if (pattern.onsets[row][col] !== 1) continue;
				// offset -1 is a 32nd early: half a column to the left
				const nudge = pattern.offsets[row][col] * cellW * 0.5;
				cells.push({
					row,
					col,
					x: col * cellW + nudge,
					y: row * cellH,
					w: cellW,
					h: cellH,
					opacity: pattern.velocities[row][col],
				});
			}
		}
	}
	const beatLines: number[] = [];
	for (let col = 4; col < GRID_COLS; col += 4) beatLines.push(col * cellW);
	return { cells, beatLines, width, height };
}

export function paintGrid(ctx: CanvasRenderingContext2D, layout: GridLayout): void {
	ctx.clearRect(0, 0, layout.width, layout.height);
	ctx.fillStyle = "#14141c";
	ctx.fillRect(0, 0, layout.width, layout.height);

	ctx.strokeStyle = "#2a2a38";
	ctx.lineWidth = 1;
	const cellH = layout.height / GRID_ROWS;
	for (let row = 1; row < GRID_ROWS; row++) {
		ctx.beginPath();
		ctx.moveTo(0, row * cellH);
		ctx.lineTo(layout.width, row * cellH);
		ctx.stroke();
	}
	for (const x of layout.beatLines) {
		ctx.strokeStyle = "#3d3d52";
		ctx.beginPath();
		ctx.moveTo(x, 0);
		ctx.lineTo(x, layout.height);
		ctx.stroke();
	}

	for (const cell of layout.cells) {
		ctx.globalAlpha = Math.max(0.15, cell.opacity);
		ctx.fillStyle = "#5ec8a8";
		ctx.fillRect(cell.x + 1, cell.y + 1, cell.w - 2, cell.h - 2);
	}
	ctx.globalAlpha = 1;
}
