// XY pad steering the 2-D latent vector. Pad coordinates live in
// [-1, 1]^2 (y up) and map affinely onto the latent range; the cursor is
// optimistic (moves immediately) while the pattern grid waits for the
// server's confirmed regeneration.

export interface XyPad {
	setEnabled: (enabled: boolean) => void;
	setPosition: (x: number, y: number) => void; // pad coords, no emit
	getPosition: () => { x: number; y: number };
	onChange: (cb: (pos: { x: number; y: number }) => void) => void;
	padToLatent: (pos: { x: number; y: number }) => { x: number; y: number };
	latentToPad: (z: { x: number; y: number }) => { x: number; y: number };
	repaint: () => void;
}

export function createXyPad(canvas: HTMLCanvasElement, latentExtent = 3.0): XyPad {
	const ctx = canvas.getContext("2d")!;
	let pos = { x: 0, y: 0 };
	let enabled = false;
	let dragging = false;
	let changed: ((pos: { x: number; y: number }) => void) | null = null;

	const clamp = (v: number) => Math.max(-1, Math.min(1, v));

	function eventToPad(ev: PointerEvent): { x: number; y: number } {
		const rect = canvas.getBoundingClientRect();
		const nx = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
		const ny = 1 - ((ev.clientY - rect.top) / rect.height) * 2; // canvas y points down
		return { x: clamp(nx), y: clamp(ny) };
	}

	function paint() {
		const { width: w, height: h } = canvas;
		ctx.clearRect(0, 0, w, h);
		ctx.fillStyle = enabled ? "#14141c" : "#101014";
		ctx.fillRect(0, 0, w, h);
		ctx.strokeStyle = "#2a2a38";
		for (let i = 1; i < 4; i++) {
			ctx.beginPath();
			ctx.moveTo((w * i) / 4, 0);
			ctx.lineTo((w * i) / 4, h);
			ctx.stroke();
			ctx.beginPath();
			ctx.moveTo(0, (h * i) / 4);
			ctx.lineTo(w, (h * i) / 4);
			ctx.stroke();
		}
		const cx = ((pos.x + 1) / 2) * w;
		const cy = ((1 - pos.y) / 2) * h;
		ctx.beginPath();
		ctx.arc(cx, cy, 9, 0, Math.PI * 2);
		ctx.fillStyle = enabled ? "#5ec8a8" : "#3a3a46";
		ctx.fill();
		if (!enabled) {
			ctx.fillStyle = "#666";
			ctx.font = "12px sans-serif";
			ctx.textAlign = "center";
			ctx.fillText("train a model to enable the pad", w / 2, h - 12);
			ctx.textAlign = "start";
		}
	}

	function move(ev: PointerEvent) {
		if (!enabled || !dragging) return;
		pos = eventToPad(ev);
		paint();
		changed?.(pos);
	}

	canvas.addEventListener("pointerdown", (ev) => {
		if (!enabled) return;
		dragging = true;
		canvas.setPointerCapture(ev.pointerId);
		move(ev);
	});
	canvas.addEventListener("pointermove", move);
	canvas.addEventListener("pointerup", (ev) => {
		dragging = false;
		canvas.releasePointerCapture(ev.pointerId);
	});

	paint();
	return {
		setEnabled(value: boolean) {
			enabled = value;
			paint();
		},
		setPosition(x: number, y: number) {
			pos = { x: clamp(x), y: clamp(y) };
			paint();
		},
		getPosition: () => ({ ...pos }),
		onChange(cb) {
			changed = cb;
		},
		padToLatent: (p) => ({ x: p.x * latentExtent, y: p.y * latentExtent }),
		latentToPad: (z) => ({
			x: clamp(z.x / latentExtent),
			y: clamp(z.y / latentExtent),
		}),
		repaint: paint,
	};
}
