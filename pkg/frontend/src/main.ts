// Page wiring: corpus drop zone, train controls, loss chart, XY pad,
// pattern grid, transport/automation row, export links.

import { GRID_ROWS, ROW_LABELS, layoutPattern, paintGrid } from "./grid.js";
import { appendLoss, paintChart } from "./losschart.js";
import type { LossPoint } from "./losschart.js";
import {
	automation,
	connectStream,
	fetchStatus,
	postTransport,
	putThreshold,
	startTraining,
	stopTraining,
	uploadCorpus,
} from "./net.js";
import { buildTrainRequest, isValidTrainRequest } from "./schema.js";
import type { PatternEvent, ServerEvent, StatusEvent } from "./schema.js";
import { createRateLimiter } from "./throttle.js";
import { createXyPad } from "./xypad.js";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const state = {
	losses: [] as LossPoint[],
	pattern: null as PatternEvent | null,
	hasModel: false,
	playing: false,
	recording: false,
};

const gridCanvas = $<HTMLCanvasElement>("grid");
const gridCtx = gridCanvas.getContext("2d")!;
const chartCanvas = $<HTMLCanvasElement>("chart");
const chartCtx = chartCanvas.getContext("2d")!;
const pad = createXyPad($<HTMLCanvasElement>("pad"));
const statusLine = $<HTMLSpanElement>("status-line");
const corpusList = $<HTMLUListElement>("corpus-list");

function repaintGrid() {
	paintGrid(gridCtx, layoutPattern(state.pattern, gridCanvas.width, gridCanvas.height));
}

function repaintChart() {
	paintChart(chartCtx, state.losses, chartCanvas.width, chartCanvas.height);
}

function renderStatus(event: StatusEvent) {
	state.hasModel = event.has_model;
	state.playing = event.transport.playing;
	pad.setEnabled(event.has_model);
	const pieces = [`corpus: ${event.dataset_size} patterns`];
	if (event.status === "training") pieces.push(`training epoch ${event.epoch}/${event.total_epochs}`);
	else pieces.push(event.status === "failed" ? `failed: ${event.reason}` : event.status);
	statusLine.textContent = pieces.join(" | ");
	statusLine.className = event.status === "failed" ? "error" : "";
	$<HTMLButtonElement>("play").textContent = state.playing ? "stop" : "play";

	state.losses = [];
	for (const entry of event.history) {
		state.losses = appendLoss(state.losses, entry.epoch, entry.train, entry.val);
	}
	repaintChart();
}

function handleEvent(event: ServerEvent) {
	if (event.type === "status") {
		renderStatus(event);
	} else if (event.type === "loss") {
		state.losses = appendLoss(state.losses, event.epoch, event.train, event.val);
		statusLine.textContent = `training epoch ${event.epoch + 1} | train ${event.train.total.toFixed(2)} val ${event.val.total.toFixed(2)}`;
		repaintChart();
	} else if (event.type === "pattern") {
		state.pattern = event;
		repaintGrid();
	}
}

const stream = connectStream(handleEvent, () => {
	fetchStatus().then(renderStatus).catch(() => undefined);
});

// XY pad -> throttled latent messages (hard cap well under the server's appetite)
const limiter = createRateLimiter<{ x: number; y: number }>(30, (z) => stream.sendLatent(z.x, z.y));
pad.onChange((pos) => limiter.push(pad.padToLatent(pos)));

// -- corpus drop zone --------------------------------------------------------

const dropZone = $<HTMLDivElement>("drop-zone");
dropZone.addEventListener("dragover", (ev) => {
	ev.preventDefault();
	dropZone.classList.add("hover");
});
dropZone.addEventListener("dragleave", () => dropZone.classList.remove("hover"));
dropZone.addEventListener("drop", async (ev) => {
	ev.preventDefault();
	dropZone.classList.remove("hover");
	const files = Array.from(ev.dataTransfer?.files ?? []);
	if (files.length === 0) return;
	await reportUpload(files);
});
$<HTMLInputElement>("file-input").addEventListener("change", async (ev) => {
	const input = ev.target as HTMLInputElement;
	await reportUpload(Array.from(input.files ?? []));
	input.value = "";
});

async function reportUpload(files: File[]) {
	try {
		const report = await uploadCorpus(files);
		for (const entry of report.files) {
			const li = document.createElement("li");
			li.textContent = entry.error
				? `${entry.name}: ${entry.error}`
				: `${entry.name}: ${entry.patterns} patterns`;
			if (entry.error) li.className = "error";
			corpusList.appendChild(li);
		}
		const status = await fetchStatus();
		renderStatus(status);
	} catch (err) {
		statusLine.textContent = `upload failed: ${err}`;
		statusLine.className = "error";
	}
}

// -- train controls -----------------------------------------------------------

$<HTMLButtonElement>("train-start").addEventListener("click", async () => {
	const request = buildTrainRequest({
		epochs: Number($<HTMLInputElement>("epochs").value) || 100,
		seed: Number($<HTMLInputElement>("seed").value) || 0,
	});
	if (!isValidTrainRequest(request)) {
		statusLine.textContent = "invalid training settings";
		statusLine.className = "error";
		return;
	}
	const rejection = await startTraining(request);
	if (rejection) {
		statusLine.textContent = rejection;
		statusLine.className = "error";
	}
});
$<HTMLButtonElement>("train-stop").addEventListener("click", () => void stopTraining());

// -- transport / automation / threshold ---------------------------------------

$<HTMLButtonElement>("play").addEventListener("click", async () => {
	state.playing = !state.playing;
	$<HTMLButtonElement>("play").textContent = state.playing ? "stop" : "play";
	await postTransport({ playing: state.playing });
});
$<HTMLInputElement>("tempo").addEventListener("change", async (ev) => {
	const tempo = Number((ev.target as HTMLInputElement).value);
	if (Number.isFinite(tempo)) await postTransport({ tempo_bpm: tempo });
});

$<HTMLButtonElement>("rec").addEventListener("click", async () => {
	const action = state.recording ? "stop" : "record";
	const response = await automation(action);
	if (response.ok) {
		state.recording = !state.recording;
		$<HTMLButtonElement>("rec").classList.toggle("armed", state.recording);
	}
});
$<HTMLButtonElement>("replay").addEventListener("click", () => void automation("play"));

$<HTMLInputElement>("threshold").addEventListener("change", async (ev) => {
	const value = Number((ev.target as HTMLInputElement).value);
	if (Number.isFinite(value) && value >= 0 && value <= 1) await putThreshold(value);
});

$<HTMLAnchorElement>("export").addEventListener("click", (ev) => {
	const tempo = Number($<HTMLInputElement>("tempo").value) || 120;
	($<HTMLAnchorElement>("export")).href = `/export.mid?tempo=${tempo}`;
	if (!state.hasModel) ev.preventDefault();
});

// -- row labels + initial paint -------------------------------------------------

const labels = $<HTMLDivElement>("row-labels");
for (let row = 0; row < GRID_ROWS; row++) {
	const div = document.createElement("div");
	div.textContent = ROW_LABELS[row];
	labels.appendChild(div);
}
repaintGrid();
repaintChart();
