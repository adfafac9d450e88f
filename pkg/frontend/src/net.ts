// HTTP wrappers and the single stream connection with auto-reconnect.
// On every (re)connect the state is resynced from GET /status, so a chart
// that missed events mid-training rebuilds from history.

import { buildLatentMessage, isLatentMessage, parseServerEvent } from "./schema.js";
import type { ServerEvent, StatusEvent, TrainRequest, TransportRequest } from "./schema.js";

export async function fetchStatus(): Promise<StatusEvent> {
	const response = await fetch("/status");
	if (!response.ok) throw new Error(`GET /status -> ${response.status}`);
	return (await response.json()) as StatusEvent;
}

export async function uploadCorpus(files: File[]): Promise<{ files: { name: string; patterns: number; error: string | null }[] }> {
	const form = new FormData();
	for (const file of files) form.append("files", file, file.name);
	const response = await fetch("/corpus", { method: "POST", body: form });
	if (!response.ok) throw new Error(`POST /corpus -> ${response.status}`);
	return response.json();
}

async function postJson(path: string, body: unknown): Promise<Response> {
	return fetch(path, {
		method: "POST",
		headers: { "content-type": "application/json" },
		body: JSON.stringify(body),
	});
}

export async function startTraining(req: TrainRequest): Promise<string | null> {
	const response = await postJson("/train", req);
	if (response.ok) return null;
	const detail = await response.json().catch(() => ({ detail: response.statusText }));
	return String(detail.detail ?? "rejected");
}

export const stopTraining = () => fetch("/train", { method: "DELETE" });
export const postLatent = (x: number, y: number) => postJson("/latent", { x, y });
export const postTransport = (req: TransportRequest) => postJson("/transport", req);
export const automation = (action: "record" | "stop" | "play") =>
	fetch(`/automation/${action}`, { method: "POST" });
export const putThreshold = (value: number) => fetch("/threshold", {
	method: "PUT",
	headers: { "content-type": "application/json" },
	body: JSON.stringify({ value }),
});

export interface StreamClient {
	sendLatent: (x: number, y: number) => void;
	close: () => void;
}

export function connectStream(
	onEvent: (event: ServerEvent) => void,
	onReconnect: () => void,
): StreamClient {
	let ws: WebSocket | null = null;
	let closed = false;
	let retryMs = 500;

	function open() {
		if (closed) return;
		const scheme = location.protocol === "https:" ? "wss" : "ws";
		ws = new WebSocket(`${scheme}://${location.host}/stream`);
		ws.onopen = () => {
			retryMs = 500;
			onReconnect();
		};
		ws.onmessage = (ev) => {
			const event = parseServerEvent(String(ev.data));
			if (event) onEvent(event);
		};
		ws.onclose = () => {
			ws = null;
			if (!closed) {
				setTimeout(open, retryMs);
				retryMs = Math.min(retryMs * 2, 8000);
			}
		};
	}

	open();
	return {
		sendLatent(x: number, y: number) {
			const msg = buildLatentMessage(x, y);
			if (!isLatentMessage(msg)) return; // never emit schema-invalid messages
			if (ws && ws.readyState === WebSocket.OPEN) {
				ws.send(JSON.stringify(msg));
			} else {
				void postLatent(x, y); // HTTP fallback while reconnecting
			}
		},
		close() {
			closed = true;
			ws?.close();
		},
	};
}
