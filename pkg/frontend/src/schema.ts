// Message shapes shared with the service, plus runtime validators.
// Every message the UI sends goes through one of the build* helpers so the
// schema tests cover the real senders.

export interface LatentMessage {
	type: "latent";
	x: number;
	y: number;
}

export interface TrainRequest {
	epochs: number;
	batch_size: number;
	lr: number;
	kl_weight_beta: number;
	val_fraction: number;
	seed: number;
}

export interface TransportRequest {
	playing?: boolean;
	tempo_bpm?: number;
}

export interface LossSide {
	total: number;
	onset_bce: number;
	velocity_mse: number;
	offset_mse: number;
	kl: number;
	beta: number;
}

export interface LossEvent {
	type: "loss";
	epoch: number;
	train: LossSide;
	val: LossSide;
}

export interface PatternEvent {
	type: "pattern";
	onsets: number[][]; // 9x32 of 0|1
	velocities: number[][]; // 9x32 in [0,1]
	offsets: number[][]; // 9x32 in [-1,1)
}

export interface StatusEvent {
	type: "status";
	status: "idle" | "training" | "done" | "failed";
	epoch: number;
	total_epochs: number;
	reason: string | null;
	corpus: { name: string; patterns: number; error: string | null }[];
	dataset_size: number;
	has_model: boolean;
	latent: { x: number; y: number };
	threshold: number;
	transport: { playing: boolean; tempo_bpm: number; song_position: number };
	history: { epoch: number; train: LossSide; val: LossSide }[];
}

export type ServerEvent = LossEvent | PatternEvent | StatusEvent;

const ROWS = 9;
const COLS = 32;

function finite(x: unknown): x is number {
	return typeof x === "number" && Number.isFinite(x);
}

export function buildLatentMessage(x: number, y: number): LatentMessage {
	return { type: "latent", x, y };
}

export function buildTrainRequest(partial: Partial<TrainRequest> = {}): TrainRequest {
	return {
		epochs: 100,
		batch_size: 32,
		lr: 1e-3,
		kl_weight_beta: 1.0,
		val_fraction: 0.1,
		seed: 0,
		...partial,
	};
}

export function isLatentMessage(msg: unknown): msg is LatentMessage {
	const m = msg as LatentMessage;
	return !!m && m.type === "latent" && finite(m.x) && finite(m.y);
}

export function isValidTrainRequest(req: unknown): req is TrainRequest {
	const r = req as TrainRequest;
	return (
		!!r &&
		Number.isInteger(r.epochs) && r.epochs >= 0 &&
		Number.isInteger(r.batch_size) && r.batch_size >= 2 &&
		finite(r.lr) && r.lr > 0 &&
		finite(r.kl_weight_beta) && r.kl_weight_beta >= 0 &&
		finite(r.val_fraction) && r.val_fraction > 0 && r.val_fraction < 1 &&
		Number.isInteger(r.seed)
	);
}

function isMatrix(m: unknown, lo: number, hi: number): m is number[][] {
	if (!Array.isArray(m) || m.length !== ROWS) return false;
	return m.every(
		(row) => Array.isArray(row) && row.length === COLS && row.every((v) => finite(v) && v >= lo && v <= hi),
	);
}

export function isPatternEvent(msg: unknown): msg is PatternEvent {
	const m = msg as PatternEvent;
	return (
		!!m &&
		m.type === "pattern" &&
		isMatrix(m.onsets, 0, 1) &&
		(m.onsets as number[][]).every((row) => row.every((v) => v === 0 || v === 1)) &&
		isMatrix(m.velocities, 0, 1) &&
		isMatrix(m.offsets, -1, 1)
	);
}

function isLossSide(side: unknown): side is LossSide {
	const s = side as LossSide;
	return (
		!!s &&
		finite(s.total) && s.total >= 0 &&
		finite(s.onset_bce) && s.onset_bce >= 0 &&
		finite(s.velocity_mse) && s.velocity_mse >= 0 &&
		finite(s.offset_mse) && s.offset_mse >= 0 &&
		finite(s.kl) &&
		finite(s.beta)
	);
}

export function isLossEvent(msg: unknown): msg is LossEvent {
	const m = msg as LossEvent;
	return !!m && m.type === "loss" && Number.isInteger(m.epoch) && m.epoch >= 0 &&
		isLossSide(m.train) && isLossSide(m.val);
}

export function isStatusEvent(msg: unknown): msg is StatusEvent {
	const m = msg as StatusEvent;
	return (
		!!m &&
		m.type === "status" &&
		["idle", "training", "done", "failed"].includes(m.status) &&
		typeof m.has_model === "boolean" &&
		!!m.latent && finite(m.latent.x) && finite(m.latent.y) &&
		Array.isArray(m.history)
	);
}

export function parseServerEvent(raw: string): ServerEvent | null {
	let msg: unknown;
	try {
		msg = JSON.parse(raw);
	} catch {
		return null;
	}
	if (isPatternEvent(msg) || isLossEvent(msg) || isStatusEvent(msg)) return msg;
	return null;
}
