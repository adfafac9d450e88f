// Rate limiter for the XY pad: at most N sends per second, latest value
// wins, and the trailing value is always flushed so the knob never ends up
// out of sync with the server.

export interface RateLimiter<T> {
	push: (value: T) => void;
	flush: () => void;
	dispose: () => void;
}

export interface ClockHooks {
	now?: () => number; // ms
	schedule?: (fn: () => void, ms: number) => unknown;
	cancel?: (handle: unknown) => void;
}

export function createRateLimiter<T>(
	maxPerSecond: number,
	send: (value: T) => void,
	hooks: ClockHooks = {},
): RateLimiter<T> {
	const now = hooks.now ?? (() => performance.now());
	const schedule = hooks.schedule ?? ((fn, ms) => setTimeout(fn, ms));
	const cancel = hooks.cancel ?? ((handle) => clearTimeout(handle as number));
	// Spacing of 1000/max puts max+1 fenceposts inside a one-second window;
	// dividing by (max - 1) keeps every window at or under the cap.
	const minInterval = maxPerSecond > 1 ? 1000 / (maxPerSecond - 1) : 1000;

	let lastSent = -Infinity;
	let pending: { value: T } | null = null;
	let timer: unknown = null;

	function fire() {
		timer = null;
		if (!pending) return;
		const value = pending.value;
		pending = null;
		lastSent = now();
		send(value);
	}

	return {
		push(value: T) {
			const t = now();
			if (t - lastSent >= minInterval && timer === null) {
				lastSent = t;
				send(value);
				return;
			}
			pending = { value };
			if (timer === null) {
				timer = schedule(fire, Math.max(0, minInterval - (t - lastSent)));
			}
		},
		flush() {
			if (timer !== null) {
				cancel(timer);
				timer = null;
			}
			fire();
		},
		dispose() {
			if (timer !== null) cancel(timer);
			timer = null;
			pending = null;
		},
	};
}
