import { describe, expect, it } from "vitest";

import { createRateLimiter } from "../src/throttle.js";

// Virtual clock: callbacks fire when time advances past their due point.
function virtualClock() {
	let t = 0;
	const timers: { due: number; fn: () => void; cancelled: boolean }[] = [];
	return {
		now: () => t,
		schedule: (fn: () => void, ms: number) => {
			const handle = { due: t + ms, fn, cancelled: false };
			timers.push(handle);
			return handle;
		},
		cancel: (handle: unknown) => {
			(handle as { cancelled: boolean }).cancelled = true;
		},
		advanceTo(target: number) {
			while (true) {
				const due = timers
					.filter((h) => !h.cancelled && h.due <= target)
					.sort((a, b) => a.due - b.due)[0];
				if (!due) break;
				timers.splice(timers.indexOf(due), 1);
				t = due.due;
				due.fn();
			}
			t = target;
		},
	};
}

describe("rate limiter", () => {
	it("sends at most 30 messages for 200 events in one second", () => {
		const clock = virtualClock();
		const sent: number[] = [];
		const limiter = createRateLimiter<number>(30, (v) => sent.push(v), clock);

		for (let i = 0; i < 200; i++) {
			clock.advanceTo(i * 5); // 200 events over 1000 ms
			limiter.push(i);
		}
		clock.advanceTo(1000);
		expect(sent.length).toBeLessThanOrEqual(30);
		expect(sent.length).toBeGreaterThan(0);
	});

	it("always delivers the final value", () => {
		const clock = virtualClock();
		const sent: number[] = [];
		const limiter = createRateLimiter<number>(30, (v) => sent.push(v), clock);
		for (let i = 0; i < 10; i++) {
			clock.advanceTo(i); // all within one throttle window
			limiter.push(i);
		}
		clock.advanceTo(2000); // trailing timer fires
		expect(sent[sent.length - 1]).toBe(9);
	});

	it("keeps spacing at or above the throttle interval", () => {
		const clock = virtualClock();
		const stamps: number[] = [];
		const limiter = createRateLimiter<number>(30, () => stamps.push(clock.now()), clock);
		for (let i = 0; i < 400; i++) {
			clock.advanceTo(i * 3);
			limiter.push(i);
		}
		clock.advanceTo(5000);
		for (let i = 1; i < stamps.length; i++) {
			expect(stamps[i] - stamps[i - 1]).toBeGreaterThanOrEqual(1000 / 30);
		}
	});

	it("passes sparse events through immediately", () => {
		const clock = virtualClock();
		const sent: number[] = [];
		const limiter = createRateLimiter<number>(30, (v) => sent.push(v), clock);
		limiter.push(1);
		clock.advanceTo(500);
		limiter.push(2);
		expect(sent).toEqual([1, 2]);
	});

	it("flush sends the pending value right away", () => {
		const clock = virtualClock();
		const sent: number[] = [];
		const limiter = createRateLimiter<number>(30, (v) => sent.push(v), clock);
		limiter.push(1);
		limiter.push(2); // within the window -> pending
		limiter.flush();
		expect(sent).toEqual([1, 2]);
	});
});
